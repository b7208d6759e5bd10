//! Plan files, trial orchestration and the operations behind the CLI
//! subcommands.

pub mod plan;
pub mod runner;

pub use plan::{load_plan, parse_plan, ExperimentPlan, SweepAxis};
pub use runner::{parse_csv, run_plan, PlanOutput, PlanSummary, PointSummary, WORKERS_ENV};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, BoundCurves};
use crate::oracle;
use crate::potential::{self, DriftEstimate};
use crate::process;
use crate::rng;

/// Drift at a frozen state, plus where the state came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftReport {
    pub t: u64,
    pub samples: usize,
    pub gamma: f64,
    pub phi: f64,
    pub psi: f64,
    pub mean_dgamma: f64,
    pub ci_half: f64,
    pub mean_dphi: f64,
    pub mean_dpsi: f64,
}

impl From<(u64, usize, DriftEstimate)> for DriftReport {
    fn from((t, samples, est): (u64, usize, DriftEstimate)) -> Self {
        DriftReport {
            t,
            samples,
            gamma: est.base.gamma,
            phi: est.base.phi,
            psi: est.base.psi,
            mean_dgamma: est.mean_dgamma,
            ci_half: est.ci_half,
            mean_dphi: est.mean_dphi,
            mean_dpsi: est.mean_dpsi,
        }
    }
}

/// Run the plan's base config to ball count `t`, freeze the state, and
/// Monte Carlo the one-step potential drift there.
pub fn drift_at(plan: &ExperimentPlan, t: u64, samples: usize) -> Result<DriftReport> {
    let (variant, epsilon) = plan.potentials.ok_or_else(|| {
        Error::InvalidPlan("drift needs a `potentials` variant in the plan".into())
    })?;
    let mut cfg = plan.configs()?[0].1.clone();
    if t > cfg.balls {
        return Err(Error::InvalidPlan(format!(
            "drift point t={t} exceeds m={}",
            cfg.balls
        )));
    }
    cfg.balls = t;
    cfg.checkpoints = vec![t];
    cfg.seed = rng::derive_seed(plan.base.seed, 0, 0);
    let params = potential::params_for_config(&cfg, variant, epsilon, None, None)?;
    let state = process::run_to_state(&cfg)?;
    // an independent stream for the drift continuations
    let mut drift_rng = rng::stream(rng::derive_seed(plan.base.seed, u64::MAX, t));
    let est = potential::drift_estimate(
        &state,
        &cfg.process,
        &cfg.source,
        &params,
        samples,
        &mut drift_rng,
    )?;
    Ok((t, samples, est).into())
}

/// Outcome of an oracle check: the exact distribution's size and the
/// chi-square comparison against fresh simulated trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleCheckReport {
    pub outcomes: usize,
    pub trials: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub passed: bool,
}

/// Enumerate the plan's base config exactly and compare simulated final
/// load matrices against it. Passes iff p > 0.01 and no impossible
/// outcome was observed.
pub fn oracle_check(plan: &ExperimentPlan, trials: usize) -> Result<OracleCheckReport> {
    let cfg = plan.configs()?[0].1.clone();
    let dist = oracle::enumerate_exact(&cfg)?;
    let observed: Vec<Vec<u64>> = (0..trials)
        .map(|t| {
            let mut c = cfg.clone();
            c.seed = rng::derive_seed(plan.base.seed, 0, t as u64);
            let lm = process::run_to_state(&c)?;
            let mut key = vec![0u64; c.dims * c.bins];
            for d in 0..c.dims {
                for i in 0..c.bins {
                    key[d * c.bins + i] = lm.load(d, i) as u64;
                }
            }
            Ok(key)
        })
        .collect::<Result<_>>()?;
    let (statistic, p_value) = oracle::chi_square_compare(&dist, &observed)?;
    Ok(OracleCheckReport {
        outcomes: dist.outcomes.len(),
        trials,
        statistic,
        p_value,
        passed: p_value > 0.01,
    })
}

/// Theoretical curves next to the observed median gap, one row per sweep
/// point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsRow {
    pub sweep_index: usize,
    pub sweep_value: Option<f64>,
    pub observed_median_gap: f64,
    pub curves: BoundCurves,
}

/// Run the plan and evaluate every bound curve at each sweep point.
pub fn bounds_report(plan: &ExperimentPlan, zeta: f64) -> Result<Vec<BoundsRow>> {
    let out = run_plan(plan)?;
    let points = plan.configs()?;
    points
        .iter()
        .zip(&out.summary.points)
        .map(|((value, cfg), point)| {
            Ok(BoundsRow {
                sweep_index: point.sweep_index,
                sweep_value: *value,
                observed_median_gap: point.median,
                curves: metrics::bound_curves(cfg, zeta)?,
            })
        })
        .collect()
}
