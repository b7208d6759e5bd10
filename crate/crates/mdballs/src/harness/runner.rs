//! Plan execution: fan trials out across workers, collect in deterministic
//! (sweep, trial) order, aggregate, and persist.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{self, PotentialParams};
use crate::process;
use crate::rng;
use crate::trajectory::{CheckpointRow, TrajectoryRecord};

use super::plan::ExperimentPlan;

/// Env var capping the rayon worker count for trial fan-out.
pub const WORKERS_ENV: &str = "MDBALLS_WORKERS";

pub const CSV_HEADER: &str =
    "sweep,trial,seed,t,max_gap,sum_gap,ball_count_gap,phi,psi,gamma,rounds_used";

/// Aggregates of the final max_gap at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub sweep_index: usize,
    pub sweep_value: Option<f64>,
    pub bins: usize,
    pub balls: u64,
    pub trials: u64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub p95: f64,
    /// Bootstrap 95% CI of the mean, 1000 resamples.
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub sweep_param: Option<String>,
    pub points: Vec<PointSummary>,
}

/// Everything run_plan produces; files are written only when the plan
/// names an output prefix.
#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub summary: PlanSummary,
    /// (sweep index, record), ordered by (sweep, trial).
    pub records: Vec<(usize, TrajectoryRecord)>,
    pub csv: String,
    pub summary_json: String,
    pub csv_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let workers = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))
}

/// Execute every (sweep point, trial) pair and aggregate. Deterministic:
/// per-trial seeds derive from (root seed, sweep index, trial index), and
/// results are collected in that order regardless of scheduling.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanOutput> {
    let points = plan.configs()?;
    let params: Vec<Option<PotentialParams>> = points
        .iter()
        .map(|(_, cfg)| match plan.potentials {
            Some((variant, epsilon)) => {
                potential::params_for_config(cfg, variant, epsilon, None, None).map(Some)
            }
            None => Ok(None),
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|s| (0..plan.trials).map(move |t| (s, t)))
        .collect();
    let root = plan.base.seed;
    let pool = worker_pool()?;
    let results: Vec<Result<TrajectoryRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, t)| {
                let mut cfg = points[s].1.clone();
                cfg.seed = rng::derive_seed(root, s as u64, t);
                let mut rec = process::run(&cfg, params[s].as_ref())?;
                rec.trial = t;
                Ok(rec)
            })
            .collect()
    });
    let mut records = Vec::with_capacity(jobs.len());
    for ((s, _), res) in jobs.iter().zip(results) {
        records.push((*s, res?));
    }

    let csv = render_csv(&records);
    let summary = summarize(plan, &points, &records);
    let summary_json =
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";

    let (csv_path, summary_path) = match &plan.output {
        Some(prefix) => {
            let csv_path = with_suffix(prefix, ".csv");
            let summary_path = with_suffix(prefix, "_summary.json");
            write_out(&csv_path, &csv)?;
            write_out(&summary_path, &summary_json)?;
            (Some(csv_path), Some(summary_path))
        }
        None => (None, None),
    };
    Ok(PlanOutput {
        summary,
        records,
        csv,
        summary_json,
        csv_path,
        summary_path,
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_out(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Output {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, content).map_err(|source| Error::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_csv(records: &[(usize, TrajectoryRecord)]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (sweep, rec) in records {
        for row in &rec.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                sweep,
                rec.trial,
                rec.seed,
                row.t,
                row.max_gap,
                row.sum_gap,
                row.ball_count_gap,
                opt(row.phi),
                opt(row.psi),
                opt(row.gamma),
                row.rounds_used.map(|r| r.to_string()).unwrap_or_default(),
            );
        }
    }
    out
}

/// Parse a CSV produced by [`run_plan`] back into records (round-trip
/// counterpart of the writer).
pub fn parse_csv(csv: &str) -> Result<Vec<(usize, TrajectoryRecord)>> {
    let mut lines = csv.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::InvalidPlan("bad CSV header".into())),
    }
    let mut out: Vec<(usize, TrajectoryRecord)> = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(Error::InvalidPlan(format!("bad CSV row `{line}`")));
        }
        let field = |i: usize| -> Result<f64> {
            cols[i]
                .parse()
                .map_err(|_| Error::InvalidPlan(format!("bad CSV field `{}`", cols[i])))
        };
        let opt_field = |i: usize| -> Result<Option<f64>> {
            if cols[i].is_empty() {
                Ok(None)
            } else {
                field(i).map(Some)
            }
        };
        let sweep: usize = cols[0]
            .parse()
            .map_err(|_| Error::InvalidPlan(format!("bad sweep index `{}`", cols[0])))?;
        let trial: u64 = cols[1]
            .parse()
            .map_err(|_| Error::InvalidPlan(format!("bad trial `{}`", cols[1])))?;
        let seed: u64 = cols[2]
            .parse()
            .map_err(|_| Error::InvalidPlan(format!("bad seed `{}`", cols[2])))?;
        let row = CheckpointRow {
            t: cols[3]
                .parse()
                .map_err(|_| Error::InvalidPlan(format!("bad t `{}`", cols[3])))?,
            max_gap: field(4)?,
            sum_gap: field(5)?,
            ball_count_gap: field(6)?,
            phi: opt_field(7)?,
            psi: opt_field(8)?,
            gamma: opt_field(9)?,
            rounds_used: if cols[10].is_empty() {
                None
            } else {
                Some(cols[10].parse().map_err(|_| {
                    Error::InvalidPlan(format!("bad rounds_used `{}`", cols[10]))
                })?)
            },
        };
        match out.last_mut() {
            Some((s, rec)) if *s == sweep && rec.trial == trial => rec.rows.push(row),
            _ => out.push((
                sweep,
                TrajectoryRecord {
                    trial,
                    seed,
                    rows: vec![row],
                },
            )),
        }
    }
    Ok(out)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn median_of(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

fn summarize(
    plan: &ExperimentPlan,
    points: &[(Option<f64>, crate::state::AllocationConfig)],
    records: &[(usize, TrajectoryRecord)],
) -> PlanSummary {
    let mut out = Vec::with_capacity(points.len());
    for (s, (value, cfg)) in points.iter().enumerate() {
        let finals: Vec<f64> = records
            .iter()
            .filter(|(idx, _)| *idx == s)
            .map(|(_, rec)| rec.final_row().max_gap)
            .collect();
        let mut sorted = finals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;

        // bootstrap CI of the mean, seeded from the plan for determinism
        let mut boot_rng = rng::stream(rng::derive_seed(plan.base.seed, s as u64, u64::MAX));
        let mut means: Vec<f64> = (0..1000)
            .map(|_| {
                let mut acc = 0.0;
                for _ in 0..finals.len() {
                    acc += finals[boot_rng.random_range(0..finals.len())];
                }
                acc / finals.len() as f64
            })
            .collect();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(PointSummary {
            sweep_index: s,
            sweep_value: *value,
            bins: cfg.bins,
            balls: cfg.balls,
            trials: plan.trials,
            mean,
            median: median_of(&sorted),
            max: *sorted.last().unwrap(),
            p95: percentile(&sorted, 0.95),
            ci_lower: percentile(&means, 0.025).min(mean),
            ci_upper: percentile(&means, 0.975).max(mean),
        });
    }
    PlanSummary {
        sweep_param: plan.sweep.as_ref().map(|a| a.param.clone()),
        points: out,
    }
}
