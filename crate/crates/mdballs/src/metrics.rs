//! Gap statistics and closed-form bound curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{AllocationConfig, BallSourceSpec, LoadMatrix};

/// The four gap statistics of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// max over dimensions of (max bin load - average load).
    pub max_gap: f64,
    pub per_dim_gap: Vec<f64>,
    /// max_i s_i where s is the centered sum load.
    pub sum_gap: f64,
    /// max balls-in-bin minus t/n.
    pub ball_count_gap: f64,
    pub t: u64,
}

/// All gap statistics from raw loads.
pub fn gap_report(state: &LoadMatrix) -> GapReport {
    let n = state.bins() as f64;
    let per_dim_gap: Vec<f64> = (0..state.dims())
        .map(|d| {
            let row = state.dim_loads(d);
            let avg = row.iter().sum::<f64>() / n;
            row.iter().fold(f64::MIN, |a, &v| a.max(v)) - avg
        })
        .collect();
    let max_gap = per_dim_gap.iter().fold(0.0f64, |a, &v| a.max(v));
    let sums = state.sum_loads();
    let mean = sums.iter().sum::<f64>() / n;
    let sum_gap = sums.iter().fold(0.0f64, |a, &v| a.max(v - mean));
    let avg_count = state.placed() as f64 / n;
    let ball_count_gap = state
        .counts()
        .iter()
        .fold(0.0f64, |a, &c| a.max(c as f64 - avg_count));
    GapReport {
        max_gap,
        per_dim_gap,
        sum_gap,
        ball_count_gap,
        t: state.placed(),
    }
}

/// Closed-form bound shapes with unit leading constants; consumers fit
/// the constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurves {
    pub upper_dchoice_fixed_f: f64,
    pub upper_dchoice_whp: f64,
    pub lower_fixed_f: f64,
    pub upper_beta: f64,
    pub lower_beta: f64,
    pub one_choice_heavy: f64,
    pub weighted_scalar: f64,
    pub zeta: f64,
}

/// Evaluate every bound curve for a config. Rejects n < 3 (lnln undefined)
/// and zeta <= 0.
pub fn bound_curves(config: &AllocationConfig, zeta: f64) -> Result<BoundCurves> {
    if config.bins < 3 {
        return Err(Error::InvalidConfig(format!(
            "bound curves need n >= 3, got {}",
            config.bins
        )));
    }
    if zeta <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "zeta must be positive, got {zeta}"
        )));
    }
    let n = config.bins as f64;
    let m = config.balls as f64;
    let d = config.dims as f64;
    let f = config.source.mean_populated(config.dims);
    let beta = config.process.beta().unwrap_or(1.0);
    let lnln = n.ln().ln();
    let wstar = match &config.source {
        BallSourceSpec::WeightedScalar { weight_dist } => weight_dist.mean(),
        _ => 1.0,
    };
    Ok(BoundCurves {
        upper_dchoice_fixed_f: lnln,
        upper_dchoice_whp: (m * f / (n * d)).powf(0.5 + zeta) * lnln,
        lower_fixed_f: f * lnln / d,
        upper_beta: n.ln() / beta,
        lower_beta: f * n.ln() / (d * beta),
        one_choice_heavy: m / n + (m * n.ln() / n).sqrt(),
        weighted_scalar: wstar * n.ln(),
        zeta,
    })
}

/// The binomial tail bound (mu/(mu+t))^{mu+t} e^t.
pub fn chernoff_tail(mu: f64, t: f64) -> f64 {
    debug_assert!(mu > 0.0 && t > 0.0);
    (mu / (mu + t)).powf(mu + t) * t.exp()
}

/// Regressor shape for gap-vs-n scaling fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regressor {
    LnLnN,
    LnN,
    /// sqrt(m ln n / n) with m = m(n) supplied per point.
    SqrtMLnNOverN { m_over_n: f64 },
}

impl Regressor {
    fn eval(&self, n: f64) -> f64 {
        match self {
            Regressor::LnLnN => n.ln().ln(),
            Regressor::LnN => n.ln(),
            Regressor::SqrtMLnNOverN { m_over_n } => (m_over_n * n.ln()).sqrt(),
        }
    }
}

/// OLS fit of gap against the chosen regressor of n.
/// Returns (slope, intercept, r_squared).
pub fn fit_scaling(points: &[(f64, f64)], regressor: Regressor) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need >= 3 points, got {}",
            points.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| regressor.eval(n)).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, g)| g).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx < 1e-12 {
        return Err(Error::DegenerateFit(
            "regressor values are not distinct".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if syy < 1e-12 {
        1.0 // constant response fit exactly by slope 0
    } else {
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
            .sum();
        1.0 - ss_res / syy
    };
    Ok((slope, intercept, r2))
}
