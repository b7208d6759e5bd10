//! Exponential potential functions over the sorted sum loads and Monte
//! Carlo one-step drift estimates.
//!
//! Three variants share the shape Gamma = Phi + Psi with Phi summing
//! e^{alpha s_i} and Psi summing e^{-alpha s_i} over ranks, differing only
//! in the per-rank divisor: 1/i (grouped), 1/(n^2+i) resp. 1/(n^2+n-i+1)
//! (weighted ranked), or none (plain).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{self, ProcessSpec};
use crate::state::{AllocationConfig, BallSourceSpec, LoadMatrix, NormalizedState};

/// Exponent magnitude beyond which e^x leaves the double range.
const OVERFLOW_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PotentialVariant {
    UnweightedGrouped,
    WeightedRanked,
    BetaPlain,
}

/// The constants parametrizing one potential variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    pub variant: PotentialVariant,
    pub epsilon: f64,
    pub theta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub alpha: f64,
    /// Second-moment MGF bound; weighted variant only.
    pub s_bound: Option<f64>,
    /// MGF domain radius; weighted variant only.
    pub lambda: Option<f64>,
}

impl PotentialParams {
    pub fn validate(&self) -> Result<()> {
        let e = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.epsilon > 0.0 && self.epsilon <= 0.25) {
            return e(format!("epsilon must lie in (0, 1/4], got {}", self.epsilon));
        }
        if (self.theta * self.gamma1 - 1.0).abs() > 1e-12 {
            return e(format!(
                "theta*gamma1 must equal 1, got {}",
                self.theta * self.gamma1
            ));
        }
        if self.alpha <= 0.0 {
            return e(format!("alpha must be positive, got {}", self.alpha));
        }
        let (g1, g2, g3, g4) = (self.gamma1, self.gamma2, self.gamma3, self.gamma4);
        match self.variant {
            PotentialVariant::UnweightedGrouped | PotentialVariant::BetaPlain => {
                if !(0.0 < g1 && g1 < g3 && g3 < 0.5 && 0.5 < g4 && g4 < g2 && g2 < 1.0) {
                    return e(format!(
                        "need 0 < g1 < g3 < 1/2 < g4 < g2 < 1, got ({g1}, {g2}, {g3}, {g4})"
                    ));
                }
                if (g1 + g2 - 1.0).abs() > 1e-12 || (g3 + g4 - 1.0).abs() > 1e-12 {
                    return e("need gamma1+gamma2 = 1 and gamma3+gamma4 = 1".into());
                }
            }
            PotentialVariant::WeightedRanked => {
                if !(0.0 < g1 && g1 < g2 && g2 < 0.5 && 0.5 < g4 && g4 < g3) {
                    return e(format!(
                        "weighted variant needs 0 < g1 < g2 < 1/2 < g4 < g3, got ({g1}, {g2}, {g3}, {g4})"
                    ));
                }
                if g2 + g3 <= 1.0 || g1 + g4 >= 1.0 {
                    return e("weighted variant needs g2+g3 > 1 and g1+g4 < 1".into());
                }
                if g2 >= 7.0 / 16.0 {
                    return e(format!("weighted variant needs gamma2 < 7/16, got {g2}"));
                }
                if self.s_bound.is_none() || self.lambda.is_none() {
                    return e("weighted variant needs S and lambda".into());
                }
            }
        }
        Ok(())
    }

    /// Default constants for the unweighted-grouped and beta-plain variants:
    /// gamma = (0.2, 0.8, 0.4, 0.6), theta = 5, alpha = epsilon/(2f).
    pub fn defaults(variant: PotentialVariant, f: f64, epsilon: f64) -> Result<Self> {
        if variant == PotentialVariant::WeightedRanked {
            return Err(Error::InvalidConfig(
                "weighted variant needs S and lambda; use weighted_defaults".into(),
            ));
        }
        let params = PotentialParams {
            variant,
            epsilon,
            theta: 5.0,
            gamma1: 0.2,
            gamma2: 0.8,
            gamma3: 0.4,
            gamma4: 0.6,
            alpha: epsilon / (2.0 * f),
            s_bound: None,
            lambda: None,
        };
        params.validate()?;
        Ok(params)
    }

    /// Default constants for the weighted-ranked variant:
    /// alpha = min(eps/6S, 2/lambda, eps/2f*).
    pub fn weighted_defaults(fstar: f64, epsilon: f64, s_bound: f64, lambda: f64) -> Result<Self> {
        let alpha = (epsilon / (6.0 * s_bound))
            .min(2.0 / lambda)
            .min(epsilon / (2.0 * fstar));
        let params = PotentialParams {
            variant: PotentialVariant::WeightedRanked,
            epsilon,
            theta: 5.0,
            gamma1: 0.2,
            gamma2: 0.4,
            gamma3: 0.7,
            gamma4: 0.6,
            alpha,
            s_bound: Some(s_bound),
            lambda: Some(lambda),
        };
        params.validate()?;
        Ok(params)
    }
}

/// Phi, Psi and their sum for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValue {
    pub phi: f64,
    pub psi: f64,
    pub gamma: f64,
}

/// Maximal runs of equal values in a non-increasing s vector, as
/// (1-based start rank, size) pairs.
pub fn equi_load_groups(s: &[f64]) -> Vec<(usize, usize)> {
    debug_assert!(s.windows(2).all(|w| w[0] >= w[1]));
    let mut groups = Vec::new();
    let mut start = 0usize;
    while start < s.len() {
        let mut end = start + 1;
        while end < s.len() && s[end] == s[start] {
            end += 1;
        }
        groups.push((start + 1, end - start));
        start = end;
    }
    groups
}

/// Evaluate the potentials over s values sorted non-increasing.
pub fn gamma_from_sorted(s: &[f64], params: &PotentialParams) -> Result<PotentialValue> {
    let n = s.len();
    let alpha = params.alpha;
    let mut phi = 0.0;
    let mut psi = 0.0;
    for (k, &v) in s.iter().enumerate() {
        let exponent = alpha * v;
        if exponent.abs() > OVERFLOW_EXPONENT {
            return Err(Error::PotentialOverflow(exponent.abs()));
        }
        let up = exponent.exp();
        let down = (-exponent).exp();
        let rank = k + 1;
        match params.variant {
            PotentialVariant::UnweightedGrouped => {
                phi += up / rank as f64;
                psi += down / rank as f64;
            }
            PotentialVariant::WeightedRanked => {
                phi += up / (n * n + rank) as f64;
                psi += down / (n * n + n - rank + 1) as f64;
            }
            PotentialVariant::BetaPlain => {
                phi += up;
                psi += down;
            }
        }
    }
    Ok(PotentialValue {
        phi,
        psi,
        gamma: phi + psi,
    })
}

/// Evaluate the potentials for a normalized state.
pub fn gamma(state: &NormalizedState, params: &PotentialParams) -> Result<PotentialValue> {
    gamma_from_sorted(&state.sorted_s(), params)
}

/// Sample mean and normal-approximation 95% CI of the one-step potential
/// change from a frozen state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub mean_dgamma: f64,
    pub ci_half: f64,
    pub mean_dphi: f64,
    pub mean_dpsi: f64,
    /// Potential of the frozen state itself.
    pub base: PotentialValue,
}

/// Monte Carlo over `samples` independent one-step continuations: each
/// draws a ball, selects a bin under `spec`, and measures the potential
/// change. The frozen state is never mutated.
pub fn drift_estimate<R: Rng + ?Sized>(
    state: &LoadMatrix,
    spec: &ProcessSpec,
    source: &BallSourceSpec,
    params: &PotentialParams,
    samples: usize,
    rng: &mut R,
) -> Result<DriftEstimate> {
    if samples < 100 {
        return Err(Error::InvalidConfig(format!(
            "drift_estimate needs >= 100 samples, got {samples}"
        )));
    }
    let n = state.bins();
    let sums = state.sum_loads();
    let mean = sums.iter().sum::<f64>() / n as f64;
    let s0: Vec<f64> = sums.iter().map(|v| v - mean).collect();
    let mut sorted0 = s0.clone();
    sorted0.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let base = gamma_from_sorted(&sorted0, params)?;

    let mut dgamma = Vec::with_capacity(samples);
    let mut sum_dphi = 0.0;
    let mut sum_dpsi = 0.0;
    let mut scratch = vec![0.0; n];
    for _ in 0..samples {
        let ball = source.generate(state.dims(), rng);
        let bin = process::select_bin_by_sums(&sums, spec, rng);
        let w = ball.total_weight();
        let shift = w / n as f64;
        for (dst, &v) in scratch.iter_mut().zip(&s0) {
            *dst = v - shift;
        }
        scratch[bin] += w;
        scratch.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let next = gamma_from_sorted(&scratch, params)?;
        dgamma.push(next.gamma - base.gamma);
        sum_dphi += next.phi - base.phi;
        sum_dpsi += next.psi - base.psi;
    }
    let k = samples as f64;
    let mean_dgamma = dgamma.iter().sum::<f64>() / k;
    let var = dgamma
        .iter()
        .map(|v| (v - mean_dgamma).powi(2))
        .sum::<f64>()
        / (k - 1.0);
    Ok(DriftEstimate {
        mean_dgamma,
        ci_half: 1.96 * (var / k).sqrt(),
        mean_dphi: sum_dphi / k,
        mean_dpsi: sum_dpsi / k,
        base,
    })
}

/// Binomial MGF M(z) = (1 - q + q e^z)^D.
pub fn mgf_binomial(z: f64, dims: usize, q: f64) -> f64 {
    (1.0 - q + q * z.exp()).powi(dims as i32)
}

/// Second derivative E[f^2 e^{zf}] of the binomial MGF, in closed form.
fn mgf_binomial_second(z: f64, dims: usize, q: f64) -> f64 {
    let d = dims as f64;
    let base = 1.0 - q + q * z.exp();
    let qe = q * z.exp();
    d * qe * base.powi(dims as i32 - 2) * (base + (d - 1.0) * qe)
}

/// Bound S >= 1 with M''(z) < 2S for |z| < lambda/2, taken as the grid
/// supremum of M'' over 1000 points, halved.
pub fn mgf_bound_s(dims: usize, q: f64, lambda: f64) -> f64 {
    let grid = 1000;
    let half = lambda / 2.0;
    let mut sup = f64::MIN;
    for k in 0..grid {
        let z = -half + (2.0 * half) * (k as f64 + 0.5) / grid as f64;
        sup = sup.max(mgf_binomial_second(z, dims, q));
    }
    (sup / 2.0).max(1.0)
}

/// Potential parameters for an allocation config: variant-appropriate
/// defaults with alpha tied to the source's mean populated count.
pub fn params_for_config(
    config: &AllocationConfig,
    variant: PotentialVariant,
    epsilon: f64,
    s_bound: Option<f64>,
    lambda: Option<f64>,
) -> Result<PotentialParams> {
    let fstar = config.source.mean_populated(config.dims);
    match variant {
        PotentialVariant::WeightedRanked => {
            let lambda = lambda.unwrap_or(1.0);
            let s_bound = s_bound.unwrap_or_else(|| match config.source {
                BallSourceSpec::VariableBinomial { q } => mgf_bound_s(config.dims, q, lambda),
                _ => 1.0f64.max(fstar * fstar),
            });
            PotentialParams::weighted_defaults(fstar, epsilon, s_bound, lambda)
        }
        _ => PotentialParams::defaults(variant, fstar, epsilon),
    }
}
