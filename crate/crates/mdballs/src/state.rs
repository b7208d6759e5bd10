//! Allocation state: ball sources, the raw load matrix and its normalized view.
//!
//! Loads are stored raw (cumulative per dimension per bin) and the normalized
//! quantities x and s are derived on demand. Raw integer storage keeps the
//! per-dimension zero-sum invariant exact over long runs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::ProcessSpec;

/// Weight distribution for scalar weighted balls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightDist {
    Constant(f64),
    Uniform(f64, f64),
    Exponential(f64),
}

impl WeightDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightDist::Constant(w) => w > 0.0,
            WeightDist::Uniform(a, b) => a > 0.0 && b > a,
            WeightDist::Exponential(rate) => rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "weight distribution {self:?} has non-positive support"
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            WeightDist::Constant(w) => w,
            WeightDist::Uniform(a, b) => 0.5 * (a + b),
            WeightDist::Exponential(rate) => 1.0 / rate,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            WeightDist::Constant(w) => w,
            WeightDist::Uniform(a, b) => rng.random_range(a..b),
            WeightDist::Exponential(rate) => {
                // inverse CDF; 1 - u avoids ln(0)
                let u: f64 = rng.random();
                -(1.0 - u).ln() / rate
            }
        }
    }
}

/// How each ball's populated dimensions (and weights) are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BallSourceSpec {
    /// Exactly `f` populated dimensions, every f-subset equally likely.
    FixedUniform { f: usize },
    /// Exactly `f` populated dimensions, drawn by successive weighted
    /// sampling without replacement from `dim_weights`.
    FixedNonUniform { f: usize, dim_weights: Vec<f64> },
    /// Each dimension populated independently with probability `q`; a ball
    /// may come out empty and still counts toward t.
    VariableBinomial { q: f64 },
    /// Scalar ball (requires D = 1) with a random positive weight.
    WeightedScalar { weight_dist: WeightDist },
}

impl BallSourceSpec {
    pub fn validate(&self, dims: usize) -> Result<()> {
        match self {
            BallSourceSpec::FixedUniform { f } => {
                if *f < 1 || *f > dims {
                    return Err(Error::InvalidConfig(format!(
                        "fixed-f-uniform requires 1 <= f <= D, got f={f}, D={dims}"
                    )));
                }
            }
            BallSourceSpec::FixedNonUniform { f, dim_weights } => {
                if *f < 1 || *f > dims {
                    return Err(Error::InvalidConfig(format!(
                        "fixed-f-nonuniform requires 1 <= f <= D, got f={f}, D={dims}"
                    )));
                }
                if dim_weights.len() != dims {
                    return Err(Error::InvalidConfig(format!(
                        "dim_weights has {} entries, expected D={dims}",
                        dim_weights.len()
                    )));
                }
                if dim_weights.iter().any(|&w| w < 0.0) {
                    return Err(Error::InvalidConfig(
                        "dim_weights entries must be >= 0".into(),
                    ));
                }
                let sum: f64 = dim_weights.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "dim_weights must sum to 1 (+/- 1e-12), got {sum}"
                    )));
                }
                let positive = dim_weights.iter().filter(|&&w| w > 0.0).count();
                if positive < *f {
                    return Err(Error::InvalidConfig(format!(
                        "only {positive} dimensions have positive weight, cannot draw f={f} without replacement"
                    )));
                }
            }
            BallSourceSpec::VariableBinomial { q } => {
                if !(*q > 0.0 && *q <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "binomial source requires 0 < q <= 1, got {q}"
                    )));
                }
            }
            BallSourceSpec::WeightedScalar { weight_dist } => {
                if dims != 1 {
                    return Err(Error::InvalidConfig(format!(
                        "weighted-scalar source requires D = 1, got D={dims}"
                    )));
                }
                weight_dist.validate()?;
            }
        }
        Ok(())
    }

    /// Mean total dimensional weight per ball: f for fixed variants,
    /// f* = Dq for the binomial variant, E[W] for the scalar weighted one.
    pub fn mean_populated(&self, dims: usize) -> f64 {
        match self {
            BallSourceSpec::FixedUniform { f } | BallSourceSpec::FixedNonUniform { f, .. } => {
                *f as f64
            }
            BallSourceSpec::VariableBinomial { q } => dims as f64 * q,
            BallSourceSpec::WeightedScalar { weight_dist } => weight_dist.mean(),
        }
    }

    /// Fixed populated-dimension count, when the source has one.
    pub fn fixed_f(&self) -> Option<usize> {
        match self {
            BallSourceSpec::FixedUniform { f } | BallSourceSpec::FixedNonUniform { f, .. } => {
                Some(*f)
            }
            _ => None,
        }
    }

    /// Draw one ball. Validation happens at config load, not here.
    pub fn generate<R: Rng + ?Sized>(&self, dims: usize, rng: &mut R) -> BallSpec {
        match self {
            BallSourceSpec::FixedUniform { f } => {
                // partial Fisher-Yates: the first f slots are a uniform f-subset
                let mut idx: Vec<usize> = (0..dims).collect();
                for k in 0..*f {
                    let j = rng.random_range(k..dims);
                    idx.swap(k, j);
                }
                let mut sel = idx[..*f].to_vec();
                sel.sort_unstable();
                BallSpec::unit(sel)
            }
            BallSourceSpec::FixedNonUniform { f, dim_weights } => {
                let mut weights = dim_weights.clone();
                let mut sel = Vec::with_capacity(*f);
                for _ in 0..*f {
                    let total: f64 = weights.iter().sum();
                    let mut u = rng.random::<f64>() * total;
                    let mut chosen = dims - 1;
                    for (i, &w) in weights.iter().enumerate() {
                        if w <= 0.0 {
                            continue;
                        }
                        if u < w {
                            chosen = i;
                            break;
                        }
                        u -= w;
                        chosen = i;
                    }
                    weights[chosen] = 0.0;
                    sel.push(chosen);
                }
                sel.sort_unstable();
                BallSpec::unit(sel)
            }
            BallSourceSpec::VariableBinomial { q } => {
                let sel: Vec<usize> = (0..dims).filter(|_| rng.random_bool(*q)).collect();
                BallSpec::unit(sel)
            }
            BallSourceSpec::WeightedScalar { weight_dist } => BallSpec {
                dims: vec![0],
                weights: vec![weight_dist.sample(rng)],
            },
        }
    }
}

/// One ball: populated dimension indices (strictly increasing) and a
/// positive weight per populated dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSpec {
    pub dims: Vec<usize>,
    pub weights: Vec<f64>,
}

impl BallSpec {
    /// Unit-weight ball over the given dimensions.
    pub fn unit(dims: Vec<usize>) -> Self {
        let weights = vec![1.0; dims.len()];
        BallSpec { dims, weights }
    }

    /// Total weight the ball adds to its bin's sum load.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Raw cumulative loads: a D x n matrix plus per-dimension totals, per-bin
/// ball counts and the number of balls applied. Source of truth for all
/// metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadMatrix {
    bins: usize,
    dims: usize,
    loads: Vec<f64>,
    totals: Vec<f64>,
    counts: Vec<u64>,
    placed: u64,
}

impl LoadMatrix {
    pub fn new(bins: usize, dims: usize) -> Self {
        LoadMatrix {
            bins,
            dims,
            loads: vec![0.0; bins * dims],
            totals: vec![0.0; dims],
            counts: vec![0; bins],
            placed: 0,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Number of apply_ball calls so far.
    pub fn placed(&self) -> u64 {
        self.placed
    }

    pub fn load(&self, dim: usize, bin: usize) -> f64 {
        self.loads[dim * self.bins + bin]
    }

    pub fn total(&self, dim: usize) -> f64 {
        self.totals[dim]
    }

    /// All bin loads of one dimension.
    pub fn dim_loads(&self, dim: usize) -> &[f64] {
        &self.loads[dim * self.bins..(dim + 1) * self.bins]
    }

    /// Balls received per bin (a greedy-with-ties copy counts as one).
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Add one ball to `bin`. Empty balls still advance t.
    pub fn apply_ball(&mut self, bin: usize, ball: &BallSpec) {
        debug_assert!(bin < self.bins);
        for (&d, &w) in ball.dims.iter().zip(&ball.weights) {
            self.loads[d * self.bins + bin] += w;
            self.totals[d] += w;
        }
        self.counts[bin] += 1;
        self.placed += 1;
    }

    /// Per-bin sum of loads across all dimensions.
    pub fn sum_loads(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.bins];
        for d in 0..self.dims {
            let row = &self.loads[d * self.bins..(d + 1) * self.bins];
            for (s, &l) in sums.iter_mut().zip(row) {
                *s += l;
            }
        }
        sums
    }

    /// Centered per-bin sum loads and the rank order (descending s, ties by
    /// ascending bin index).
    pub fn normalize(&self) -> NormalizedState {
        let n = self.bins as f64;
        let mut x = vec![0.0; self.bins * self.dims];
        for d in 0..self.dims {
            let avg = self.totals[d] / n;
            for i in 0..self.bins {
                x[d * self.bins + i] = self.loads[d * self.bins + i] - avg;
            }
        }
        let mut s = vec![0.0; self.bins];
        for d in 0..self.dims {
            for i in 0..self.bins {
                s[i] += x[d * self.bins + i];
            }
        }
        let mut order: Vec<usize> = (0..self.bins).collect();
        // stable sort keeps ascending bin index within equal s
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
        NormalizedState {
            bins: self.bins,
            dims: self.dims,
            x,
            s,
            order,
        }
    }
}

/// The zero-sum view of a [`LoadMatrix`]: x[d][i] = L[d][i] - T[d]/n, the
/// per-bin sums s, and the rank permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedState {
    bins: usize,
    dims: usize,
    /// D x n, row-major.
    pub x: Vec<f64>,
    /// Per-bin sum of x across dimensions (indexed by bin, not rank).
    pub s: Vec<f64>,
    /// Bins sorted by s descending, ties broken by ascending bin index.
    pub order: Vec<usize>,
}

impl NormalizedState {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn x(&self, dim: usize, bin: usize) -> f64 {
        self.x[dim * self.bins + bin]
    }

    /// s values in rank order (non-increasing).
    pub fn sorted_s(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.s[i]).collect()
    }
}

/// Everything one trial needs: sizes, ball source, allocation rule, seed and
/// the ball counts at which metrics are recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationConfig {
    /// Bin count n.
    pub bins: usize,
    /// Dimension count D.
    pub dims: usize,
    /// Total balls m.
    pub balls: u64,
    pub source: BallSourceSpec,
    pub process: ProcessSpec,
    pub seed: u64,
    /// Ascending ball counts, all <= balls.
    pub checkpoints: Vec<u64>,
}

impl AllocationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 1 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if self.dims < 1 {
            return Err(Error::InvalidConfig("D must be >= 1".into()));
        }
        self.source.validate(self.dims)?;
        self.process.validate(self.bins)?;
        if !self.checkpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "checkpoints must be strictly ascending".into(),
            ));
        }
        if let Some(&last) = self.checkpoints.last() {
            if last > self.balls {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint {last} exceeds ball count {}",
                    self.balls
                )));
            }
        }
        Ok(())
    }

    /// Log-spaced default checkpoints: powers of two times n, capped at m,
    /// plus m itself.
    pub fn default_checkpoints(bins: usize, balls: u64) -> Vec<u64> {
        let mut cps = Vec::new();
        let n = bins as u64;
        let mut k = n;
        while k < balls {
            cps.push(k);
            match k.checked_mul(2) {
                Some(next) => k = next,
                None => break,
            }
        }
        cps.push(balls);
        cps.dedup();
        cps
    }
}
