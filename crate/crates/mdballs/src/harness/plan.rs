//! Flat key-value plan files with dotted keys.
//!
//! Grammar: one `key = value` per line; `#` starts a comment; blank lines
//! ignored. Keys:
//!
//! ```text
//! seed, trials, n, D, m (integer, or the literal `n` to track the bin count)
//! process.kind = one-choice | d-choice | beta-choice | greedy-with-ties | parallel-rounds
//! process.d, process.beta
//! source.kind = fixed-uniform | fixed-nonuniform | variable-binomial | weighted-scalar
//! source.f, source.q, source.dim_weights (comma-separated)
//! source.weight.kind = constant | uniform | exponential
//! source.weight.value | source.weight.low, source.weight.high | source.weight.rate
//! sweep.param = n | m | d | beta | f | q | D
//! sweep.values (comma-separated)
//! potentials = unweighted-grouped | weighted-ranked | beta-plain
//! potentials.epsilon
//! checkpoints (comma-separated; default log-spaced)
//! output (path prefix; optional)
//! ```
//!
//! Unknown keys are rejected by name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::potential::PotentialVariant;
use crate::process::ProcessSpec;
use crate::state::{AllocationConfig, BallSourceSpec, WeightDist};

/// One sweep axis: the parameter name and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub param: String,
    pub values: Vec<f64>,
}

/// A parsed experiment plan. `configs()` expands it into one concrete
/// config per sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub base: AllocationConfig,
    /// `m = n` in the plan: the ball count follows the swept bin count.
    pub m_tracks_n: bool,
    pub explicit_checkpoints: Option<Vec<u64>>,
    pub sweep: Option<SweepAxis>,
    pub trials: u64,
    /// Variant and epsilon; alpha is derived per sweep point.
    pub potentials: Option<(PotentialVariant, f64)>,
    pub output: Option<PathBuf>,
}

fn err(msg: String) -> Error {
    Error::InvalidPlan(msg)
}

struct Keys(BTreeMap<String, String>);

impl Keys {
    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| err(format!("cannot parse `{key} = {v}`"))),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.take_parsed(key)?
            .ok_or_else(|| err(format!("missing required key `{key}`")))
    }

    fn finish(self) -> Result<()> {
        match self.0.into_keys().next() {
            None => Ok(()),
            Some(k) => Err(err(format!("unknown key `{k}`"))),
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| err(format!("cannot parse entry `{}` in `{key}`", s.trim())))
        })
        .collect()
}

/// Parse a plan from its text form.
pub fn parse_plan(text: &str) -> Result<ExperimentPlan> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(err(format!("duplicate key `{key}`")));
        }
    }
    let mut keys = Keys(map);

    let bins: usize = keys.require("n")?;
    let dims: usize = keys.take_parsed("D")?.unwrap_or(1);
    let (balls, m_tracks_n) = match keys.take("m") {
        None => return Err(err("missing required key `m`".into())),
        Some(v) if v == "n" => (bins as u64, true),
        Some(v) => (
            v.parse()
                .map_err(|_| err(format!("cannot parse `m = {v}`")))?,
            false,
        ),
    };
    let seed: u64 = keys.take_parsed("seed")?.unwrap_or(0);
    let trials: u64 = keys.take_parsed("trials")?.unwrap_or(1);
    if trials < 1 {
        return Err(err("trials must be >= 1".into()));
    }

    let process = match keys
        .take("process.kind")
        .unwrap_or_else(|| "d-choice".into())
        .as_str()
    {
        "one-choice" => ProcessSpec::OneChoice,
        "d-choice" => ProcessSpec::DChoice {
            d: keys.take_parsed("process.d")?.unwrap_or(2),
        },
        "beta-choice" => ProcessSpec::BetaChoice {
            beta: keys.require("process.beta")?,
        },
        "greedy-with-ties" => ProcessSpec::GreedyWithTies {
            d: keys.take_parsed("process.d")?.unwrap_or(2),
        },
        "parallel-rounds" => ProcessSpec::ParallelRounds {
            d: keys.take_parsed("process.d")?.unwrap_or(2),
        },
        other => return Err(err(format!("unknown process.kind `{other}`"))),
    };

    let source = match keys
        .take("source.kind")
        .unwrap_or_else(|| "fixed-uniform".into())
        .as_str()
    {
        "fixed-uniform" => BallSourceSpec::FixedUniform {
            f: keys.take_parsed("source.f")?.unwrap_or(1),
        },
        "fixed-nonuniform" => {
            let weights = keys
                .take("source.dim_weights")
                .ok_or_else(|| err("fixed-nonuniform needs `source.dim_weights`".into()))?;
            BallSourceSpec::FixedNonUniform {
                f: keys.take_parsed("source.f")?.unwrap_or(1),
                dim_weights: parse_list("source.dim_weights", &weights)?,
            }
        }
        "variable-binomial" => BallSourceSpec::VariableBinomial {
            q: keys.require("source.q")?,
        },
        "weighted-scalar" => {
            let weight_dist = match keys
                .take("source.weight.kind")
                .unwrap_or_else(|| "constant".into())
                .as_str()
            {
                "constant" => {
                    WeightDist::Constant(keys.take_parsed("source.weight.value")?.unwrap_or(1.0))
                }
                "uniform" => WeightDist::Uniform(
                    keys.require("source.weight.low")?,
                    keys.require("source.weight.high")?,
                ),
                "exponential" => WeightDist::Exponential(keys.require("source.weight.rate")?),
                other => return Err(err(format!("unknown source.weight.kind `{other}`"))),
            };
            BallSourceSpec::WeightedScalar { weight_dist }
        }
        other => return Err(err(format!("unknown source.kind `{other}`"))),
    };

    let sweep = match (keys.take("sweep.param"), keys.take("sweep.values")) {
        (None, None) => None,
        (Some(param), Some(values)) => {
            if !matches!(param.as_str(), "n" | "m" | "d" | "beta" | "f" | "q" | "D") {
                return Err(err(format!("unknown sweep parameter `{param}`")));
            }
            let values: Vec<f64> = parse_list("sweep.values", &values)?;
            if values.is_empty() {
                return Err(err("sweep.values is empty".into()));
            }
            Some(SweepAxis { param, values })
        }
        _ => return Err(err("sweep.param and sweep.values must appear together".into())),
    };

    let potentials = match keys.take("potentials") {
        None => None,
        Some(v) => {
            let variant = match v.as_str() {
                "unweighted-grouped" => PotentialVariant::UnweightedGrouped,
                "weighted-ranked" => PotentialVariant::WeightedRanked,
                "beta-plain" => PotentialVariant::BetaPlain,
                other => return Err(err(format!("unknown potentials variant `{other}`"))),
            };
            let epsilon: f64 = keys.take_parsed("potentials.epsilon")?.unwrap_or(0.25);
            Some((variant, epsilon))
        }
    };

    let explicit_checkpoints = match keys.take("checkpoints") {
        None => None,
        Some(v) => Some(parse_list("checkpoints", &v)?),
    };
    let output = keys.take("output").map(PathBuf::from);
    keys.finish()?;

    let checkpoints = explicit_checkpoints
        .clone()
        .unwrap_or_else(|| AllocationConfig::default_checkpoints(bins, balls));
    let base = AllocationConfig {
        bins,
        dims,
        balls,
        source,
        process,
        seed,
        checkpoints,
    };
    let plan = ExperimentPlan {
        base,
        m_tracks_n,
        explicit_checkpoints,
        sweep,
        trials,
        potentials,
        output,
    };
    // every sweep point must produce a valid config
    plan.configs()?;
    Ok(plan)
}

/// Read and parse a plan file.
pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    parse_plan(&std::fs::read_to_string(path)?)
}

fn as_usize(param: &str, v: f64) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
        return Err(err(format!("sweep value {v} invalid for `{param}`")));
    }
    Ok(v as usize)
}

impl ExperimentPlan {
    /// Concrete (sweep value, config) per sweep point; a single unswept
    /// point yields one entry with no value.
    pub fn configs(&self) -> Result<Vec<(Option<f64>, AllocationConfig)>> {
        let points: Vec<Option<f64>> = match &self.sweep {
            None => vec![None],
            Some(axis) => axis.values.iter().map(|&v| Some(v)).collect(),
        };
        let mut out = Vec::with_capacity(points.len());
        for value in points {
            let mut cfg = self.base.clone();
            if let (Some(v), Some(axis)) = (value, &self.sweep) {
                apply_sweep(&mut cfg, &axis.param, v)?;
            }
            if self.m_tracks_n {
                cfg.balls = cfg.bins as u64;
            }
            cfg.checkpoints = match &self.explicit_checkpoints {
                Some(cps) => cps.clone(),
                None => AllocationConfig::default_checkpoints(cfg.bins, cfg.balls),
            };
            cfg.validate()?;
            out.push((value, cfg));
        }
        Ok(out)
    }
}

fn apply_sweep(cfg: &mut AllocationConfig, param: &str, v: f64) -> Result<()> {
    match param {
        "n" => cfg.bins = as_usize("n", v)?,
        "m" => cfg.balls = as_usize("m", v)? as u64,
        "D" => cfg.dims = as_usize("D", v)?,
        "d" => {
            let d = as_usize("d", v)?;
            match &mut cfg.process {
                ProcessSpec::DChoice { d: slot }
                | ProcessSpec::GreedyWithTies { d: slot }
                | ProcessSpec::ParallelRounds { d: slot } => *slot = d,
                other => {
                    return Err(err(format!("cannot sweep `d` for process {other:?}")));
                }
            }
        }
        "beta" => match &mut cfg.process {
            ProcessSpec::BetaChoice { beta } => *beta = v,
            other => return Err(err(format!("cannot sweep `beta` for process {other:?}"))),
        },
        "f" => match &mut cfg.source {
            BallSourceSpec::FixedUniform { f } | BallSourceSpec::FixedNonUniform { f, .. } => {
                *f = as_usize("f", v)?
            }
            other => return Err(err(format!("cannot sweep `f` for source {other:?}"))),
        },
        "q" => match &mut cfg.source {
            BallSourceSpec::VariableBinomial { q } => *q = v,
            other => return Err(err(format!("cannot sweep `q` for source {other:?}"))),
        },
        other => return Err(err(format!("unknown sweep parameter `{other}`"))),
    }
    Ok(())
}
