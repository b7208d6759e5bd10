//! Allocation rules and trial runners.
//!
//! Every rule reduces to: sample candidate bins, compare their sum loads,
//! place the ball in the least loaded (ties to the lowest bin index).
//! Comparisons use raw per-bin sums; subtracting the common average does not
//! change the order, so the normalized view is only materialized at
//! checkpoints.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::potential::{self, PotentialParams};
use crate::rng;
use crate::state::{AllocationConfig, BallSpec, LoadMatrix, NormalizedState};
use crate::trajectory::{CheckpointRow, TrajectoryRecord};

/// Which allocation rule places each ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProcessSpec {
    OneChoice,
    DChoice { d: usize },
    /// With probability beta act as two-choice, otherwise one-choice.
    BetaChoice { beta: f64 },
    /// Sequential; every sampled bin tied at the minimum load gets a copy.
    GreedyWithTies { d: usize },
    /// Multi-round bid/accept protocol over d pre-sampled bins per ball.
    ParallelRounds { d: usize },
}

impl ProcessSpec {
    pub fn validate(&self, bins: usize) -> Result<()> {
        match *self {
            ProcessSpec::OneChoice => Ok(()),
            ProcessSpec::DChoice { d }
            | ProcessSpec::GreedyWithTies { d }
            | ProcessSpec::ParallelRounds { d } => {
                if d < 2 {
                    Err(Error::InvalidConfig(format!(
                        "multi-choice process requires d >= 2, got d={d}"
                    )))
                } else if d > bins {
                    Err(Error::InvalidConfig(format!(
                        "d={d} exceeds bin count n={bins}"
                    )))
                } else {
                    Ok(())
                }
            }
            ProcessSpec::BetaChoice { beta } => {
                if beta > 0.0 && beta <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "beta must lie in (0, 1], got {beta}"
                    )))
                }
            }
        }
    }

    /// Choice count, for rules that have one.
    pub fn d(&self) -> Option<usize> {
        match *self {
            ProcessSpec::DChoice { d }
            | ProcessSpec::GreedyWithTies { d }
            | ProcessSpec::ParallelRounds { d } => Some(d),
            _ => None,
        }
    }

    /// Mixing parameter, for the (1+beta) rule.
    pub fn beta(&self) -> Option<f64> {
        match *self {
            ProcessSpec::BetaChoice { beta } => Some(beta),
            _ => None,
        }
    }
}

/// Probability that a ball lands in the i-th most loaded bin (rank 1 =
/// most loaded), for bins with all-distinct loads.
#[derive(Debug, Clone, PartialEq)]
pub struct RankProbabilityVector {
    pub p: Vec<f64>,
}

/// Closed-form rank-placement probabilities for a rule.
pub fn probability_vector(spec: &ProcessSpec, n: usize) -> RankProbabilityVector {
    let nf = n as f64;
    let p = match *spec {
        ProcessSpec::OneChoice => vec![1.0 / nf; n],
        ProcessSpec::DChoice { d }
        | ProcessSpec::GreedyWithTies { d }
        | ProcessSpec::ParallelRounds { d } => (1..=n)
            .map(|i| (i as f64 / nf).powi(d as i32) - ((i - 1) as f64 / nf).powi(d as i32))
            .collect(),
        ProcessSpec::BetaChoice { beta } => (1..=n)
            .map(|i| (1.0 - beta) / nf + beta * (2 * i - 1) as f64 / (nf * nf))
            .collect(),
    };
    RankProbabilityVector { p }
}

/// Least-loaded bin among `samples`, ties to the lowest bin index.
pub(crate) fn least_loaded(sums: &[f64], samples: &[usize]) -> usize {
    let mut best = samples[0];
    for &i in &samples[1..] {
        if sums[i] < sums[best] || (sums[i] == sums[best] && i < best) {
            best = i;
        }
    }
    best
}

/// All distinct sampled bins achieving the minimum load (greedy-with-ties
/// semantics: duplicate samples of one bin collapse to a single copy).
pub(crate) fn tie_set(sums: &[f64], samples: &[usize]) -> Vec<usize> {
    let min = samples
        .iter()
        .map(|&i| sums[i])
        .fold(f64::INFINITY, f64::min);
    let mut set: Vec<usize> = samples.iter().copied().filter(|&i| sums[i] == min).collect();
    set.sort_unstable();
    set.dedup();
    set
}

fn sample_d<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<usize> {
    (0..d).map(|_| rng.random_range(0..n)).collect()
}

fn two_choice<R: Rng + ?Sized>(sums: &[f64], rng: &mut R) -> usize {
    let a = rng.random_range(0..sums.len());
    let b = rng.random_range(0..sums.len());
    least_loaded(sums, &[a, b])
}

/// Pick the bin for one ball given the per-bin sum loads.
pub fn select_bin_by_sums<R: Rng + ?Sized>(
    sums: &[f64],
    spec: &ProcessSpec,
    rng: &mut R,
) -> usize {
    let n = sums.len();
    match *spec {
        ProcessSpec::OneChoice => rng.random_range(0..n),
        ProcessSpec::DChoice { d } => {
            let mut best = rng.random_range(0..n);
            for _ in 1..d {
                let i = rng.random_range(0..n);
                if sums[i] < sums[best] || (sums[i] == sums[best] && i < best) {
                    best = i;
                }
            }
            best
        }
        // beta >= 1 skips the coin so the stream aligns with d=2-choice
        ProcessSpec::BetaChoice { beta } => {
            if beta >= 1.0 || rng.random::<f64>() < beta {
                two_choice(sums, rng)
            } else {
                rng.random_range(0..n)
            }
        }
        ProcessSpec::GreedyWithTies { .. } | ProcessSpec::ParallelRounds { .. } => {
            panic!("select_bin applies to sequential single-placement rules only")
        }
    }
}

/// Pick the bin for one ball from the normalized state.
pub fn select_bin<R: Rng + ?Sized>(
    state: &NormalizedState,
    spec: &ProcessSpec,
    rng: &mut R,
) -> usize {
    select_bin_by_sums(&state.s, spec, rng)
}

/// Mutable per-trial state: the load matrix plus incrementally maintained
/// per-bin sums.
struct Sim {
    lm: LoadMatrix,
    sums: Vec<f64>,
}

impl Sim {
    fn new(bins: usize, dims: usize) -> Self {
        Sim {
            lm: LoadMatrix::new(bins, dims),
            sums: vec![0.0; bins],
        }
    }

    fn place(&mut self, bin: usize, ball: &BallSpec) {
        self.sums[bin] += ball.total_weight();
        self.lm.apply_ball(bin, ball);
    }

    fn checkpoint(
        &self,
        t: u64,
        potentials: Option<&PotentialParams>,
        rounds: Option<u64>,
    ) -> Result<CheckpointRow> {
        let report = metrics::gap_report(&self.lm);
        let (phi, psi, gamma) = match potentials {
            Some(params) => {
                let mean = self.sums.iter().sum::<f64>() / self.sums.len() as f64;
                let mut s: Vec<f64> = self.sums.iter().map(|v| v - mean).collect();
                s.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let value = potential::gamma_from_sorted(&s, params)?;
                (Some(value.phi), Some(value.psi), Some(value.gamma))
            }
            None => (None, None, None),
        };
        Ok(CheckpointRow {
            t,
            max_gap: report.max_gap,
            sum_gap: report.sum_gap,
            ball_count_gap: report.ball_count_gap,
            phi,
            psi,
            gamma,
            rounds_used: rounds,
        })
    }
}

struct RunOutput {
    record: TrajectoryRecord,
    state: LoadMatrix,
    rounds: Option<u64>,
}

fn run_internal(
    config: &AllocationConfig,
    potentials: Option<&PotentialParams>,
) -> Result<RunOutput> {
    config.validate()?;
    match config.process {
        ProcessSpec::OneChoice | ProcessSpec::DChoice { .. } | ProcessSpec::BetaChoice { .. } => {
            run_single_placement(config, potentials, false)
        }
        ProcessSpec::GreedyWithTies { .. } => run_single_placement(config, potentials, true),
        ProcessSpec::ParallelRounds { .. } => run_parallel_internal(config, potentials),
    }
}

fn run_single_placement(
    config: &AllocationConfig,
    potentials: Option<&PotentialParams>,
    with_ties: bool,
) -> Result<RunOutput> {
    let mut rng = rng::stream(config.seed);
    let mut sim = Sim::new(config.bins, config.dims);
    let mut rows = Vec::with_capacity(config.checkpoints.len());
    let mut next_cp = config.checkpoints.iter().copied().peekable();
    if next_cp.peek() == Some(&0) {
        rows.push(sim.checkpoint(0, potentials, None)?);
        next_cp.next();
    }
    let d = config.process.d().unwrap_or(0);
    for t in 1..=config.balls {
        let ball = config.source.generate(config.dims, &mut rng);
        if with_ties {
            let samples = sample_d(config.bins, d, &mut rng);
            for bin in tie_set(&sim.sums, &samples) {
                sim.place(bin, &ball);
            }
        } else {
            let bin = select_bin_by_sums(&sim.sums, &config.process, &mut rng);
            sim.place(bin, &ball);
        }
        if next_cp.peek() == Some(&t) {
            rows.push(sim.checkpoint(t, potentials, None)?);
            next_cp.next();
        }
    }
    Ok(RunOutput {
        record: TrajectoryRecord {
            trial: 0,
            seed: config.seed,
            rows,
        },
        state: sim.lm,
        rounds: None,
    })
}

/// Round cap before the runner aborts with a diagnostic.
fn round_guard(bins: usize, balls: u64, d: usize) -> u64 {
    let n = bins as f64;
    let loglog = (n.max(4.0)).log2().log2();
    let bound = 64.0 * (balls as f64 / n + loglog + d as f64 + 2.0);
    bound.ceil() as u64
}

fn run_parallel_internal(
    config: &AllocationConfig,
    potentials: Option<&PotentialParams>,
) -> Result<RunOutput> {
    let d = config.process.d().expect("parallel process carries d");
    let mut rng = rng::stream(config.seed);
    let m = config.balls as usize;

    // Every ball draws its ball spec and its d candidate bins up front and
    // keeps them across rounds.
    let balls: Vec<BallSpec> = (0..m)
        .map(|_| config.source.generate(config.dims, &mut rng))
        .collect();
    let choices: Vec<Vec<usize>> = (0..m)
        .map(|_| sample_d(config.bins, d, &mut rng))
        .collect();

    let mut sim = Sim::new(config.bins, config.dims);
    let mut rows = Vec::with_capacity(config.checkpoints.len());
    let mut next_cp = config.checkpoints.iter().copied().peekable();
    let mut committed = vec![false; m];
    let mut done = 0usize;
    let mut rounds = 0u64;
    let limit = round_guard(config.bins, config.balls, d);

    if next_cp.peek() == Some(&0) {
        rows.push(sim.checkpoint(0, potentials, Some(0))?);
        next_cp.next();
    }

    while done < m {
        rounds += 1;
        if rounds > limit {
            return Err(Error::RoundGuard { rounds, limit });
        }
        // Each bin accepts the lowest-ID uncommitted bidder this round.
        let mut accept = vec![usize::MAX; config.bins];
        for (ball, ch) in choices.iter().enumerate() {
            if committed[ball] {
                continue;
            }
            for &bin in ch {
                if ball < accept[bin] {
                    accept[bin] = ball;
                }
            }
        }
        // An accepted ball commits to the least loaded accepting bin.
        for (ball, ch) in choices.iter().enumerate() {
            if committed[ball] {
                continue;
            }
            let acceptors: Vec<usize> = {
                let mut a: Vec<usize> = ch.iter().copied().filter(|&b| accept[b] == ball).collect();
                a.sort_unstable();
                a.dedup();
                a
            };
            if acceptors.is_empty() {
                continue;
            }
            let bin = least_loaded(&sim.sums, &acceptors);
            sim.place(bin, &balls[ball]);
            committed[ball] = true;
            done += 1;
            if next_cp.peek() == Some(&(done as u64)) {
                rows.push(sim.checkpoint(done as u64, potentials, Some(rounds))?);
                next_cp.next();
            }
        }
    }
    Ok(RunOutput {
        record: TrajectoryRecord {
            trial: 0,
            seed: config.seed,
            rows,
        },
        state: sim.lm,
        rounds: Some(rounds),
    })
}

/// Run one trial under any rule, recording metrics at the configured
/// checkpoints. Deterministic given the seed.
pub fn run(
    config: &AllocationConfig,
    potentials: Option<&PotentialParams>,
) -> Result<TrajectoryRecord> {
    Ok(run_internal(config, potentials)?.record)
}

/// Sequential placement (one-choice, d-choice or (1+beta)-choice).
pub fn run_sequential(config: &AllocationConfig) -> Result<TrajectoryRecord> {
    match config.process {
        ProcessSpec::OneChoice | ProcessSpec::DChoice { .. } | ProcessSpec::BetaChoice { .. } => {}
        _ => {
            return Err(Error::InvalidConfig(
                "run_sequential expects a sequential single-placement rule".into(),
            ))
        }
    }
    run(config, None)
}

/// Greedy with ties: every sampled bin at the minimum load receives a copy.
pub fn run_greedy_with_ties(config: &AllocationConfig) -> Result<TrajectoryRecord> {
    match config.process {
        ProcessSpec::GreedyWithTies { .. } => run(config, None),
        _ => Err(Error::InvalidConfig(
            "run_greedy_with_ties expects kind greedy-with-ties".into(),
        )),
    }
}

/// Multi-round parallel protocol; also reports the rounds used.
pub fn run_parallel_rounds(config: &AllocationConfig) -> Result<(TrajectoryRecord, u64)> {
    match config.process {
        ProcessSpec::ParallelRounds { .. } => {
            let out = run_internal(config, None)?;
            Ok((out.record, out.rounds.unwrap_or(0)))
        }
        _ => Err(Error::InvalidConfig(
            "run_parallel_rounds expects kind parallel-rounds".into(),
        )),
    }
}

/// Run a trial to completion and hand back the raw final state. Used to
/// freeze a state for drift estimation.
pub fn run_to_state(config: &AllocationConfig) -> Result<LoadMatrix> {
    Ok(run_internal(config, None)?.state)
}
