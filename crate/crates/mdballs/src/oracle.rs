//! Exact enumeration of tiny instances, used to validate the simulator.
//!
//! Everything here is rational arithmetic over the full branch tree: every
//! ball realization and every bin-sample realization is expanded with its
//! exact probability, applying the same tie-break rule as the simulator.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::potential::{self, PotentialParams};
use crate::process::{least_loaded, tie_set, ProcessSpec};
use crate::state::{AllocationConfig, BallSourceSpec, LoadMatrix};

const SEARCH_SPACE_CAP: f64 = 1e7;

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact outcome distribution over final load matrices. Outcome keys are
/// the raw integer load matrix, D x n row-major; bins are labeled, not
/// exchangeable, because tie-breaking by index distinguishes them.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub bins: usize,
    pub dims: usize,
    pub balls: u64,
    pub outcomes: BTreeMap<Vec<u64>, BigRational>,
}

impl ExactDistribution {
    /// Exact sum of all outcome probabilities; must equal 1.
    pub fn total_probability(&self) -> BigRational {
        self.outcomes.values().sum()
    }

    fn gap_of(&self, loads: &[u64]) -> BigRational {
        let n = self.bins as i64;
        let mut best = BigRational::zero();
        for d in 0..self.dims {
            let row = &loads[d * self.bins..(d + 1) * self.bins];
            let total: u64 = row.iter().sum();
            let max = *row.iter().max().unwrap();
            // max - total/n, kept rational
            let gap = rat((max * self.bins as u64) as i64 - total as i64, n);
            if gap > best {
                best = gap;
            }
        }
        best
    }

    /// Exact expected max gap.
    pub fn expected_gap(&self) -> BigRational {
        self.outcomes
            .iter()
            .map(|(loads, p)| p * self.gap_of(loads))
            .sum()
    }

    /// [`expected_gap`](Self::expected_gap) collapsed to a double.
    pub fn expected_gap_f64(&self) -> f64 {
        self.expected_gap().to_f64().unwrap()
    }

    /// E[Gamma] under a potential variant, evaluated in doubles.
    pub fn expected_gamma(&self, params: &PotentialParams) -> Result<f64> {
        let mut acc = 0.0;
        for (loads, p) in &self.outcomes {
            let sums = self.centered_sums(loads);
            acc += p.to_f64().unwrap() * potential::gamma_from_sorted(&sums, params)?.gamma;
        }
        Ok(acc)
    }

    fn centered_sums(&self, loads: &[u64]) -> Vec<f64> {
        let n = self.bins;
        let mut sums = vec![0.0; n];
        for d in 0..self.dims {
            for i in 0..n {
                sums[i] += loads[d * n + i] as f64;
            }
        }
        let mean = sums.iter().sum::<f64>() / n as f64;
        let mut s: Vec<f64> = sums.iter().map(|v| v - mean).collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }
}

/// One possible ball: its populated dims with its exact probability.
fn ball_branches(source: &BallSourceSpec, dims: usize) -> Result<Vec<(Vec<usize>, BigRational)>> {
    match source {
        BallSourceSpec::FixedUniform { f } => {
            let subsets = k_subsets(dims, *f);
            let p = BigRational::new(BigInt::one(), BigInt::from(subsets.len()));
            Ok(subsets.into_iter().map(|s| (s, p.clone())).collect())
        }
        BallSourceSpec::FixedNonUniform { f, dim_weights } => {
            // successive sampling without replacement, aggregated over
            // orderings into subsets
            let w: Vec<BigRational> = dim_weights
                .iter()
                .map(|&x| BigRational::from_float(x).unwrap())
                .collect();
            let mut acc: BTreeMap<Vec<usize>, BigRational> = BTreeMap::new();
            let mut chosen = Vec::new();
            ordered_sequences(&w, *f, &mut chosen, BigRational::one(), &mut acc);
            Ok(acc.into_iter().collect())
        }
        _ => Err(Error::InvalidConfig(
            "exact enumeration supports fixed-f sources only".into(),
        )),
    }
}

fn k_subsets(dims: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, dims: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..dims {
            cur.push(i);
            rec(i + 1, dims, k, cur, out);
            cur.pop();
        }
    }
    rec(0, dims, k, &mut cur, &mut out);
    out
}

fn ordered_sequences(
    w: &[BigRational],
    remaining: usize,
    chosen: &mut Vec<usize>,
    prob: BigRational,
    acc: &mut BTreeMap<Vec<usize>, BigRational>,
) {
    if remaining == 0 {
        let mut key = chosen.clone();
        key.sort_unstable();
        *acc.entry(key).or_insert_with(BigRational::zero) += prob;
        return;
    }
    let total: BigRational = w
        .iter()
        .enumerate()
        .filter(|(i, _)| !chosen.contains(i))
        .map(|(_, v)| v.clone())
        .sum();
    for i in 0..w.len() {
        if chosen.contains(&i) {
            continue;
        }
        chosen.push(i);
        ordered_sequences(w, remaining - 1, chosen, &prob * &w[i] / &total, acc);
        chosen.pop();
    }
}

/// Branches for placing one ball given the current per-bin integer sums:
/// (bins receiving a copy, probability). Only greedy-with-ties yields more
/// than one destination.
fn placement_branches(
    sums: &[u64],
    spec: &ProcessSpec,
) -> Result<Vec<(Vec<usize>, BigRational)>> {
    let n = sums.len();
    let fsums: Vec<f64> = sums.iter().map(|&v| v as f64).collect();
    match *spec {
        ProcessSpec::OneChoice => {
            let p = rat(1, n as i64);
            Ok((0..n).map(|i| (vec![i], p.clone())).collect())
        }
        ProcessSpec::DChoice { d } => {
            let mut hits = vec![0u64; n];
            for tuple in tuples(n, d) {
                hits[least_loaded(&fsums, &tuple)] += 1;
            }
            let den = (n as u64).pow(d as u32);
            Ok(hits
                .into_iter()
                .enumerate()
                .filter(|(_, h)| *h > 0)
                .map(|(i, h)| (vec![i], rat(h as i64, den as i64)))
                .collect())
        }
        ProcessSpec::GreedyWithTies { d } => {
            let mut acc: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
            for tuple in tuples(n, d) {
                *acc.entry(tie_set(&fsums, &tuple)).or_insert(0) += 1;
            }
            let den = (n as u64).pow(d as u32);
            Ok(acc
                .into_iter()
                .map(|(set, h)| (set, rat(h as i64, den as i64)))
                .collect())
        }
        ProcessSpec::BetaChoice { beta } => {
            let b = BigRational::from_float(beta).ok_or_else(|| {
                Error::InvalidConfig(format!("beta {beta} is not a finite float"))
            })?;
            let mut hits = vec![0u64; n];
            for tuple in tuples(n, 2) {
                hits[least_loaded(&fsums, &tuple)] += 1;
            }
            let n2 = (n * n) as i64;
            Ok((0..n)
                .map(|i| {
                    let two = &b * rat(hits[i] as i64, n2);
                    let one = (BigRational::one() - &b) * rat(1, n as i64);
                    (vec![i], two + one)
                })
                .collect())
        }
        ProcessSpec::ParallelRounds { .. } => Err(Error::InvalidConfig(
            "exact enumeration does not cover the parallel protocol".into(),
        )),
    }
}

fn tuples(n: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(n.pow(d as u32));
    let mut cur = vec![0usize; d];
    loop {
        out.push(cur.clone());
        let mut k = d;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            cur[k] += 1;
            if cur[k] < n {
                break;
            }
            cur[k] = 0;
        }
    }
}

fn check_search_space(config: &AllocationConfig, distinct_balls: usize) -> Result<()> {
    let d_eff = match config.process {
        ProcessSpec::OneChoice => 1,
        ProcessSpec::BetaChoice { .. } => 2,
        _ => config.process.d().unwrap(),
    };
    let m = config.balls as f64;
    let space =
        (distinct_balls as f64).powf(m) * (config.bins as f64).powf(d_eff as f64 * m);
    if space > SEARCH_SPACE_CAP {
        return Err(Error::SearchSpace(space));
    }
    Ok(())
}

/// Exact distribution of final load matrices from the empty state.
pub fn enumerate_exact(config: &AllocationConfig) -> Result<ExactDistribution> {
    enumerate_exact_from(&LoadMatrix::new(config.bins, config.dims), config)
}

/// Exact distribution continuing from a seeded integer-load state.
pub fn enumerate_exact_from(
    initial: &LoadMatrix,
    config: &AllocationConfig,
) -> Result<ExactDistribution> {
    config.validate()?;
    let (n, dims) = (config.bins, config.dims);
    if initial.bins() != n || initial.dims() != dims {
        return Err(Error::InvalidConfig(
            "seed state shape does not match config".into(),
        ));
    }
    let balls = ball_branches(&config.source, dims)?;
    check_search_space(config, balls.len())?;

    let mut init = vec![0u64; dims * n];
    for d in 0..dims {
        for i in 0..n {
            let v = initial.load(d, i);
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::InvalidConfig(
                    "exact enumeration needs non-negative integer seed loads".into(),
                ));
            }
            init[d * n + i] = v as u64;
        }
    }

    let mut level: BTreeMap<Vec<u64>, BigRational> = BTreeMap::new();
    level.insert(init, BigRational::one());
    for _ in 0..config.balls {
        let mut next: BTreeMap<Vec<u64>, BigRational> = BTreeMap::new();
        for (loads, p) in &level {
            let mut sums = vec![0u64; n];
            for d in 0..dims {
                for i in 0..n {
                    sums[i] += loads[d * n + i];
                }
            }
            for (dims_hit, pball) in &balls {
                for (dests, psel) in placement_branches(&sums, &config.process)? {
                    let mut out = loads.clone();
                    for &bin in &dests {
                        for &dim in dims_hit {
                            out[dim * n + bin] += 1;
                        }
                    }
                    *next.entry(out).or_insert_with(BigRational::zero) +=
                        p * pball * &psel;
                }
            }
        }
        level = next;
    }
    Ok(ExactDistribution {
        bins: n,
        dims,
        balls: config.balls,
        outcomes: level,
    })
}

/// Chi-square goodness-of-fit of observed final load matrices against the
/// exact distribution, pooling cells so every expected count is >= 5.
/// Observing an outcome of probability zero fails hard.
pub fn chi_square_compare(
    dist: &ExactDistribution,
    trials: &[Vec<u64>],
) -> Result<(f64, f64)> {
    if trials.is_empty() {
        return Err(Error::InvalidConfig("no trials to compare".into()));
    }
    let mut observed: BTreeMap<&[u64], u64> = BTreeMap::new();
    for t in trials {
        if !dist.outcomes.contains_key(t) {
            return Err(Error::ForbiddenOutcome(format!("{t:?}")));
        }
        *observed.entry(t.as_slice()).or_insert(0) += 1;
    }
    let total = trials.len() as f64;
    let mut cells: Vec<(f64, f64)> = dist
        .outcomes
        .iter()
        .map(|(k, p)| {
            let e = p.to_f64().unwrap() * total;
            let o = *observed.get(k.as_slice()).unwrap_or(&0) as f64;
            (e, o)
        })
        .collect();
    cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // greedy pooling from the smallest expected count upward
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut run = (0.0, 0.0);
    for (e, o) in cells {
        run.0 += e;
        run.1 += o;
        if run.0 >= 5.0 {
            pooled.push(run);
            run = (0.0, 0.0);
        }
    }
    if run.0 > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += run.0;
                last.1 += run.1;
            }
            None => {
                return Err(Error::InvalidConfig(
                    "too few trials for expected counts >= 5".into(),
                ))
            }
        }
    }
    if pooled.len() < 2 {
        return Err(Error::InvalidConfig(
            "chi-square needs at least two pooled cells".into(),
        ));
    }
    let stat: f64 = pooled.iter().map(|(e, o)| (o - e).powi(2) / e).sum();
    let df = (pooled.len() - 1) as f64;
    let p_value = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
    Ok((stat, p_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialVariant;
    use crate::process;
    use crate::rng::stream;
    use crate::state::BallSpec;

    fn config(
        bins: usize,
        dims: usize,
        balls: u64,
        f: usize,
        proc_: ProcessSpec,
    ) -> AllocationConfig {
        AllocationConfig {
            bins,
            dims,
            balls,
            source: BallSourceSpec::FixedUniform { f },
            process: proc_,
            seed: 5,
            checkpoints: vec![balls],
        }
    }

    #[test]
    fn single_bin_is_deterministic() {
        let dist = enumerate_exact(&config(1, 1, 4, 1, ProcessSpec::OneChoice)).unwrap();
        assert_eq!(dist.outcomes.len(), 1);
        assert_eq!(dist.outcomes.get(&vec![4u64]), Some(&BigRational::one()));
        assert!(dist.expected_gap().is_zero());
    }

    #[test]
    fn one_choice_two_balls_hand_enumeration() {
        let dist = enumerate_exact(&config(2, 1, 2, 1, ProcessSpec::OneChoice)).unwrap();
        assert_eq!(dist.outcomes.get(&vec![2, 0]), Some(&rat(1, 4)));
        assert_eq!(dist.outcomes.get(&vec![1, 1]), Some(&rat(1, 2)));
        assert_eq!(dist.outcomes.get(&vec![0, 2]), Some(&rat(1, 4)));
        assert_eq!(dist.expected_gap(), rat(1, 2));
        assert!(dist.total_probability().is_one());
    }

    #[test]
    fn two_choice_two_balls_hand_enumeration() {
        let dist = enumerate_exact(&config(2, 1, 2, 1, ProcessSpec::DChoice { d: 2 })).unwrap();
        assert_eq!(dist.outcomes.get(&vec![1, 1]), Some(&rat(3, 4)));
        assert_eq!(dist.outcomes.get(&vec![2, 0]), Some(&rat(3, 16)));
        assert_eq!(dist.outcomes.get(&vec![0, 2]), Some(&rat(1, 16)));
        assert_eq!(dist.expected_gap(), rat(1, 4));
    }

    #[test]
    fn probabilities_sum_to_one_across_kinds() {
        for proc_ in [
            ProcessSpec::OneChoice,
            ProcessSpec::DChoice { d: 2 },
            ProcessSpec::BetaChoice { beta: 0.5 },
            ProcessSpec::GreedyWithTies { d: 2 },
        ] {
            let dist = enumerate_exact(&config(3, 2, 2, 1, proc_)).unwrap();
            assert!(dist.total_probability().is_one(), "{proc_:?}");
        }
    }

    #[test]
    fn beta_one_matches_two_choice() {
        let b = enumerate_exact(&config(2, 1, 2, 1, ProcessSpec::BetaChoice { beta: 1.0 }))
            .unwrap();
        let d = enumerate_exact(&config(2, 1, 2, 1, ProcessSpec::DChoice { d: 2 })).unwrap();
        assert_eq!(b.outcomes, d.outcomes);
    }

    #[test]
    fn search_space_cap_is_enforced() {
        let big = config(10, 1, 10, 1, ProcessSpec::DChoice { d: 3 });
        match enumerate_exact(&big) {
            Err(Error::SearchSpace(_)) => {}
            other => panic!("expected search-space rejection, got {other:?}"),
        }
    }

    #[test]
    fn first_ball_marginal_matches_probability_vector() {
        // seeded distinct loads 3,2,1,0 -> bin rank = bin index
        let mut seed = LoadMatrix::new(4, 1);
        for (bin, k) in [(0usize, 3), (1, 2), (2, 1)] {
            for _ in 0..k {
                seed.apply_ball(bin, &BallSpec::unit(vec![0]));
            }
        }
        let spec = ProcessSpec::DChoice { d: 2 };
        let cfg = config(4, 1, 1, 1, spec);
        let dist = enumerate_exact_from(&seed, &cfg).unwrap();
        let pv = process::probability_vector(&spec, 4);
        for (loads, p) in &dist.outcomes {
            let bin = (0..4).find(|&i| loads[i] > [3, 2, 1, 0][i]).unwrap();
            // rank 1 = most loaded = bin 0
            assert_eq!(p.to_f64().unwrap(), pv.p[bin], "bin {bin}");
        }
    }

    #[test]
    fn expected_gamma_matches_drift_estimate() {
        // E[Gamma(1)] from the oracle equals Gamma(0) + E[dGamma]; the MC
        // drift estimate must agree within its CI.
        let cfg = config(2, 1, 1, 1, ProcessSpec::DChoice { d: 2 });
        let params =
            crate::potential::PotentialParams::defaults(PotentialVariant::BetaPlain, 1.0, 0.25)
                .unwrap();
        let dist = enumerate_exact(&cfg).unwrap();
        let exact = dist.expected_gamma(&params).unwrap();
        let state = LoadMatrix::new(2, 1);
        let mut rng = stream(77);
        let est = crate::potential::drift_estimate(
            &state,
            &cfg.process,
            &cfg.source,
            &params,
            2000,
            &mut rng,
        )
        .unwrap();
        let mc = est.base.gamma + est.mean_dgamma;
        assert!((mc - exact).abs() <= est.ci_half.max(1e-12), "{mc} vs {exact}");
    }

    #[test]
    fn chi_square_accepts_the_null() {
        let cfg = config(2, 1, 3, 1, ProcessSpec::OneChoice);
        let dist = enumerate_exact(&cfg).unwrap();
        let mut rng = stream(101);
        let mut trials = Vec::new();
        for _ in 0..20_000 {
            let mut c = cfg.clone();
            c.seed = rng.next_u64();
            let lm = process::run_to_state(&c).unwrap();
            trials.push((0..2).map(|i| lm.load(0, i) as u64).collect());
        }
        let (_, p) = chi_square_compare(&dist, &trials).unwrap();
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn chi_square_rejects_the_wrong_process() {
        let d2 = enumerate_exact(&config(2, 1, 3, 1, ProcessSpec::DChoice { d: 2 })).unwrap();
        let one = config(2, 1, 3, 1, ProcessSpec::OneChoice);
        let mut rng = stream(102);
        let mut trials = Vec::new();
        for _ in 0..20_000 {
            let mut c = one.clone();
            c.seed = rng.next_u64();
            let lm = process::run_to_state(&c).unwrap();
            trials.push((0..2).map(|i| lm.load(0, i) as u64).collect());
        }
        let (_, p) = chi_square_compare(&d2, &trials).unwrap();
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn empty_trials_are_rejected() {
        let dist = enumerate_exact(&config(2, 1, 2, 1, ProcessSpec::OneChoice)).unwrap();
        assert!(chi_square_compare(&dist, &[]).is_err());
    }

    #[test]
    fn impossible_outcome_fails_hard() {
        let dist = enumerate_exact(&config(2, 1, 2, 1, ProcessSpec::OneChoice)).unwrap();
        let bogus = vec![vec![5u64, 5u64]; 100];
        match chi_square_compare(&dist, &bogus) {
            Err(Error::ForbiddenOutcome(_)) => {}
            other => panic!("expected forbidden outcome, got {other:?}"),
        }
    }

    #[test]
    fn nonuniform_source_branches_sum_to_one() {
        let cfg = AllocationConfig {
            bins: 2,
            dims: 3,
            balls: 1,
            source: BallSourceSpec::FixedNonUniform {
                f: 2,
                dim_weights: vec![0.5, 0.25, 0.25],
            },
            process: ProcessSpec::OneChoice,
            seed: 1,
            checkpoints: vec![1],
        };
        let dist = enumerate_exact(&cfg).unwrap();
        assert!(dist.total_probability().is_one());
    }

    use rand::RngCore;
}
