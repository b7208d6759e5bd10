//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line (visible with --nocapture; a FAIL also panics).

use std::process::Command;

use rayon::prelude::*;

use mdballs::metrics::{self, Regressor};
use mdballs::potential::{self, PotentialParams, PotentialVariant};
use mdballs::process::{self, ProcessSpec};
use mdballs::rng;
use mdballs::state::{AllocationConfig, BallSourceSpec};

fn config(
    bins: usize,
    dims: usize,
    balls: u64,
    f: usize,
    process: ProcessSpec,
    seed: u64,
) -> AllocationConfig {
    AllocationConfig {
        bins,
        dims,
        balls,
        source: BallSourceSpec::FixedUniform { f },
        process,
        seed,
        checkpoints: vec![balls],
    }
}

fn final_max_gap(cfg: &AllocationConfig) -> f64 {
    process::run(cfg, None).unwrap().final_row().max_gap
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn verdict(criterion: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    println!("{line}");
    assert!(pass, "{line}");
}

#[test]
fn criterion_01_oracle_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let mut all = true;
    let mut details = Vec::new();
    let mut cases: Vec<(String, String)> = Vec::new();
    for m in [2u64, 3] {
        for kind in ["one-choice", "d-choice", "greedy-with-ties"] {
            cases.push((
                format!("{kind}-m{m}"),
                format!("n = 2\nm = {m}\nprocess.kind = {kind}\nseed = 12\n"),
            ));
        }
    }
    cases.push((
        "d-choice-D2".into(),
        "n = 2\nD = 2\nm = 2\nprocess.kind = d-choice\nseed = 12\n".into(),
    ));
    for (name, text) in cases {
        let path = dir.path().join(format!("{name}.plan"));
        std::fs::write(&path, text).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_mdballs"))
            .arg("oracle-check")
            .arg(&path)
            .args(["--trials", "100000"])
            .output()
            .unwrap();
        let ok = out.status.success();
        all &= ok;
        let p = serde_json::from_slice::<serde_json::Value>(&out.stdout)
            .ok()
            .and_then(|v| v["p_value"].as_f64())
            .unwrap_or(f64::NAN);
        details.push(format!("{name} p={p:.3}"));
    }
    verdict("1 oracle-equivalence", all, &details.join(", "));
}

#[test]
fn criterion_02_two_choice_beats_one_choice() {
    let wins: u32 = (0..50u64)
        .into_par_iter()
        .map(|i| {
            let seed = rng::derive_seed(0xC2, 0, i);
            let one = final_max_gap(&config(1024, 1, 1024, 1, ProcessSpec::OneChoice, seed));
            let two = final_max_gap(&config(
                1024,
                1,
                1024,
                1,
                ProcessSpec::DChoice { d: 2 },
                seed,
            ));
            (two < one) as u32
        })
        .sum();
    verdict(
        "2 two-choice-beats-one-choice",
        wins >= 48,
        &format!("d=2 strictly better in {wins}/50 paired seeds (need >= 48)"),
    );
}

#[test]
fn criterion_03_m_independence() {
    let n = 256;
    let medians: Vec<f64> = [100 * n as u64, 1000 * n as u64]
        .iter()
        .map(|&m| {
            let mut gaps: Vec<f64> = (0..30u64)
                .into_par_iter()
                .map(|i| {
                    let seed = rng::derive_seed(0xC3, m, i);
                    final_max_gap(&config(n, 16, m, 4, ProcessSpec::DChoice { d: 2 }, seed))
                })
                .collect();
            median(&mut gaps)
        })
        .collect();
    let diff = (medians[1] - medians[0]).abs();
    verdict(
        "3 m-independence",
        diff <= 2.0,
        &format!(
            "median max_gap {:.2} at m=100n vs {:.2} at m=1000n, diff {:.2} (need <= 2.0)",
            medians[0], medians[1], diff
        ),
    );
}

#[test]
fn criterion_04_lnln_scaling() {
    let ns = [256usize, 1024, 4096, 16384, 65536];
    let batch = |root: u64| -> Vec<(f64, f64)> {
        ns.iter()
            .map(|&n| {
                let mut gaps: Vec<f64> = (0..30u64)
                    .into_par_iter()
                    .map(|i| {
                        let seed = rng::derive_seed(root, n as u64, i);
                        final_max_gap(&config(
                            n,
                            1,
                            n as u64,
                            1,
                            ProcessSpec::DChoice { d: 2 },
                            seed,
                        ))
                    })
                    .collect();
                (n as f64, median(&mut gaps))
            })
            .collect()
    };
    let a = batch(0xC4A);
    let b = batch(0xC4B);
    let (slope_a, _, r2_a) = metrics::fit_scaling(&a, Regressor::LnLnN).unwrap();
    let (slope_b, _, r2_b) = metrics::fit_scaling(&b, Regressor::LnLnN).unwrap();
    let ratio = slope_b / slope_a;
    let pass = r2_a >= 0.9 && r2_b >= 0.9 && (0.5..=1.5).contains(&ratio);
    verdict(
        "4 lnln-scaling",
        pass,
        &format!(
            "batch A slope {slope_a:.3} R2 {r2_a:.3}; batch B slope {slope_b:.3} R2 {r2_b:.3}; slope ratio {ratio:.2}"
        ),
    );
}

#[test]
fn criterion_05_beta_scaling() {
    let n = 4096;
    let m = 100 * n as u64;
    let medians: Vec<f64> = [0.125f64, 0.25, 0.5]
        .iter()
        .map(|&beta| {
            let mut gaps: Vec<f64> = (0..30u64)
                .into_par_iter()
                .map(|i| {
                    let seed = rng::derive_seed(0xC5, beta.to_bits(), i);
                    final_max_gap(&config(n, 1, m, 1, ProcessSpec::BetaChoice { beta }, seed))
                })
                .collect();
            median(&mut gaps)
        })
        .collect();
    let r01 = medians[0] / medians[1];
    let r12 = medians[1] / medians[2];
    let pass = (1.4..=3.0).contains(&r01) && (1.4..=3.0).contains(&r12);
    verdict(
        "5 beta-scaling",
        pass,
        &format!(
            "median gaps {medians:?} for beta 0.125/0.25/0.5; ratios {r01:.2}, {r12:.2} (need within [1.4, 3.0])"
        ),
    );
}

#[test]
fn criterion_06_one_choice_heavy() {
    let n = 256;
    let medians: Vec<f64> = [10_000 * n as u64, 40_000 * n as u64]
        .iter()
        .map(|&m| {
            let mut gaps: Vec<f64> = (0..20u64)
                .into_par_iter()
                .map(|i| {
                    let seed = rng::derive_seed(0xC6, m, i);
                    let cfg = config(n, 1, m, 1, ProcessSpec::OneChoice, seed);
                    process::run(&cfg, None).unwrap().final_row().ball_count_gap
                })
                .collect();
            median(&mut gaps)
        })
        .collect();
    let ratio = medians[1] / medians[0];
    verdict(
        "6 one-choice-heavy",
        (1.4..=2.6).contains(&ratio),
        &format!(
            "median ball_count_gap {:.1} at m=10^4 n vs {:.1} at 4*10^4 n; ratio {ratio:.2} (need 2 +/- 30%)",
            medians[0], medians[1]
        ),
    );
}

#[test]
fn criterion_07_super_martingale_plateau() {
    let n = 1024usize;
    let m = 1000 * n as u64;
    let spec = ProcessSpec::DChoice { d: 2 };
    let params =
        PotentialParams::defaults(PotentialVariant::UnweightedGrouped, 2.0, 0.25).unwrap();
    let source = BallSourceSpec::FixedUniform { f: 2 };

    // mean Gamma at the three checkpoints over 10 trials
    let checkpoints = [10 * n as u64, 100 * n as u64, 1000 * n as u64];
    let trials: Vec<Vec<f64>> = (0..10u64)
        .into_par_iter()
        .map(|i| {
            let mut cfg = config(n, 8, m, 2, spec, rng::derive_seed(0xC7, 0, i));
            cfg.checkpoints = checkpoints.to_vec();
            let rec = process::run(&cfg, Some(&params)).unwrap();
            rec.rows.iter().map(|r| r.gamma.unwrap()).collect()
        })
        .collect();
    let means: Vec<f64> = (0..3)
        .map(|j| trials.iter().map(|t| t[j]).sum::<f64>() / trials.len() as f64)
        .collect();
    let spread = means.iter().cloned().fold(f64::MIN, f64::max)
        / means.iter().cloned().fold(f64::MAX, f64::min);
    let plateau_ok = spread <= 2.0;

    // drift at 10 states sampled along one trajectory
    let drift_ok: u32 = (1..=10u64)
        .into_par_iter()
        .map(|j| {
            let t = j * m / 10;
            let mut cfg = config(n, 8, t, 2, spec, rng::derive_seed(0xC7, 1, 0));
            cfg.checkpoints = vec![t];
            let state = process::run_to_state(&cfg).unwrap();
            let mut rng_ = rng::stream(rng::derive_seed(0xC7, 2, j));
            let est =
                potential::drift_estimate(&state, &spec, &source, &params, 400, &mut rng_)
                    .unwrap();
            (est.mean_dgamma <= 3.0 * est.ci_half) as u32
        })
        .sum();
    let pass = plateau_ok && drift_ok >= 8;
    verdict(
        "7 super-martingale-plateau",
        pass,
        &format!(
            "mean Gamma {:?} at 10n/100n/1000n (spread {spread:.2}, need <= 2); drift non-positive within 3 CI at {drift_ok}/10 states (need >= 8)",
            means.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_08_parallel_sequential_agreement() {
    let n = 256usize;
    let m = n as u64;
    let run_gaps = |make: &(dyn Fn(u64) -> AllocationConfig + Sync)| -> (Vec<f64>, Vec<f64>) {
        let out: Vec<(f64, f64)> = (0..200u64)
            .into_par_iter()
            .map(|i| {
                let cfg = make(rng::derive_seed(0xC8, 0, i));
                let rec = process::run(&cfg, None).unwrap();
                let row = rec.final_row();
                (row.sum_gap, row.rounds_used.map(|r| r as f64).unwrap_or(0.0))
            })
            .collect();
        out.into_iter().unzip()
    };
    let (greedy, _) = run_gaps(&|seed| {
        config(n, 1, m, 1, ProcessSpec::GreedyWithTies { d: 2 }, seed)
    });
    let (parallel, rounds) = run_gaps(&|seed| {
        config(n, 1, m, 1, ProcessSpec::ParallelRounds { d: 2 }, seed)
    });
    let stats = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
        (mean, var / v.len() as f64)
    };
    let (mg, vg) = stats(&greedy);
    let (mp, vp) = stats(&parallel);
    let diff = (mg - mp).abs();
    let ci = 1.96 * (vg + vp).sqrt();
    let mut r = rounds.clone();
    let med_rounds = median(&mut r);
    let round_bound = 2.0 * ((n as f64).log2().log2() + 2.0);
    let pass = diff <= ci && med_rounds <= round_bound;
    verdict(
        "8 parallel-sequential-agreement",
        pass,
        &format!(
            "mean sum_gap greedy {mg:.3} vs parallel {mp:.3}, diff {diff:.3} <= CI {ci:.3}; median rounds {med_rounds} (cap {round_bound:.1})"
        ),
    );
}

#[test]
fn criterion_09_chernoff_soundness() {
    use rand_distr::{Binomial, Distribution};
    // mu = (m/n) * (f/D) with m/n = 1024 draws of p = 1/4
    let trials = 1024u64;
    let p = 0.25f64;
    let mu = trials as f64 * p;
    let mut rng_ = rng::stream(0xC9);
    let bin = Binomial::new(trials, p).unwrap();
    let draws: Vec<u64> = (0..1_000_000).map(|_| bin.sample(&mut rng_)).collect();
    let mut pass = true;
    let mut details = Vec::new();
    for t in [16.0f64, 32.0, 64.0] {
        let emp = draws.iter().filter(|&&x| x as f64 > mu + t).count() as f64
            / draws.len() as f64;
        let bound = metrics::chernoff_tail(mu, t);
        pass &= emp <= bound;
        details.push(format!("t={t}: {emp:.4} <= {bound:.4}"));
    }
    verdict("9 chernoff-soundness", pass, &details.join(", "));
}

#[test]
fn criterion_10_invariant_suite() {
    use rand::Rng;
    let mut meta = rng::stream(0xCA);
    let mut cases = 0u32;
    for _ in 0..1000 {
        let bins = meta.random_range(2..32);
        let dims = meta.random_range(1..5);
        let f = meta.random_range(1..=dims);
        let balls = meta.random_range(0..120) as u64;
        let process = match meta.random_range(0..4) {
            0 => ProcessSpec::OneChoice,
            1 => ProcessSpec::DChoice {
                d: meta.random_range(2..=bins.min(4)),
            },
            2 => ProcessSpec::BetaChoice {
                beta: meta.random_range(0.05..1.0),
            },
            _ => ProcessSpec::GreedyWithTies {
                d: meta.random_range(2..=bins.min(3)),
            },
        };
        let cfg = config(bins, dims, balls, f, process, meta.random());

        let lm = process::run_to_state(&cfg).unwrap();
        let ns = lm.normalize();
        for d in 0..dims {
            let sum: f64 = (0..bins).map(|i| ns.x(d, i)).sum();
            assert!(sum.abs() < 1e-6, "zero-sum violated: {sum}");
        }
        let r = metrics::gap_report(&lm);
        assert!(r.max_gap >= 0.0 && r.sum_gap >= 0.0 && r.ball_count_gap >= 0.0);

        let pv = process::probability_vector(&cfg.process, bins);
        let total: f64 = pv.p.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(pv.p.windows(2).all(|w| w[1] >= w[0] - 1e-12));

        let params = PotentialParams::defaults(PotentialVariant::BetaPlain, f as f64, 0.25).unwrap();
        let v = potential::gamma_from_sorted(&ns.sorted_s(), &params).unwrap();
        assert!((v.gamma - (v.phi + v.psi)).abs() <= 1e-9 * v.gamma.max(1.0));

        let again = process::run_to_state(&cfg).unwrap();
        assert_eq!(lm, again, "determinism violated");
        cases += 1;
    }
    verdict(
        "10 invariant-suite",
        cases == 1000,
        &format!("{cases}/1000 randomized configs satisfied all invariants"),
    );
}
