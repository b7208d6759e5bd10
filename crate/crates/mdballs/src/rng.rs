//! Deterministic stream derivation. One root seed; every (sweep, trial)
//! pair gets an independent stream so trial k reproduces regardless of
//! execution order or worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step; used as a counter-based mixer for seed derivation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the per-trial seed from a root seed, sweep index and trial index.
pub fn derive_seed(root: u64, sweep: u64, trial: u64) -> u64 {
    let a = splitmix64(root ^ splitmix64(sweep.wrapping_add(1)));
    splitmix64(a ^ splitmix64(trial.wrapping_add(0x5bd1_e995)))
}

/// The random stream for a single trial.
pub fn stream(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
