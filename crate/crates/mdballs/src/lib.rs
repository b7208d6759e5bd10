//! Simulator for multidimensional balls-into-bins allocation processes.
//!
//! Balls carry a set of populated dimensions (and optionally weights); bins
//! accumulate per-dimension loads. Allocation rules (one-choice, d-choice,
//! (1+beta)-choice, greedy-with-ties and a multi-round parallel protocol)
//! place balls by comparing the sum of normalized loads across dimensions.
//! The crate also computes exponential potential functions and their one-step
//! drift, gap statistics with closed-form bound curves, and an exact
//! enumeration oracle for tiny instances.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod potential;
pub mod process;
pub mod rng;
pub mod state;
pub mod trajectory;

pub use error::{Error, Result};
pub use state::{AllocationConfig, BallSourceSpec, BallSpec, LoadMatrix, NormalizedState, WeightDist};
