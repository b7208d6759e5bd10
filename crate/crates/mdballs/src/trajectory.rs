//! Per-trial metric records.

use serde::{Deserialize, Serialize};

/// Metrics captured at one checkpoint of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    /// Balls thrown so far.
    pub t: u64,
    pub max_gap: f64,
    pub sum_gap: f64,
    pub ball_count_gap: f64,
    pub phi: Option<f64>,
    pub psi: Option<f64>,
    pub gamma: Option<f64>,
    /// Rounds completed so far; only the parallel protocol sets this.
    pub rounds_used: Option<u64>,
}

/// One seeded trial: its id, seed and one row per configured checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub trial: u64,
    pub seed: u64,
    pub rows: Vec<CheckpointRow>,
}

impl TrajectoryRecord {
    /// The last recorded row (the final checkpoint, normally t = m).
    pub fn final_row(&self) -> &CheckpointRow {
        self.rows.last().expect("trajectory has at least one row")
    }
}
