//! Thresholds, scoring, transcript analysis and aggregate reports.

mod detect;
mod gaps;
mod plot;
mod report;
mod score;

use thiserror::Error;

pub use detect::{detect_mass_assumption, MassAssumption, PatternHit, MASS_PATTERNS};
pub use gaps::{
    baseline_gap_report, compute_threshold, derive_thresholds, pair_gap, GapReport, PairGap, SampleCount,
    ThresholdResult, MAX_THRESHOLD, MIN_THRESHOLD, THRESHOLD_SAMPLES,
};
pub use plot::render_gap_plot;
pub use report::{aggregate, read_runs, write_runs, AgentReport, Report, RunRecord, TaskBreakdown};
pub use score::{score_answer, Verdict};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Unit(#[from] crate::units::UnitError),
    #[error("malformed answer: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad record: {0}")]
    Json(#[from] serde_json::Error),
}
