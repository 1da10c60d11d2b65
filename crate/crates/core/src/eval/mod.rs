//! Metrics, the leave-one-session-out harness, transfer and online
//! evaluation, and report files.

mod loso;
mod metrics;
mod online;
mod report;

pub use loso::{run_loso, run_transfer, EvalConfig};
pub use metrics::{bca, uia};
pub use online::{run_online, synth_stream, OnlineConfig, OnlineReport, OnlineStep, StepScores};
pub use report::{
    read_report, write_report, Aggregate, Condition, CurvePoint, ExperimentReport, FoldResult,
    Metric, Reduction, Split,
};
