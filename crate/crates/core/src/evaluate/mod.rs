//! Holdout splitting and classification reports.

mod metrics;
mod split;

pub use metrics::{
    compare_reports, metrics, Averages, ClassDelta, ClassMetrics, EvaluationReport, ReportDelta,
};
pub use split::{split_indices, test_size, SplitIndices};
