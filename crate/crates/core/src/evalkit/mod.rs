//! Metrics, protocol runners and multi-run reports.

mod metrics;
mod protocol;
mod report;

pub use metrics::{
    argmax, harmonic_mean, mean_class_accuracy, predictions, rank_of, seen_unseen_accuracy, top_k_accuracy,
    MeanClassAccuracy,
};
pub use protocol::{run_base_to_novel, run_few_shot, run_gzsl, run_zsl, ProtocolSetup};
pub use report::{PairSummary, Protocol, ProtocolReport, RunMetrics, Summary};
