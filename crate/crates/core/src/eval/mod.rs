//! Frame metrics, fold-based experiments and reports.

mod experiment;
mod metrics;
mod report;

pub use experiment::{ablate_iterations, kfold_splits, AblationRow, run_experiment, ExperimentReport, MethodSpec, Split, SplitSpec};
pub use metrics::{classification_metrics, confusion, cosine_similarity, ClassificationMetrics, Confusion};
pub use report::{
    aggregate, canonical_json, config_hash, format_table, score_frame, Aggregate, EvalReport, Exclusions, FrameRecord,
    METRICS,
};
