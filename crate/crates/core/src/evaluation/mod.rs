//! Metrics, agreement statistics and the leave-one-subject-out harness.

mod agreement;
mod loso;
mod metrics;
mod pipeline;

pub use agreement::{bland_altman_points, limits_of_agreement, AgreementStats, BlandAltmanPoint};
pub use loso::{loso_split, LosoFold};
pub use metrics::{
    mape, pearson_r, precision_recall_f1, r_squared, reg_metrics, rmse, ClassMetrics, RegMetrics, SegMetrics,
};
pub use pipeline::{
    ground_truth_features, labels_to_segments, run_pipeline_eval, run_pipeline_eval_with, EvalReport,
    FoldSummary, HeightEstimator, JumpFeatures, JumpOutcome, OracleEstimator, OracleSegmenter, PipelineConfig,
    RegressorEstimator, Segmenter, TcnSegmenter,
};
