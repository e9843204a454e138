//! Cross-validation splitting, metrics, and experiment orchestration.

pub mod metrics;
mod runner;
mod splits;

pub use metrics::{
    auc_pr, auc_roc, pr_curve_points, roc_curve_points, sensitivity_specificity, MetricsError,
};
pub use runner::{
    fit_full_artifact, run_experiment, write_folds_csv, write_plot_data_csv, write_scores_csv,
    EvalError, EvalReport, FoldMetrics, ModelArtifact, PooledMetrics, RunOutcome,
    CLASSIFIER_THRESHOLD,
};
pub use splits::{make_splits, Fold, SampleMeta, SplitError, SplitPlan, SplitScheme};
