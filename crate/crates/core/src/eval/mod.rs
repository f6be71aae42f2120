//! Evaluation protocol: quality criteria, repeated stratified
//! cross-validation and the statistical comparison of methods.

pub mod cv;
pub mod metrics;
pub mod report;
pub mod stats;

pub use cv::{
    cross_validate, stratified_folds, CvConfig, CvError, CvOutcome, FoldPlan, MethodConfig,
    MethodOutcome,
};
pub use metrics::{confusion, criteria, ConfusionMatrix, CriteriaValues, Criterion, MetricsError};
pub use report::{
    build_report, CriterionTable, DatasetResult, EvaluationReport, ReportError, DEFAULT_TEST_ALPHA,
};
pub use stats::{
    adjust_pairwise, average_ranks, friedman_test, reject_pairwise, wilcoxon_signed_rank,
    FriedmanResult, Mcp, StatsError, WilcoxonResult,
};
