//! Classifiers, ranking metric and the cross-validation harness.

pub mod cv;
pub mod metrics;
pub mod pipeline;
pub mod svm;

pub use cv::{nested_cv, stratified_folds, EvalReport, FoldReport, PipelineConfig};
pub use metrics::roc_auc;
pub use pipeline::{run_pipeline, FittedPipeline, PipelineKind, Representation};
pub use svm::{svm_decision, svm_train, SvmModel, SvmOptions};
