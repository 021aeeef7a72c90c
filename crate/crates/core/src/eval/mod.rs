//! Reference classifier, classification metrics, ROC/PR curves, paired
//! t-tests and the hold-out/k-fold evaluation driver.

mod bayes;
mod curves;
mod metrics;
mod pipeline;
mod ttest;

use thiserror::Error;

use crate::dataset::DatasetError;

pub use bayes::{train_reference_classifier, NaiveBayes, Prediction};
pub use curves::{
    average_precision, pr_curve, roc_auc, roc_curve, roc_pr_curves, CurvePoint, CurveReport, LabelCurves,
};
pub use metrics::{classification_metrics, classification_metrics_with_labels, ClassMetrics, ClassificationMetrics, ConfusionMatrix};
pub use pipeline::{
    evaluate_pipeline, ConfigKind, EvaluationReport, NamedDataset, PipelineEvaluation, SplitConfig, SplitDescriptor,
    SplitEvaluation, TTestEntry, TTestOutcome, ORIGINAL_NAME,
};
pub use ttest::{
    ln_gamma, paired_t_test, regularized_incomplete_beta, student_t_cdf, TTestResult, SIGNIFICANCE_LEVEL,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("training data must contain at least two classes, found {0}")]
    SingleClass(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("paired t-test needs at least 2 pairs, got {0}")]
    TooFewSamples(usize),
    #[error("degenerate sample: differences have zero variance")]
    DegenerateSample {
        /// Every difference is exactly zero.
        identical: bool,
    },
    #[error("label `{0}` is not in the label order")]
    UnknownLabel(String),
    #[error("dataset `{name}` has labels {found:?}, expected {expected:?}")]
    LabelSetMismatch {
        name: String,
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("record `{id}` in `{name}` does not derive from any original record")]
    UnknownRecord { name: String, id: String },
    #[error("score row {row} has {found} entries, expected {expected}")]
    ScoreWidth {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
