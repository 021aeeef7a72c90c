//! Similarity-gated augmentation of labeled text datasets.
//!
//! The crate is organised around the three stages of a run:
//!
//! - **Generation** ([`augment::build_temp_dataset`]): every record is
//!   preprocessed, sent to a text-generation [`backend`], both texts are
//!   embedded and scored with the four [`similarity`] measures.
//! - **Admission** ([`augment::compute_thresholds`], [`augment::augment`]):
//!   per-metric thresholds are the column means of the scores, and generated
//!   texts whose score clears the threshold are added for the selected
//!   labels only.
//! - **Evaluation** ([`eval`]): stratified hold-out and k-fold evaluation
//!   with a reference naive-Bayes classifier, macro metrics, ROC/PR curves
//!   and paired t-tests between configurations.

pub mod augment;
pub mod backend;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod similarity;
pub mod text;

pub use augment::{
    augment, build_temp_dataset, compute_thresholds, growth_report, AugmentationPlan,
    AugmentedDataset, GrowthReport, Metric, TempRecord, ThresholdSet, Variant,
};
pub use backend::{Backend, BackendConfig, BackendKind, HealthStatus};
pub use config::PipelineConfig;
pub use dataset::{ClassDistribution, Dataset, DatasetFormat, LabeledRecord, Provenance};
pub use similarity::{EmbeddingVector, SimilarityScores};
pub use text::PreprocessConfig;
