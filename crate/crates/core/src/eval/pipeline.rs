use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::bayes::NaiveBayes;
use super::curves::{roc_pr_curves, CurveReport};
use super::metrics::{classification_metrics_with_labels, ClassificationMetrics};
use super::ttest::{paired_t_test, TTestResult};
use super::EvalError;
use crate::augment::{AugmentedDataset, Metric, Variant};
use crate::dataset::{kfold_assignments, stratified_partition, Dataset, LabeledRecord};
use crate::text::{preprocess, PreprocessConfig};

pub const ORIGINAL_NAME: &str = "original (text)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_k() -> usize {
    5
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: default_train_fraction(),
            seed: 0,
            k: default_k(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitDescriptor {
    pub seed: u64,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub k: usize,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfigKind {
    Augmented { metric: Metric, variant: Variant },
    Other,
    Original,
}

/// A dataset under evaluation with its row name.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedDataset {
    pub name: String,
    pub kind: ConfigKind,
    pub dataset: Dataset,
}

impl NamedDataset {
    pub fn other(name: impl Into<String>, dataset: Dataset) -> Self {
        NamedDataset {
            name: name.into(),
            kind: ConfigKind::Other,
            dataset,
        }
    }

    fn sort_key(&self) -> (u8, String) {
        match self.kind {
            ConfigKind::Original => (2, String::new()),
            ConfigKind::Other => (1, self.name.clone()),
            ConfigKind::Augmented { .. } => (0, self.name.to_lowercase()),
        }
    }
}

impl From<AugmentedDataset> for NamedDataset {
    fn from(a: AugmentedDataset) -> Self {
        NamedDataset {
            name: a.name(),
            kind: ConfigKind::Augmented {
                metric: a.metric,
                variant: a.variant,
            },
            dataset: a.dataset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub size: usize,
    pub metrics: ClassificationMetrics,
    pub curves: CurveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub name: String,
    pub kind: ConfigKind,
    pub train_size: usize,
    /// The configuration's own test rows: original test records plus records
    /// generated from them.
    pub augmented_split: SplitEvaluation,
    /// The original dataset's test split.
    pub not_augmented_split: SplitEvaluation,
    /// Macro F1 per validation fold of the training side.
    pub per_fold_f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TTestOutcome {
    Tested(TTestResult),
    /// Per-fold scores equal in every fold.
    Identical,
    Degenerate { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestEntry {
    pub a: String,
    pub b: String,
    #[serde(flatten)]
    pub outcome: TTestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEvaluation {
    pub split: SplitDescriptor,
    pub labels: Vec<String>,
    /// Configurations first (alphabetical), the original last.
    pub reports: Vec<EvaluationReport>,
    /// Each configuration against the original, paired by fold.
    pub t_tests: Vec<TTestEntry>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Train(usize),
    Test,
}

struct Row<'a> {
    text: String,
    record: &'a LabeledRecord,
}

struct Layout {
    side: HashMap<String, Side>,
    labels: Vec<String>,
    test: Vec<usize>,
    /// `(original index, fold)` for each training record.
    train_folds: Vec<(usize, usize)>,
}

fn evaluate_split(model: &NaiveBayes, labels: &[String], rows: &[(&str, &str)]) -> Result<SplitEvaluation, EvalError> {
    let texts: Vec<&str> = rows.iter().map(|r| r.0).collect();
    let truth: Vec<&str> = rows.iter().map(|r| r.1).collect();
    let pred = model.predict(&texts);
    let predicted: Vec<&str> = pred.labels.iter().map(String::as_str).collect();
    Ok(SplitEvaluation {
        size: rows.len(),
        metrics: classification_metrics_with_labels(&truth, &predicted, labels)?,
        curves: roc_pr_curves(&truth, &pred.scores, model.labels())?,
    })
}

fn evaluate_config(
    config: &NamedDataset,
    layout: &Layout,
    original_rows: &[(String, &str)],
    preprocess_config: &PreprocessConfig,
    k: usize,
) -> Result<EvaluationReport, EvalError> {
    let rows: Vec<(Row, Side)> = config
        .dataset
        .iter()
        .map(|r| {
            let side = layout.side.get(r.origin_id()).copied().ok_or_else(|| EvalError::UnknownRecord {
                name: config.name.clone(),
                id: r.id.clone(),
            })?;
            Ok((
                Row {
                    text: preprocess(&r.text, preprocess_config),
                    record: r,
                },
                side,
            ))
        })
        .collect::<Result<_, EvalError>>()?;

    let pairs = |keep: &dyn Fn(Side) -> bool| -> Vec<(&str, &str)> {
        rows.iter()
            .filter(|(_, s)| keep(*s))
            .map(|(r, _)| (r.text.as_str(), r.record.label.as_str()))
            .collect()
    };
    let train = pairs(&|s| matches!(s, Side::Train(_)));
    let own_test = pairs(&|s| s == Side::Test);
    let model = NaiveBayes::fit(train.iter().copied())?;
    let original_test: Vec<(&str, &str)> = layout
        .test
        .iter()
        .map(|&i| (original_rows[i].0.as_str(), original_rows[i].1))
        .collect();

    let mut per_fold_f1 = Vec::with_capacity(k);
    for fold in 0..k {
        let fold_train = pairs(&|s| matches!(s, Side::Train(f) if f != fold));
        let model = NaiveBayes::fit(fold_train.iter().copied())?;
        let validation: Vec<(&str, &str)> = layout
            .train_folds
            .iter()
            .filter(|(_, f)| *f == fold)
            .map(|&(i, _)| (original_rows[i].0.as_str(), original_rows[i].1))
            .collect();
        per_fold_f1.push(evaluate_split(&model, &layout.labels, &validation)?.metrics.f1);
    }

    Ok(EvaluationReport {
        name: config.name.clone(),
        kind: config.kind.clone(),
        train_size: train.len(),
        augmented_split: evaluate_split(&model, &layout.labels, &own_test)?,
        not_augmented_split: evaluate_split(&model, &layout.labels, &original_test)?,
        per_fold_f1,
    })
}

/// Evaluates the original dataset and every configuration in `configs`.
///
/// The original is split once (stratified, `split.train_fraction`), and its
/// training side is divided into `split.k` stratified folds. Records of a
/// configuration follow the side and fold of the original record they derive
/// from, so no generated text from a test record is ever trained on and all
/// configurations are validated on the same folds.
pub fn evaluate_pipeline(
    original: &Dataset,
    configs: &[NamedDataset],
    split: &SplitConfig,
    preprocess_config: &PreprocessConfig,
) -> Result<PipelineEvaluation, EvalError> {
    let labels = original.labels();
    for c in configs {
        let found = c.dataset.labels();
        if found != labels {
            return Err(EvalError::LabelSetMismatch {
                name: c.name.clone(),
                found,
                expected: labels,
            });
        }
    }
    let (train_idx, test_idx) = stratified_partition(original, split.train_fraction, split.seed)?;
    let train_subset = Dataset::new(train_idx.iter().map(|&i| original.records[i].clone()).collect());
    let folds = kfold_assignments(&train_subset, split.k, split.seed)?;

    let mut side = HashMap::with_capacity(original.len());
    let train_folds: Vec<(usize, usize)> = train_idx.iter().copied().zip(folds.iter().copied()).collect();
    for &(i, f) in &train_folds {
        side.insert(original.records[i].id.clone(), Side::Train(f));
    }
    for &i in &test_idx {
        side.insert(original.records[i].id.clone(), Side::Test);
    }
    let layout = Layout {
        side,
        labels: labels.clone(),
        test: test_idx.clone(),
        train_folds,
    };
    let original_rows: Vec<(String, &str)> = original
        .iter()
        .map(|r| (preprocess(&r.text, preprocess_config), r.label.as_str()))
        .collect();

    let baseline = NamedDataset {
        name: ORIGINAL_NAME.to_string(),
        kind: ConfigKind::Original,
        dataset: original.clone(),
    };
    let mut ordered: Vec<&NamedDataset> = configs.iter().collect();
    ordered.sort_by_key(|c| c.sort_key());

    let baseline_report = evaluate_config(&baseline, &layout, &original_rows, preprocess_config, split.k)?;
    let mut reports = Vec::with_capacity(configs.len() + 1);
    let mut t_tests = Vec::with_capacity(configs.len());
    for c in ordered {
        let report = evaluate_config(c, &layout, &original_rows, preprocess_config, split.k)?;
        let outcome = match paired_t_test(&report.per_fold_f1, &baseline_report.per_fold_f1) {
            Ok(r) => TTestOutcome::Tested(r),
            Err(EvalError::DegenerateSample { identical: true }) => TTestOutcome::Identical,
            Err(e) => TTestOutcome::Degenerate { reason: e.to_string() },
        };
        t_tests.push(TTestEntry {
            a: report.name.clone(),
            b: baseline_report.name.clone(),
            outcome,
        });
        reports.push(report);
    }
    reports.push(baseline_report);

    Ok(PipelineEvaluation {
        split: SplitDescriptor {
            seed: split.seed,
            train_fraction: split.train_fraction,
            test_fraction: 1.0 - split.train_fraction,
            k: split.k,
            train_size: train_idx.len(),
            test_size: test_idx.len(),
        },
        labels,
        reports,
        t_tests,
    })
}
