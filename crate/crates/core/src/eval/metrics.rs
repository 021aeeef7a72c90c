use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub f1: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl ClassificationMetrics {
    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics over the sorted union of truth and predicted labels.
pub fn classification_metrics<S: AsRef<str>>(truth: &[S], predicted: &[S]) -> Result<ClassificationMetrics, EvalError> {
    let labels: BTreeSet<&str> = truth.iter().chain(predicted).map(AsRef::as_ref).collect();
    let labels: Vec<String> = labels.into_iter().map(str::to_string).collect();
    classification_metrics_with_labels(truth, predicted, &labels)
}

/// Macro-averaged precision, recall and F1 over `labels`; an empty
/// denominator counts as 0.
pub fn classification_metrics_with_labels<S: AsRef<str>>(
    truth: &[S],
    predicted: &[S],
    labels: &[String],
) -> Result<ClassificationMetrics, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let index = |l: &str| {
        labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| EvalError::UnknownLabel(l.to_string()))
    };
    let k = labels.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (t, p) in truth.iter().zip(predicted) {
        counts[index(t.as_ref())?][index(p.as_ref())?] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|i| {
            let tp = counts[i][i];
            let support: usize = counts[i].iter().sum();
            let predicted_i: usize = counts.iter().map(|row| row[i]).sum();
            let precision = ratio(tp, predicted_i);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label: labels[i].clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let confusion = ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    };
    Ok(ClassificationMetrics {
        f1: mean(|c| c.f1),
        accuracy: ratio(confusion.trace(), confusion.total()),
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        per_class,
        confusion,
    })
}
