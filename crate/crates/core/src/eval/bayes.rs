use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::Dataset;
use crate::text::tokenize;

/// Multinomial naive Bayes over whitespace token counts with add-one
/// smoothing. Tokens never seen in training are ignored at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    labels: Vec<String>,
    log_priors: Vec<f64>,
    /// Per token, one log-likelihood per label in `labels` order.
    log_likelihoods: HashMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<String>,
    /// Posterior rows in [`NaiveBayes::labels`] order.
    pub scores: Vec<Vec<f64>>,
}

impl NaiveBayes {
    pub fn fit<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, EvalError> {
        let mut doc_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut token_counts: BTreeMap<&str, HashMap<String, usize>> = BTreeMap::new();
        for (text, label) in docs {
            *doc_counts.entry(label).or_default() += 1;
            let counts = token_counts.entry(label).or_default();
            for tok in tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        if doc_counts.len() < 2 {
            return Err(EvalError::SingleClass(doc_counts.len()));
        }
        let labels: Vec<String> = doc_counts.keys().map(|l| l.to_string()).collect();
        let n_docs: usize = doc_counts.values().sum();
        let log_priors = doc_counts
            .values()
            .map(|&c| (c as f64 / n_docs as f64).ln())
            .collect();

        let mut vocab: Vec<&String> = token_counts.values().flat_map(|m| m.keys()).collect();
        vocab.sort();
        vocab.dedup();
        let v = vocab.len() as f64;
        let totals: Vec<f64> = token_counts
            .values()
            .map(|m| m.values().sum::<usize>() as f64)
            .collect();
        let log_likelihoods = vocab
            .into_iter()
            .map(|tok| {
                let row = token_counts
                    .values()
                    .zip(&totals)
                    .map(|(m, total)| {
                        let c = m.get(tok).copied().unwrap_or(0) as f64;
                        ((c + 1.0) / (total + v)).ln()
                    })
                    .collect();
                (tok.clone(), row)
            })
            .collect();
        Ok(NaiveBayes {
            labels,
            log_priors,
            log_likelihoods,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    /// Unnormalised log joint probability per label.
    pub fn log_joint(&self, text: &str) -> Vec<f64> {
        let mut scores = self.log_priors.clone();
        for tok in tokenize(text) {
            if let Some(ll) = self.log_likelihoods.get(&tok) {
                scores.iter_mut().zip(ll).for_each(|(s, l)| *s += l);
            }
        }
        scores
    }

    pub fn predict<S: AsRef<str>>(&self, texts: &[S]) -> Prediction {
        let mut labels = Vec::with_capacity(texts.len());
        let mut scores = Vec::with_capacity(texts.len());
        for text in texts {
            let joint = self.log_joint(text.as_ref());
            // First maximum wins, so ties go to the earlier label.
            let best = joint
                .iter()
                .enumerate()
                .fold(0, |best, (i, &s)| if s > joint[best] { i } else { best });
            let max = joint[best];
            let exp: Vec<f64> = joint.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exp.iter().sum();
            labels.push(self.labels[best].clone());
            scores.push(exp.into_iter().map(|e| e / z).collect());
        }
        Prediction { labels, scores }
    }
}

pub fn train_reference_classifier(train: &Dataset) -> Result<NaiveBayes, EvalError> {
    NaiveBayes::fit(train.iter().map(|r| (r.text.as_str(), r.label.as_str())))
}
