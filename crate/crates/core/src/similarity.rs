//! The four similarity measures used by the admission gates.
//!
//! Embedding measures (Euclidean, cosine) work on [`EmbeddingVector`]s,
//! token measures (Jaccard, BLEU) on whitespace tokens. All gated scores lie
//! in `[0, 1]`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("degenerate embedding")]
    DegenerateEmbedding,
    #[error("embedding has a non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("embedding is empty")]
    EmptyEmbedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Cosine,
    Jaccard,
    Bleu,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Euclidean, Metric::Cosine, Metric::Jaccard, Metric::Bleu];

    pub fn slug(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::Jaccard => "jaccard",
            Metric::Bleu => "bleu",
        }
    }

    /// Name as printed in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Metric::Euclidean => "Euclidean",
            Metric::Cosine => "cosine",
            Metric::Jaccard => "Jaccard",
            Metric::Bleu => "BLEU",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.slug().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// A finite real vector with its Euclidean norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SimilarityError> {
        if values.is_empty() {
            return Err(SimilarityError::EmptyEmbedding);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SimilarityError::NonFinite(i));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(EmbeddingVector { values, norm })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(), SimilarityError> {
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

/// Raw cosine in `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SimilarityError> {
    check_dims(a, b)?;
    if a.norm == 0.0 || b.norm == 0.0 {
        return Err(SimilarityError::DegenerateEmbedding);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

/// Cosine clamped into `[0, 1]` for gating.
pub fn gated_cosine(raw: f64) -> f64 {
    raw.clamp(0.0, 1.0)
}

/// `1 / (1 + ||a - b||)`.
pub fn euclidean_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SimilarityError> {
    check_dims(a, b)?;
    let dist = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(1.0 / (1.0 + dist))
}

/// Intersection over union of the token sets. Two empty lists count as
/// identical.
pub fn jaccard_similarity<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    let a: HashSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: HashSet<&str> = b.iter().map(AsRef::as_ref).collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(&b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub const BLEU_MAX_ORDER: usize = 4;
pub const BLEU_EPSILON: f64 = 1e-9;

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU of `candidate` against a single `reference`.
///
/// Uses orders `1..=min(4, |candidate|)` with uniform weights; zero clipped
/// precisions are replaced by [`BLEU_EPSILON`]. The brevity penalty is
/// `exp(1 - r/c)` when the candidate is shorter than the reference.
pub fn bleu_similarity<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    let c = candidate.len();
    if c == 0 {
        return 0.0;
    }
    let r = reference.len();
    let max_order = c.min(BLEU_MAX_ORDER);
    let mut log_sum = 0.0;
    for n in 1..=max_order {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let clipped: usize = cand
            .iter()
            .map(|(g, &k)| k.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        let total = c - n + 1;
        let p = if clipped == 0 {
            BLEU_EPSILON
        } else {
            clipped as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let brevity = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    (brevity * (log_sum / max_order as f64).exp()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScores {
    pub euclidean: f64,
    pub cosine: f64,
    pub jaccard: f64,
    pub bleu: f64,
}

impl SimilarityScores {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Euclidean => self.euclidean,
            Metric::Cosine => self.cosine,
            Metric::Jaccard => self.jaccard,
            Metric::Bleu => self.bleu,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Metric) -> f64) -> Self {
        SimilarityScores {
            euclidean: f(Metric::Euclidean),
            cosine: f(Metric::Cosine),
            jaccard: f(Metric::Jaccard),
            bleu: f(Metric::Bleu),
        }
    }
}

/// Gated scores of one pair together with the unclamped cosine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub scores: SimilarityScores,
    pub raw_cosine: f64,
}

/// Scores `generated` against `original`. BLEU treats the generated text as
/// the candidate and the original as the reference.
pub fn score_pair(
    original_text: &str,
    generated_text: &str,
    original_emb: &EmbeddingVector,
    generated_emb: &EmbeddingVector,
) -> Result<ScoredPair, SimilarityError> {
    let raw_cosine = cosine_similarity(original_emb, generated_emb)?;
    let euclidean = euclidean_similarity(original_emb, generated_emb)?;
    let original_tokens = tokenize(original_text);
    let generated_tokens = tokenize(generated_text);
    Ok(ScoredPair {
        scores: SimilarityScores {
            euclidean,
            cosine: gated_cosine(raw_cosine),
            jaccard: jaccard_similarity(&original_tokens, &generated_tokens),
            bleu: bleu_similarity(&generated_tokens, &original_tokens),
        },
        raw_cosine,
    })
}
