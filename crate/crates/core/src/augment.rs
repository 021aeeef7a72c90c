//! Temp dataset construction, threshold computation and similarity-gated
//! admission of generated records.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, HealthStatus};
use crate::dataset::{class_distribution, AdmittedBy, Dataset, LabeledRecord, Provenance};
pub use crate::similarity::Metric;
use crate::similarity::{score_pair, SimilarityScores};
use crate::text::{combine_text, preprocess, PreprocessConfig};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("temp dataset has no usable records")]
    EmptyTemp,
    #[error("invalid augmentation plan: {0}")]
    InvalidPlan(String),
    #[error("temp record `{0}` has no matching original record")]
    IdMismatch(String),
    #[error("temp record `{id}` has label `{temp}` but the original has `{original}`")]
    LabelMismatch {
        id: String,
        temp: String,
        original: String,
    },
    #[error("generated id `{0}` collides with an existing record id")]
    IdCollision(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Which text a generated record carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Preprocessed original followed by the generated continuation.
    AllText,
    /// The generated continuation alone.
    NewText,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::AllText, Variant::NewText];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::AllText => "all_text",
            Variant::NewText => "new_text",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Variant::AllText => "all-text",
            Variant::NewText => "new-text",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all_text" | "all-text" => Ok(Variant::AllText),
            "new_text" | "new-text" => Ok(Variant::NewText),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    EmptyGeneration,
}

/// One row of the temp dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TempRecord {
    pub base: LabeledRecord,
    pub preprocessed: String,
    pub generated_text: String,
    pub all_text: String,
    pub original_embedding: Vec<f64>,
    pub generated_embedding: Vec<f64>,
    pub scores: Option<SimilarityScores>,
    pub raw_cosine: Option<f64>,
    pub status: RecordStatus,
}

impl TempRecord {
    /// Usable for thresholds and admission.
    pub fn is_scored(&self) -> bool {
        self.status == RecordStatus::Ok && self.scores.is_some()
    }

    pub fn score(&self, metric: Metric) -> Option<f64> {
        self.scores.filter(|_| self.status == RecordStatus::Ok).map(|s| s.get(metric))
    }
}

/// On-disk layout of a temp record.
#[derive(Debug, Serialize, Deserialize)]
struct TempRow {
    id: String,
    text: String,
    label: String,
    preprocessed: String,
    generated: String,
    all_text: String,
    emb_orig: Vec<f64>,
    emb_gen: Vec<f64>,
    sim_euclidean: Option<f64>,
    sim_cosine: Option<f64>,
    sim_cosine_raw: Option<f64>,
    sim_jaccard: Option<f64>,
    sim_bleu: Option<f64>,
    status: RecordStatus,
}

impl From<&TempRecord> for TempRow {
    fn from(r: &TempRecord) -> Self {
        TempRow {
            id: r.base.id.clone(),
            text: r.base.text.clone(),
            label: r.base.label.clone(),
            preprocessed: r.preprocessed.clone(),
            generated: r.generated_text.clone(),
            all_text: r.all_text.clone(),
            emb_orig: r.original_embedding.clone(),
            emb_gen: r.generated_embedding.clone(),
            sim_euclidean: r.scores.map(|s| s.euclidean),
            sim_cosine: r.scores.map(|s| s.cosine),
            sim_cosine_raw: r.raw_cosine,
            sim_jaccard: r.scores.map(|s| s.jaccard),
            sim_bleu: r.scores.map(|s| s.bleu),
            status: r.status,
        }
    }
}

impl From<TempRow> for TempRecord {
    fn from(r: TempRow) -> Self {
        let scores = match (r.sim_euclidean, r.sim_cosine, r.sim_jaccard, r.sim_bleu) {
            (Some(euclidean), Some(cosine), Some(jaccard), Some(bleu)) => Some(SimilarityScores {
                euclidean,
                cosine,
                jaccard,
                bleu,
            }),
            _ => None,
        };
        TempRecord {
            base: LabeledRecord::new(r.id, r.text, r.label),
            preprocessed: r.preprocessed,
            generated_text: r.generated,
            all_text: r.all_text,
            original_embedding: r.emb_orig,
            generated_embedding: r.emb_gen,
            scores,
            raw_cosine: r.sim_cosine_raw,
            status: r.status,
        }
    }
}

/// A per-record problem that did not stop the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub id: String,
    pub stage: String,
    pub reason: String,
}

impl AuditEntry {
    fn new(id: &str, stage: &str, reason: impl fmt::Display) -> Self {
        AuditEntry {
            id: id.to_string(),
            stage: stage.to_string(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TempDataset {
    pub records: Vec<TempRecord>,
    pub audit: Vec<AuditEntry>,
}

enum Outcome {
    Row(TempRecord, Option<AuditEntry>),
    Failed(AuditEntry),
}

fn process_record(backend: &dyn Backend, record: &LabeledRecord, config: &PreprocessConfig) -> Outcome {
    let id = record.id.as_str();
    let preprocessed = preprocess(&record.text, config);
    let generated = match backend.generate_text(id, &preprocessed) {
        Ok(g) => g.generated_text,
        Err(e) => return Outcome::Failed(AuditEntry::new(id, "generate", e)),
    };
    if generated.trim().is_empty() {
        let row = TempRecord {
            base: record.clone(),
            all_text: combine_text(&preprocessed, ""),
            preprocessed,
            generated_text: generated,
            original_embedding: Vec::new(),
            generated_embedding: Vec::new(),
            scores: None,
            raw_cosine: None,
            status: RecordStatus::EmptyGeneration,
        };
        return Outcome::Row(row, Some(AuditEntry::new(id, "generate", "empty generation")));
    }
    let (orig_emb, gen_emb) = match backend.embed_pair(id, &preprocessed, &generated) {
        Ok(pair) => pair,
        Err(e) => return Outcome::Failed(AuditEntry::new(id, "embed", e)),
    };
    let scored = match score_pair(&preprocessed, &generated, &orig_emb, &gen_emb) {
        Ok(s) => s,
        Err(e) => return Outcome::Failed(AuditEntry::new(id, "score", e)),
    };
    Outcome::Row(
        TempRecord {
            base: record.clone(),
            all_text: combine_text(&preprocessed, &generated),
            preprocessed,
            generated_text: generated,
            original_embedding: orig_emb.into_values(),
            generated_embedding: gen_emb.into_values(),
            scores: Some(scored.scores),
            raw_cosine: Some(scored.raw_cosine),
            status: RecordStatus::Ok,
        },
        None,
    )
}

/// Runs preprocess, generate, embed, score and combine for every record.
///
/// At most `jobs` records are in flight at once; output order always matches
/// input order. Records that fail appear only in the audit log.
pub fn build_temp_dataset(
    dataset: &Dataset,
    backend: &dyn Backend,
    config: &PreprocessConfig,
    jobs: usize,
) -> Result<TempDataset, AugmentError> {
    if let HealthStatus::Unavailable(reason) = backend.health_check() {
        return Err(AugmentError::BackendUnavailable(reason));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AugmentError::BackendUnavailable(e.to_string()))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        dataset
            .records
            .par_iter()
            .map(|r| process_record(backend, r, config))
            .collect()
    });
    let mut temp = TempDataset::default();
    for outcome in outcomes {
        match outcome {
            Outcome::Row(row, audit) => {
                temp.records.push(row);
                temp.audit.extend(audit);
            }
            Outcome::Failed(audit) => temp.audit.push(audit),
        }
    }
    Ok(temp)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AugmentError + '_ {
    move |source| AugmentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), AugmentError> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for row in rows {
        serde_json::to_writer(&mut out, &row).map_err(|e| io_err(path)(e.into()))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, AugmentError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| AugmentError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(rows)
}

pub fn write_temp_records(path: &Path, records: &[TempRecord]) -> Result<(), AugmentError> {
    write_jsonl(path, records.iter().map(TempRow::from))
}

pub fn read_temp_records(path: &Path) -> Result<Vec<TempRecord>, AugmentError> {
    Ok(read_jsonl::<TempRow>(path)?.into_iter().map(TempRecord::from).collect())
}

pub fn write_audit(path: &Path, audit: &[AuditEntry]) -> Result<(), AugmentError> {
    write_jsonl(path, audit)
}

pub fn read_audit(path: &Path) -> Result<Vec<AuditEntry>, AugmentError> {
    read_jsonl(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub euclidean: f64,
    pub cosine: f64,
    pub jaccard: f64,
    pub bleu: f64,
}

impl ThresholdSet {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Euclidean => self.euclidean,
            Metric::Cosine => self.cosine,
            Metric::Jaccard => self.jaccard,
            Metric::Bleu => self.bleu,
        }
    }

    pub fn uniform(value: f64) -> Self {
        ThresholdSet {
            euclidean: value,
            cosine: value,
            jaccard: value,
            bleu: value,
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Per-metric mean over every scored record, whatever its label.
pub fn compute_thresholds(records: &[TempRecord]) -> Result<ThresholdSet, AugmentError> {
    let mut sums: [CompensatedSum; 4] = Default::default();
    let mut n = 0usize;
    for scores in records.iter().filter(|r| r.is_scored()).filter_map(|r| r.scores) {
        for (sum, metric) in sums.iter_mut().zip(Metric::ALL) {
            sum.add(scores.get(metric));
        }
        n += 1;
    }
    if n == 0 {
        return Err(AugmentError::EmptyTemp);
    }
    let mean = |i: usize| sums[i].value() / n as f64;
    Ok(ThresholdSet {
        euclidean: mean(0),
        cosine: mean(1),
        jaccard: mean(2),
        bleu: mean(3),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub selected_labels: BTreeSet<String>,
    pub variant: Variant,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_override: Option<ThresholdSet>,
}

fn all_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

impl AugmentationPlan {
    pub fn new<I, S>(selected_labels: I, variant: Variant) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AugmentationPlan {
            selected_labels: selected_labels.into_iter().map(Into::into).collect(),
            variant,
            metrics: all_metrics(),
            threshold_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub metric: Metric,
    pub variant: Variant,
    pub dataset: Dataset,
}

impl AugmentedDataset {
    /// Row name as used in evaluation tables, e.g. `BLEU (all-text)`.
    pub fn name(&self) -> String {
        format!("{} ({})", self.metric.display_name(), self.variant.display_name())
    }

    pub fn file_stem(&self) -> String {
        format!("aug_{}_{}", self.metric.slug(), self.variant.as_str())
    }
}

pub fn generated_id(source_id: &str, metric: Metric) -> String {
    format!("{source_id}~{}", metric.slug())
}

/// Builds one augmented dataset per planned metric: every original record,
/// followed by each scored temp record of a selected label whose score is at
/// least the metric's threshold.
pub fn augment(
    original: &Dataset,
    temp: &[TempRecord],
    thresholds: &ThresholdSet,
    plan: &AugmentationPlan,
) -> Result<(Vec<AugmentedDataset>, GrowthReport), AugmentError> {
    let labels: BTreeSet<String> = original.labels().into_iter().collect();
    if plan.selected_labels.is_empty() {
        return Err(AugmentError::InvalidPlan("no labels selected".into()));
    }
    if let Some(l) = plan.selected_labels.iter().find(|l| !labels.contains(*l)) {
        return Err(AugmentError::InvalidPlan(format!("label `{l}` not in dataset")));
    }
    if plan.metrics.is_empty() {
        return Err(AugmentError::InvalidPlan("no metrics selected".into()));
    }
    let by_id: HashMap<&str, &LabeledRecord> = original.iter().map(|r| (r.id.as_str(), r)).collect();
    for t in temp {
        let Some(o) = by_id.get(t.base.id.as_str()) else {
            return Err(AugmentError::IdMismatch(t.base.id.clone()));
        };
        if o.label != t.base.label {
            return Err(AugmentError::LabelMismatch {
                id: t.base.id.clone(),
                temp: t.base.label.clone(),
                original: o.label.clone(),
            });
        }
    }
    let thresholds = plan.threshold_override.as_ref().unwrap_or(thresholds);

    let originals: Vec<LabeledRecord> = original
        .iter()
        .map(|r| LabeledRecord {
            provenance: Some(Provenance::original()),
            ..r.clone()
        })
        .collect();

    let mut metrics: Vec<Metric> = plan.metrics.clone();
    metrics.sort();
    metrics.dedup();

    let mut outputs = Vec::with_capacity(metrics.len());
    for metric in metrics {
        let threshold = thresholds.get(metric);
        let mut records = originals.clone();
        for t in temp {
            if !plan.selected_labels.contains(&t.base.label) {
                continue;
            }
            match t.score(metric) {
                Some(s) if s >= threshold => {}
                _ => continue,
            }
            let id = generated_id(&t.base.id, metric);
            if by_id.contains_key(id.as_str()) {
                return Err(AugmentError::IdCollision(id));
            }
            let text = match plan.variant {
                Variant::AllText => t.all_text.clone(),
                Variant::NewText => t.generated_text.clone(),
            };
            records.push(LabeledRecord {
                id,
                text,
                label: t.base.label.clone(),
                provenance: Some(Provenance {
                    admitted_by: metric.into(),
                    source_id: Some(t.base.id.clone()),
                    variant: Some(plan.variant),
                }),
            });
        }
        outputs.push(AugmentedDataset {
            metric,
            variant: plan.variant,
            dataset: Dataset::new(records),
        });
    }
    let report = growth_report(original, &outputs);
    Ok((outputs, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCell {
    pub added: usize,
    #[serde(rename = "final")]
    pub final_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub label: String,
    pub original: usize,
    pub by_metric: BTreeMap<Metric, GrowthCell>,
}

/// Counts per label and metric, laid out like a growth-count table: one row
/// per label plus a total, one column per metric after the original count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub metrics: Vec<Metric>,
    pub rows: Vec<GrowthRow>,
    pub total: GrowthRow,
    pub growth_percent: BTreeMap<Metric, f64>,
}

/// Tallies provenance of each augmented dataset. Expects at most one dataset
/// per metric.
pub fn growth_report(original: &Dataset, augmented: &[AugmentedDataset]) -> GrowthReport {
    let dist = class_distribution(original);
    let mut metrics: Vec<Metric> = augmented.iter().map(|a| a.metric).collect();
    metrics.sort();
    metrics.dedup();

    let mut added: BTreeMap<(Metric, &str), usize> = BTreeMap::new();
    for a in augmented {
        for r in a.dataset.iter() {
            if matches!(&r.provenance, Some(p) if p.admitted_by == AdmittedBy::from(a.metric)) {
                *added.entry((a.metric, r.label.as_str())).or_default() += 1;
            }
        }
    }
    let mut labels: BTreeSet<&str> = dist.counts.keys().map(String::as_str).collect();
    labels.extend(added.keys().map(|(_, l)| *l));

    let rows: Vec<GrowthRow> = labels
        .iter()
        .map(|&label| {
            let orig = dist.counts.get(label).copied().unwrap_or(0);
            GrowthRow {
                label: label.to_string(),
                original: orig,
                by_metric: metrics
                    .iter()
                    .map(|&m| {
                        let a = added.get(&(m, label)).copied().unwrap_or(0);
                        (m, GrowthCell { added: a, final_count: orig + a })
                    })
                    .collect(),
            }
        })
        .collect();
    let total_original = original.len();
    let total = GrowthRow {
        label: "Total".to_string(),
        original: total_original,
        by_metric: metrics
            .iter()
            .map(|&m| {
                let a: usize = rows.iter().map(|r| r.by_metric[&m].added).sum();
                (m, GrowthCell { added: a, final_count: total_original + a })
            })
            .collect(),
    };
    let growth_percent = metrics
        .iter()
        .map(|&m| {
            let pct = if total_original == 0 {
                0.0
            } else {
                total.by_metric[&m].added as f64 / total_original as f64 * 100.0
            };
            (m, pct)
        })
        .collect();
    GrowthReport {
        metrics,
        rows,
        total,
        growth_percent,
    }
}

impl GrowthReport {
    /// Plain-text table of final counts with a trailing growth line.
    pub fn render_table(&self) -> String {
        let mut header = vec!["Class Labels".to_string(), "Original".to_string()];
        header.extend(self.metrics.iter().map(|m| m.display_name().to_string()));
        let mut lines = vec![header];
        for row in self.rows.iter().chain(std::iter::once(&self.total)) {
            let mut cells = vec![row.label.clone(), row.original.to_string()];
            cells.extend(self.metrics.iter().map(|m| row.by_metric[m].final_count.to_string()));
            lines.push(cells);
        }
        let mut growth = vec!["Growth %".to_string(), String::new()];
        growth.extend(self.metrics.iter().map(|m| format!("{:.2}", self.growth_percent[m])));
        lines.push(growth);

        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &lines {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(cell, &w)| format!("{cell:<w$}"))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Ids of the records admitted under `metric`.
pub fn admitted_sources(augmented: &AugmentedDataset) -> Vec<String> {
    augmented
        .dataset
        .iter()
        .filter(|r| r.is_generated())
        .map(|r| r.origin_id().to_string())
        .collect()
}

/// Checks that `augmented` keeps every original record unchanged and in
/// order at its head.
pub fn preserves_originals(original: &Dataset, augmented: &Dataset) -> bool {
    augmented.len() >= original.len()
        && original.iter().zip(augmented.iter()).all(|(o, a)| {
            o.id == a.id && o.text == a.text && o.label == a.label && !a.is_generated()
        })
        && augmented.records[original.len()..].iter().all(LabeledRecord::is_generated)
}

/// Labels whose counts differ between `original` and `augmented`.
pub fn grown_labels(original: &Dataset, augmented: &Dataset) -> HashSet<String> {
    let before = class_distribution(original).counts;
    let after = class_distribution(augmented).counts;
    after
        .into_iter()
        .filter(|(l, c)| before.get(l) != Some(c))
        .map(|(l, _)| l)
        .collect()
}
