//! Records, datasets, file IO and deterministic splitting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::augment::Variant;
use crate::similarity::Metric;
use crate::text;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}: {reason}")]
    Malformed {
        path: PathBuf,
        row: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("train fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("cannot split an empty dataset")]
    Empty,
    #[error("k must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("k = {k} exceeds dataset size {size}")]
    TooManyFolds { k: usize, size: usize },
}

/// Which rule put a record into a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdmittedBy {
    Original,
    Euclidean,
    Cosine,
    Jaccard,
    Bleu,
}

impl AdmittedBy {
    pub fn as_str(self) -> &'static str {
        match self {
            AdmittedBy::Original => "original",
            AdmittedBy::Euclidean => "euclidean",
            AdmittedBy::Cosine => "cosine",
            AdmittedBy::Jaccard => "jaccard",
            AdmittedBy::Bleu => "bleu",
        }
    }

    pub fn metric(self) -> Option<Metric> {
        match self {
            AdmittedBy::Original => None,
            AdmittedBy::Euclidean => Some(Metric::Euclidean),
            AdmittedBy::Cosine => Some(Metric::Cosine),
            AdmittedBy::Jaccard => Some(Metric::Jaccard),
            AdmittedBy::Bleu => Some(Metric::Bleu),
        }
    }
}

impl From<Metric> for AdmittedBy {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Euclidean => AdmittedBy::Euclidean,
            Metric::Cosine => AdmittedBy::Cosine,
            Metric::Jaccard => AdmittedBy::Jaccard,
            Metric::Bleu => AdmittedBy::Bleu,
        }
    }
}

impl FromStr for AdmittedBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(AdmittedBy::Original),
            "euclidean" => Ok(AdmittedBy::Euclidean),
            "cosine" => Ok(AdmittedBy::Cosine),
            "jaccard" => Ok(AdmittedBy::Jaccard),
            "bleu" => Ok(AdmittedBy::Bleu),
            other => Err(format!("unknown admitted_by value `{other}`")),
        }
    }
}

impl fmt::Display for AdmittedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Origin of a record inside an augmented dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub admitted_by: AdmittedBy,
    /// Id of the original record a generated record derives from.
    pub source_id: Option<String>,
    pub variant: Option<Variant>,
}

impl Provenance {
    pub fn original() -> Self {
        Provenance {
            admitted_by: AdmittedBy::Original,
            source_id: None,
            variant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub id: String,
    pub text: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl LabeledRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        LabeledRecord {
            id: id.into(),
            text: text.into(),
            label: label.into(),
            provenance: None,
        }
    }

    /// Id of the original record this row stands for: its source for
    /// generated rows, itself otherwise.
    pub fn origin_id(&self) -> &str {
        self.provenance
            .as_ref()
            .and_then(|p| p.source_id.as_deref())
            .unwrap_or(&self.id)
    }

    pub fn is_generated(&self) -> bool {
        matches!(&self.provenance, Some(p) if p.admitted_by != AdmittedBy::Original)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<LabeledRecord>,
}

impl Dataset {
    pub fn new(records: Vec<LabeledRecord>) -> Self {
        Dataset { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledRecord> {
        self.records.iter()
    }

    /// Sorted distinct labels.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self
            .records
            .iter()
            .map(|r| r.label.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        labels.dedup();
        labels
    }

    pub fn has_provenance(&self) -> bool {
        self.records.iter().any(|r| r.provenance.is_some())
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset::new(indices.iter().map(|&i| self.records[i].clone()).collect())
    }
}

impl FromIterator<LabeledRecord> for Dataset {
    fn from_iter<T: IntoIterator<Item = LabeledRecord>>(iter: T) -> Self {
        Dataset::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl DatasetFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DatasetFormat::Csv => "csv",
            DatasetFormat::Jsonl => "jsonl",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(DatasetFormat::Csv),
            "jsonl" | "ndjson" => Some(DatasetFormat::Jsonl),
            _ => None,
        }
    }
}

/// Column mapping and validation rules for [`load_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    #[serde(default = "default_text_column")]
    pub text_column: String,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default = "default_id_column")]
    pub id_column: String,
    /// Declared label set; rows with other labels are rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

fn default_text_column() -> String {
    "text".into()
}

fn default_label_column() -> String {
    "label".into()
}

fn default_id_column() -> String {
    "id".into()
}

impl LoadOptions {
    pub fn new(format: DatasetFormat) -> Self {
        LoadOptions {
            format,
            text_column: default_text_column(),
            label_column: default_label_column(),
            id_column: default_id_column(),
            labels: None,
        }
    }
}

/// A row that parsed but was not admitted into the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// One-based data row number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub rejections: Vec<Rejection>,
}

const PROVENANCE_COLUMNS: [&str; 3] = ["source_id", "admitted_by", "variant"];

struct RawRow {
    id: Option<String>,
    text: String,
    label: String,
    source_id: Option<String>,
    admitted_by: Option<String>,
    variant: Option<String>,
}

struct RowValidator<'a> {
    path: &'a Path,
    labels: Option<HashSet<&'a str>>,
    seen: HashSet<String>,
    records: Vec<LabeledRecord>,
    rejections: Vec<Rejection>,
}

impl<'a> RowValidator<'a> {
    fn new(path: &'a Path, opts: &'a LoadOptions) -> Self {
        RowValidator {
            path,
            labels: opts
                .labels
                .as_ref()
                .map(|l| l.iter().map(String::as_str).collect()),
            seen: HashSet::new(),
            records: Vec::new(),
            rejections: Vec::new(),
        }
    }

    fn reject(&mut self, row: usize, reason: impl Into<String>) {
        self.rejections.push(Rejection {
            row,
            reason: reason.into(),
        });
    }

    /// `index` is the zero-based data row index, used as the id when the file
    /// has no id column.
    fn push(&mut self, index: usize, raw: RawRow) -> Result<(), DatasetError> {
        let row = index + 1;
        if text::normalize(&raw.text).trim().is_empty() {
            self.reject(row, "empty text after normalization");
            return Ok(());
        }
        if let Some(labels) = &self.labels {
            if !labels.contains(raw.label.as_str()) {
                let reason = format!("label `{}` not in declared label set", raw.label);
                self.reject(row, reason);
                return Ok(());
            }
        }
        let id = raw.id.unwrap_or_else(|| index.to_string());
        if !self.seen.insert(id.clone()) {
            self.reject(row, format!("duplicate id `{id}`"));
            return Ok(());
        }
        let provenance = match raw.admitted_by.as_deref() {
            None => None,
            Some(a) => {
                let admitted_by = a.parse().map_err(|reason| DatasetError::Malformed {
                    path: self.path.to_path_buf(),
                    row,
                    reason,
                })?;
                let variant = match raw.variant.as_deref().filter(|v| !v.is_empty()) {
                    None => None,
                    Some(v) => Some(v.parse().map_err(|reason| DatasetError::Malformed {
                        path: self.path.to_path_buf(),
                        row,
                        reason,
                    })?),
                };
                Some(Provenance {
                    admitted_by,
                    source_id: raw.source_id.filter(|s| !s.is_empty()),
                    variant,
                })
            }
        };
        self.records.push(LabeledRecord {
            id,
            text: raw.text,
            label: raw.label,
            provenance,
        });
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a CSV or JSONL dataset. Rows with empty text, undeclared labels or
/// duplicate ids are collected in the rejection list rather than dropped.
pub fn load_dataset(path: &Path, opts: &LoadOptions) -> Result<LoadOutcome, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut validator = RowValidator::new(path, opts);
    match opts.format {
        DatasetFormat::Csv => load_csv(path, file, opts, &mut validator)?,
        DatasetFormat::Jsonl => load_jsonl(path, file, opts, &mut validator)?,
    }
    Ok(LoadOutcome {
        dataset: Dataset::new(validator.records),
        rejections: validator.rejections,
    })
}

fn load_csv(
    path: &Path,
    file: File,
    opts: &LoadOptions,
    validator: &mut RowValidator<'_>,
) -> Result<(), DatasetError> {
    let csv_err = |source| DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader.headers().map_err(csv_err)?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let missing = |column: &str| DatasetError::MissingColumn {
        path: path.to_path_buf(),
        column: column.to_string(),
    };
    let text_idx = position(&opts.text_column).ok_or_else(|| missing(&opts.text_column))?;
    let label_idx = position(&opts.label_column).ok_or_else(|| missing(&opts.label_column))?;
    let id_idx = position(&opts.id_column);
    let [src_idx, adm_idx, var_idx] = PROVENANCE_COLUMNS.map(position);

    for (index, result) in reader.records().enumerate() {
        let record = result.map_err(|e| DatasetError::Malformed {
            path: path.to_path_buf(),
            row: index + 1,
            reason: e.to_string(),
        })?;
        let field = |i: Option<usize>| i.and_then(|i| record.get(i)).map(str::to_string);
        let raw = RawRow {
            id: field(id_idx),
            text: field(Some(text_idx)).unwrap_or_default(),
            label: field(Some(label_idx)).unwrap_or_default(),
            source_id: field(src_idx),
            admitted_by: field(adm_idx),
            variant: field(var_idx),
        };
        validator.push(index, raw)?;
    }
    Ok(())
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn load_jsonl(
    path: &Path,
    file: File,
    opts: &LoadOptions,
    validator: &mut RowValidator<'_>,
) -> Result<(), DatasetError> {
    let mut index = 0usize;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = index + 1;
        let malformed = |reason: String| DatasetError::Malformed {
            path: path.to_path_buf(),
            row,
            reason,
        };
        let obj: Map<String, Value> =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let get = |key: &str| -> Result<Option<String>, DatasetError> {
            match obj.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => scalar_to_string(v)
                    .map(Some)
                    .ok_or_else(|| malformed(format!("field `{key}` is not a scalar"))),
            }
        };
        let text = get(&opts.text_column)?
            .ok_or_else(|| malformed(format!("missing field `{}`", opts.text_column)))?;
        let label = get(&opts.label_column)?
            .ok_or_else(|| malformed(format!("missing field `{}`", opts.label_column)))?;
        let raw = RawRow {
            id: get(&opts.id_column)?,
            text,
            label,
            source_id: get(PROVENANCE_COLUMNS[0])?,
            admitted_by: get(PROVENANCE_COLUMNS[1])?,
            variant: get(PROVENANCE_COLUMNS[2])?,
        };
        validator.push(index, raw)?;
        index += 1;
    }
    Ok(())
}

/// Writes `dataset` with columns `id`, `text`, `label`, plus `source_id`,
/// `admitted_by` and `variant` when any record carries provenance.
pub fn save_dataset(dataset: &Dataset, path: &Path, format: DatasetFormat) -> Result<(), DatasetError> {
    let with_provenance = dataset.has_provenance();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        DatasetFormat::Csv => {
            let mut writer = csv::Writer::from_writer(&mut out);
            let csv_err = |source| DatasetError::Csv {
                path: path.to_path_buf(),
                source,
            };
            let mut header = vec!["id", "text", "label"];
            if with_provenance {
                header.extend(PROVENANCE_COLUMNS);
            }
            writer.write_record(&header).map_err(csv_err)?;
            for r in &dataset.records {
                let mut row = vec![r.id.as_str(), r.text.as_str(), r.label.as_str()];
                if with_provenance {
                    let p = r.provenance.clone().unwrap_or_else(Provenance::original);
                    row.push(r.provenance.as_ref().and_then(|p| p.source_id.as_deref()).unwrap_or(""));
                    row.push(p.admitted_by.as_str());
                    row.push(p.variant.map(Variant::as_str).unwrap_or(""));
                }
                writer.write_record(&row).map_err(csv_err)?;
            }
            writer.flush().map_err(io_err(path))?;
        }
        DatasetFormat::Jsonl => {
            for r in &dataset.records {
                let mut obj = Map::new();
                obj.insert("id".into(), Value::String(r.id.clone()));
                obj.insert("text".into(), Value::String(r.text.clone()));
                obj.insert("label".into(), Value::String(r.label.clone()));
                if with_provenance {
                    let p = r.provenance.clone().unwrap_or_else(Provenance::original);
                    obj.insert(
                        "source_id".into(),
                        p.source_id.map(Value::String).unwrap_or(Value::Null),
                    );
                    obj.insert("admitted_by".into(), Value::String(p.admitted_by.as_str().into()));
                    obj.insert(
                        "variant".into(),
                        p.variant
                            .map(|v| Value::String(v.as_str().into()))
                            .unwrap_or(Value::Null),
                    );
                }
                serde_json::to_writer(&mut out, &Value::Object(obj))
                    .map_err(|e| io_err(path)(e.into()))?;
                out.write_all(b"\n").map_err(io_err(path))?;
            }
        }
    }
    out.flush().map_err(io_err(path))
}

/// Writes one `{"row": .., "reason": ..}` object per line.
pub fn write_rejections(path: &Path, rejections: &[Rejection]) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for r in rejections {
        serde_json::to_writer(&mut out, r).map_err(|e| io_err(path)(e.into()))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: BTreeMap<String, usize>,
    pub ratios: BTreeMap<String, f64>,
}

impl ClassDistribution {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

pub fn class_distribution(dataset: &Dataset) -> ClassDistribution {
    let mut counts = BTreeMap::new();
    for r in &dataset.records {
        *counts.entry(r.label.clone()).or_insert(0usize) += 1;
    }
    let total = dataset.len() as f64;
    let ratios = counts
        .iter()
        .map(|(l, &c)| (l.clone(), c as f64 / total))
        .collect();
    ClassDistribution { counts, ratios }
}

/// Indices of each class in dataset order, keyed by label.
fn class_groups(dataset: &Dataset) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        groups.entry(r.label.as_str()).or_default().push(i);
    }
    groups
}

fn round_half_up(x: f64) -> usize {
    // Absorbs representation error such as 0.7 * 5 = 3.4999999999999996.
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Per-class train counts: round-half-up of `fraction * n`, kept inside
/// `[1, n - 1]` for classes with at least two records, then nudged one record
/// at a time (largest classes first) until the total equals the rounded
/// global train size.
fn train_quota(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let bounds = |n: usize| if n >= 2 { (1, n - 1) } else { (0, n) };
    let mut quota: Vec<usize> = sizes
        .iter()
        .map(|&n| {
            let (lo, hi) = bounds(n);
            round_half_up(fraction * n as f64).clamp(lo, hi)
        })
        .collect();
    let total: usize = sizes.iter().sum();
    let target = round_half_up(fraction * total as f64) as i64;

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));

    loop {
        let diff = target - quota.iter().sum::<usize>() as i64;
        if diff == 0 {
            break;
        }
        let step: i64 = diff.signum();
        let movable = |c: usize| {
            let (lo, hi) = bounds(sizes[c]);
            let next = quota[c] as i64 + step;
            next >= lo as i64 && next <= hi as i64
        };
        let deviation = |c: usize| (quota[c] as f64 + step as f64 - fraction * sizes[c] as f64).abs();
        let pick = order
            .iter()
            .copied()
            .find(|&c| movable(c) && deviation(c) <= 1.0 + 1e-9)
            .or_else(|| order.iter().copied().find(|&c| movable(c)));
        match pick {
            Some(c) => quota[c] = (quota[c] as i64 + step) as usize,
            None => break,
        }
    }
    quota
}

/// Train and test indices (each in dataset order) of a stratified split.
pub fn stratified_partition(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    if dataset.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut groups: Vec<Vec<usize>> = class_groups(dataset).into_values().collect();
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let quota = train_quota(&sizes, train_fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; dataset.len()];
    for (group, &q) in groups.iter_mut().zip(&quota) {
        group.shuffle(&mut rng);
        for &i in &group[..q] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| in_train[i]);
    Ok((train, test))
}

pub fn stratified_split(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    let (train, test) = stratified_partition(dataset, train_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Validation fold index of every record. Each class is shuffled and dealt
/// round-robin, the dealing position carrying over between classes so fold
/// sizes differ by at most one.
pub fn kfold_assignments(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>, DatasetError> {
    if k < 2 {
        return Err(DatasetError::TooFewFolds(k));
    }
    if k > dataset.len() {
        return Err(DatasetError::TooManyFolds {
            k,
            size: dataset.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; dataset.len()];
    let mut next = 0usize;
    for mut group in class_groups(dataset).into_values() {
        group.shuffle(&mut rng);
        for i in group {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(fold_of)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Dataset,
    pub validation: Dataset,
}

pub fn kfold_split(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>, DatasetError> {
    let fold_of = kfold_assignments(dataset, k, seed)?;
    Ok((0..k)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) =
                (0..dataset.len()).partition(|&i| fold_of[i] == f);
            Fold {
                train: dataset.subset(&train),
                validation: dataset.subset(&validation),
            }
        })
        .collect())
}
