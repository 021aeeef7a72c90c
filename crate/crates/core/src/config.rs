//! The single JSON document that drives a run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugmentationPlan, Metric, ThresholdSet, Variant};
use crate::backend::BackendConfig;
use crate::dataset::{DatasetFormat, LoadOptions};
use crate::eval::SplitConfig;
use crate::text::PreprocessConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Inferred from the file extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DatasetFormat>,
    #[serde(default = "default_text_column")]
    pub text_column: String,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default = "default_id_column")]
    pub id_column: String,
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

impl DatasetConfig {
    pub fn resolved_format(&self) -> Result<DatasetFormat, ConfigError> {
        self.format
            .or_else(|| DatasetFormat::from_path(&self.path))
            .ok_or_else(|| ConfigError::Invalid(format!("cannot infer format of {}", self.path.display())))
    }

    pub fn load_options(&self) -> Result<LoadOptions, ConfigError> {
        Ok(LoadOptions {
            format: self.resolved_format()?,
            text_column: self.text_column.clone(),
            label_column: self.label_column.clone(),
            id_column: self.id_column.clone(),
            labels: self.labels.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub selected_labels: BTreeSet<String>,
    #[serde(default = "all_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_override: Option<ThresholdSet>,
}

fn all_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn all_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    pub backend: BackendConfig,
    pub augmentation: AugmentationConfig,
    #[serde(default)]
    pub split: SplitConfig,
    /// Not written to the resolved config, so two runs that differ only in
    /// output location produce identical trees.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_jobs() -> usize {
    4
}

impl PipelineConfig {
    /// Reads a config and resolves relative paths against its directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: PipelineConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.dataset.path);
        join(&mut self.output_dir);
        if let Some(p) = self.backend.fixture_path.as_mut() {
            join(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.dataset.resolved_format()?;
        self.backend.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.augmentation.selected_labels.is_empty() {
            return Err(ConfigError::Invalid("augmentation.selected_labels is empty".into()));
        }
        if let Some(labels) = &self.dataset.labels {
            if let Some(l) = self.augmentation.selected_labels.iter().find(|l| !labels.contains(l)) {
                return Err(ConfigError::Invalid(format!("selected label `{l}` is not a declared label")));
            }
        }
        if self.augmentation.variants.is_empty() || self.augmentation.metrics.is_empty() {
            return Err(ConfigError::Invalid("augmentation needs at least one variant and one metric".into()));
        }
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(ConfigError::Invalid(format!("split.train_fraction {f} outside (0, 1)")));
        }
        if self.split.k < 2 {
            return Err(ConfigError::Invalid("split.k must be at least 2".into()));
        }
        if self.jobs == 0 {
            return Err(ConfigError::Invalid("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// One plan per configured variant, in configured order.
    pub fn plans(&self) -> Vec<AugmentationPlan> {
        let mut seen = BTreeSet::new();
        self.augmentation
            .variants
            .iter()
            .filter(|v| seen.insert(**v))
            .map(|&variant| AugmentationPlan {
                selected_labels: self.augmentation.selected_labels.clone(),
                variant,
                metrics: self.augmentation.metrics.clone(),
                threshold_override: self.augmentation.threshold_override,
            })
            .collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendKind;

    const MINIMAL: &str = r#"{
        "dataset": {"path": "data/corpus.csv"},
        "backend": {"kind": "stub", "seed": 7},
        "augmentation": {"selected_labels": ["POSITIVE", "NEGATIVE"]}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = PipelineConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.dataset.resolved_format().unwrap(), DatasetFormat::Csv);
        assert_eq!(c.backend.kind, BackendKind::Stub);
        assert_eq!(c.augmentation.variants, Variant::ALL.to_vec());
        assert_eq!(c.augmentation.metrics.len(), 4);
        assert_eq!(c.split, SplitConfig::default());
        assert_eq!(c.split.k, 5);
        assert_eq!(c.jobs, 4);
        assert_eq!(c.preprocess, PreprocessConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = PipelineConfig::from_json(MINIMAL).unwrap();
        let json = c.to_json_pretty();
        assert!(!json.contains("output_dir"));
        let back = PipelineConfig::from_json(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, MINIMAL).unwrap();
        let c = PipelineConfig::from_file(&path).unwrap();
        assert_eq!(c.dataset.path, dir.path().join("data/corpus.csv"));
        assert_eq!(c.output_dir, dir.path().join("out"));
    }

    #[test]
    fn one_plan_per_variant() {
        let mut c = PipelineConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.plans().len(), 2);
        c.augmentation.variants = vec![Variant::AllText, Variant::AllText];
        let plans = c.plans();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].variant, Variant::AllText);
    }

    #[test]
    fn invalid_configs() {
        let base = PipelineConfig::from_json(MINIMAL).unwrap();
        let mut c = base.clone();
        c.augmentation.selected_labels.clear();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.split.k = 1;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.split.train_fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.dataset.labels = Some(vec!["POSITIVE".into()]);
        assert!(c.validate().is_err());
        let mut c = base;
        c.backend.kind = BackendKind::Remote;
        assert!(c.validate().is_err());
        assert!(PipelineConfig::from_file(Path::new("/nonexistent/run.json")).is_err());
    }
}
