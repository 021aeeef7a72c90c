use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context as _, Result};
use log::{info, warn};
use simaug_core::augment::{read_temp_records, write_audit, write_temp_records, RecordStatus};
use simaug_core::backend::build_backend;
use simaug_core::dataset::{load_dataset, save_dataset, write_rejections, LoadOptions, LoadOutcome};
use simaug_core::eval::{evaluate_pipeline, ConfigKind, NamedDataset, PipelineEvaluation, SplitEvaluation};
use simaug_core::similarity::score_pair;
use simaug_core::text::combine_text;
use simaug_core::{
    augment, build_temp_dataset, compute_thresholds, Dataset, DatasetFormat, EmbeddingVector, GrowthReport, Metric,
    PipelineConfig, TempRecord, ThresholdSet, Variant,
};

use crate::output::{ensure_dir, slug, write_json, write_text};
use crate::report;
use crate::Common;

pub const ENDPOINT_ENV: &str = "SIMAUG_ENDPOINT";
pub const RESOLVED_CONFIG: &str = "resolved_config.json";

pub struct Context {
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub verify: bool,
}

pub fn aug_file_name(metric: Metric, variant: Variant) -> String {
    format!("aug_{}_{}.jsonl", metric.slug(), variant.as_str())
}

fn parse_aug_stem(stem: &str) -> Option<(Metric, Variant)> {
    let rest = stem.strip_prefix("aug_")?;
    let (metric, variant) = rest.split_once('_')?;
    Some((metric.parse().ok()?, variant.parse().ok()?))
}

impl Context {
    pub fn load(common: &Common) -> Result<Self> {
        let path = common.config.as_ref().ok_or_else(|| anyhow!("--config is required"))?;
        let mut config = PipelineConfig::from_file(path)?;
        if let Some(kind) = common.backend {
            config.backend.kind = kind;
        }
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.is_empty() {
                config.backend.endpoint = Some(endpoint);
            }
        }
        if let Some(seed) = common.seed {
            config.backend.seed = seed;
            config.split.seed = seed;
        }
        if let Some(jobs) = common.jobs {
            config.jobs = jobs;
        }
        if let Some(out) = &common.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(Context {
            out: config.output_dir.clone(),
            config,
            verify: common.verify,
        })
    }

    fn phase_dir(&self, name: &str) -> Result<PathBuf> {
        let dir = self.out.join(name);
        ensure_dir(&dir)?;
        Ok(dir)
    }

    fn write_resolved_config(&self) -> Result<()> {
        ensure_dir(&self.out)?;
        write_text(&self.out.join(RESOLVED_CONFIG), &(self.config.to_json_pretty() + "\n"))
    }

    fn load_original(&self) -> Result<LoadOutcome> {
        let path = &self.config.dataset.path;
        let outcome = load_dataset(path, &self.config.dataset.load_options()?)
            .with_context(|| format!("loading {}", path.display()))?;
        if !outcome.rejections.is_empty() {
            warn!("{}: {} rows rejected", path.display(), outcome.rejections.len());
        }
        Ok(outcome)
    }

    pub fn phase1(&self) -> Result<Vec<TempRecord>> {
        self.write_resolved_config()?;
        let loaded = self.load_original()?;
        info!("phase 1: {} records, backend {:?}", loaded.dataset.len(), self.config.backend.kind);
        let backend = build_backend(&self.config.backend)?;
        let temp = build_temp_dataset(&loaded.dataset, backend.as_ref(), &self.config.preprocess, self.config.jobs)?;
        if self.verify {
            verify_temp(&temp.records)?;
        }
        let dir = self.phase_dir("phase1")?;
        write_rejections(&dir.join("rejections.jsonl"), &loaded.rejections)?;
        let path = dir.join("temp.jsonl");
        let partial = crate::output::partial_path(&path);
        write_temp_records(&partial, &temp.records)?;
        fs::rename(&partial, &path).with_context(|| format!("cannot move {} into place", path.display()))?;
        write_audit(&dir.join("audit.jsonl"), &temp.audit)?;
        info!("phase 1: {} temp rows, {} audit entries", temp.records.len(), temp.audit.len());
        Ok(temp.records)
    }

    pub fn phase2(&self, temp_path: Option<&Path>) -> Result<BTreeMap<Variant, GrowthReport>> {
        self.write_resolved_config()?;
        let temp_path = temp_path.map(Path::to_path_buf).unwrap_or_else(|| self.out.join("phase1/temp.jsonl"));
        let records = read_temp_records(&temp_path).with_context(|| format!("reading {}", temp_path.display()))?;
        let original = self.load_original()?.dataset;
        let thresholds = compute_thresholds(&records)?;
        if self.verify {
            verify_thresholds(&records, &thresholds)?;
        }
        let dir = self.phase_dir("phase2")?;
        write_json(&dir.join("thresholds.json"), &thresholds)?;

        let mut growth = BTreeMap::new();
        let mut table = String::new();
        for plan in self.config.plans() {
            let (datasets, report) = augment(&original, &records, &thresholds, &plan)?;
            for d in &datasets {
                let path = dir.join(aug_file_name(d.metric, d.variant));
                save_dataset(&d.dataset, &path, DatasetFormat::Jsonl)?;
                if self.verify {
                    verify_line_count(&path, report.total.by_metric[&d.metric].final_count)?;
                }
            }
            let _ = writeln!(table, "{}\n{}", plan.variant.display_name(), report.render_table());
            growth.insert(plan.variant, report);
        }
        write_json(&dir.join("growth.json"), &growth)?;
        write_text(&dir.join("growth.txt"), &table)?;
        info!("phase 2: thresholds {thresholds:?}");
        Ok(growth)
    }

    fn phase2_datasets(&self) -> Vec<(PathBuf, Metric, Variant)> {
        let mut out = Vec::new();
        for plan in self.config.plans() {
            for &metric in &plan.metrics {
                let path = self.out.join("phase2").join(aug_file_name(metric, plan.variant));
                if !out.iter().any(|(p, _, _)| *p == path) {
                    out.push((path, metric, plan.variant));
                }
            }
        }
        out
    }

    pub fn phase3(&self, paths: &[PathBuf], from_phase2: bool) -> Result<PipelineEvaluation> {
        self.write_resolved_config()?;
        let original = self.load_original()?.dataset;
        let mut sources: Vec<(PathBuf, Option<(Metric, Variant)>)> = Vec::new();
        if from_phase2 {
            sources.extend(self.phase2_datasets().into_iter().map(|(p, m, v)| (p, Some((m, v)))));
        }
        for p in paths {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            sources.push((p.clone(), parse_aug_stem(stem)));
        }
        let mut configs = Vec::with_capacity(sources.len());
        for (path, kind) in sources {
            let dataset = load_variant(&path)?;
            configs.push(match kind {
                Some((metric, variant)) => NamedDataset {
                    name: format!("{} ({})", metric.display_name(), variant.display_name()),
                    kind: ConfigKind::Augmented { metric, variant },
                    dataset,
                },
                None => {
                    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
                    NamedDataset::other(stem, dataset)
                }
            });
        }
        info!("phase 3: evaluating {} configurations plus the original", configs.len());
        let evaluation = evaluate_pipeline(&original, &configs, &self.config.split, &self.config.preprocess)?;
        if self.verify {
            verify_evaluation(&evaluation)?;
        }
        let dir = self.phase_dir("phase3")?;
        write_json(&dir.join("evaluation.json"), &evaluation)?;
        write_text(&dir.join("evaluation.txt"), &report::render_evaluation(&evaluation))?;
        let curves = dir.join("curves");
        ensure_dir(&curves)?;
        for r in &evaluation.reports {
            for (half, split) in [("augmented", &r.augmented_split), ("not_augmented", &r.not_augmented_split)] {
                let base = format!("{}.{half}", slug(&r.name));
                write_text(&curves.join(format!("{base}.roc.csv")), &curve_csv(split, true))?;
                write_text(&curves.join(format!("{base}.pr.csv")), &curve_csv(split, false))?;
            }
        }
        Ok(evaluation)
    }

    pub fn run(&self) -> Result<()> {
        self.phase1()?;
        self.phase2(None)?;
        self.phase3(&[], true)?;
        report::write_report(&self.out)
    }
}

pub fn report_only(common: &Common) -> Result<()> {
    let out = match (&common.out, &common.config) {
        (Some(out), _) => out.clone(),
        (None, Some(config)) => PipelineConfig::from_file(config)?.output_dir,
        (None, None) => bail!("report needs --config or --out"),
    };
    report::write_report(&out)
}

fn load_variant(path: &Path) -> Result<Dataset> {
    let format = DatasetFormat::from_path(path).unwrap_or(DatasetFormat::Jsonl);
    let outcome =
        load_dataset(path, &LoadOptions::new(format)).with_context(|| format!("loading {}", path.display()))?;
    if !outcome.rejections.is_empty() {
        warn!("{}: {} rows rejected", path.display(), outcome.rejections.len());
    }
    Ok(outcome.dataset)
}

fn curve_csv(split: &SplitEvaluation, roc: bool) -> String {
    let mut out = String::from("label,threshold,x,y\n");
    for c in &split.curves.per_label {
        let points = if roc { &c.roc } else { &c.pr };
        for p in points {
            let threshold = p.threshold.map(|t| t.to_string()).unwrap_or_default();
            let label = if c.label.contains([',', '"', '\n']) {
                format!("\"{}\"", c.label.replace('"', "\"\""))
            } else {
                c.label.clone()
            };
            let _ = writeln!(out, "{label},{threshold},{},{}", p.x, p.y);
        }
    }
    out
}

fn verify_temp(records: &[TempRecord]) -> Result<()> {
    for r in records {
        ensure!(
            r.all_text == combine_text(&r.preprocessed, &r.generated_text),
            "verify: all_text of `{}` is not the combined text",
            r.base.id
        );
        if r.status != RecordStatus::Ok {
            continue;
        }
        let a = EmbeddingVector::new(r.original_embedding.clone())?;
        let b = EmbeddingVector::new(r.generated_embedding.clone())?;
        let again = score_pair(&r.preprocessed, &r.generated_text, &a, &b)?.scores;
        let stored = r.scores.ok_or_else(|| anyhow!("verify: `{}` has no scores", r.base.id))?;
        for m in Metric::ALL {
            ensure!(
                (0.0..=1.0).contains(&stored.get(m)) && (stored.get(m) - again.get(m)).abs() <= 1e-12,
                "verify: {} score of `{}` does not recompute",
                m.display_name(),
                r.base.id
            );
        }
    }
    info!("verify: {} temp rows recomputed", records.len());
    Ok(())
}

fn verify_thresholds(records: &[TempRecord], thresholds: &ThresholdSet) -> Result<()> {
    let scored: Vec<_> = records.iter().filter_map(|r| r.scores).collect();
    for m in Metric::ALL {
        let mut sum = 0.0;
        for s in &scored {
            sum += s.get(m);
        }
        let naive = sum / scored.len() as f64;
        ensure!(
            (naive - thresholds.get(m)).abs() <= 1e-12,
            "verify: {} threshold {} differs from the plain mean {naive}",
            m.display_name(),
            thresholds.get(m)
        );
    }
    info!("verify: thresholds match plain column means");
    Ok(())
}

fn verify_line_count(path: &Path, expected: usize) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let lines = text.lines().filter(|l| !l.trim().is_empty()).count();
    ensure!(
        lines == expected,
        "verify: {} has {lines} rows, growth report says {expected}",
        path.display()
    );
    Ok(())
}

fn verify_evaluation(e: &PipelineEvaluation) -> Result<()> {
    for r in &e.reports {
        for s in [&r.augmented_split, &r.not_augmented_split] {
            let m = &s.metrics;
            for v in [m.f1, m.accuracy, m.precision, m.recall] {
                ensure!((0.0..=1.0).contains(&v), "verify: `{}` has a metric outside [0, 1]", r.name);
            }
            ensure!(
                m.accuracy == m.confusion.trace() as f64 / m.confusion.total() as f64,
                "verify: `{}` accuracy is not trace / total",
                r.name
            );
            ensure!(m.confusion.total() == s.size, "verify: `{}` confusion total mismatch", r.name);
        }
        ensure!(r.per_fold_f1.len() == e.split.k, "verify: `{}` fold count", r.name);
    }
    info!("verify: {} evaluation reports consistent", e.reports.len());
    Ok(())
}
