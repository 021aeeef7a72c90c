use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;
use serde::de::DeserializeOwned;
use serde::Serialize;
use simaug_core::augment::{read_audit, read_temp_records, RecordStatus};
use simaug_core::eval::{PipelineEvaluation, SplitEvaluation, TTestOutcome};
use simaug_core::{GrowthReport, ThresholdSet, Variant};

use crate::output::{ensure_dir, render_columns, write_json, write_text};

pub const AUGMENTED_HALF: &str = "Testing on Augmented Split";
pub const NOT_AUGMENTED_HALF: &str = "Testing on Not-Augmented Split";

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn half_cells(s: &SplitEvaluation) -> Vec<String> {
    let m = &s.metrics;
    vec![fmt4(m.f1), fmt4(m.accuracy), fmt4(m.precision), fmt4(m.recall)]
}

pub fn outcome_text(o: &TTestOutcome) -> String {
    match o {
        TTestOutcome::Tested(r) => format!(
            "t = {:.4}, df = {}, p = {:.4}, {}",
            r.t_statistic,
            r.degrees_of_freedom,
            r.p_value,
            if r.significant { "significant" } else { "not significant" }
        ),
        TTestOutcome::Identical => "identical".into(),
        TTestOutcome::Degenerate { reason } => format!("not tested ({reason})"),
    }
}

/// Both table halves side by side, then the paired t-tests.
pub fn render_evaluation(e: &PipelineEvaluation) -> String {
    let mut header = vec!["Configuration".to_string()];
    for _ in 0..2 {
        header.extend(["F1", "Accuracy", "Precision", "Recall"].map(String::from));
    }
    let mut lines = vec![header];
    for r in &e.reports {
        let mut row = vec![r.name.clone()];
        row.extend(half_cells(&r.augmented_split));
        row.extend(half_cells(&r.not_augmented_split));
        lines.push(row);
    }
    let body = render_columns(&lines);
    let head = body.lines().next().unwrap_or_default();
    let first = head.find("F1").unwrap_or(0);
    let second = head.rfind("F1").unwrap_or(first);
    let first_chars = head[..first].chars().count();
    let second_chars = head[..second].chars().count();
    let mut titles = format!("{:first_chars$}{AUGMENTED_HALF}", "");
    let pad = second_chars.saturating_sub(titles.chars().count()).max(2);
    titles.push_str(&" ".repeat(pad));
    titles.push_str(NOT_AUGMENTED_HALF);
    let mut out = titles + "\n" + &body;
    let _ = writeln!(
        out,
        "\nsplit: seed {}, train {} / test {}, {}-fold",
        e.split.seed, e.split.train_size, e.split.test_size, e.split.k
    );
    if !e.t_tests.is_empty() {
        out.push_str("\nPaired t-tests on per-fold macro F1\n");
        let rows: Vec<Vec<String>> = e
            .t_tests
            .iter()
            .map(|t| vec![format!("{} vs {}", t.a, t.b), outcome_text(&t.outcome)])
            .collect();
        out.push_str(&render_columns(&rows));
    }
    out
}

#[derive(Debug, Default, Serialize)]
struct Phase1Summary {
    rows: usize,
    scored: usize,
    empty_generations: usize,
    audit_entries: usize,
    rejections: usize,
}

#[derive(Debug, Serialize)]
struct HalfSummary {
    f1: f64,
    accuracy: f64,
    precision: f64,
    recall: f64,
    macro_roc_auc: Option<f64>,
    macro_average_precision: Option<f64>,
}

impl From<&SplitEvaluation> for HalfSummary {
    fn from(s: &SplitEvaluation) -> Self {
        HalfSummary {
            f1: s.metrics.f1,
            accuracy: s.metrics.accuracy,
            precision: s.metrics.precision,
            recall: s.metrics.recall,
            macro_roc_auc: s.curves.macro_roc_auc,
            macro_average_precision: s.curves.macro_average_precision,
        }
    }
}

#[derive(Debug, Serialize)]
struct EvaluationRow {
    name: String,
    augmented_split: HalfSummary,
    not_augmented_split: HalfSummary,
}

#[derive(Debug, Serialize)]
struct TTestRow {
    a: String,
    b: String,
    result: String,
}

#[derive(Debug, Default, Serialize)]
struct Summary {
    missing: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phase1: Option<Phase1Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thresholds: Option<ThresholdSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    growth_percent: Option<BTreeMap<Variant, BTreeMap<String, f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluation: Option<Vec<EvaluationRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_tests: Option<Vec<TTestRow>>,
}

fn read_json<T: DeserializeOwned>(path: &Path, missing: &mut Vec<String>, rel: &str) -> Option<T> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(_) => {
            missing.push(rel.to_string());
            return None;
        }
    };
    match serde_json::from_str(&text) {
        Ok(v) => Some(v),
        Err(e) => {
            missing.push(format!("{rel} (unreadable: {e})"));
            None
        }
    }
}

fn line_count(path: &Path) -> Option<usize> {
    fs::read_to_string(path)
        .ok()
        .map(|t| t.lines().filter(|l| !l.trim().is_empty()).count())
}

fn collect(out: &Path) -> (Summary, Option<BTreeMap<Variant, GrowthReport>>, Option<PipelineEvaluation>) {
    let mut s = Summary::default();
    let temp = out.join("phase1/temp.jsonl");
    match read_temp_records(&temp) {
        Ok(rows) => {
            s.phase1 = Some(Phase1Summary {
                rows: rows.len(),
                scored: rows.iter().filter(|r| r.status == RecordStatus::Ok).count(),
                empty_generations: rows.iter().filter(|r| r.status == RecordStatus::EmptyGeneration).count(),
                audit_entries: read_audit(&out.join("phase1/audit.jsonl")).map(|a| a.len()).unwrap_or(0),
                rejections: line_count(&out.join("phase1/rejections.jsonl")).unwrap_or(0),
            })
        }
        Err(_) => s.missing.push("phase1/temp.jsonl".into()),
    }
    s.thresholds = read_json(&out.join("phase2/thresholds.json"), &mut s.missing, "phase2/thresholds.json");
    let growth: Option<BTreeMap<Variant, GrowthReport>> =
        read_json(&out.join("phase2/growth.json"), &mut s.missing, "phase2/growth.json");
    s.growth_percent = growth.as_ref().map(|g| {
        g.iter()
            .map(|(v, r)| {
                let by_metric = r
                    .growth_percent
                    .iter()
                    .map(|(m, p)| (m.display_name().to_string(), *p))
                    .collect();
                (*v, by_metric)
            })
            .collect()
    });
    let evaluation: Option<PipelineEvaluation> =
        read_json(&out.join("phase3/evaluation.json"), &mut s.missing, "phase3/evaluation.json");
    if let Some(e) = &evaluation {
        s.evaluation = Some(
            e.reports
                .iter()
                .map(|r| EvaluationRow {
                    name: r.name.clone(),
                    augmented_split: (&r.augmented_split).into(),
                    not_augmented_split: (&r.not_augmented_split).into(),
                })
                .collect(),
        );
        s.t_tests = Some(
            e.t_tests
                .iter()
                .map(|t| TTestRow {
                    a: t.a.clone(),
                    b: t.b.clone(),
                    result: outcome_text(&t.outcome),
                })
                .collect(),
        );
    }
    (s, growth, evaluation)
}

fn render(s: &Summary, growth: Option<&BTreeMap<Variant, GrowthReport>>, e: Option<&PipelineEvaluation>) -> String {
    let mut out = String::from("Augmentation run summary\n\n");
    match &s.phase1 {
        Some(p) => {
            let _ = writeln!(
                out,
                "Phase 1: {} temp rows ({} scored, {} empty generations), {} audit entries, {} rejected input rows\n",
                p.rows, p.scored, p.empty_generations, p.audit_entries, p.rejections
            );
        }
        None => out.push_str("Phase 1: no output\n\n"),
    }
    match &s.thresholds {
        Some(t) => {
            let _ = writeln!(
                out,
                "Thresholds: Euclidean {:.4}, cosine {:.4}, Jaccard {:.4}, BLEU {:.4}\n",
                t.euclidean, t.cosine, t.jaccard, t.bleu
            );
        }
        None => out.push_str("Thresholds: no output\n\n"),
    }
    match growth {
        Some(g) => {
            for (variant, report) in g {
                let _ = writeln!(out, "Growth counts ({})\n{}", variant.display_name(), report.render_table());
            }
        }
        None => out.push_str("Growth: no output\n\n"),
    }
    match e {
        Some(e) => out.push_str(&render_evaluation(e)),
        None => out.push_str("Evaluation: no output\n"),
    }
    if !s.missing.is_empty() {
        out.push_str("\nMissing phase outputs\n");
        for m in &s.missing {
            let _ = writeln!(out, "  {m}");
        }
    }
    out
}

/// Consolidates phase outputs under `out` into `report/summary.{txt,json}`.
/// Missing phases are listed rather than treated as errors.
pub fn write_report(out: &Path) -> Result<()> {
    let (summary, growth, evaluation) = collect(out);
    let dir = out.join("report");
    ensure_dir(&dir)?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_text(&dir.join("summary.txt"), &render(&summary, growth.as_ref(), evaluation.as_ref()))?;
    if !summary.missing.is_empty() {
        log::warn!("report: missing {}", summary.missing.join(", "));
    }
    Ok(())
}
