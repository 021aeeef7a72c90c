use serde::{Deserialize, Serialize};

use super::EvalError;

/// One operating point. `threshold` is `None` for the synthetic starting
/// point above every score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: Option<f64>,
    pub x: f64,
    pub y: f64,
}

/// Cumulative (score, tp, fp) after each group of tied scores, highest score
/// first.
fn sweep(positive: &[bool], scores: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (pos, &i) in order.iter().enumerate() {
        if positive[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(pos + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            out.push((scores[i], tp, fp));
        }
    }
    out
}

/// ROC points (x = false positive rate, y = true positive rate) from (0, 0)
/// to (1, 1). Empty when either class is missing.
pub fn roc_curve(positive: &[bool], scores: &[f64]) -> Vec<CurvePoint> {
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Vec::new();
    }
    let mut points = vec![CurvePoint {
        threshold: None,
        x: 0.0,
        y: 0.0,
    }];
    points.extend(sweep(positive, scores).into_iter().map(|(s, tp, fp)| CurvePoint {
        threshold: Some(s),
        x: fp as f64 / n as f64,
        y: tp as f64 / p as f64,
    }));
    points
}

/// Trapezoidal area under a ROC curve; ties contribute one half per pair.
pub fn roc_auc(curve: &[CurvePoint]) -> Option<f64> {
    if curve.len() < 2 {
        return None;
    }
    Some(
        curve
            .windows(2)
            .map(|w| (w[1].x - w[0].x) * (w[0].y + w[1].y) / 2.0)
            .sum(),
    )
}

/// PR points (x = recall, y = precision), starting at recall 0 with
/// precision 1. Empty when there are no positives.
pub fn pr_curve(positive: &[bool], scores: &[f64]) -> Vec<CurvePoint> {
    let p = positive.iter().filter(|&&b| b).count();
    if p == 0 {
        return Vec::new();
    }
    let mut points = vec![CurvePoint {
        threshold: None,
        x: 0.0,
        y: 1.0,
    }];
    points.extend(sweep(positive, scores).into_iter().map(|(s, tp, fp)| CurvePoint {
        threshold: Some(s),
        x: tp as f64 / p as f64,
        y: tp as f64 / (tp + fp) as f64,
    }));
    points
}

/// Step-wise area under a PR curve: sum of precision times recall gain.
pub fn average_precision(curve: &[CurvePoint]) -> Option<f64> {
    if curve.len() < 2 {
        return None;
    }
    Some(curve.windows(2).map(|w| (w[1].x - w[0].x) * w[1].y).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCurves {
    pub label: String,
    pub positives: usize,
    pub roc: Vec<CurvePoint>,
    pub pr: Vec<CurvePoint>,
    pub roc_auc: Option<f64>,
    pub average_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub per_label: Vec<LabelCurves>,
    /// Unweighted mean over labels whose AUC is defined.
    pub macro_roc_auc: Option<f64>,
    pub macro_average_precision: Option<f64>,
    pub warnings: Vec<String>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// One-vs-rest curves per label, with column `j` of each score row holding
/// the score of `label_order[j]`.
pub fn roc_pr_curves<S: AsRef<str>>(
    truth: &[S],
    scores: &[Vec<f64>],
    label_order: &[String],
) -> Result<CurveReport, EvalError> {
    if truth.len() != scores.len() {
        return Err(EvalError::LengthMismatch(truth.len(), scores.len()));
    }
    if let Some((row, r)) = scores.iter().enumerate().find(|(_, r)| r.len() != label_order.len()) {
        return Err(EvalError::ScoreWidth {
            row,
            found: r.len(),
            expected: label_order.len(),
        });
    }
    let truth_idx: Vec<usize> = truth
        .iter()
        .map(|t| {
            label_order
                .iter()
                .position(|l| l == t.as_ref())
                .ok_or_else(|| EvalError::UnknownLabel(t.as_ref().to_string()))
        })
        .collect::<Result<_, _>>()?;

    let mut warnings = Vec::new();
    let per_label: Vec<LabelCurves> = label_order
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let positive: Vec<bool> = truth_idx.iter().map(|&t| t == j).collect();
            let column: Vec<f64> = scores.iter().map(|r| r[j]).collect();
            let positives = positive.iter().filter(|&&b| b).count();
            let roc = roc_curve(&positive, &column);
            let pr = pr_curve(&positive, &column);
            let auc = roc_auc(&roc);
            if auc.is_none() {
                let what = if positives == 0 { "positives" } else { "negatives" };
                warnings.push(format!("label `{label}` has no {what}; AUC undefined and excluded from the macro"));
            }
            LabelCurves {
                label: label.clone(),
                positives,
                average_precision: average_precision(&pr),
                roc_auc: auc,
                roc,
                pr,
            }
        })
        .collect();
    Ok(CurveReport {
        macro_roc_auc: mean_defined(per_label.iter().map(|c| c.roc_auc)),
        macro_average_precision: mean_defined(per_label.iter().map(|c| c.average_precision)),
        per_label,
        warnings,
    })
}
