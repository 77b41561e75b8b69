//! Threshold-free OOD metrics over score reports: ROC/AUROC, average
//! precision for both positive-class choices, the area under the threshold
//! curve (AUTC), Youden's J threshold selection, and per-class accuracy at a
//! chosen operating point.
//!
//! Convention everywhere: ID is the positive class and a sample is
//! predicted ID when `score >= threshold`. Ties therefore earn the
//! trapezoidal half-credit in AUROC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featstore::FeatureTable;
use crate::scorers::ScoreReport;

/// ROC curve points from sweeping the distinct score values (descending).
/// The first point is the `(0, 0)` endpoint at threshold `+inf`; the last
/// is `(1, 1)` at the minimum score.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
}

fn split_scores(report: &ScoreReport) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut id = Vec::new();
    let mut ood = Vec::new();
    for rec in &report.records {
        if rec.is_ood_true {
            ood.push(rec.score);
        } else {
            id.push(rec.score);
        }
    }
    if id.is_empty() || ood.is_empty() {
        return Err(Error::Validation(format!(
            "report '{}' needs at least one ID and one OOD record ({} ID, {} OOD)",
            report.method,
            id.len(),
            ood.len()
        )));
    }
    Ok((id, ood))
}

/// Sweeps all distinct score values as thresholds, ID positive.
pub fn roc_curve(report: &ScoreReport) -> Result<RocCurve> {
    let (id, ood) = split_scores(report)?;
    let n_id = id.len() as f64;
    let n_ood = ood.len() as f64;
    let mut scored: Vec<(f64, bool)> = report
        .records
        .iter()
        .map(|r| (r.score, r.is_ood_true))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < scored.len() {
        let value = scored[i].0;
        while i < scored.len() && scored[i].0 == value {
            if scored[i].1 {
                fp += 1;
            } else {
                tp += 1;
            }
            i += 1;
        }
        thresholds.push(value);
        tpr.push(tp as f64 / n_id);
        fpr.push(fp as f64 / n_ood);
    }
    Ok(RocCurve {
        thresholds,
        tpr,
        fpr,
    })
}

/// Trapezoidal area under the ROC curve; equals the Mann-Whitney
/// probability `P(score_ID > score_OOD) + P(tie) / 2`.
pub fn auroc(curve: &RocCurve) -> f64 {
    let mut area = 0.0;
    for i in 0..curve.fpr.len() - 1 {
        let dx = curve.fpr[i + 1] - curve.fpr[i];
        area += dx * (curve.tpr[i] + curve.tpr[i + 1]) / 2.0;
    }
    area
}

/// Which class counts as positive for precision/recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositiveClass {
    Id,
    Ood,
}

/// Step-wise average precision (no interpolation) over the descending score
/// sweep. `PositiveClass::Ood` negates scores first so that higher still
/// means "predicted positive".
pub fn aupr(report: &ScoreReport, positive: PositiveClass) -> Result<f64> {
    split_scores(report)?;
    let mut scored: Vec<(f64, bool)> = report
        .records
        .iter()
        .map(|r| match positive {
            PositiveClass::Id => (r.score, !r.is_ood_true),
            PositiveClass::Ood => (-r.score, r.is_ood_true),
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total_pos = scored.iter().filter(|(_, p)| *p).count() as f64;

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut taken = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let value = scored[i].0;
        while i < scored.len() && scored[i].0 == value {
            if scored[i].1 {
                tp += 1;
            }
            taken += 1;
            i += 1;
        }
        let recall = tp as f64 / total_pos;
        let precision = tp as f64 / taken as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Area under the threshold curve: scores are min-max normalized to [0, 1]
/// and the areas under `FPR(t) = frac(OOD >= t)` and `FNR(t) = frac(ID < t)`
/// are integrated exactly over the piecewise-constant segments, then
/// averaged. Lower is better; all-equal scores return 0.5.
pub fn autc(report: &ScoreReport) -> Result<f64> {
    let (id, ood) = split_scores(report)?;
    let lo = report
        .records
        .iter()
        .map(|r| r.score)
        .fold(f64::INFINITY, f64::min);
    let hi = report
        .records
        .iter()
        .map(|r| r.score)
        .fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(0.5);
    }
    let normalize = |v: f64| (v - lo) / (hi - lo);
    let mut id_norm: Vec<f64> = id.into_iter().map(normalize).collect();
    let mut ood_norm: Vec<f64> = ood.into_iter().map(normalize).collect();
    id_norm.sort_by(f64::total_cmp);
    ood_norm.sort_by(f64::total_cmp);

    let mut breakpoints: Vec<f64> = id_norm
        .iter()
        .chain(ood_norm.iter())
        .copied()
        .chain([0.0, 1.0])
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    // On each open interval (a, b) between breakpoints both step functions
    // are constant, so value-at-right-endpoint times width integrates them
    // exactly (the endpoints themselves have measure zero).
    let frac_ge = |sorted: &[f64], t: f64| -> f64 {
        (sorted.len() - sorted.partition_point(|&s| s < t)) as f64 / sorted.len() as f64
    };
    let frac_lt = |sorted: &[f64], t: f64| -> f64 {
        sorted.partition_point(|&s| s < t) as f64 / sorted.len() as f64
    };
    let mut area_fpr = 0.0;
    let mut area_fnr = 0.0;
    for pair in breakpoints.windows(2) {
        let width = pair[1] - pair[0];
        area_fpr += width * frac_ge(&ood_norm, pair[1]);
        area_fnr += width * frac_lt(&id_norm, pair[1]);
    }
    Ok(0.5 * (area_fpr + area_fnr))
}

/// Youden's J and the operating threshold that attains it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoudenResult {
    /// Midpoint between the adjacent distinct scores bounding the
    /// maximizing interval (lowest such midpoint on ties).
    pub threshold: f64,
    /// `max over thresholds of (tpr - fpr)`, in [0, 1] by construction.
    pub j: f64,
}

/// Maximizes `tpr - fpr` over the curve's points.
pub fn youden_threshold(curve: &RocCurve) -> YoudenResult {
    let last = curve.thresholds.len() - 1;
    let mut best_j = f64::NEG_INFINITY;
    for i in 0..curve.thresholds.len() {
        best_j = best_j.max(curve.tpr[i] - curve.fpr[i]);
    }
    let mut threshold = f64::INFINITY;
    for i in 0..curve.thresholds.len() {
        if curve.tpr[i] - curve.fpr[i] == best_j {
            let tau = if i == 0 {
                // the (0, 0) endpoint: anything above the top score
                curve.thresholds[1] + 1.0
            } else if i < last {
                (curve.thresholds[i] + curve.thresholds[i + 1]) / 2.0
            } else {
                curve.thresholds[last]
            };
            threshold = threshold.min(tau);
        }
    }
    YoudenResult {
        threshold,
        j: best_j,
    }
}

/// Accuracy per ID class plus OOD accuracy at a fixed threshold. Classes
/// (or the OOD pool) with no scored records report `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerClassReport {
    pub per_class_accuracy: Vec<Option<f64>>,
    pub ood_accuracy: Option<f64>,
}

/// An ID sample counts as correct iff `score >= tau` and the method's
/// predicted class matches the true class; an OOD sample iff `score < tau`.
pub fn per_class_report(
    report: &ScoreReport,
    table: &FeatureTable,
    tau: f64,
) -> Result<PerClassReport> {
    if tau.is_nan() {
        return Err(Error::Argument("threshold must not be NaN".into()));
    }
    let n = table.manifest.n;
    let lookup: std::collections::HashMap<&str, (bool, i64)> = table
        .records
        .iter()
        .map(|r| (r.id.as_str(), (r.is_ood, r.class_label)))
        .collect();
    let mut totals = vec![0usize; n];
    let mut correct = vec![0usize; n];
    let mut ood_total = 0usize;
    let mut ood_correct = 0usize;
    for rec in &report.records {
        let (is_ood, label) = lookup.get(rec.id.as_str()).ok_or_else(|| {
            Error::Validation(format!("scored id '{}' not present in the table", rec.id))
        })?;
        if *is_ood {
            ood_total += 1;
            if rec.score < tau {
                ood_correct += 1;
            }
        } else {
            let c = *label as usize;
            totals[c] += 1;
            if rec.score >= tau && rec.pred_class == c {
                correct[c] += 1;
            }
        }
    }
    let per_class_accuracy = totals
        .iter()
        .zip(&correct)
        .map(|(&t, &c)| (t > 0).then(|| c as f64 / t as f64))
        .collect();
    let ood_accuracy = (ood_total > 0).then(|| ood_correct as f64 / ood_total as f64);
    Ok(PerClassReport {
        per_class_accuracy,
        ood_accuracy,
    })
}

/// Everything the evaluation pipeline reports for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub method: String,
    pub auroc: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
    pub autc: f64,
    pub youden_threshold: f64,
    pub youden_j: f64,
    /// One entry per ID class; `null` when the class has no scored records.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub ood_accuracy: f64,
}

/// Composes every metric over one report; the per-class table uses the
/// report's own Youden threshold.
pub fn summarize(report: &ScoreReport, table: &FeatureTable) -> Result<MetricsSummary> {
    let curve = roc_curve(report)?;
    let youden = youden_threshold(&curve);
    let per_class = per_class_report(report, table, youden.threshold)?;
    Ok(MetricsSummary {
        method: report.method.clone(),
        auroc: auroc(&curve),
        aupr_in: aupr(report, PositiveClass::Id)?,
        aupr_out: aupr(report, PositiveClass::Ood)?,
        autc: autc(report)?,
        youden_threshold: youden.threshold,
        youden_j: youden.j,
        per_class_accuracy: per_class.per_class_accuracy,
        ood_accuracy: per_class
            .ood_accuracy
            .expect("roc_curve guarantees OOD records"),
    })
}
