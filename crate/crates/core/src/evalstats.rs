//! Classification metrics, ROC/PRC curves, and cross-algorithm rank tests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::mann_whitney_u;
use crate::stats::{chi2_sf, midranks, tie_term};

pub const METRICS: [&str; 9] =
    ["accuracy", "balanced_accuracy", "f1", "recall", "specificity", "precision", "roc_auc", "prc_auc", "aps"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(labels: &[u8], preds: &[u8]) -> Self {
        assert_eq!(labels.len(), preds.len(), "labels and predictions differ in length");
        let mut c = ConfusionCounts::default();
        for (&l, &p) in labels.iter().zip(preds) {
            match (l, p) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (0, _) => c.fp += 1,
                _ => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f1: f64,
    pub recall: f64,
    pub specificity: f64,
    pub precision: f64,
    /// Metrics whose denominator was zero and were set to 0.
    pub degenerate: Vec<String>,
}

fn ratio(num: u64, den: u64, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion_and_metrics(labels: &[u8], preds: &[u8]) -> ThresholdMetrics {
    let c = ConfusionCounts::from_predictions(labels, preds);
    let mut flags = Vec::new();
    let precision = ratio(c.tp, c.tp + c.fp, "precision", &mut flags);
    let recall = ratio(c.tp, c.tp + c.fn_, "recall", &mut flags);
    let specificity = ratio(c.tn, c.tn + c.fp, "specificity", &mut flags);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        flags.push("f1".into());
        0.0
    };
    ThresholdMetrics {
        counts: c,
        accuracy: ratio(c.tp + c.tn, c.total(), "accuracy", &mut flags),
        balanced_accuracy: (recall + specificity) / 2.0,
        f1,
        recall,
        specificity,
        precision,
        degenerate: flags,
    }
}

pub fn balanced_accuracy(labels: &[u8], preds: &[u8]) -> f64 {
    confusion_and_metrics(labels, preds).balanced_accuracy
}

/// Indices sorted by descending score, split into groups of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (FPR, TPR) from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: Option<f64>,
}

pub fn roc_curve(labels: &[u8], scores: &[f64]) -> RocCurve {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return RocCurve { points: Vec::new(), auc: None };
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    for g in tie_groups(scores) {
        for i in g {
            if labels[i] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        points.push((fp / neg, tp / pos));
    }
    let auc = trapezoid(&points);
    RocCurve { points, auc: Some(auc) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrcCurve {
    /// (recall, precision), starting at (0, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub aps: f64,
    pub no_skill: f64,
}

pub fn prc_curve(labels: &[u8], scores: &[f64]) -> Result<PrcCurve> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    if pos == 0.0 {
        return Err(Error::runtime("precision-recall curve needs at least one positive label"));
    }
    let mut points = vec![(0.0, 1.0)];
    let (mut tp, mut seen) = (0.0, 0.0);
    let mut aps = 0.0;
    let mut last_recall = 0.0;
    for g in tie_groups(scores) {
        for i in g {
            seen += 1.0;
            if labels[i] == 1 {
                tp += 1.0;
            }
        }
        let (recall, precision) = (tp / pos, tp / seen);
        aps += (recall - last_recall) * precision;
        last_recall = recall;
        points.push((recall, precision));
    }
    Ok(PrcCurve { auc: trapezoid(&points), points, aps, no_skill: pos / labels.len() as f64 })
}

/// Kruskal-Wallis H (tie-corrected) and its chi-square p-value.
///
/// # Panics
/// With fewer than two groups or an empty group.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> (f64, f64) {
    assert!(groups.len() >= 2 && groups.iter().all(|g| !g.is_empty()), "need at least two non-empty groups");
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let ranks = midranks(&pooled);
    let correction = 1.0 - tie_term(&pooled) / (n * n * n - n);
    if correction <= 0.0 {
        return (0.0, 1.0);
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0);
    (h, chi2_sf(h, (groups.len() - 1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub algorithm: String,
    pub fold: usize,
    pub metrics: BTreeMap<String, f64>,
    pub counts: ConfusionCounts,
    pub roc_points: Vec<(f64, f64)>,
    pub prc_points: Vec<(f64, f64)>,
    #[serde(default)]
    pub no_skill: f64,
    #[serde(default)]
    pub degenerate: Vec<String>,
}

pub fn evaluate(algorithm: &str, fold: usize, labels: &[u8], scores: &[f64]) -> EvaluationRecord {
    let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
    let t = confusion_and_metrics(labels, &preds);
    let mut degenerate = t.degenerate.clone();
    let mut metrics = BTreeMap::new();
    for (k, v) in [
        ("accuracy", t.accuracy),
        ("balanced_accuracy", t.balanced_accuracy),
        ("f1", t.f1),
        ("recall", t.recall),
        ("specificity", t.specificity),
        ("precision", t.precision),
    ] {
        metrics.insert(k.to_string(), v);
    }
    let roc = roc_curve(labels, scores);
    match roc.auc {
        Some(a) => {
            metrics.insert("roc_auc".into(), a);
        }
        None => degenerate.push("roc_auc".into()),
    }
    let (prc_points, no_skill) = match prc_curve(labels, scores) {
        Ok(p) => {
            metrics.insert("prc_auc".into(), p.auc);
            metrics.insert("aps".into(), p.aps);
            (p.points, p.no_skill)
        }
        Err(_) => {
            degenerate.extend(["prc_auc".to_string(), "aps".to_string()]);
            (Vec::new(), 0.0)
        }
    };
    EvaluationRecord {
        algorithm: algorithm.to_string(),
        fold,
        metrics,
        counts: t.counts,
        roc_points: roc.points,
        prc_points,
        no_skill,
        degenerate,
    }
}

/// Fold values of `metric` per algorithm, algorithms in lexicographic order.
pub fn metric_by_algorithm(records: &[EvaluationRecord], metric: &str) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut sorted: Vec<&EvaluationRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.algorithm.cmp(&b.algorithm).then(a.fold.cmp(&b.fold)));
    for r in sorted {
        if let Some(v) = r.metrics.get(metric) {
            out.entry(r.algorithm.clone()).or_default().push(*v);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub algorithm: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

pub fn summarize(records: &[EvaluationRecord]) -> Vec<MetricSummary> {
    let mut out = Vec::new();
    for metric in METRICS {
        for (algorithm, vals) in metric_by_algorithm(records, metric) {
            out.push(MetricSummary {
                algorithm,
                metric: metric.to_string(),
                mean: crate::stats::mean(&vals),
                std: crate::stats::sample_std(&vals),
            });
        }
    }
    out.sort_by(|a, b| a.algorithm.cmp(&b.algorithm).then(a.metric.cmp(&b.metric)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    /// Rank-sum statistic of `a`.
    pub u_a: f64,
    pub u_min: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub kw_h: f64,
    pub kw_p: f64,
    pub pairs: Vec<PairTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub alpha: f64,
    pub note: String,
    pub comparisons: Vec<MetricComparison>,
}

impl StatReport {
    pub fn metric(&self, name: &str) -> Option<&MetricComparison> {
        self.comparisons.iter().find(|c| c.metric == name)
    }
}

pub fn compare_algorithms(records: &[EvaluationRecord], alpha: f64) -> StatReport {
    let mut comparisons = Vec::new();
    for metric in METRICS {
        let by_alg = metric_by_algorithm(records, metric);
        if by_alg.len() < 2 {
            continue;
        }
        let groups: Vec<Vec<f64>> = by_alg.values().cloned().collect();
        let (kw_h, kw_p) = kruskal_wallis(&groups);
        let mut pairs = Vec::new();
        if kw_p < alpha {
            let names: Vec<&String> = by_alg.keys().collect();
            for i in 0..names.len() {
                for j in i + 1..names.len() {
                    let mw = mann_whitney_u(&by_alg[names[i]], &by_alg[names[j]]);
                    pairs.push(PairTest {
                        a: names[i].clone(),
                        b: names[j].clone(),
                        u_a: mw.u_a,
                        u_min: mw.u_min,
                        p_value: mw.p_value,
                    });
                }
            }
        }
        comparisons.push(MetricComparison { metric: metric.to_string(), kw_h, kw_p, pairs });
    }
    StatReport {
        alpha,
        note: "pairwise Mann-Whitney p-values are not corrected for multiple comparisons".into(),
        comparisons,
    }
}

pub fn write_records_csv(path: &Path, records: &[EvaluationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["algorithm".to_string(), "fold".into()];
    header.extend(METRICS.iter().map(|m| m.to_string()));
    header.extend(["tp", "tn", "fp", "fn"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut rec = vec![r.algorithm.clone(), r.fold.to_string()];
        rec.extend(METRICS.iter().map(|m| r.metrics.get(*m).map(|v| format!("{v}")).unwrap_or_default()));
        rec.extend([r.counts.tp, r.counts.tn, r.counts.fp, r.counts.fn_].map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, summary: &[MetricSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "metric", "mean", "std"])?;
    for s in summary {
        w.write_record([s.algorithm.clone(), s.metric.clone(), format!("{}", s.mean), format!("{}", s.std)])?;
    }
    w.flush()?;
    Ok(())
}

/// One `metric,kw_H,kw_p` row per metric, followed by its `pair,mw_U,mw_p` rows.
pub fn write_statistics_csv(path: &Path, report: &StatReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "kw_H", "kw_p", "pair", "mw_U", "mw_p"])?;
    for c in &report.comparisons {
        w.write_record([c.metric.clone(), format!("{}", c.kw_h), format!("{}", c.kw_p), String::new(), String::new(), String::new()])?;
        for p in &c.pairs {
            w.write_record([
                c.metric.clone(),
                String::new(),
                String::new(),
                format!("{} vs {}", p.a, p.b),
                format!("{}", p.u_min),
                format!("{}", p.p_value),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
