//! Leave-one-out feature importance and composite importance aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FeatureKind;
use crate::error::Result;
use crate::evalstats::balanced_accuracy;
use crate::learners::{fit, LearnerSpec};
use crate::matrix::Matrix;

pub const TOP_N: usize = 20;

pub struct FoldData<'a> {
    pub train_x: &'a Matrix,
    pub train_y: &'a [u8],
    pub test_x: &'a Matrix,
    pub test_y: &'a [u8],
    pub kinds: &'a [FeatureKind],
    pub names: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooScore {
    pub feature: String,
    pub importance: f64,
    /// The refit without this feature failed; importance recorded as 0.
    pub failed: bool,
}

/// Test-fold balanced accuracy lost when each feature is left out and the
/// model refit with the same hyperparameters and seed.
pub fn loo_importance(spec: &LearnerSpec, d: &FoldData, baseline_ba: f64) -> Vec<LooScore> {
    let p = d.names.len();
    crate::par::map_range(p, |f| {
        let keep: Vec<usize> = (0..p).filter(|&j| j != f).collect();
        let reduced_ba = if keep.is_empty() {
            Ok(0.5)
        } else {
            let names: Vec<String> = keep.iter().map(|&j| d.names[j].clone()).collect();
            let kinds: Vec<FeatureKind> = keep.iter().map(|&j| d.kinds[j]).collect();
            fit(spec, &d.train_x.select_cols(&keep), d.train_y, &kinds, &names)
                .and_then(|m| m.predict(&d.test_x.select_cols(&keep)))
                .map(|pred| balanced_accuracy(d.test_y, &pred))
        };
        match reduced_ba {
            Ok(ba) => LooScore { feature: d.names[f].clone(), importance: baseline_ba - ba, failed: false },
            Err(e) => {
                log::warn!("leave-one-out refit without '{}' failed: {e}", d.names[f]);
                LooScore { feature: d.names[f].clone(), importance: 0.0, failed: true }
            }
        }
    })
}

/// One algorithm's importance scores on one fold's retained features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldImportance {
    pub algorithm: String,
    pub fold: usize,
    pub features: Vec<String>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMatrix {
    pub algorithms: Vec<String>,
    pub features: Vec<String>,
    /// `mean_scores[a][f]`; a feature absent from a fold counts 0 there.
    pub mean_scores: Vec<Vec<f64>>,
    pub balanced_accuracy_weights: Vec<f64>,
}

/// Average fold scores over `k` folds. Feature order follows `feature_order`,
/// restricted to features retained in at least one fold.
pub fn build_matrix(
    folds: &[FoldImportance],
    k: usize,
    feature_order: &[String],
    weights: &BTreeMap<String, f64>,
) -> ImportanceMatrix {
    let algorithms: Vec<String> = weights.keys().cloned().collect();
    let features: Vec<String> = feature_order
        .iter()
        .filter(|f| folds.iter().any(|fi| fi.features.contains(f)))
        .cloned()
        .collect();
    let mut mean_scores = vec![vec![0.0; features.len()]; algorithms.len()];
    for fi in folds {
        let Some(a) = algorithms.iter().position(|x| *x == fi.algorithm) else { continue };
        for (name, s) in fi.features.iter().zip(&fi.scores) {
            if let Some(f) = features.iter().position(|x| x == name) {
                mean_scores[a][f] += s / k as f64;
            }
        }
    }
    let balanced_accuracy_weights = algorithms.iter().map(|a| weights[a]).collect();
    ImportanceMatrix { algorithms, features, mean_scores, balanced_accuracy_weights }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfibpBars {
    pub variant: u8,
    pub algorithms: Vec<String>,
    /// Sorted by descending total.
    pub features: Vec<String>,
    pub totals: Vec<f64>,
    /// `contributions[f][a]`.
    pub contributions: Vec<Vec<f64>>,
}

impl CfibpBars {
    pub fn top(&self, n: usize) -> CfibpBars {
        let n = n.min(self.features.len());
        CfibpBars {
            variant: self.variant,
            algorithms: self.algorithms.clone(),
            features: self.features[..n].to_vec(),
            totals: self.totals[..n].to_vec(),
            contributions: self.contributions[..n].to_vec(),
        }
    }

    /// Sum of one algorithm's contributions across all features.
    pub fn algorithm_total(&self, a: usize) -> f64 {
        self.contributions.iter().map(|c| c[a]).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["feature".to_string(), "total_bar".into()];
        header.extend(self.algorithms.iter().cloned());
        w.write_record(&header)?;
        for (i, f) in self.features.iter().enumerate() {
            let mut rec = vec![f.clone(), format!("{}", self.totals[i])];
            rec.extend(self.contributions[i].iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn min_max(row: &[f64]) -> Vec<f64> {
    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        row.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; row.len()]
    }
}

/// Composite bars. Variant 1: min-max normalized scores; 2: additionally
/// divided by their sum; 3: variant 1 weighted by balanced accuracy;
/// 4: variant 2 weighted by balanced accuracy.
///
/// # Panics
/// If `variant` is not in 1..=4.
pub fn cfibp(m: &ImportanceMatrix, variant: u8) -> CfibpBars {
    assert!((1..=4).contains(&variant), "variant must be 1..=4");
    let p = m.features.len();
    let rows: Vec<Vec<f64>> = m
        .mean_scores
        .iter()
        .zip(&m.balanced_accuracy_weights)
        .map(|(row, &ba)| {
            let mut n = min_max(row);
            if variant == 2 || variant == 4 {
                let s: f64 = n.iter().sum();
                if s > 0.0 {
                    for v in &mut n {
                        *v /= s;
                    }
                }
            }
            if variant >= 3 {
                for v in &mut n {
                    *v *= ba;
                }
            }
            n
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    let total = |f: usize| rows.iter().map(|r| r[f]).sum::<f64>();
    let totals_all: Vec<f64> = (0..p).map(total).collect();
    order.sort_by(|&a, &b| totals_all[b].total_cmp(&totals_all[a]).then(a.cmp(&b)));
    CfibpBars {
        variant,
        algorithms: m.algorithms.clone(),
        features: order.iter().map(|&f| m.features[f].clone()).collect(),
        totals: order.iter().map(|&f| totals_all[f]).collect(),
        contributions: order.iter().map(|&f| rows.iter().map(|r| r[f]).collect()).collect(),
    }
}

/// `algorithm,fold,feature,score`
pub fn write_fold_importance_csv(path: &Path, folds: &[FoldImportance]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "fold", "feature", "score"])?;
    for fi in folds {
        for (f, s) in fi.features.iter().zip(&fi.scores) {
            w.write_record([fi.algorithm.clone(), fi.fold.to_string(), f.clone(), format!("{s}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_csv(path: &Path, m: &ImportanceMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["algorithm".to_string(), "ba_weight".into()];
    header.extend(m.features.iter().cloned());
    w.write_record(&header)?;
    for (a, row) in m.mean_scores.iter().enumerate() {
        let mut rec = vec![m.algorithms[a].clone(), format!("{}", m.balanced_accuracy_weights[a])];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
