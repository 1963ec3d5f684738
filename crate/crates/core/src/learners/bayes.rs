//! Naive Bayes with Laplace-smoothed categorical likelihoods and Gaussian
//! quantitative likelihoods.

use serde::{Deserialize, Serialize};

use crate::data::FeatureKind;
use crate::matrix::Matrix;

const ALPHA: f64 = 1.0;
const VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Likelihood {
    /// Observed values with per-class counts.
    Categorical { values: Vec<f64>, counts: Vec<[u64; 2]> },
    Gaussian { mean: [f64; 2], var: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesModel {
    pub class_counts: [u64; 2],
    pub features: Vec<Likelihood>,
}

pub fn fit(x: &Matrix, y: &[u8], kinds: &[FeatureKind]) -> BayesModel {
    let mut class_counts = [0u64; 2];
    for &c in y {
        class_counts[c as usize] += 1;
    }
    let features = (0..x.cols())
        .map(|j| {
            let col = x.column(j);
            match kinds[j] {
                FeatureKind::Categorical => {
                    let mut values = col.clone();
                    values.sort_by(f64::total_cmp);
                    values.dedup();
                    let mut counts = vec![[0u64; 2]; values.len()];
                    for (v, &c) in col.iter().zip(y) {
                        let k = values.partition_point(|u| u < v);
                        counts[k][c as usize] += 1;
                    }
                    Likelihood::Categorical { values, counts }
                }
                FeatureKind::Quantitative => {
                    let mut mean = [0.0; 2];
                    let mut var = [0.0; 2];
                    for c in 0..2 {
                        let vals: Vec<f64> = col.iter().zip(y).filter(|(_, &l)| l as usize == c).map(|(v, _)| *v).collect();
                        mean[c] = crate::stats::mean(&vals);
                        var[c] = (crate::stats::pop_std(&vals).powi(2)).max(VAR_FLOOR);
                    }
                    Likelihood::Gaussian { mean, var }
                }
            }
        })
        .collect();
    BayesModel { class_counts, features }
}

impl BayesModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let n = (self.class_counts[0] + self.class_counts[1]) as f64;
        let mut log_odds = (self.class_counts[1] as f64 / n).ln() - (self.class_counts[0] as f64 / n).ln();
        for (lik, &v) in self.features.iter().zip(row) {
            log_odds += match lik {
                Likelihood::Categorical { values, counts } => {
                    let levels = values.len() as f64;
                    let c = match values.binary_search_by(|u| u.total_cmp(&v)) {
                        Ok(k) => counts[k],
                        Err(_) => [0, 0],
                    };
                    let p = |k: usize| (c[k] as f64 + ALPHA) / (self.class_counts[k] as f64 + ALPHA * levels);
                    p(1).ln() - p(0).ln()
                }
                Likelihood::Gaussian { mean, var } => {
                    let ll = |k: usize| -0.5 * (2.0 * std::f64::consts::PI * var[k]).ln() - (v - mean[k]).powi(2) / (2.0 * var[k]);
                    ll(1) - ll(0)
                }
            };
        }
        1.0 / (1.0 + (-log_odds).exp())
    }
}
