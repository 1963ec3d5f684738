//! Learner contract and the five classifiers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::FeatureKind;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub mod bayes;
pub mod lcs;
pub mod logistic;
pub mod tree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    LR,
    NB,
    DT,
    RF,
    LCS,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::LR, Algorithm::NB, Algorithm::DT, Algorithm::RF, Algorithm::LCS];

    pub fn has_native_importance(self) -> bool {
        matches!(self, Algorithm::DT | Algorithm::RF | Algorithm::LCS)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LR" => Ok(Algorithm::LR),
            "NB" => Ok(Algorithm::NB),
            "DT" => Ok(Algorithm::DT),
            "RF" => Ok(Algorithm::RF),
            "LCS" => Ok(Algorithm::LCS),
            other => Err(Error::config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Int(i64),
    Real(f64),
    Text(String),
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Int(v) => write!(f, "{v}"),
            HyperValue::Real(v) => write!(f, "{v}"),
            HyperValue::Text(v) => f.write_str(v),
        }
    }
}

pub type Hyperparams = BTreeMap<String, HyperValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub algorithm: Algorithm,
    pub hyperparameters: Hyperparams,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        LearnerSpec { algorithm, hyperparameters: Hyperparams::new(), seed }
    }

    pub fn with(mut self, name: &str, value: HyperValue) -> Self {
        self.hyperparameters.insert(name.to_string(), value);
        self
    }

    pub fn int(&self, name: &str, default: i64) -> Result<i64> {
        match self.hyperparameters.get(name) {
            None => Ok(default),
            Some(HyperValue::Int(v)) => Ok(*v),
            Some(HyperValue::Real(v)) if v.fract() == 0.0 => Ok(*v as i64),
            Some(other) => Err(Error::config(format!("hyperparameter {name} must be an integer, got {other}"))),
        }
    }

    pub fn real(&self, name: &str, default: f64) -> Result<f64> {
        match self.hyperparameters.get(name) {
            None => Ok(default),
            Some(HyperValue::Int(v)) => Ok(*v as f64),
            Some(HyperValue::Real(v)) => Ok(*v),
            Some(other) => Err(Error::config(format!("hyperparameter {name} must be numeric, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Logistic(logistic::LogisticModel),
    Bayes(bayes::BayesModel),
    Tree(tree::Tree),
    Forest(tree::Forest),
    Lcs(lcs::LcsModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: LearnerSpec,
    pub feature_names: Vec<String>,
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_importance: Option<Vec<f64>>,
}

/// Normalize to unit sum; an all-zero vector stays zero.
pub(crate) fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
}

pub fn fit(spec: &LearnerSpec, x: &Matrix, y: &[u8], kinds: &[FeatureKind], feature_names: &[String]) -> Result<TrainedModel> {
    if x.rows() != y.len() {
        return Err(Error::data(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if x.cols() != kinds.len() || x.cols() != feature_names.len() {
        return Err(Error::data("feature metadata does not match the training matrix"));
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::data("training labels contain a single class"));
    }
    if !x.is_finite() {
        return Err(Error::data("training matrix contains non-finite values"));
    }
    let (payload, native_importance) = match spec.algorithm {
        Algorithm::LR => (Payload::Logistic(logistic::fit(spec, x, y)?), None),
        Algorithm::NB => (Payload::Bayes(bayes::fit(x, y, kinds)), None),
        Algorithm::DT => {
            let t = tree::fit_tree(spec, x, y, kinds)?;
            let imp = t.importance.clone();
            (Payload::Tree(t), Some(imp))
        }
        Algorithm::RF => {
            let f = tree::fit_forest(spec, x, y, kinds)?;
            let imp = f.importance.clone();
            (Payload::Forest(f), Some(imp))
        }
        Algorithm::LCS => {
            let m = lcs::fit(spec, x, y, kinds)?;
            let imp = m.importance(x.cols());
            (Payload::Lcs(m), Some(imp))
        }
    };
    Ok(TrainedModel { spec: spec.clone(), feature_names: feature_names.to_vec(), payload, native_importance })
}

impl TrainedModel {
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.feature_names.len() {
            return Err(Error::data(format!(
                "model expects {} features, matrix has {}",
                self.feature_names.len(),
                x.cols()
            )));
        }
        let rows = 0..x.rows();
        Ok(match &self.payload {
            Payload::Logistic(m) => rows.map(|r| m.predict_row(x.row(r))).collect(),
            Payload::Bayes(m) => rows.map(|r| m.predict_row(x.row(r))).collect(),
            Payload::Tree(t) => rows.map(|r| t.predict_row(x.row(r))).collect(),
            Payload::Forest(f) => rows.map(|r| f.predict_row(x.row(r))).collect(),
            Payload::Lcs(m) => {
                let (scores, misses) = m.predict(x);
                if misses > 0 {
                    log::debug!("{misses} of {} instances matched no rule", x.rows());
                }
                scores
            }
        })
    }

    /// Class 1 when the score is at least 0.5.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(self.predict_proba(x)?.into_iter().map(|s| u8::from(s >= 0.5)).collect())
    }

    /// Number of distinct rules, for LCS models.
    pub fn rule_count(&self) -> Option<usize> {
        match &self.payload {
            Payload::Lcs(m) => Some(m.rules.len()),
            _ => None,
        }
    }
}
