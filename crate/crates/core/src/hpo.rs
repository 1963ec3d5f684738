//! Budgeted random-search hyperparameter optimization with nested CV.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureKind;
use crate::error::{Error, Result};
use crate::evalstats::balanced_accuracy;
use crate::learners::{fit, Algorithm, HyperValue, Hyperparams, LearnerSpec};
use crate::matrix::Matrix;
use crate::partition::{assign_folds, CvStrategy};

pub const LCS_MAX_RULES: i64 = 2000;
pub const LCS_ITERATIONS: i64 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ParamSpec {
    IntRange { lo: i64, hi: i64, log: bool },
    RealRange { lo: f64, hi: f64, log: bool },
    Choice { values: Vec<HyperValue> },
}

impl ParamSpec {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            ParamSpec::IntRange { lo, hi, log } => lo < hi && (!log || *lo > 0),
            ParamSpec::RealRange { lo, hi, log } => lo < hi && (!log || *lo > 0.0),
            ParamSpec::Choice { values } => !values.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid search range for {name}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> HyperValue {
        match self {
            ParamSpec::IntRange { lo, hi, log: false } => HyperValue::Int(rng.random_range(*lo..=*hi)),
            ParamSpec::IntRange { lo, hi, log: true } => {
                let u = rng.random_range((*lo as f64).ln()..(*hi as f64 + 1.0).ln());
                HyperValue::Int((u.exp().floor() as i64).clamp(*lo, *hi))
            }
            ParamSpec::RealRange { lo, hi, log: false } => HyperValue::Real(rng.random_range(*lo..=*hi)),
            ParamSpec::RealRange { lo, hi, log: true } => {
                HyperValue::Real(rng.random_range(lo.ln()..=hi.ln()).exp().clamp(*lo, *hi))
            }
            ParamSpec::Choice { values } => values[rng.random_range(0..values.len())].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: BTreeMap<String, ParamSpec>,
}

impl SearchSpace {
    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

pub fn default_space(algorithm: Algorithm) -> SearchSpace {
    let int = |lo, hi| ParamSpec::IntRange { lo, hi, log: false };
    let mut params = BTreeMap::new();
    match algorithm {
        Algorithm::LR => {
            params.insert("l2_penalty".into(), ParamSpec::RealRange { lo: 1e-5, hi: 1e2, log: true });
        }
        Algorithm::DT => {
            params.insert("max_depth".into(), int(1, 30));
            params.insert("min_samples_split".into(), int(2, 50));
            params.insert("min_samples_leaf".into(), int(1, 20));
        }
        Algorithm::RF => {
            params.insert("n_estimators".into(), int(10, 1000));
            params.insert("max_depth".into(), int(1, 30));
            params.insert("max_features_fraction".into(), ParamSpec::RealRange { lo: 0.05, hi: 1.0, log: false });
            params.insert("min_samples_leaf".into(), int(1, 20));
        }
        Algorithm::NB | Algorithm::LCS => {}
    }
    SearchSpace { params }
}

/// Settings applied to every trial and not searched.
pub fn fixed_params(algorithm: Algorithm) -> Hyperparams {
    let mut h = Hyperparams::new();
    if algorithm == Algorithm::LCS {
        h.insert("max_rules".into(), HyperValue::Int(LCS_MAX_RULES));
        h.insert("iterations".into(), HyperValue::Int(LCS_ITERATIONS));
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub params: Hyperparams,
    pub objective: f64,
    pub inner_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoResult {
    pub best: LearnerSpec,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
}

impl HpoResult {
    /// Best objective seen up to and including each trial.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.trials
            .iter()
            .map(|t| {
                best = best.max(t.objective);
                best
            })
            .collect()
    }
}

pub struct Problem<'a> {
    pub algorithm: Algorithm,
    pub x: &'a Matrix,
    pub y: &'a [u8],
    pub kinds: &'a [FeatureKind],
    pub names: &'a [String],
    /// Match groups of the training rows, when the data has them.
    pub groups: Option<&'a [String]>,
}

#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub trials: usize,
    pub inner_k: usize,
    pub seed: u64,
}

/// Receives the local row indices each inner fit and score reads.
pub type Observer<'a> = &'a (dyn Fn(&str, &[usize]) + Sync);

pub fn optimize(
    problem: &Problem,
    space: &SearchSpace,
    fixed: &Hyperparams,
    budget: Budget,
    observer: Option<Observer>,
) -> Result<HpoResult> {
    if budget.trials == 0 {
        return Err(Error::config("trials must be at least 1"));
    }
    if budget.inner_k < 2 {
        return Err(Error::config("inner_k must be at least 2"));
    }
    for (name, spec) in &space.params {
        spec.validate(name)?;
    }
    let strategy = if problem.groups.is_some() { CvStrategy::Matched } else { CvStrategy::Stratified };
    let inner = assign_folds(problem.y, problem.groups, budget.inner_k, strategy, budget.seed)?;

    let n_trials = if space.is_empty() { 1 } else { budget.trials };
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let sampled: Vec<Hyperparams> = (0..n_trials)
        .map(|_| {
            let mut h = fixed.clone();
            for (name, spec) in &space.params {
                h.insert(name.clone(), spec.sample(&mut rng));
            }
            h
        })
        .collect();

    let evaluate = |params: &Hyperparams| -> Result<Vec<f64>> {
        let spec = LearnerSpec { algorithm: problem.algorithm, hyperparameters: params.clone(), seed: budget.seed };
        (0..budget.inner_k)
            .map(|f| {
                let train: Vec<usize> = (0..inner.len()).filter(|&i| inner[i] != f).collect();
                let valid: Vec<usize> = (0..inner.len()).filter(|&i| inner[i] == f).collect();
                if let Some(obs) = observer {
                    obs("inner_fit", &train);
                    obs("inner_score", &valid);
                }
                let ty: Vec<u8> = train.iter().map(|&i| problem.y[i]).collect();
                let vy: Vec<u8> = valid.iter().map(|&i| problem.y[i]).collect();
                let m = fit(&spec, &problem.x.select_rows(&train), &ty, problem.kinds, problem.names)?;
                Ok(balanced_accuracy(&vy, &m.predict(&problem.x.select_rows(&valid))?))
            })
            .collect()
    };
    let trials: Vec<TrialRecord> = crate::par::map_range(n_trials, |t| {
        let (objective, inner_scores) = match evaluate(&sampled[t]) {
            Ok(scores) => (crate::stats::mean(&scores), scores),
            Err(e) => {
                log::warn!("{} trial {t} failed: {e}", problem.algorithm);
                (f64::NEG_INFINITY, Vec::new())
            }
        };
        TrialRecord { trial_index: t, params: sampled[t].clone(), objective, inner_scores }
    });

    let mut best_trial = None;
    for t in &trials {
        if t.objective > f64::NEG_INFINITY && best_trial.is_none_or(|b: usize| t.objective > trials[b].objective) {
            best_trial = Some(t.trial_index);
        }
    }
    let best_trial = best_trial.ok_or_else(|| Error::runtime(format!("every {} trial failed", problem.algorithm)))?;
    let best = LearnerSpec { algorithm: problem.algorithm, hyperparameters: trials[best_trial].params.clone(), seed: budget.seed };
    Ok(HpoResult { best, best_trial, trials })
}

/// `trial,<params...>,objective,inner_1..inner_k`
pub fn write_trials_csv(path: &Path, result: &HpoResult) -> Result<()> {
    let names: Vec<String> = result.trials.first().map(|t| t.params.keys().cloned().collect()).unwrap_or_default();
    let k = result.trials.iter().map(|t| t.inner_scores.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["trial".to_string()];
    header.extend(names.iter().cloned());
    header.push("objective".into());
    header.extend((1..=k).map(|i| format!("inner_{i}")));
    w.write_record(&header)?;
    for t in &result.trials {
        let mut rec = vec![t.trial_index.to_string()];
        rec.extend(names.iter().map(|n| t.params.get(n).map(|v| v.to_string()).unwrap_or_default()));
        rec.push(format!("{}", t.objective));
        rec.extend((0..k).map(|i| t.inner_scores.get(i).map(|s| format!("{s}")).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
