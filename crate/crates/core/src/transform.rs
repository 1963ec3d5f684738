//! Standard scaling and missing-value imputation.
//!
//! Both are fit on one view and then applied. The pipeline fits the scaler on
//! the training fold only; imputation is refit on each view it completes,
//! except at prediction time where archived training states are reused.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::FeatureKind;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Table};

pub const IMPUTE_MAX_ROUNDS: usize = 10;
pub const IMPUTE_TOLERANCE: f64 = 1e-4;
const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub constant: Vec<bool>,
}

pub fn fit_scaler(t: &Table) -> Result<ScalerState> {
    if t.rows() == 0 {
        return Err(Error::data("cannot fit a scaler on an empty view"));
    }
    let mut means = Vec::with_capacity(t.cols());
    let mut stds = Vec::with_capacity(t.cols());
    for j in 0..t.cols() {
        let obs: Vec<f64> = t.column(j).into_iter().flatten().collect();
        if obs.is_empty() {
            means.push(0.0);
            stds.push(0.0);
            continue;
        }
        let m = crate::stats::mean(&obs);
        // tiny residual spread from rounding must not be amplified into noise
        let sd = crate::stats::pop_std(&obs);
        let sd = if obs.iter().all(|&v| v == obs[0]) { 0.0 } else { sd };
        means.push(m);
        stds.push(sd);
    }
    let constant = stds.iter().map(|&s| s == 0.0).collect();
    Ok(ScalerState { means, stds, constant })
}

impl ScalerState {
    fn check(&self, t: &Table) -> Result<()> {
        if t.cols() != self.means.len() {
            return Err(Error::data(format!(
                "scaler was fit on {} features, view has {}",
                self.means.len(),
                t.cols()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, t: &Table) -> Result<Table> {
        self.check(t)?;
        let mut out = t.clone();
        for r in 0..t.rows() {
            for j in 0..t.cols() {
                if let Some(v) = t.get(r, j) {
                    let s = if self.constant[j] { 0.0 } else { (v - self.means[j]) / self.stds[j] };
                    out.set(r, j, Some(s));
                }
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, t: &Table) -> Result<Table> {
        self.check(t)?;
        let mut out = t.clone();
        for r in 0..t.rows() {
            for j in 0..t.cols() {
                if let Some(v) = t.get(r, j) {
                    out.set(r, j, Some(v * self.stds[j] + self.means[j]));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFill {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Regression was degenerate; the feature mean is used instead.
    #[serde(default)]
    pub mean_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputerState {
    pub features: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    /// Per categorical feature, the most frequent observed value.
    pub modes: BTreeMap<String, f64>,
    /// Per quantitative feature with missingness, coefficients over all
    /// other features in order.
    pub models: BTreeMap<String, LinearFill>,
    pub means: Vec<f64>,
    pub rounds_run: usize,
}

fn mode_of(values: &[f64]) -> Option<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if best.is_none_or(|(_, c)| j - i > c) {
            best = Some((sorted[i], j - i));
        }
        i = j;
    }
    best.map(|b| b.0)
}

/// Least squares of `y` on `x` with an intercept.
fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<LinearFill> {
    let (n, p) = x.shape();
    let mut design = DMatrix::from_element(n, p + 1, 1.0);
    design.view_mut((0, 1), (n, p)).copy_from(x);
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * y;
    let solve = |m: DMatrix<f64>| m.cholesky().map(|c| c.solve(&xty));
    let beta = solve(xtx.clone())
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .or_else(|| {
            let mut ridged = xtx;
            for d in 0..=p {
                ridged[(d, d)] += RIDGE;
            }
            solve(ridged)
        })
        .filter(|b| b.iter().all(|v| v.is_finite()))?;
    Some(LinearFill { intercept: beta[0], coef: beta.iter().skip(1).copied().collect(), mean_fallback: false })
}

impl LinearFill {
    fn predict(&self, row: &[f64], target: usize, mean: f64) -> f64 {
        if self.mean_fallback {
            return mean;
        }
        let mut v = self.intercept;
        let mut c = 0;
        for (j, x) in row.iter().enumerate() {
            if j != target {
                v += self.coef[c] * x;
                c += 1;
            }
        }
        v
    }
}

/// Fit imputation on `t` and return the state together with the completed
/// view. A feature with no observed value borrows its fill from `prior`.
pub fn fit_impute(
    t: &Table,
    names: &[String],
    kinds: &[FeatureKind],
    prior: Option<&ImputerState>,
) -> Result<(ImputerState, Matrix)> {
    let (n, p) = (t.rows(), t.cols());
    if names.len() != p || kinds.len() != p {
        return Err(Error::data("imputer feature metadata does not match the view"));
    }
    let mut modes = BTreeMap::new();
    let mut means = vec![0.0; p];
    let mut missing: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut x = Matrix::zeros(n, p);
    for j in 0..p {
        let col = t.column(j);
        let obs: Vec<f64> = col.iter().flatten().copied().collect();
        let (mean, mode) = if obs.is_empty() {
            let pr = prior.ok_or_else(|| Error::data(format!("feature '{}' has no observed values", names[j])))?;
            log::warn!("feature '{}' has no observed values in this view; using archived fill", names[j]);
            let pj = pr.features.iter().position(|f| f == &names[j]).ok_or_else(|| {
                Error::data(format!("feature '{}' absent from archived imputer", names[j]))
            })?;
            (pr.means[pj], pr.modes.get(&names[j]).copied().unwrap_or(pr.means[pj]))
        } else {
            (crate::stats::mean(&obs), mode_of(&obs).unwrap_or(0.0))
        };
        means[j] = mean;
        if kinds[j] == FeatureKind::Categorical {
            modes.insert(names[j].clone(), mode);
        }
        let fill = if kinds[j] == FeatureKind::Categorical { mode } else { mean };
        for (r, v) in col.iter().enumerate() {
            match v {
                Some(v) => x.set(r, j, *v),
                None => {
                    x.set(r, j, fill);
                    missing[j].push(r);
                }
            }
        }
    }

    let mut targets: Vec<usize> =
        (0..p).filter(|&j| kinds[j] == FeatureKind::Quantitative && !missing[j].is_empty()).collect();
    targets.sort_by_key(|&j| (missing[j].len(), j));
    let mut models = BTreeMap::new();
    let mut rounds_run = 0;
    if !targets.is_empty() {
        for _ in 0..IMPUTE_MAX_ROUNDS {
            rounds_run += 1;
            let mut max_change: f64 = 0.0;
            for &j in &targets {
                let observed: Vec<usize> = (0..n).filter(|r| t.get(*r, j).is_some()).collect();
                let fill = if p == 1 || observed.len() < 2 {
                    None
                } else {
                    let others: Vec<usize> = (0..p).filter(|&c| c != j).collect();
                    let xm = DMatrix::from_fn(observed.len(), others.len(), |a, b| x.get(observed[a], others[b]));
                    let ym = DVector::from_fn(observed.len(), |a, _| x.get(observed[a], j));
                    ols(&xm, &ym)
                };
                let fill = fill.unwrap_or_else(|| {
                    log::warn!("imputation regression for '{}' is degenerate; using mean fill", names[j]);
                    LinearFill { coef: vec![0.0; p.saturating_sub(1)], intercept: means[j], mean_fallback: true }
                });
                for &r in &missing[j] {
                    let v = fill.predict(x.row(r), j, means[j]);
                    max_change = max_change.max((v - x.get(r, j)).abs());
                    x.set(r, j, v);
                }
                models.insert(names[j].clone(), fill);
            }
            if max_change < IMPUTE_TOLERANCE {
                break;
            }
        }
    }
    let state = ImputerState { features: names.to_vec(), kinds: kinds.to_vec(), modes, models, means, rounds_run };
    Ok((state, x))
}

impl ImputerState {
    /// Complete a view with the archived fills, no refitting.
    pub fn apply(&self, t: &Table) -> Result<Matrix> {
        let (n, p) = (t.rows(), t.cols());
        if p != self.features.len() {
            return Err(Error::data(format!(
                "imputer was fit on {} features, view has {}",
                self.features.len(),
                p
            )));
        }
        let mut x = Matrix::zeros(n, p);
        let mut missing = Vec::new();
        for r in 0..n {
            for j in 0..p {
                match t.get(r, j) {
                    Some(v) => x.set(r, j, v),
                    None => {
                        let fill = match self.kinds[j] {
                            FeatureKind::Categorical => self.modes.get(&self.features[j]).copied().unwrap_or(self.means[j]),
                            FeatureKind::Quantitative => self.means[j],
                        };
                        x.set(r, j, fill);
                        if self.models.contains_key(&self.features[j]) {
                            missing.push((r, j));
                        }
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..p).filter(|j| self.models.contains_key(&self.features[*j])).collect();
        order.sort_by_key(|&j| (missing.iter().filter(|m| m.1 == j).count(), j));
        for _ in 0..self.rounds_run.max(1) {
            let mut max_change: f64 = 0.0;
            for &j in &order {
                let model = &self.models[&self.features[j]];
                for &(r, _) in missing.iter().filter(|m| m.1 == j) {
                    let v = model.predict(x.row(r), j, self.means[j]);
                    max_change = max_change.max((v - x.get(r, j)).abs());
                    x.set(r, j, v);
                }
            }
            if max_change < IMPUTE_TOLERANCE {
                break;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col_table(cols: &[Vec<Option<f64>>]) -> Table {
        let n = cols[0].len();
        let rows: Vec<Vec<Option<f64>>> = (0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
        Table::from_rows(&rows)
    }

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("f{j}")).collect()
    }

    #[test]
    fn scaler_examples() {
        let t = col_table(&[vec![Some(2.0); 3], vec![Some(0.0), Some(10.0), None]]);
        let s = fit_scaler(&t).unwrap();
        assert_eq!((s.means[0], s.stds[0], s.constant[0]), (2.0, 0.0, true));
        assert_eq!((s.means[1], s.stds[1]), (5.0, 5.0));
        let a = s.apply(&t).unwrap();
        assert_eq!(a.get(0, 0), Some(0.0));
        assert_eq!(a.get(1, 1), Some(1.0));
        assert_eq!(a.get(2, 1), None);
    }

    #[test]
    fn scaled_training_data_is_standardized_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = col_table(&[
            (0..200).map(|_| Some(rng.random_range(-3.0..40.0))).collect(),
            (0..200).map(|i| if i % 7 == 0 { None } else { Some(rng.random_range(0..3) as f64) }).collect(),
        ]);
        let s = fit_scaler(&t).unwrap();
        let a = s.apply(&t).unwrap();
        for j in 0..2 {
            let obs: Vec<f64> = a.column(j).into_iter().flatten().collect();
            assert!(crate::stats::mean(&obs).abs() < 1e-9);
            assert_abs_diff_eq!(crate::stats::pop_std(&obs), 1.0, epsilon = 1e-9);
        }
        let back = s.inverse(&a).unwrap();
        for r in 0..200 {
            for j in 0..2 {
                match (t.get(r, j), back.get(r, j)) {
                    (Some(x), Some(y)) => assert_abs_diff_eq!(x, y, epsilon = 1e-9),
                    (None, None) => {}
                    _ => panic!("missingness changed"),
                }
            }
        }
    }

    #[test]
    fn test_view_uses_training_statistics() {
        let train = col_table(&[(0..50).map(|i| Some(i as f64)).collect()]);
        let test = col_table(&[(0..20).map(|i| Some(100.0 + i as f64)).collect()]);
        let s = fit_scaler(&train).unwrap();
        let scaled = s.apply(&test).unwrap();
        let obs: Vec<f64> = scaled.column(0).into_iter().flatten().collect();
        assert!(crate::stats::mean(&obs) > 1.0);
        assert!(s.apply(&col_table(&[vec![Some(1.0)], vec![Some(1.0)]])).is_err());
    }

    #[test]
    fn mode_fill_prefers_lowest_on_ties() {
        let t = col_table(&[vec![Some(0.0), Some(0.0), Some(1.0), None]]);
        let (_, x) = fit_impute(&t, &names(1), &[FeatureKind::Categorical], None).unwrap();
        assert_eq!(x.get(3, 0), 0.0);
        let t = col_table(&[vec![Some(2.0), Some(1.0), None, Some(2.0), Some(1.0)]]);
        let (st, x) = fit_impute(&t, &names(1), &[FeatureKind::Categorical], None).unwrap();
        assert_eq!(x.get(2, 0), 1.0);
        assert_eq!(st.modes["f0"], 1.0);
    }

    #[test]
    fn exact_linear_relation_is_recovered() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let y: Vec<Option<f64>> = xs.iter().enumerate().map(|(i, x)| if i % 5 == 0 { None } else { Some(2.0 * x) }).collect();
        let t = col_table(&[xs.iter().map(|&v| Some(v)).collect(), y]);
        let kinds = [FeatureKind::Quantitative; 2];
        let (state, m) = fit_impute(&t, &names(2), &kinds, None).unwrap();
        for i in (0..40).step_by(5) {
            assert_abs_diff_eq!(m.get(i, 1), 2.0 * xs[i], epsilon = 1e-6);
        }
        assert!(state.models.contains_key("f1"));
        let replay = state.apply(&t).unwrap();
        for i in (0..40).step_by(5) {
            assert_abs_diff_eq!(replay.get(i, 1), 2.0 * xs[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn complete_view_is_unchanged() {
        let t = col_table(&[vec![Some(1.5), Some(-2.0)], vec![Some(0.0), Some(1.0)]]);
        let (state, m) =
            fit_impute(&t, &names(2), &[FeatureKind::Quantitative, FeatureKind::Categorical], None).unwrap();
        assert_eq!(m, t.to_complete().unwrap());
        assert_eq!(state.rounds_run, 0);
    }

    #[test]
    fn imputation_fills_everything_without_new_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cols: Vec<Vec<Option<f64>>> = (0..4)
            .map(|j| {
                (0..120)
                    .map(|_| {
                        if rng.random::<f64>() < 0.2 {
                            None
                        } else if j < 2 {
                            Some(rng.random_range(0..3) as f64)
                        } else {
                            Some(rng.random::<f64>())
                        }
                    })
                    .collect()
            })
            .collect();
        let t = col_table(&cols);
        let kinds = [FeatureKind::Categorical, FeatureKind::Categorical, FeatureKind::Quantitative, FeatureKind::Quantitative];
        let (_, m) = fit_impute(&t, &names(4), &kinds, None).unwrap();
        assert!(m.is_finite());
        for j in 0..2 {
            let levels: std::collections::BTreeSet<u64> = cols[j].iter().flatten().map(|v| v.to_bits()).collect();
            assert!(m.column(j).iter().all(|v| levels.contains(&v.to_bits())));
        }
    }

    #[test]
    fn all_missing_column_needs_a_prior() {
        let t = col_table(&[vec![Some(1.0), Some(2.0)], vec![None, None]]);
        let kinds = [FeatureKind::Quantitative, FeatureKind::Categorical];
        assert!(fit_impute(&t, &names(2), &kinds, None).is_err());
        let full = col_table(&[vec![Some(1.0), Some(2.0)], vec![Some(1.0), Some(1.0)]]);
        let (prior, _) = fit_impute(&full, &names(2), &kinds, None).unwrap();
        let (_, m) = fit_impute(&t, &names(2), &kinds, Some(&prior)).unwrap();
        assert_eq!(m.column(1), vec![1.0, 1.0]);
    }
}
