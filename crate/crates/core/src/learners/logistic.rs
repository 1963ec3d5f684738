//! L2-regularized logistic regression by gradient descent with backtracking.

use serde::{Deserialize, Serialize};

use super::LearnerSpec;
use crate::error::Result;
use crate::matrix::Matrix;

pub const DEFAULT_L2: f64 = 1e-2;
const MAX_ITER: usize = 5000;
const GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.intercept + row.iter().zip(&self.coef).map(|(x, w)| x * w).sum::<f64>())
    }
}

struct Problem<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    lambda: f64,
}

impl Problem<'_> {
    /// Parameters are `[intercept, w...]`.
    fn margins(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.x.rows())
            .map(|r| theta[0] + self.x.row(r).iter().zip(&theta[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        let n = self.x.rows() as f64;
        let data: f64 = self
            .margins(theta)
            .iter()
            .zip(self.y)
            .map(|(&z, &y)| if y == 1 { softplus(-z) } else { softplus(z) })
            .sum();
        data / n + 0.5 * self.lambda * theta[1..].iter().map(|w| w * w).sum::<f64>()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.x.rows() as f64;
        let mut g = vec![0.0; theta.len()];
        for (r, z) in self.margins(theta).into_iter().enumerate() {
            let resid = sigmoid(z) - f64::from(self.y[r]);
            g[0] += resid;
            for (gj, xj) in g[1..].iter_mut().zip(self.x.row(r)) {
                *gj += resid * xj;
            }
        }
        for v in &mut g {
            *v /= n;
        }
        for (gj, w) in g[1..].iter_mut().zip(&theta[1..]) {
            *gj += self.lambda * w;
        }
        g
    }
}

pub fn fit(spec: &LearnerSpec, x: &Matrix, y: &[u8]) -> Result<LogisticModel> {
    let lambda = spec.real("l2_penalty", DEFAULT_L2)?;
    if !(lambda >= 0.0) {
        return Err(crate::Error::config(format!("l2_penalty must be non-negative, got {lambda}")));
    }
    let prob = Problem { x, y, lambda };
    let mut theta = vec![0.0; x.cols() + 1];
    let mut f = prob.loss(&theta);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let g = prob.gradient(&theta);
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < GRAD_TOL {
            break;
        }
        iterations += 1;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        step *= 2.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect();
            let fc = prob.loss(&cand);
            if fc <= f - 0.5 * step * gg {
                theta = cand;
                f = fc;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                iterations = MAX_ITER;
                break;
            }
        }
    }
    Ok(LogisticModel { intercept: theta[0], coef: theta[1..].to_vec(), iterations })
}
