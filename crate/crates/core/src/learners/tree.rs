//! CART classification trees (Gini) and bagged random forests.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normalize, LearnerSpec};
use crate::data::FeatureKind;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const LEAF: u32 = u32::MAX;

/// One node. Leaves have `f == LEAF`; splits send `x <= t` (or `x == t` for
/// categorical `eq` splits) to `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub f: u32,
    pub t: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub eq: bool,
    pub l: u32,
    pub r: u32,
    /// Class-1 proportion of the training rows reaching this node.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub importance: Vec<f64>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0usize;
        loop {
            let n = &self.nodes[k];
            if n.f == LEAF {
                return n.p;
            }
            let v = row[n.f as usize];
            let left = if n.eq { v == n.t } else { v <= n.t };
            k = if left { n.l } else { n.r } as usize;
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], k: usize) -> usize {
            let n = &nodes[k];
            if n.f == LEAF {
                0
            } else {
                1 + go(nodes, n.l as usize).max(go(nodes, n.r as usize))
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub importance: Vec<f64>,
}

impl Forest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

/// Sorted distinct values per feature and each row's index into them.
pub struct Binned {
    values: Vec<Vec<f64>>,
    bins: Vec<Vec<u32>>,
    categorical: Vec<bool>,
}

impl Binned {
    pub fn new(x: &Matrix, kinds: &[FeatureKind]) -> Self {
        let mut values = Vec::with_capacity(x.cols());
        let mut bins = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let col = x.column(j);
            let mut v = col.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            bins.push(col.iter().map(|c| v.partition_point(|u| u < c) as u32).collect());
            values.push(v);
        }
        Binned { values, bins, categorical: kinds.iter().map(|k| *k == FeatureKind::Categorical).collect() }
    }
}

struct Candidate {
    impurity: f64,
    feature: usize,
    threshold: f64,
    eq: bool,
    /// bin boundary: rows with bin <= this go left, or bin == this for eq
    bin: u32,
}

fn gini_sum(c0: u64, c1: u64) -> f64 {
    let n = (c0 + c1) as f64;
    if n == 0.0 {
        0.0
    } else {
        n - ((c0 * c0 + c1 * c1) as f64) / n
    }
}

struct Builder<'a> {
    b: &'a Binned,
    y: &'a [u8],
    params: TreeParams,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    n_total: f64,
    /// per-split feature subsample size; None = all features
    mtry: Option<usize>,
    rng: Option<ChaCha8Rng>,
    hist: Vec<[u64; 2]>,
}

impl Builder<'_> {
    fn best_split(&mut self, rows: &[usize], c: [u64; 2]) -> Option<Candidate> {
        let p = self.b.values.len();
        let features: Vec<usize> = match (self.mtry, self.rng.as_mut()) {
            (Some(m), Some(rng)) if m < p => {
                let mut f = sample(rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let n = rows.len() as u64;
        let min_leaf = self.params.min_samples_leaf as u64;
        let mut best: Option<Candidate> = None;
        for j in features {
            let nb = self.b.values[j].len();
            if nb < 2 {
                continue;
            }
            let bins = &self.b.bins[j];
            let hist = &mut self.hist;
            hist.clear();
            let sparse = !self.b.categorical[j] && nb > 4 * rows.len();
            // (bin, counts) pairs in ascending bin order
            let groups: Vec<(usize, [u64; 2])> = if sparse {
                let mut pairs: Vec<(u32, u8)> = rows.iter().map(|&r| (bins[r], self.y[r])).collect();
                pairs.sort_unstable();
                let mut g: Vec<(usize, [u64; 2])> = Vec::new();
                for (b, y) in pairs {
                    match g.last_mut() {
                        Some((lb, c)) if *lb == b as usize => c[y as usize] += 1,
                        _ => {
                            let mut c = [0u64; 2];
                            c[y as usize] = 1;
                            g.push((b as usize, c));
                        }
                    }
                }
                g
            } else {
                hist.resize(nb, [0, 0]);
                for &r in rows {
                    hist[bins[r] as usize][self.y[r] as usize] += 1;
                }
                hist.iter().enumerate().filter(|(_, h)| h[0] + h[1] > 0).map(|(k, h)| (k, *h)).collect()
            };
            let consider = |imp: f64, threshold: f64, eq: bool, bin: u32, best: &mut Option<Candidate>| {
                if best.as_ref().is_none_or(|b| imp < b.impurity - 1e-12) {
                    *best = Some(Candidate { impurity: imp, feature: j, threshold, eq, bin });
                }
            };
            if self.b.categorical[j] {
                for &(k, h) in &groups {
                    let nl = h[0] + h[1];
                    if nl == n || nl < min_leaf || n - nl < min_leaf {
                        continue;
                    }
                    let imp = gini_sum(h[0], h[1]) + gini_sum(c[0] - h[0], c[1] - h[1]);
                    consider(imp, self.b.values[j][k], true, k as u32, &mut best);
                }
            } else {
                let mut left = [0u64; 2];
                let mut prev: Option<usize> = None;
                for &(k, h) in &groups {
                    if let Some(pk) = prev {
                        let nl = left[0] + left[1];
                        if nl >= min_leaf && n - nl >= min_leaf {
                            let imp = gini_sum(left[0], left[1]) + gini_sum(c[0] - left[0], c[1] - left[1]);
                            let t = 0.5 * (self.b.values[j][pk] + self.b.values[j][k]);
                            consider(imp, t, false, pk as u32, &mut best);
                        }
                    }
                    left[0] += h[0];
                    left[1] += h[1];
                    prev = Some(k);
                }
            }
        }
        best
    }

    fn leaf(&mut self, c: [u64; 2]) -> u32 {
        self.nodes.push(Node { f: LEAF, t: 0.0, eq: false, l: 0, r: 0, p: c[1] as f64 / (c[0] + c[1]) as f64 });
        (self.nodes.len() - 1) as u32
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> u32 {
        let mut c = [0u64; 2];
        for &r in &rows {
            c[self.y[r] as usize] += 1;
        }
        let n = rows.len();
        if depth >= self.params.max_depth || n < self.params.min_samples_split || c[0] == 0 || c[1] == 0 {
            return self.leaf(c);
        }
        let Some(split) = self.best_split(&rows, c) else {
            return self.leaf(c);
        };
        let bins = &self.b.bins[split.feature];
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| {
            if split.eq {
                bins[r] == split.bin
            } else {
                bins[r] <= split.bin
            }
        });
        drop(rows);
        self.importance[split.feature] += (gini_sum(c[0], c[1]) - split.impurity) / self.n_total;
        let id = self.nodes.len();
        self.nodes.push(Node {
            f: split.feature as u32,
            t: split.threshold,
            eq: split.eq,
            l: 0,
            r: 0,
            p: c[1] as f64 / n as f64,
        });
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id].l = l;
        self.nodes[id].r = r;
        id as u32
    }
}

fn grow(b: &Binned, y: &[u8], rows: Vec<usize>, params: TreeParams, mtry: Option<usize>, rng: Option<ChaCha8Rng>) -> Tree {
    let p = b.values.len();
    let mut builder = Builder {
        b,
        y,
        params,
        nodes: Vec::new(),
        importance: vec![0.0; p],
        n_total: rows.len() as f64,
        mtry,
        rng,
        hist: Vec::new(),
    };
    builder.build(rows, 0);
    let mut importance = builder.importance;
    for v in &mut importance {
        *v = v.max(0.0);
    }
    normalize(&mut importance);
    Tree { nodes: builder.nodes, importance }
}

fn tree_params(spec: &LearnerSpec) -> Result<TreeParams> {
    let max_depth = spec.int("max_depth", 30)?;
    let min_samples_split = spec.int("min_samples_split", 2)?;
    let min_samples_leaf = spec.int("min_samples_leaf", 1)?;
    if max_depth < 1 || min_samples_split < 2 || min_samples_leaf < 1 {
        return Err(Error::config("tree hyperparameters out of range"));
    }
    Ok(TreeParams {
        max_depth: max_depth as usize,
        min_samples_split: min_samples_split as usize,
        min_samples_leaf: min_samples_leaf as usize,
    })
}

pub fn fit_tree(spec: &LearnerSpec, x: &Matrix, y: &[u8], kinds: &[FeatureKind]) -> Result<Tree> {
    let params = tree_params(spec)?;
    let b = Binned::new(x, kinds);
    Ok(grow(&b, y, (0..x.rows()).collect(), params, None, None))
}

pub fn fit_forest(spec: &LearnerSpec, x: &Matrix, y: &[u8], kinds: &[FeatureKind]) -> Result<Forest> {
    let params = tree_params(spec)?;
    let n_trees = spec.int("n_estimators", 100)?;
    let p = x.cols();
    let default_frac = if p == 0 { 1.0 } else { (p as f64).sqrt() / p as f64 };
    let frac = spec.real("max_features_fraction", default_frac)?;
    if n_trees < 1 || !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::config("forest hyperparameters out of range"));
    }
    let mtry = ((frac * p as f64).round() as usize).clamp(1, p.max(1));
    let b = Binned::new(x, kinds);
    let n = x.rows();
    let trees = crate::par::map_range(n_trees as usize, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ t as u64);
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        grow(&b, y, rows, params, Some(mtry), Some(rng))
    });
    let mut importance = vec![0.0; p];
    for t in &trees {
        for (acc, v) in importance.iter_mut().zip(&t.importance) {
            *acc += v;
        }
    }
    normalize(&mut importance);
    Ok(Forest { trees, importance })
}
