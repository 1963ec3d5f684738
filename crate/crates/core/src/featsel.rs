//! Feature scoring (mutual information, MultiSURF) and collective selection.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureKind;
use crate::error::Result;
use crate::matrix::Matrix;
use crate::stats::midranks;

pub const MI_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreMethod {
    MutualInformation,
    MultiSurf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScores {
    pub method: ScoreMethod,
    pub scores: Vec<f64>,
    pub instances_used: usize,
    pub seed: Option<u64>,
}

/// Plug-in MI (nats) of a contingency table, rows = feature values,
/// columns = classes.
pub fn mi_from_counts(table: &[Vec<u64>]) -> f64 {
    let n: u64 = table.iter().flatten().sum();
    if n == 0 {
        return 0.0;
    }
    let cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let col_tot: Vec<u64> = (0..cols).map(|c| table.iter().map(|r| r.get(c).copied().unwrap_or(0)).sum()).collect();
    let mut mi = 0.0;
    for row in table {
        let row_tot: u64 = row.iter().sum();
        for (c, &nxy) in row.iter().enumerate() {
            if nxy == 0 {
                continue;
            }
            let ratio = (nxy as f64 * n as f64) / (row_tot as f64 * col_tot[c] as f64);
            mi += nxy as f64 / n as f64 * ratio.ln();
        }
    }
    mi
}

/// Equal-frequency bin index per value, at most `bins` bins.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..bins).map(|b| sorted[b * n / bins]).collect();
    edges.dedup();
    values.iter().map(|&v| edges.partition_point(|&e| e <= v)).collect()
}

fn categories(values: &[f64]) -> Vec<usize> {
    let mut index: BTreeMap<u64, usize> = BTreeMap::new();
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for (i, v) in sorted.iter().enumerate() {
        index.insert(v.to_bits(), i);
    }
    values.iter().map(|v| index[&v.to_bits()]).collect()
}

pub fn mutual_information(x: &Matrix, y: &[u8], kinds: &[FeatureKind]) -> FeatureScores {
    let scores = crate::par::map_range(x.cols(), |j| {
        let col = x.column(j);
        let cells = match kinds[j] {
            FeatureKind::Categorical => categories(&col),
            FeatureKind::Quantitative => equal_frequency_bins(&col, MI_BINS),
        };
        let levels = cells.iter().max().map_or(0, |m| m + 1);
        let mut table = vec![vec![0u64; 2]; levels];
        for (c, &label) in cells.iter().zip(y) {
            table[*c][label as usize] += 1;
        }
        mi_from_counts(&table)
    });
    FeatureScores { method: ScoreMethod::MutualInformation, scores, instances_used: x.rows(), seed: None }
}

/// MultiSURF with range-normalized Manhattan distance and near neighbors
/// only. Scores on a seeded subsample when the view exceeds `instance_cap`.
pub fn multisurf(x: &Matrix, y: &[u8], kinds: &[FeatureKind], instance_cap: usize, seed: u64) -> FeatureScores {
    let (n, p) = (x.rows(), x.cols());
    let rows: Vec<usize> = if n > instance_cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, instance_cap).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let m = rows.len();
    let scale: Vec<Option<f64>> = (0..p)
        .map(|j| match kinds[j] {
            FeatureKind::Categorical => None,
            FeatureKind::Quantitative => {
                let col = x.column(j);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some(hi - lo)
            }
        })
        .collect();
    let diff = |a: usize, b: usize, j: usize| -> f64 {
        let (va, vb) = (x.get(a, j), x.get(b, j));
        match scale[j] {
            None => f64::from(u8::from(va != vb)),
            Some(r) if r > 0.0 => (va - vb).abs() / r,
            Some(_) => 0.0,
        }
    };
    let per_target: Vec<Vec<f64>> = crate::par::map_range(m, |ti| {
        let i = rows[ti];
        let mut contrib = vec![0.0; p];
        if m < 2 {
            return contrib;
        }
        let others: Vec<usize> = rows.iter().copied().filter(|&r| r != i).collect();
        let dist: Vec<f64> = others.iter().map(|&o| (0..p).map(|j| diff(i, o, j)).sum()).collect();
        let t = crate::stats::mean(&dist);
        let d = crate::stats::pop_std(&dist);
        let threshold = t - d / 2.0;
        for (&o, &dv) in others.iter().zip(&dist) {
            if dv < threshold {
                let sign = if y[o] == y[i] { -1.0 } else { 1.0 };
                for (j, c) in contrib.iter_mut().enumerate() {
                    *c += sign * diff(i, o, j);
                }
            }
        }
        contrib
    });
    let mut scores = vec![0.0; p];
    for v in &per_target {
        for (s, c) in scores.iter_mut().zip(v) {
            *s += c;
        }
    }
    if m > 0 {
        for s in &mut scores {
            *s /= m as f64;
        }
    }
    FeatureScores { method: ScoreMethod::MultiSurf, scores, instances_used: m, seed: Some(seed) }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub retained: Vec<String>,
    pub dropped: Vec<String>,
    pub cap_applied: bool,
}

impl SelectionResult {
    /// Column indices of the retained features within `names`.
    pub fn retained_indices(&self, names: &[String]) -> Vec<usize> {
        self.retained.iter().filter_map(|r| names.iter().position(|n| n == r)).collect()
    }
}

/// Order `candidates` best first by the larger of their two rank-normalized
/// scores; ties go to the higher MultiSURF score, then feature order.
fn rank_candidates(candidates: &[usize], mi: &[f64], ms: &[f64]) -> Vec<usize> {
    let c = candidates.len() as f64;
    let r_mi = midranks(&candidates.iter().map(|&j| mi[j]).collect::<Vec<_>>());
    let r_ms = midranks(&candidates.iter().map(|&j| ms[j]).collect::<Vec<_>>());
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let key = |k: usize| (r_mi[k] / c).max(r_ms[k] / c);
    order.sort_by(|&a, &b| {
        key(b)
            .total_cmp(&key(a))
            .then(ms[candidates[b]].total_cmp(&ms[candidates[a]]))
            .then(candidates[a].cmp(&candidates[b]))
    });
    order.into_iter().map(|k| candidates[k]).collect()
}

pub fn collective_select(names: &[String], mi: &FeatureScores, ms: &FeatureScores, max_features: usize) -> SelectionResult {
    let p = names.len();
    assert!(mi.scores.len() == p && ms.scores.len() == p, "score vectors must cover every feature");
    let mut keep: Vec<usize> = (0..p).filter(|&j| mi.scores[j] > 0.0 || ms.scores[j] > 0.0).collect();
    let mut cap_applied = false;
    if keep.len() > max_features.max(1) {
        let mut ranked = rank_candidates(&keep, &mi.scores, &ms.scores);
        ranked.truncate(max_features.max(1));
        ranked.sort_unstable();
        keep = ranked;
        cap_applied = true;
    }
    if keep.is_empty() && p > 0 {
        let all: Vec<usize> = (0..p).collect();
        let best = rank_candidates(&all, &mi.scores, &ms.scores)[0];
        log::warn!("no feature scored above zero; keeping '{}'", names[best]);
        keep.push(best);
    }
    SelectionResult {
        retained: keep.iter().map(|&j| names[j].clone()).collect(),
        dropped: (0..p).filter(|j| !keep.contains(j)).map(|j| names[j].clone()).collect(),
        cap_applied,
    }
}

/// `feature,mi_score,multisurf_score,retained`
pub fn write_scores_csv(
    path: &Path,
    names: &[String],
    mi: &FeatureScores,
    ms: &FeatureScores,
    sel: &SelectionResult,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "mi_score", "multisurf_score", "retained"])?;
    for (j, name) in names.iter().enumerate() {
        w.write_record([
            name.clone(),
            format!("{}", mi.scores[j]),
            format!("{}", ms.scores[j]),
            sel.retained.contains(name).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scores(method: ScoreMethod, s: &[f64]) -> FeatureScores {
        FeatureScores { method, scores: s.to_vec(), instances_used: 10, seed: None }
    }

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("f{j}")).collect()
    }

    #[test]
    fn mi_examples() {
        let y: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let x = Matrix::new(100, 1, y.iter().map(|&v| v as f64).collect());
        let s = mutual_information(&x, &y, &[FeatureKind::Categorical]);
        assert_abs_diff_eq!(s.scores[0], std::f64::consts::LN_2, epsilon = 1e-12);
        assert_eq!(mi_from_counts(&[vec![5, 5], vec![5, 5]]), 0.0);
        assert_eq!(mi_from_counts(&[vec![3, 6], vec![1, 2], vec![7, 14]]), 0.0);
    }

    #[test]
    fn mi_three_levels_matches_direct_sum() {
        let t = [[12.0, 3.0], [5.0, 9.0], [2.0, 14.0]];
        let n: f64 = t.iter().flatten().sum();
        let px: Vec<f64> = t.iter().map(|r| (r[0] + r[1]) / n).collect();
        let py = [t.iter().map(|r| r[0]).sum::<f64>() / n, t.iter().map(|r| r[1]).sum::<f64>() / n];
        let mut oracle = 0.0;
        for (i, r) in t.iter().enumerate() {
            for c in 0..2 {
                let pxy = r[c] / n;
                oracle += pxy * (pxy / (px[i] * py[c])).ln();
            }
        }
        let got = mi_from_counts(&[vec![12, 3], vec![5, 9], vec![2, 14]]);
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-12);
    }

    #[test]
    fn equal_frequency_binning() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        let b = equal_frequency_bins(&v, 10);
        for k in 0..10 {
            assert_eq!(b.iter().filter(|&&x| x == k).count(), 10);
        }
        assert!(equal_frequency_bins(&[1.0; 20], 10).iter().all(|&x| x == 1));
    }

    /// Every pair enumerated explicitly, threshold from the full distance list.
    fn brute_multisurf(x: &[Vec<f64>], y: &[u8], quantitative: &[bool]) -> Vec<f64> {
        let n = x.len();
        let p = x[0].len();
        let range: Vec<f64> = (0..p)
            .map(|j| {
                let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
                col.iter().cloned().fold(f64::MIN, f64::max) - col.iter().cloned().fold(f64::MAX, f64::min)
            })
            .collect();
        let d = |a: usize, b: usize, j: usize| {
            if quantitative[j] {
                if range[j] == 0.0 { 0.0 } else { (x[a][j] - x[b][j]).abs() / range[j] }
            } else if x[a][j] == x[b][j] {
                0.0
            } else {
                1.0
            }
        };
        let mut s = vec![0.0; p];
        for i in 0..n {
            let mut dists = Vec::new();
            for o in 0..n {
                if o != i {
                    dists.push((o, (0..p).map(|j| d(i, o, j)).sum::<f64>()));
                }
            }
            let mean = dists.iter().map(|v| v.1).sum::<f64>() / dists.len() as f64;
            let sd = (dists.iter().map(|v| (v.1 - mean).powi(2)).sum::<f64>() / dists.len() as f64).sqrt();
            for &(o, dv) in &dists {
                if dv < mean - sd / 2.0 {
                    for (j, sj) in s.iter_mut().enumerate() {
                        if y[o] == y[i] {
                            *sj -= d(i, o, j);
                        } else {
                            *sj += d(i, o, j);
                        }
                    }
                }
            }
        }
        s.iter().map(|v| v / n as f64).collect()
    }

    fn check_multisurf(rows: Vec<Vec<f64>>, y: Vec<u8>, quantitative: Vec<bool>) {
        let kinds: Vec<FeatureKind> = quantitative
            .iter()
            .map(|&q| if q { FeatureKind::Quantitative } else { FeatureKind::Categorical })
            .collect();
        let x = Matrix::from_rows(&rows);
        let got = multisurf(&x, &y, &kinds, 2000, 0).scores;
        let oracle = brute_multisurf(&rows, &y, &quantitative);
        for (g, o) in got.iter().zip(&oracle) {
            assert_abs_diff_eq!(*g, *o, epsilon = 1e-12);
        }
    }

    #[test]
    fn multisurf_matches_enumeration() {
        check_multisurf(
            vec![
                vec![0.0, 1.0, 0.3],
                vec![1.0, 1.0, 0.9],
                vec![0.0, 0.0, 0.1],
                vec![1.0, 0.0, 0.5],
                vec![2.0, 1.0, 0.7],
                vec![0.0, 1.0, 0.2],
            ],
            vec![0, 1, 0, 1, 1, 0],
            vec![false, false, true],
        );
        check_multisurf(
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
            ],
            vec![0, 1, 1, 0, 0, 1, 1, 0],
            vec![false, false],
        );
        check_multisurf(
            vec![vec![1.5, 7.0], vec![2.5, 7.0], vec![-1.0, 7.0], vec![4.0, 7.0], vec![0.5, 7.0]],
            vec![1, 1, 0, 1, 0],
            vec![true, true],
        );
    }

    #[test]
    fn multisurf_constant_is_zero_and_scale_free() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 3) as f64, 4.0, (i as f64 * 0.7).cos()]).collect();
        let y: Vec<u8> = (0..30).map(|i| ((i / 2) % 2) as u8).collect();
        let kinds = [FeatureKind::Categorical, FeatureKind::Categorical, FeatureKind::Quantitative];
        let s = multisurf(&Matrix::from_rows(&rows), &y, &kinds, 2000, 1).scores;
        assert_eq!(s[1], 0.0);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[1], r[2] * 37.5]).collect();
        let s2 = multisurf(&Matrix::from_rows(&scaled), &y, &kinds, 2000, 99).scores;
        for (a, b) in s.iter().zip(&s2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn multisurf_subsample_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 3) as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<u8> = (0..60).map(|i| (i % 2) as u8).collect();
        let kinds = [FeatureKind::Categorical; 2];
        let x = Matrix::from_rows(&rows);
        let a = multisurf(&x, &y, &kinds, 20, 4);
        assert_eq!(a.instances_used, 20);
        assert_eq!(a, multisurf(&x, &y, &kinds, 20, 4));
    }

    #[test]
    fn selection_examples() {
        let sel = collective_select(
            &names(3),
            &scores(ScoreMethod::MutualInformation, &[0.3, 0.0, 0.0]),
            &scores(ScoreMethod::MultiSurf, &[-0.1, 0.0, 0.2]),
            50,
        );
        assert_eq!(sel.retained, vec!["f0", "f2"]);
        assert_eq!(sel.dropped, vec!["f1"]);
        assert!(!sel.cap_applied);

        let mi: Vec<f64> = (0..60).map(|j| 0.01 * (j + 1) as f64).collect();
        let ms: Vec<f64> = (0..60).map(|j| 0.5 - 0.001 * j as f64).collect();
        let sel = collective_select(
            &names(60),
            &scores(ScoreMethod::MutualInformation, &mi),
            &scores(ScoreMethod::MultiSurf, &ms),
            50,
        );
        assert_eq!(sel.retained.len(), 50);
        assert!(sel.cap_applied);
    }

    #[test]
    fn empty_selection_keeps_best() {
        let sel = collective_select(
            &names(3),
            &scores(ScoreMethod::MutualInformation, &[0.0, 0.0, 0.0]),
            &scores(ScoreMethod::MultiSurf, &[-0.3, -0.1, -0.2]),
            50,
        );
        assert_eq!(sel.retained, vec!["f1"]);
    }
}
