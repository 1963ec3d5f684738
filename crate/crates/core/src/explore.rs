//! Exploratory analysis: counts, missingness, correlation, and univariate
//! feature–outcome tests (chi-square for categorical, Mann-Whitney for
//! quantitative features).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind};
use crate::error::Result;
use crate::stats::{chi2_sf, midranks, normal_sf, pearson, tie_term};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Table collapsed to a single row or column after dropping empty margins.
    pub degenerate: bool,
}

/// Pearson chi-square test of independence on a contingency table.
/// All-zero rows and columns are dropped first.
pub fn chi_square_test(table: &[Vec<u64>]) -> ChiSquare {
    let n_cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().any(|&c| c > 0)).collect();
    let cols: Vec<usize> = (0..n_cols).filter(|&j| rows.iter().any(|r| r.get(j).copied().unwrap_or(0) > 0)).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return ChiSquare { statistic: 0.0, df: 0, p_value: 1.0, degenerate: true };
    }
    let cell = |r: &Vec<u64>, j: usize| r.get(j).copied().unwrap_or(0) as f64;
    let row_tot: Vec<f64> = rows.iter().map(|r| cols.iter().map(|&j| cell(r, j)).sum()).collect();
    let col_tot: Vec<f64> = cols.iter().map(|&j| rows.iter().map(|r| cell(r, j)).sum()).collect();
    let total: f64 = row_tot.iter().sum();
    let mut stat = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (k, &j) in cols.iter().enumerate() {
            let expected = row_tot[i] * col_tot[k] / total;
            let d = cell(r, j) - expected;
            stat += d * d / expected;
        }
    }
    let df = (rows.len() - 1) * (cols.len() - 1);
    ChiSquare { statistic: stat, df, p_value: chi2_sf(stat, df as f64), degenerate: false }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// Rank-sum statistic of the first group, midranks for ties.
    pub u_a: f64,
    /// `min(U_a, U_b)`.
    pub u_min: f64,
    pub p_value: f64,
    /// Every value identical across both groups.
    pub degenerate: bool,
}

/// Two-sided Mann-Whitney U test by normal approximation with tie-corrected
/// variance and continuity correction.
///
/// # Panics
/// If either group is empty.
pub fn mann_whitney_u(group_a: &[f64], group_b: &[f64]) -> MannWhitney {
    assert!(!group_a.is_empty() && !group_b.is_empty(), "Mann-Whitney needs two non-empty groups");
    let (na, nb) = (group_a.len() as f64, group_b.len() as f64);
    let pooled: Vec<f64> = group_a.iter().chain(group_b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..group_a.len()].iter().sum();
    let u_a = rank_sum_a - na * (na + 1.0) / 2.0;
    let u_b = na * nb - u_a;
    let n = na + nb;
    let mu = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term(&pooled) / (n * (n - 1.0)));
    if !(var > 0.0) {
        return MannWhitney { u_a: mu, u_min: mu, p_value: 1.0, degenerate: true };
    }
    let z = ((u_a - mu).abs() - 0.5).max(0.0) / var.sqrt();
    MannWhitney { u_a, u_min: u_a.min(u_b), p_value: (2.0 * normal_sf(z)).min(1.0), degenerate: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnivariateTest {
    ChiSquare,
    MannWhitney,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateResult {
    pub feature: String,
    pub test: UnivariateTest,
    pub statistic: f64,
    pub p_value: f64,
    pub significant_bonferroni: bool,
    #[serde(default)]
    pub degenerate: bool,
}

/// Per-feature association with the class, Bonferroni-corrected at `alpha`.
pub fn univariate_screen(d: &Dataset, alpha: f64) -> Vec<UnivariateResult> {
    let p = d.n_features().max(1) as f64;
    crate::par::map_range(d.n_features(), |j| {
        let f = &d.features[j];
        let pairs: Vec<(f64, u8)> = (0..d.n_instances())
            .filter_map(|r| d.values.get(r, j).map(|v| (v, d.class_labels[r])))
            .collect();
        let constant = pairs.windows(2).all(|w| w[0].0 == w[1].0);
        let (test, statistic, p_value, mut degenerate) = match f.kind {
            FeatureKind::Categorical => {
                let levels = f.observed_levels.len().max(1);
                let mut table = vec![vec![0u64; 2]; levels];
                for &(v, c) in &pairs {
                    table[v as usize][c as usize] += 1;
                }
                let cs = chi_square_test(&table);
                (UnivariateTest::ChiSquare, cs.statistic, cs.p_value, cs.degenerate)
            }
            FeatureKind::Quantitative => {
                let a: Vec<f64> = pairs.iter().filter(|x| x.1 == 1).map(|x| x.0).collect();
                let b: Vec<f64> = pairs.iter().filter(|x| x.1 == 0).map(|x| x.0).collect();
                if a.is_empty() || b.is_empty() {
                    (UnivariateTest::MannWhitney, 0.0, 1.0, true)
                } else {
                    let mw = mann_whitney_u(&a, &b);
                    (UnivariateTest::MannWhitney, mw.u_a, mw.p_value, mw.degenerate)
                }
            }
        };
        let p_value = if constant {
            degenerate = true;
            1.0
        } else {
            p_value
        };
        UnivariateResult {
            feature: f.name.clone(),
            test,
            statistic,
            p_value,
            significant_bonferroni: p_value < alpha / p,
            degenerate,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub features: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Features with zero variance; their off-diagonal entries are 0.
    pub constant: Vec<String>,
    /// Categorical–categorical pairs, where Pearson on codes is only indicative.
    pub approximate_pairs: Vec<(String, String)>,
}

/// Pearson correlation over encoded values, pairwise-complete observations.
pub fn correlation_matrix(d: &Dataset) -> CorrelationMatrix {
    let p = d.n_features();
    let cols: Vec<Vec<Option<f64>>> = (0..p).map(|j| d.values.column(j)).collect();
    let constant_flags: Vec<bool> = cols
        .iter()
        .map(|c| {
            let mut obs = c.iter().flatten();
            match obs.next() {
                Some(first) => obs.all(|v| v == first),
                None => true,
            }
        })
        .collect();
    let rows: Vec<Vec<f64>> = crate::par::map_range(p, |i| {
        (0..p)
            .map(|j| {
                if i == j {
                    return if constant_flags[i] { 0.0 } else { 1.0 };
                }
                let (x, y): (Vec<f64>, Vec<f64>) =
                    cols[i].iter().zip(&cols[j]).filter_map(|(a, b)| Some(((*a)?, (*b)?))).unzip();
                pearson(&x, &y).unwrap_or(0.0)
            })
            .collect()
    });
    // force exact symmetry
    let mut values = rows;
    for i in 0..p {
        for j in 0..i {
            values[i][j] = values[j][i];
        }
    }
    let mut approximate_pairs = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if d.features[i].kind == FeatureKind::Categorical && d.features[j].kind == FeatureKind::Categorical {
                approximate_pairs.push((d.features[i].name.clone(), d.features[j].name.clone()));
            }
        }
    }
    CorrelationMatrix {
        features: d.feature_names(),
        values,
        constant: (0..p).filter(|&j| constant_flags[j]).map(|j| d.features[j].name.clone()).collect(),
        approximate_pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub n_instances: usize,
    pub n_features: usize,
    /// `[controls, cases]`.
    pub class_counts: [usize; 2],
    pub missing_by_feature: BTreeMap<String, usize>,
    /// `[categorical, quantitative]`.
    pub kind_counts: [usize; 2],
    pub correlation_matrix: CorrelationMatrix,
    pub univariate: Vec<UnivariateResult>,
    pub alpha: f64,
    pub correction: String,
}

pub fn explore(d: &Dataset, alpha: f64) -> ExploreReport {
    let cat = d.features.iter().filter(|f| f.kind == FeatureKind::Categorical).count();
    ExploreReport {
        n_instances: d.n_instances(),
        n_features: d.n_features(),
        class_counts: d.class_counts(),
        missing_by_feature: d.features.iter().map(|f| (f.name.clone(), f.missing_count)).collect(),
        kind_counts: [cat, d.n_features() - cat],
        correlation_matrix: correlation_matrix(d),
        univariate: univariate_screen(d, alpha),
        alpha,
        correction: "bonferroni".into(),
    }
}

impl ExploreReport {
    /// `report.json`, `correlation.csv`, `univariate.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;

        let cm = &self.correlation_matrix;
        let mut w = csv::Writer::from_path(dir.join("correlation.csv"))?;
        let mut header = vec!["feature".to_string()];
        header.extend(cm.features.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in cm.features.iter().zip(&cm.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("univariate.csv"))?;
        w.write_record(["feature", "test", "statistic", "p_value", "significant"])?;
        for u in &self.univariate {
            let test = match u.test {
                UnivariateTest::ChiSquare => "chi_square",
                UnivariateTest::MannWhitney => "mann_whitney",
            };
            w.write_record([
                u.feature.clone(),
                test.to_string(),
                format!("{}", u.statistic),
                format!("{}", u.p_value),
                u.significant_bonferroni.to_string(),
            ])?;
        }
        w.flush()?;
        let mut f = std::fs::OpenOptions::new().append(true).open(dir.join("report.json"))?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMeta;
    use crate::matrix::Table;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// n·(ad − bc)² / (row1·row2·col1·col2)
    fn chi2_2x2_oracle(a: f64, b: f64, c: f64, d: f64) -> f64 {
        let n = a + b + c + d;
        n * (a * d - b * c).powi(2) / ((a + b) * (c + d) * (a + c) * (b + d))
    }

    #[test]
    fn chi_square_examples() {
        let r = chi_square_test(&[vec![10, 10], vec![10, 10]]);
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);

        let r = chi_square_test(&[vec![20, 10], vec![10, 20]]);
        assert_abs_diff_eq!(r.statistic, chi2_2x2_oracle(20.0, 10.0, 10.0, 20.0), epsilon = 1e-12);
        assert_abs_diff_eq!(r.statistic, 6.6667, epsilon = 1e-4);
        assert_eq!(r.df, 1);

        let r = chi_square_test(&[vec![5, 0], vec![0, 5]]);
        assert_abs_diff_eq!(r.statistic, 10.0, epsilon = 1e-12);
        assert_eq!(r.df, 1);
    }

    #[test]
    fn chi_square_drops_empty_margins_and_flags_degeneracy() {
        let r = chi_square_test(&[vec![20, 10, 0], vec![0, 0, 0], vec![10, 20, 0]]);
        assert_eq!(r.df, 1);
        assert_abs_diff_eq!(r.statistic, 20.0 / 3.0, epsilon = 1e-12);
        let r = chi_square_test(&[vec![3, 4], vec![0, 0]]);
        assert!(r.degenerate);
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn chi_square_permutation_invariant() {
        let t = vec![vec![12, 5, 7], vec![3, 9, 14]];
        let swapped = vec![vec![3, 9, 14], vec![12, 5, 7]];
        let cols = vec![vec![7, 12, 5], vec![14, 3, 9]];
        let s = chi_square_test(&t).statistic;
        assert_abs_diff_eq!(chi_square_test(&swapped).statistic, s, epsilon = 1e-12);
        assert_abs_diff_eq!(chi_square_test(&cols).statistic, s, epsilon = 1e-12);
    }

    #[test]
    fn mann_whitney_examples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        assert_eq!(r.u_a, 0.0);
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!(r.u_a, 4.5);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);
        let r = mann_whitney_u(&[2.0, 2.0], &[2.0, 2.0, 2.0]);
        assert!(r.degenerate);
        assert_eq!((r.u_a, r.p_value), (3.0, 1.0));
    }

    /// Exact two-sided permutation p-value over all C(n, n_a) relabelings.
    fn permutation_p(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let ranks = midranks(&pooled);
        let (na, n) = (a.len(), pooled.len());
        let mu = (na * (n - na)) as f64 / 2.0;
        let u_of = |idx: &[usize]| idx.iter().map(|&i| ranks[i]).sum::<f64>() - (na * (na + 1)) as f64 / 2.0;
        let observed = (u_of(&(0..na).collect::<Vec<_>>()) - mu).abs();
        let (mut hits, mut total) = (0u64, 0u64);
        let mut idx: Vec<usize> = (0..na).collect();
        loop {
            total += 1;
            if (u_of(&idx) - mu).abs() >= observed - 1e-9 {
                hits += 1;
            }
            // next combination
            let mut i = na;
            loop {
                if i == 0 {
                    return hits as f64 / total as f64;
                }
                i -= 1;
                if idx[i] < n - na + i {
                    break;
                }
            }
            idx[i] += 1;
            for j in i + 1..na {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }

    #[test]
    fn mann_whitney_tracks_exact_permutation_at_n8() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for shift in [0.0, 0.5, 1.0, 1.5] {
            let a: Vec<f64> = (0..8).map(|_| rng.random::<f64>() + shift).collect();
            let b: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            let approx_p = mann_whitney_u(&a, &b).p_value;
            let exact = permutation_p(&a, &b);
            assert!((approx_p - exact).abs() < 0.02, "shift {shift}: normal {approx_p} vs exact {exact}");
        }
    }

    #[test]
    fn mann_whitney_u_sum_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a: Vec<f64> = (0..rng.random_range(1..15)).map(|_| rng.random_range(0..5) as f64).collect();
            let b: Vec<f64> = (0..rng.random_range(1..15)).map(|_| rng.random_range(0..5) as f64).collect();
            let ab = mann_whitney_u(&a, &b);
            let ba = mann_whitney_u(&b, &a);
            if !ab.degenerate {
                assert_abs_diff_eq!(ab.u_a + ba.u_a, (a.len() * b.len()) as f64, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn p_values_monotone_in_separation() {
        let b: Vec<f64> = (0..10).map(f64::from).collect();
        let mut last = 1.1;
        for shift in 0..12 {
            let a: Vec<f64> = b.iter().map(|v| v + shift as f64 + 0.5).collect();
            let p = mann_whitney_u(&a, &b).p_value;
            assert!(p <= last);
            last = p;
        }
        let mut last = 1.1;
        for k in 0..10u64 {
            let p = chi_square_test(&[vec![10 + k, 10 - k], vec![10 - k, 10 + k]]).p_value;
            assert!(p <= last);
            last = p;
        }
    }

    fn categorical(name: &str, levels: usize) -> FeatureMeta {
        FeatureMeta {
            name: name.into(),
            kind: FeatureKind::Categorical,
            observed_levels: (0..levels).map(|l| l.to_string()).collect(),
            observed_min: None,
            observed_max: None,
            missing_count: 0,
        }
    }

    fn quantitative(name: &str) -> FeatureMeta {
        FeatureMeta {
            name: name.into(),
            kind: FeatureKind::Quantitative,
            observed_levels: vec![],
            observed_min: None,
            observed_max: None,
            missing_count: 0,
        }
    }

    #[test]
    fn screen_flags_perfect_association_and_constants() {
        let labels: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let rows: Vec<Vec<Option<f64>>> =
            labels.iter().map(|&c| vec![Some(c as f64), Some(1.0), Some(c as f64 * 3.0)]).collect();
        let d = Dataset::new(
            vec![categorical("same", 2), categorical("flat", 2), quantitative("q")],
            Table::from_rows(&rows),
            labels,
            None,
            None,
            "Class",
        )
        .unwrap();
        let res = univariate_screen(&d, 0.05);
        assert_eq!(res[0].test, UnivariateTest::ChiSquare);
        assert!(res[0].p_value < 1e-6 && res[0].significant_bonferroni);
        assert!(res[1].degenerate && res[1].p_value == 1.0);
        assert_eq!(res[2].test, UnivariateTest::MannWhitney);
        assert!(res[2].p_value < 1e-6);
    }

    #[test]
    fn quantitative_null_is_calibrated() {
        // 100 seeded repetitions, both classes drawn identically, n = 1600
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut above = 0;
        for _ in 0..100 {
            let a: Vec<f64> = (0..800).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..800).map(|_| rng.random::<f64>()).collect();
            if mann_whitney_u(&a, &b).p_value > 0.01 {
                above += 1;
            }
        }
        assert!(above >= 95, "{above} of 100 above 0.01");
    }

    #[test]
    fn correlation_examples() {
        let labels: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
        let rows: Vec<Vec<Option<f64>>> = (0..50)
            .map(|i| {
                let x = (i * 7 % 13) as f64;
                vec![Some(x), Some(-x), Some(5.0), if i == 3 { None } else { Some((i % 5) as f64) }]
            })
            .collect();
        let mut f3 = quantitative("d");
        f3.missing_count = 1;
        let d = Dataset::new(
            vec![quantitative("a"), quantitative("b"), quantitative("c"), f3],
            Table::from_rows(&rows),
            labels,
            None,
            None,
            "Class",
        )
        .unwrap();
        let cm = correlation_matrix(&d);
        assert_eq!(cm.values[0][0], 1.0);
        assert_abs_diff_eq!(cm.values[0][1], -1.0, epsilon = 1e-12);
        assert_eq!(cm.values[0][2], 0.0);
        assert_eq!(cm.constant, vec!["c"]);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(cm.values[i][j], cm.values[j][i]);
            }
        }
    }
}
