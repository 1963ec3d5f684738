//! Heterogeneous pure-epistasis SNP benchmark.
//!
//! Two SNP pairs each drive the outcome in one half of the instances. Within a
//! pair, the outcome depends on which SNPs carry a minor allele: exactly one
//! carrier gives penetrance `1 - eps`, two carriers give `eps`, and the
//! no-carrier cell is set so both single-SNP marginal penetrances are equal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind, FeatureMeta};
use crate::error::{Error, Result};
use crate::matrix::Table;

pub const PREDICTIVE: [&str; 4] = ["M0P0", "M0P1", "M1P0", "M1P1"];
pub const CLASS_COLUMN: &str = "Class";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_instances: usize,
    pub n_features: usize,
    pub maf_predictive: f64,
    pub maf_noise_range: (f64, f64),
    /// Penetrance noise. When absent it is solved from `heritability`.
    pub flip_noise: Option<f64>,
    pub heritability: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_instances: 1600,
            n_features: 20,
            maf_predictive: 0.2,
            maf_noise_range: (0.05, 0.5),
            flip_noise: None,
            heritability: 0.4,
            seed: 42,
        }
    }
}

/// Penetrance by number of minor-allele carriers in the active pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penetrance {
    pub carrier_prob: f64,
    pub cells: [f64; 3],
}

impl Penetrance {
    pub fn new(maf: f64, eps: f64) -> Self {
        let q = 1.0 - (1.0 - maf).powi(2);
        let k = (1.0 - q) * (1.0 - eps) + q * eps;
        let none = (k - q * (1.0 - eps)) / (1.0 - q);
        Penetrance { carrier_prob: q, cells: [none, 1.0 - eps, eps] }
    }

    /// Population prevalence within a half.
    pub fn prevalence(&self) -> f64 {
        self.carrier_weights().iter().zip(self.cells).map(|(w, c)| w * c).sum()
    }

    fn carrier_weights(&self) -> [f64; 3] {
        let q = self.carrier_prob;
        [(1.0 - q) * (1.0 - q), 2.0 * q * (1.0 - q), q * q]
    }

    /// P(case | one SNP's carrier status), `[non-carrier, carrier]`.
    pub fn marginal(&self) -> [f64; 2] {
        let q = self.carrier_prob;
        [(1.0 - q) * self.cells[0] + q * self.cells[1], (1.0 - q) * self.cells[1] + q * self.cells[2]]
    }

    /// Variance of penetrance over the pair's carrier cells divided by the
    /// outcome variance.
    pub fn heritability(&self) -> f64 {
        let k = self.prevalence();
        let var: f64 = self.carrier_weights().iter().zip(self.cells).map(|(w, c)| w * (c - k).powi(2)).sum();
        var / (k * (1.0 - k))
    }

    pub fn is_valid(&self) -> bool {
        self.cells.iter().all(|c| (0.0..=1.0).contains(c))
    }
}

/// Noise level giving the requested heritability at `maf`.
pub fn solve_noise(maf: f64, heritability: f64) -> Result<f64> {
    let h = |eps: f64| Penetrance::new(maf, eps).heritability();
    let (mut lo, mut hi) = (0.0, 0.5 - 1e-12);
    if !(heritability > h(hi) && heritability <= h(lo)) {
        return Err(Error::config(format!(
            "heritability {heritability} unreachable at maf {maf} (range {:.4}..{:.4})",
            h(hi),
            h(lo)
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > heritability {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub flip_noise: f64,
    pub penetrance: Penetrance,
    /// 0 for the first half (M0 pair active), 1 for the second.
    pub half: Vec<u8>,
}

fn genotype(rng: &mut ChaCha8Rng, maf: f64) -> u8 {
    u8::from(rng.random::<f64>() < maf) + u8::from(rng.random::<f64>() < maf)
}

pub fn simulate(cfg: &SimConfig) -> Result<Simulation> {
    let n = cfg.n_instances;
    if cfg.n_features < 4 {
        return Err(Error::config("the simulator needs at least 4 features"));
    }
    if n < 4 || n % 2 != 0 {
        return Err(Error::config(format!("instance count must be even and at least 4, got {n}")));
    }
    if !(cfg.maf_predictive > 0.0 && cfg.maf_predictive <= 0.5) {
        return Err(Error::config("predictive maf must lie in (0, 0.5]"));
    }
    let (mlo, mhi) = cfg.maf_noise_range;
    if !(0.0 < mlo && mlo <= mhi && mhi <= 0.5) {
        return Err(Error::config("noise maf range must satisfy 0 < lo <= hi <= 0.5"));
    }
    let eps = match cfg.flip_noise {
        Some(e) if (0.0..0.5).contains(&e) => e,
        Some(e) => return Err(Error::config(format!("flip noise must lie in [0, 0.5), got {e}"))),
        None => solve_noise(cfg.maf_predictive, cfg.heritability)?,
    };
    let pen = Penetrance::new(cfg.maf_predictive, eps);
    if !pen.is_valid() {
        return Err(Error::config(format!("no valid penetrance table for maf {} and noise {eps}", cfg.maf_predictive)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half_size = n / 2;
    let q1_case = half_size - half_size / 2;
    let quotas = [[half_size / 2, q1_case], [n - half_size - (n / 2 - q1_case), n / 2 - q1_case]];
    let mut geno: Vec<[u8; 4]> = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut half = Vec::with_capacity(n);
    let mut attempts = 0usize;
    for (h, quota) in quotas.iter().enumerate() {
        let mut need = *quota;
        while need[0] + need[1] > 0 {
            attempts += 1;
            if attempts > 100 * n {
                return Err(Error::runtime("class balance not reached within the attempt budget"));
            }
            let g = [(); 4].map(|_| genotype(&mut rng, cfg.maf_predictive));
            let carriers = usize::from(g[2 * h] > 0) + usize::from(g[2 * h + 1] > 0);
            let y = usize::from(rng.random::<f64>() < pen.cells[carriers]);
            if need[y] > 0 {
                need[y] -= 1;
                geno.push(g);
                labels.push(y as u8);
                half.push(h as u8);
            }
        }
    }

    let n_noise = cfg.n_features - 4;
    let noise_maf: Vec<f64> = (0..n_noise).map(|_| rng.random_range(mlo..=mhi)).collect();
    let mut raw = vec![vec![0u8; cfg.n_features]; n];
    for (r, g) in geno.iter().enumerate() {
        raw[r][..4].copy_from_slice(g);
        for (j, &m) in noise_maf.iter().enumerate() {
            raw[r][4 + j] = genotype(&mut rng, m);
        }
    }

    let names: Vec<String> =
        PREDICTIVE.iter().map(|s| s.to_string()).chain((1..=n_noise).map(|i| format!("N{i}"))).collect();
    let mut features = Vec::with_capacity(cfg.n_features);
    let mut codes: Vec<[Option<usize>; 3]> = Vec::with_capacity(cfg.n_features);
    for (j, name) in names.into_iter().enumerate() {
        let mut present = [false; 3];
        for row in &raw {
            present[row[j] as usize] = true;
        }
        let levels: Vec<usize> = (0..3).filter(|&g| present[g]).collect();
        let mut map = [None; 3];
        for (code, &g) in levels.iter().enumerate() {
            map[g] = Some(code);
        }
        codes.push(map);
        features.push(FeatureMeta {
            name,
            kind: FeatureKind::Categorical,
            observed_levels: levels.iter().map(|g| g.to_string()).collect(),
            observed_min: None,
            observed_max: None,
            missing_count: 0,
        });
    }
    let rows: Vec<Vec<Option<f64>>> = raw
        .iter()
        .map(|row| row.iter().enumerate().map(|(j, &g)| codes[j][g as usize].map(|c| c as f64)).collect())
        .collect();
    let dataset = Dataset::new(features, Table::from_rows(&rows), labels, None, None, CLASS_COLUMN)?;
    Ok(Simulation { dataset, flip_noise: eps, penetrance: pen, half })
}
