use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, LoadOptions, DEFAULT_DISTINCT_THRESHOLD};
use crate::error::{Error, Result};
use crate::hpo::{LCS_ITERATIONS, LCS_MAX_RULES};
use crate::importance::TOP_N;
use crate::learners::Algorithm;
use crate::partition::CvStrategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: PathBuf,
    pub class_label: String,
    pub instance_id: Option<String>,
    pub match_id: Option<String>,
    pub excluded: Vec<String>,
    pub type_overrides: BTreeMap<String, FeatureKind>,
    pub distinct_threshold: usize,
    pub k: usize,
    pub cv: CvStrategy,
    pub seed: u64,
    pub max_features: usize,
    pub msurf_cap: usize,
    pub trials: usize,
    pub inner_k: usize,
    pub algorithms: Vec<Algorithm>,
    pub lcs_iterations: u64,
    pub lcs_max_rules: u64,
    pub alpha: f64,
    pub top_n: usize,
    pub output: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data: PathBuf::new(),
            class_label: "Class".into(),
            instance_id: None,
            match_id: None,
            excluded: Vec::new(),
            type_overrides: BTreeMap::new(),
            distinct_threshold: DEFAULT_DISTINCT_THRESHOLD,
            k: 10,
            cv: CvStrategy::Stratified,
            seed: 42,
            max_features: 50,
            msurf_cap: 2000,
            trials: 100,
            inner_k: 3,
            algorithms: Algorithm::ALL.to_vec(),
            lcs_iterations: LCS_ITERATIONS as u64,
            lcs_max_rules: LCS_MAX_RULES as u64,
            alpha: 0.05,
            top_n: TOP_N,
            output: PathBuf::from("output"),
        }
    }
}

impl PipelineConfig {
    /// Read a TOML key-value file; absent keys keep their defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(m.to_string()));
        if self.data.as_os_str().is_empty() {
            return fail("no data file given");
        }
        if self.class_label.is_empty() {
            return fail("class label is empty");
        }
        if self.output.as_os_str().is_empty() {
            return fail("no output directory given");
        }
        if self.k < 2 {
            return fail("k must be at least 2");
        }
        if self.inner_k < 2 {
            return fail("inner_k must be at least 2");
        }
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.max_features == 0 {
            return fail("max_features must be at least 1");
        }
        if self.msurf_cap == 0 {
            return fail("msurf_cap must be at least 1");
        }
        if self.lcs_iterations == 0 || self.lcs_max_rules == 0 {
            return fail("LCS iterations and max_rules must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha must lie in (0, 1)");
        }
        if self.top_n == 0 {
            return fail("top_n must be at least 1");
        }
        if self.algorithms.is_empty() {
            return fail("no algorithms selected");
        }
        if self.algorithms.iter().collect::<BTreeSet<_>>().len() != self.algorithms.len() {
            return fail("algorithm list has duplicates");
        }
        if self.cv == CvStrategy::Matched && self.match_id.is_none() {
            return fail("matched cross-validation needs a match ID column");
        }
        Ok(())
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            class_label: self.class_label.clone(),
            instance_id: self.instance_id.clone(),
            match_id: self.match_id.clone(),
            excluded: self.excluded.clone(),
            type_overrides: self.type_overrides.clone(),
            distinct_threshold: Some(self.distinct_threshold),
        }
    }
}
