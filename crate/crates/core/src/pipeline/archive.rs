//! Versioned JSON model archive and prediction on new data.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::data::{load_with_schema, Schema};
use crate::error::{Error, Result};
use crate::featsel::SelectionResult;
use crate::learners::TrainedModel;
use crate::matrix::Table;
use crate::partition::FoldPlan;
use crate::transform::{ImputerState, ScalerState};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldArchive {
    pub fold: usize,
    pub scaler: ScalerState,
    pub imputer: ImputerState,
    pub selection: SelectionResult,
    /// Keyed by record label (`LR`, ..., `LCS_QRF`).
    pub models: BTreeMap<String, TrainedModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArchive {
    pub format_version: u32,
    pub config: PipelineConfig,
    pub schema: Schema,
    pub fold_plan: FoldPlan,
    pub folds: Vec<FoldArchive>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldChoice {
    Fold(usize),
    /// Average class-1 scores over every fold's model.
    Vote,
}

impl FromStr for FoldChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("vote") {
            return Ok(FoldChoice::Vote);
        }
        s.parse::<usize>()
            .map(FoldChoice::Fold)
            .map_err(|_| Error::config(format!("fold must be an index or \"vote\", got '{s}'")))
    }
}

impl fmt::Display for FoldChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FoldChoice::Fold(k) => write!(f, "{k}"),
            FoldChoice::Vote => f.write_str("vote"),
        }
    }
}

impl FoldArchive {
    /// Scale, impute with the archived fills, restrict to retained features
    /// and score with every model.
    pub fn score(&self, values: &Table, feature_names: &[String]) -> Result<BTreeMap<String, Vec<f64>>> {
        let scaled = self.scaler.apply(values)?;
        let complete = self.imputer.apply(&scaled)?;
        let keep = self.selection.retained_indices(feature_names);
        if keep.len() != self.selection.retained.len() {
            return Err(Error::data("archived selection names features missing from the schema"));
        }
        let x = complete.select_cols(&keep);
        self.models.iter().map(|(label, m)| Ok((label.clone(), m.predict_proba(&x)?))).collect()
    }
}

impl ModelArchive {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::config(format!("cannot open archive {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::data(format!("archive {} is not valid JSON: {e}", path.display())))?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(ARCHIVE_VERSION)) {
            return Err(Error::data(format!(
                "archive format version {version:?} is not supported (expected {ARCHIVE_VERSION})"
            )));
        }
        serde_json::from_value(value).map_err(|e| Error::data(format!("malformed archive: {e}")))
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn predict_table(&self, values: &Table, choice: FoldChoice) -> Result<BTreeMap<String, Vec<f64>>> {
        let names = self.feature_names();
        match choice {
            FoldChoice::Fold(k) => {
                let fold = self
                    .folds
                    .get(k)
                    .ok_or_else(|| Error::config(format!("fold {k} out of range (archive has {})", self.folds.len())))?;
                fold.score(values, &names)
            }
            FoldChoice::Vote => {
                let per_fold: Vec<BTreeMap<String, Vec<f64>>> =
                    self.folds.iter().map(|f| f.score(values, &names)).collect::<Result<_>>()?;
                let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
                for scores in &per_fold {
                    for (label, s) in scores {
                        let e = sums.entry(label.clone()).or_insert_with(|| (vec![0.0; s.len()], 0));
                        for (acc, v) in e.0.iter_mut().zip(s) {
                            *acc += v;
                        }
                        e.1 += 1;
                    }
                }
                Ok(sums
                    .into_iter()
                    .map(|(label, (s, n))| (label, s.into_iter().map(|v| v / n as f64).collect()))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub row_labels: Vec<String>,
    pub labels: Option<Vec<Option<u8>>>,
    pub scores: BTreeMap<String, Vec<f64>>,
}

impl Predictions {
    /// `instance[,class],<label>_score,<label>_pred,...`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["instance".to_string()];
        if self.labels.is_some() {
            header.push("class".into());
        }
        for label in self.scores.keys() {
            header.push(format!("{label}_score"));
            header.push(format!("{label}_pred"));
        }
        w.write_record(&header)?;
        for (r, id) in self.row_labels.iter().enumerate() {
            let mut rec = vec![id.clone()];
            if let Some(l) = &self.labels {
                rec.push(l[r].map(|c| c.to_string()).unwrap_or_default());
            }
            for s in self.scores.values() {
                rec.push(format!("{}", s[r]));
                rec.push(u8::from(s[r] >= 0.5).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn predict(archive: &ModelArchive, data: &Path, choice: FoldChoice) -> Result<Predictions> {
    let new = load_with_schema(data, &archive.schema)?;
    let scores = archive.predict_table(&new.values, choice)?;
    Ok(Predictions { row_labels: new.row_labels, labels: new.labels, scores })
}
