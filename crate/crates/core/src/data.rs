//! Canonical in-memory dataset, CSV loading and cleaning.
//!
//! Categorical features are stored as integer codes `0..levels.len()` that
//! index [`FeatureMeta::observed_levels`]; levels are sorted numerically when
//! every level parses as a number and lexicographically otherwise.
//! Quantitative features keep their raw values. Missing cells are `None`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Table;

/// Default cap on distinct integral values for a column to be categorical.
pub const DEFAULT_DISTINCT_THRESHOLD: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    Categorical,
    Quantitative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
    /// Level labels in code order (categorical only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observed_levels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_max: Option<f64>,
    pub missing_count: usize,
}

impl FeatureMeta {
    /// Code of a raw cell under this feature's level table.
    pub fn encode_level(&self, raw: &str) -> Option<usize> {
        let key = level_label(raw);
        self.observed_levels.iter().position(|l| *l == key)
    }
}

/// Normalized label for a categorical cell: numbers are printed canonically
/// so that "1", "1.0" and "01" name the same level.
fn level_label(raw: &str) -> String {
    match parse_number(raw) {
        Some(v) => format!("{v}"),
        None => raw.to_string(),
    }
}

fn parse_number(raw: &str) -> Option<f64> {
    raw.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_missing(raw: &str) -> bool {
    raw.is_empty() || raw == "NA"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub instances_dropped_missing_class: usize,
    pub columns_excluded: Vec<String>,
    pub rows_in: usize,
    pub rows_out: usize,
    /// Feature columns with no observed value, dropped with a warning.
    #[serde(default)]
    pub columns_dropped_all_missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<FeatureMeta>,
    pub values: Table,
    pub class_labels: Vec<u8>,
    pub instance_ids: Option<Vec<String>>,
    pub match_group_ids: Option<Vec<String>>,
    pub class_column: String,
    pub id_column: Option<String>,
    pub match_column: Option<String>,
}

/// Column layout needed to read new data the way a dataset was read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureMeta>,
    pub class_column: String,
    pub id_column: Option<String>,
    pub match_column: Option<String>,
}

impl Dataset {
    /// Build a dataset from already encoded values, checking every invariant.
    pub fn new(
        features: Vec<FeatureMeta>,
        values: Table,
        class_labels: Vec<u8>,
        instance_ids: Option<Vec<String>>,
        match_group_ids: Option<Vec<String>>,
        class_column: impl Into<String>,
    ) -> Result<Self> {
        let d = Dataset {
            features,
            values,
            class_labels,
            instance_ids,
            match_group_ids,
            class_column: class_column.into(),
            id_column: None,
            match_column: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.class_labels.len();
        if self.values.rows() != n {
            return Err(Error::data(format!("{} value rows but {} class labels", self.values.rows(), n)));
        }
        if self.values.cols() != self.features.len() {
            return Err(Error::data("value columns do not match feature list"));
        }
        if let Some(bad) = self.class_labels.iter().find(|&&c| c > 1) {
            return Err(Error::data(format!("class label {bad} is not 0/1")));
        }
        if let Some(ids) = &self.instance_ids {
            if ids.len() != n {
                return Err(Error::data("instance id count does not match rows"));
            }
            let mut seen = HashSet::new();
            for id in ids {
                if !seen.insert(id) {
                    return Err(Error::data(format!("duplicate instance id '{id}'")));
                }
            }
        }
        if let Some(g) = &self.match_group_ids {
            if g.len() != n {
                return Err(Error::data("match id count does not match rows"));
            }
        }
        let [c0, c1] = self.class_counts();
        if c0 == 0 || c1 == 0 {
            return Err(Error::data(format!("both classes must be present (class 0: {c0}, class 1: {c1})")));
        }
        for (j, f) in self.features.iter().enumerate() {
            let missing = (0..n).filter(|&r| self.values.get(r, j).is_none()).count();
            if missing != f.missing_count {
                return Err(Error::data(format!("feature '{}' missing_count is stale", f.name)));
            }
        }
        Ok(())
    }

    pub fn n_instances(&self) -> usize {
        self.class_labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.features.iter().map(|f| f.kind).collect()
    }

    /// `[controls, cases]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let cases = self.class_labels.iter().filter(|&&c| c == 1).count();
        [self.class_labels.len() - cases, cases]
    }

    pub fn schema(&self) -> Schema {
        Schema {
            features: self.features.clone(),
            class_column: self.class_column.clone(),
            id_column: self.id_column.clone(),
            match_column: self.match_column.clone(),
        }
    }

    /// Row label used in output files: the instance id, or the row index.
    pub fn row_label(&self, row: usize) -> String {
        match &self.instance_ids {
            Some(ids) => ids[row].clone(),
            None => row.to_string(),
        }
    }

    /// Write the dataset back as CSV; categorical codes are decoded to labels.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = Vec::new();
        if let Some(id) = &self.id_column {
            header.push(id);
        }
        header.extend(self.features.iter().map(|f| f.name.as_str()));
        header.push(&self.class_column);
        if let Some(m) = &self.match_column {
            header.push(m);
        }
        w.write_record(&header)?;
        for r in 0..self.n_instances() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if self.id_column.is_some() {
                rec.push(self.row_label(r));
            }
            for (j, f) in self.features.iter().enumerate() {
                rec.push(match (self.values.get(r, j), f.kind) {
                    (None, _) => String::new(),
                    (Some(code), FeatureKind::Categorical) => f.observed_levels[code as usize].clone(),
                    (Some(v), FeatureKind::Quantitative) => format!("{v}"),
                });
            }
            rec.push(self.class_labels[r].to_string());
            if self.match_column.is_some() {
                rec.push(self.match_group_ids.as_ref().map(|g| g[r].clone()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Categorical iff every observed value is integral and there are at most
/// `distinct_threshold` distinct values. `None` for an all-missing column.
pub fn infer_kind(values: &[Option<f64>], distinct_threshold: usize) -> Option<FeatureKind> {
    let mut distinct: BTreeSet<u64> = BTreeSet::new();
    let mut any = false;
    let mut integral = true;
    for v in values.iter().flatten() {
        any = true;
        if v.fract() != 0.0 {
            integral = false;
        }
        if distinct.len() <= distinct_threshold {
            distinct.insert(v.to_bits());
        }
    }
    if !any {
        return None;
    }
    Some(if integral && distinct.len() <= distinct_threshold {
        FeatureKind::Categorical
    } else {
        FeatureKind::Quantitative
    })
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub class_label: String,
    pub instance_id: Option<String>,
    pub match_id: Option<String>,
    pub excluded: Vec<String>,
    pub type_overrides: BTreeMap<String, FeatureKind>,
    pub distinct_threshold: Option<usize>,
}

impl LoadOptions {
    pub fn new(class_label: impl Into<String>) -> Self {
        Self { class_label: class_label.into(), ..Default::default() }
    }
}

struct RawCsv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_raw(path: &Path) -> Result<RawCsv> {
    if !path.exists() {
        return Err(Error::config(format!("data file {} does not exist", path.display())));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::data("CSV header row is empty"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
    }
    Ok(RawCsv { header, rows })
}

fn find_column(header: &[String], name: &str, what: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::config(format!("{what} column '{name}' not found in header")))
}

fn parse_class(raw: &str, column: &str) -> Result<Option<u8>> {
    if is_missing(raw) {
        return Ok(None);
    }
    match parse_number(raw) {
        Some(v) if v == 0.0 => Ok(Some(0)),
        Some(v) if v == 1.0 => Ok(Some(1)),
        _ => Err(Error::data(format!("class column '{column}' contains non-binary value \"{raw}\""))),
    }
}

/// Load and clean a CSV: drop excluded/id/match columns from the feature
/// list, drop rows with a missing class, drop all-missing feature columns,
/// then infer (or apply overridden) feature kinds and encode.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<(Dataset, CleaningReport)> {
    let raw = read_raw(path.as_ref())?;
    let class_idx = find_column(&raw.header, &opts.class_label, "class")?;
    let id_idx = opts.instance_id.as_deref().map(|n| find_column(&raw.header, n, "instance id")).transpose()?;
    let match_idx = opts.match_id.as_deref().map(|n| find_column(&raw.header, n, "match id")).transpose()?;

    let mut columns_excluded = Vec::new();
    for name in &opts.excluded {
        if raw.header.iter().any(|h| h == name) {
            columns_excluded.push(name.clone());
        } else {
            warn!("excluded column '{name}' is not in the header");
        }
    }
    for name in opts.type_overrides.keys() {
        if !raw.header.iter().any(|h| h == name) {
            return Err(Error::config(format!("type override for unknown column '{name}'")));
        }
    }
    let excluded: HashSet<&str> = columns_excluded.iter().map(String::as_str).collect();
    let feature_cols: Vec<usize> = (0..raw.header.len())
        .filter(|&j| j != class_idx && Some(j) != id_idx && Some(j) != match_idx)
        .filter(|&j| !excluded.contains(raw.header[j].as_str()))
        .collect();

    let rows_in = raw.rows.len();
    let mut kept = Vec::with_capacity(rows_in);
    let mut labels = Vec::with_capacity(rows_in);
    for (r, row) in raw.rows.iter().enumerate() {
        if row.len() != raw.header.len() {
            return Err(Error::data(format!("row {} has {} cells, header has {}", r + 1, row.len(), raw.header.len())));
        }
        if let Some(c) = parse_class(&row[class_idx], &opts.class_label)? {
            kept.push(r);
            labels.push(c);
        }
    }
    let dropped = rows_in - kept.len();
    if dropped > 0 {
        log::info!("dropped {dropped} instances with a missing class");
    }

    let instance_ids = id_idx.map(|j| kept.iter().map(|&r| raw.rows[r][j].clone()).collect::<Vec<_>>());
    let match_group_ids = match_idx.map(|j| kept.iter().map(|&r| raw.rows[r][j].clone()).collect::<Vec<_>>());

    let threshold = opts.distinct_threshold.unwrap_or(DEFAULT_DISTINCT_THRESHOLD);
    let mut features = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    let mut all_missing = Vec::new();
    for &j in &feature_cols {
        let name = &raw.header[j];
        let cells: Vec<&str> = kept.iter().map(|&r| raw.rows[r][j].as_str()).collect();
        let (meta, col) = match encode_column(name, &cells, opts.type_overrides.get(name).copied(), threshold)? {
            Some(x) => x,
            None => {
                warn!("feature '{name}' has no observed values and is dropped");
                all_missing.push(name.clone());
                continue;
            }
        };
        features.push(meta);
        columns.push(col);
    }

    let n = kept.len();
    let p = features.len();
    let mut data = Vec::with_capacity(n * p);
    for r in 0..n {
        data.extend(columns.iter().map(|c| c[r]));
    }
    let d = Dataset {
        features,
        values: Table::new(n, p, data),
        class_labels: labels,
        instance_ids,
        match_group_ids,
        class_column: opts.class_label.clone(),
        id_column: opts.instance_id.clone(),
        match_column: opts.match_id.clone(),
    };
    d.validate()?;
    let report = CleaningReport {
        instances_dropped_missing_class: dropped,
        columns_excluded,
        rows_in,
        rows_out: n,
        columns_dropped_all_missing: all_missing,
    };
    Ok((d, report))
}

fn encode_column(
    name: &str,
    cells: &[&str],
    override_kind: Option<FeatureKind>,
    threshold: usize,
) -> Result<Option<(FeatureMeta, Vec<Option<f64>>)>> {
    let missing_count = cells.iter().filter(|c| is_missing(c)).count();
    if missing_count == cells.len() {
        return Ok(None);
    }
    let numeric: Option<Vec<Option<f64>>> = cells
        .iter()
        .map(|c| if is_missing(c) { Some(None) } else { parse_number(c).map(Some) })
        .collect();
    let kind = match (&numeric, override_kind) {
        (_, Some(FeatureKind::Categorical)) => FeatureKind::Categorical,
        (Some(_), Some(FeatureKind::Quantitative)) => FeatureKind::Quantitative,
        (None, Some(FeatureKind::Quantitative)) => {
            return Err(Error::config(format!("column '{name}' has non-numeric values and cannot be quantitative")));
        }
        (Some(vals), None) => infer_kind(vals, threshold).expect("column has observed values"),
        (None, None) => FeatureKind::Categorical,
    };

    match kind {
        FeatureKind::Quantitative => {
            let vals = numeric.expect("checked numeric");
            let observed = vals.iter().flatten();
            let min = observed.clone().copied().fold(f64::INFINITY, f64::min);
            let max = observed.copied().fold(f64::NEG_INFINITY, f64::max);
            let meta = FeatureMeta {
                name: name.to_string(),
                kind,
                observed_levels: Vec::new(),
                observed_min: Some(min),
                observed_max: Some(max),
                missing_count,
            };
            Ok(Some((meta, vals)))
        }
        FeatureKind::Categorical => {
            let labels: BTreeSet<String> = cells.iter().filter(|c| !is_missing(c)).map(|c| level_label(c)).collect();
            let mut levels: Vec<String> = labels.into_iter().collect();
            if levels.iter().all(|l| parse_number(l).is_some()) {
                levels.sort_by(|a, b| parse_number(a).unwrap().total_cmp(&parse_number(b).unwrap()));
            }
            let index: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            let col = cells
                .iter()
                .map(|c| if is_missing(c) { None } else { Some(index[level_label(c).as_str()] as f64) })
                .collect();
            let meta = FeatureMeta {
                name: name.to_string(),
                kind,
                observed_levels: levels,
                observed_min: None,
                observed_max: None,
                missing_count,
            };
            Ok(Some((meta, col)))
        }
    }
}

/// Read new data against a stored schema. The class column is optional;
/// rows with a missing class are kept (labels are only reported back).
/// Unknown categorical levels are treated as missing.
pub fn load_with_schema(path: impl AsRef<Path>, schema: &Schema) -> Result<NewData> {
    let raw = read_raw(path.as_ref())?;
    let missing: Vec<&str> = schema
        .features
        .iter()
        .filter(|f| !raw.header.iter().any(|h| *h == f.name))
        .map(|f| f.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::data(format!("new data is missing required columns: {}", missing.join(", "))));
    }
    let col_of = |name: &str| raw.header.iter().position(|h| h == name);
    let feature_cols: Vec<usize> = schema.features.iter().map(|f| col_of(&f.name).unwrap()).collect();
    let class_idx = col_of(&schema.class_column);
    let id_idx = schema.id_column.as_deref().and_then(col_of);

    let n = raw.rows.len();
    let mut data = Vec::with_capacity(n * feature_cols.len());
    let mut unknown = 0usize;
    for (r, row) in raw.rows.iter().enumerate() {
        if row.len() != raw.header.len() {
            return Err(Error::data(format!("row {} has {} cells, header has {}", r + 1, row.len(), raw.header.len())));
        }
        for (f, &j) in schema.features.iter().zip(&feature_cols) {
            let cell = row[j].as_str();
            let v = if is_missing(cell) {
                None
            } else {
                match f.kind {
                    FeatureKind::Categorical => match f.encode_level(cell) {
                        Some(code) => Some(code as f64),
                        None => {
                            unknown += 1;
                            None
                        }
                    },
                    FeatureKind::Quantitative => Some(parse_number(cell).ok_or_else(|| {
                        Error::data(format!("non-numeric value \"{cell}\" in quantitative column '{}'", f.name))
                    })?),
                }
            };
            data.push(v);
        }
    }
    if unknown > 0 {
        warn!("{unknown} cells held categorical levels unseen in training and were treated as missing");
    }
    let labels = match class_idx {
        Some(c) => Some(
            raw.rows
                .iter()
                .map(|row| parse_class(&row[c], &schema.class_column))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let row_labels = raw
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| id_idx.map_or_else(|| r.to_string(), |j| row[j].clone()))
        .collect();
    Ok(NewData { values: Table::new(n, feature_cols.len(), data), labels, row_labels })
}

/// Unlabeled (or optionally labeled) rows encoded under a [`Schema`].
#[derive(Debug, Clone)]
pub struct NewData {
    pub values: Table,
    pub labels: Option<Vec<Option<u8>>>,
    pub row_labels: Vec<String>,
}
