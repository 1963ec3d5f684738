//! k-fold cross-validation assignment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvStrategy {
    Random,
    Stratified,
    Matched,
}

impl fmt::Display for CvStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CvStrategy::Random => "random",
            CvStrategy::Stratified => "stratified",
            CvStrategy::Matched => "matched",
        })
    }
}

impl FromStr for CvStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(CvStrategy::Random),
            "stratified" => Ok(CvStrategy::Stratified),
            "matched" => Ok(CvStrategy::Matched),
            other => Err(Error::config(format!("unknown cv strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub strategy: CvStrategy,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

/// Row indices of one train/test split, each in original instance order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// `instance_id,fold` (row index when the dataset has no IDs).
    pub fn write_csv(&self, d: &Dataset, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([d.id_column.as_deref().unwrap_or("instance_id"), "fold"])?;
        for (row, f) in self.assignment.iter().enumerate() {
            w.write_record([d.row_label(row), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Train/test row sets for `fold`.
///
/// # Panics
/// If `fold >= plan.k`.
pub fn split(plan: &FoldPlan, fold: usize) -> Split {
    assert!(fold < plan.k, "fold {fold} out of range for k = {}", plan.k);
    Split { train: plan.train_rows(fold), test: plan.test_rows(fold) }
}

pub fn make_folds(d: &Dataset, k: usize, strategy: CvStrategy, seed: u64) -> Result<FoldPlan> {
    let groups = d.match_group_ids.as_deref();
    if strategy == CvStrategy::Matched && groups.is_none() {
        return Err(Error::config("matched cross-validation requires a match id column"));
    }
    let assignment = assign_folds(&d.class_labels, groups, k, strategy, seed)?;
    Ok(FoldPlan { k, strategy, assignment, seed })
}

/// Fold index per instance. `groups` is only read by the matched strategy;
/// a blank group key makes the instance its own group.
pub fn assign_folds(
    labels: &[u8],
    groups: Option<&[String]>,
    k: usize,
    strategy: CvStrategy,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::config(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::config(format!("{n} instances cannot fill {k} folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; n];
    match strategy {
        CvStrategy::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for (pos, &i) in order.iter().enumerate() {
                assignment[i] = pos % k;
            }
        }
        CvStrategy::Stratified => {
            let mut offset = 0;
            for class in [0u8, 1] {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                if members.len() < k {
                    return Err(Error::config(format!(
                        "stratified {k}-fold needs at least {k} instances of class {class}, found {}",
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                for (pos, &i) in members.iter().enumerate() {
                    assignment[i] = (offset + pos) % k;
                }
                offset = (offset + members.len()) % k;
            }
        }
        CvStrategy::Matched => {
            let groups = groups.ok_or_else(|| Error::config("matched cross-validation requires match ids"))?;
            assign_matched(labels, groups, k, &mut rng, &mut assignment)?;
        }
    }
    Ok(assignment)
}

fn assign_matched(
    labels: &[u8],
    groups: &[String],
    k: usize,
    rng: &mut ChaCha8Rng,
    assignment: &mut [usize],
) -> Result<()> {
    let n = labels.len();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        if g.is_empty() {
            members.push(vec![i]);
            continue;
        }
        let slot = *index.entry(g.as_str()).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[slot].push(i);
    }
    if members.len() < k {
        return Err(Error::config(format!("{} match groups cannot fill {k} folds", members.len())));
    }
    let cap = n.div_ceil(k);
    if let Some(big) = members.iter().find(|m| m.len() > cap) {
        return Err(Error::config(format!(
            "match group '{}' has {} instances, more than the fold size {cap}",
            groups[big[0]],
            big.len()
        )));
    }
    let single_class = members
        .iter()
        .filter(|m| m.len() > 1 && m.iter().all(|&i| labels[i] == labels[m[0]]))
        .count();
    if single_class > 0 {
        log::info!("{single_class} match groups contain a single class");
    }
    members.shuffle(rng);
    members.sort_by(|a, b| b.len().cmp(&a.len()));
    let mut cases = vec![0usize; k];
    let mut sizes = vec![0usize; k];
    for m in &members {
        let fold = (0..k).min_by_key(|&f| (cases[f], sizes[f], f)).unwrap_or(0);
        for &i in m {
            assignment[i] = fold;
            cases[fold] += labels[i] as usize;
        }
        sizes[fold] += m.len();
    }
    Ok(())
}
