//! Stratified hold-out splits and k-fold assignments.

use serde::{Deserialize, Serialize};

use super::{DatasetError, NUM_CLASSES};
use crate::rng::{self, Stream};

fn indices_by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); NUM_CLASSES];
    for (i, &label) in labels.iter().enumerate() {
        by_class[label].push(i);
    }
    by_class
}

/// Splits example indices into train and test sets, stratified by class.
///
/// Each class is shuffled under a seed derived from `seed` and the class
/// index, then the rounded train share is taken (ties round toward train).
/// Both returned lists are in ascending index order.
pub fn stratified_split(
    labels: &[usize],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction { value: train_fraction });
    }
    let by_class = indices_by_class(labels);
    if let Some(class) = by_class.iter().position(|c| c.is_empty()) {
        return Err(DatasetError::EmptyClass { class });
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        let mut stream = Stream::derived(seed, &[rng::tag("split"), class as u64]);
        stream.shuffle(&mut members);
        let n_train = (train_fraction * members.len() as f64 + 0.5).floor() as usize;
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Which fold each example belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// `assignment[i]` is the fold of example `i`.
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    /// Train and validation index lists for one fold, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, &f) in self.assignment.iter().enumerate() {
            if f == fold {
                val.push(i);
            } else {
                train.push(i);
            }
        }
        (train, val)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fold assignment serializes")
    }

    pub fn from_json(text: &str) -> Result<FoldAssignment, DatasetError> {
        let fa: FoldAssignment = serde_json::from_str(text)
            .map_err(|e| DatasetError::BadFoldAssignment { detail: e.to_string() })?;
        if fa.k < 2 {
            return Err(DatasetError::BadFoldAssignment {
                detail: format!("fold count {} is too small", fa.k),
            });
        }
        if let Some(&bad) = fa.assignment.iter().find(|&&f| f >= fa.k) {
            return Err(DatasetError::BadFoldAssignment {
                detail: format!("fold index {bad} out of range for k={}", fa.k),
            });
        }
        Ok(fa)
    }
}

/// Assigns every example to one of `k` folds, stratified by class.
///
/// Each class is shuffled under a derived seed and dealt round-robin, so
/// per-fold class counts differ from perfect proportionality by at most one.
pub fn stratified_kfold(
    labels: &[usize],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, DatasetError> {
    if k < 2 {
        return Err(DatasetError::BadFoldCount { k });
    }
    if labels.len() < k {
        return Err(DatasetError::TooFewExamples { have: labels.len(), need: k });
    }

    let mut assignment = vec![0usize; labels.len()];
    for (class, mut members) in indices_by_class(labels).into_iter().enumerate() {
        let mut stream = Stream::derived(seed, &[rng::tag("kfold"), class as u64]);
        stream.shuffle(&mut members);
        for (j, &example) in members.iter().enumerate() {
            assignment[example] = j % k;
        }
    }
    Ok(FoldAssignment { k, assignment })
}
