//! Stratified k-fold cross-validation.
//!
//! Each fold fits its own normalization table on the training portion
//! only, so no statistics from held-out examples leak into the model.
//! Folds are independent and run in parallel; results come back in fold
//! order regardless of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, train_model, EvalReport, TrainConfig, TrainError};
use crate::dataset::{stratified_kfold, LabeledDataset};
use crate::nn::ModelConfig;
use crate::rng::{derive, tag};

/// One fold's validation score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_examples: usize,
    pub val_examples: usize,
    pub final_train_loss: f64,
    pub report: EvalReport,
}

/// All fold scores plus their plain means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
}

/// Runs `train_config.folds`-fold stratified cross-validation of one model
/// configuration. Fold k trains with seed `derive(seed, [tag("fold"), k])`
/// so folds differ in init and shuffling but reruns are exact.
pub fn cross_validate(
    dataset: &LabeledDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<CvResult, TrainError> {
    train_config.validate()?;
    model_config.validate()?;
    let assignment =
        stratified_kfold(&dataset.labels(), train_config.folds, train_config.seed)?;

    let folds: Vec<FoldResult> = (0..train_config.folds)
        .into_par_iter()
        .map(|fold| -> Result<FoldResult, TrainError> {
            let (train_idx, val_idx) = assignment.split(fold);
            let table = dataset.fit_normalizer(&train_idx)?;
            let normalized = dataset.normalized(&table)?;
            let train_set = normalized.subset(&train_idx);
            let val_set = normalized.subset(&val_idx);

            let fold_config = TrainConfig {
                seed: derive(train_config.seed, &[tag("fold"), fold as u64]),
                ..train_config.clone()
            };
            let outcome = train_model(&train_set, model_config, &fold_config)?;
            let report = evaluate(&outcome.model, &val_set)?;
            Ok(FoldResult {
                fold,
                train_examples: train_idx.len(),
                val_examples: val_idx.len(),
                final_train_loss: outcome.final_loss(),
                report,
            })
        })
        .collect::<Result<_, _>>()?;

    let k = folds.len() as f64;
    Ok(CvResult {
        mean_accuracy: folds.iter().map(|f| f.report.accuracy).sum::<f64>() / k,
        mean_macro_f1: folds.iter().map(|f| f.report.macro_f1).sum::<f64>() / k,
        folds,
    })
}
