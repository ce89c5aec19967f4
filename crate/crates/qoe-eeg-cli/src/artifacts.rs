//! JSON artifact schemas shared by the write side (train, gridsearch,
//! ablate) and the read side (report).

use serde::{Deserialize, Serialize};

use qoe_eeg::dataset::QoEFactor;
use qoe_eeg::nn::ModelConfig;
use qoe_eeg::train::{AblationKind, EpochStats, EvalReport};

/// `eval.json`: one trained model scored on its holdout split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDocument {
    pub factor: QoEFactor,
    pub architecture: String,
    pub seed: u64,
    pub train_examples: usize,
    pub test_examples: usize,
    pub final_train_loss: f64,
    pub train: EvalReport,
    pub test: EvalReport,
}

/// `train.json`: the loss trajectory behind an eval document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDocument {
    pub seed: u64,
    pub epochs: usize,
    pub history: Vec<EpochStats>,
}

/// One row of `grid.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCellSummary {
    pub index: usize,
    pub units1: usize,
    pub units2: usize,
    pub dropout: f64,
    pub l2: f64,
    pub trainable_params: usize,
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
}

/// `grid.json`: every cross-validated cell plus the winning config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDocument {
    pub factor: QoEFactor,
    pub seed: u64,
    pub folds: usize,
    pub cells: Vec<GridCellSummary>,
    /// Cell indices from best to worst.
    pub ranking: Vec<usize>,
    pub best: ModelConfig,
}

/// One row of `ablation.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub kind: AblationKind,
    pub name: String,
    pub dropped_columns: usize,
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
    pub delta_accuracy: f64,
    pub delta_macro_f1: f64,
}

/// `ablation.json`: baseline cross-validation scores and the drop from
/// each band/electrode removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationDocument {
    pub factor: QoEFactor,
    pub architecture: String,
    pub seed: u64,
    pub folds: usize,
    pub baseline_accuracy: f64,
    pub baseline_macro_f1: f64,
    pub entries: Vec<AblationSummary>,
}
