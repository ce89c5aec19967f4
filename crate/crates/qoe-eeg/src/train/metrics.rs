//! Classification metrics for the three rating classes.
//!
//! All macro averages use the zero-division convention: a class with an
//! empty denominator contributes 0 to the mean rather than being skipped,
//! so a collapsed classifier scores visibly low instead of looking fine on
//! the classes it never predicts.

use serde::{Deserialize, Serialize};

use super::{to_input, TrainError};
use crate::dataset::{LabeledDataset, NUM_CLASSES};
use crate::nn::TrainedModel;

/// Accuracy, macro-averaged precision/recall/F1, and the confusion matrix
/// for one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class_precision: [f64; NUM_CLASSES],
    pub per_class_recall: [f64; NUM_CLASSES],
    pub per_class_f1: [f64; NUM_CLASSES],
    /// `confusion[t][p]` counts examples of true class `t` predicted as `p`.
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl EvalReport {
    /// Computes every metric from parallel truth/prediction lists.
    pub fn from_predictions(
        truths: &[usize],
        predictions: &[usize],
    ) -> Result<EvalReport, TrainError> {
        if truths.len() != predictions.len() {
            return Err(TrainError::LengthMismatch {
                truths: truths.len(),
                predictions: predictions.len(),
            });
        }
        if truths.is_empty() {
            return Err(TrainError::EmptyEvalSet);
        }

        let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for (&t, &p) in truths.iter().zip(predictions) {
            for &label in [t, p].iter() {
                if label >= NUM_CLASSES {
                    return Err(TrainError::BadLabel { label, classes: NUM_CLASSES });
                }
            }
            confusion[t][p] += 1;
        }

        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let mut precision = [0.0; NUM_CLASSES];
        let mut recall = [0.0; NUM_CLASSES];
        let mut f1 = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            let tp = confusion[c][c];
            let predicted: u64 = (0..NUM_CLASSES).map(|t| confusion[t][c]).sum();
            let actual: u64 = confusion[c].iter().sum();
            precision[c] = ratio(tp, predicted);
            recall[c] = ratio(tp, actual);
            f1[c] = if precision[c] + recall[c] > 0.0 {
                2.0 * precision[c] * recall[c] / (precision[c] + recall[c])
            } else {
                0.0
            };
        }

        let n = truths.len();
        let correct: u64 = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
        let mean = |v: &[f64; NUM_CLASSES]| v.iter().sum::<f64>() / NUM_CLASSES as f64;
        Ok(EvalReport {
            examples: n,
            accuracy: correct as f64 / n as f64,
            macro_precision: mean(&precision),
            macro_recall: mean(&recall),
            macro_f1: mean(&f1),
            per_class_precision: precision,
            per_class_recall: recall,
            per_class_f1: f1,
            confusion,
        })
    }

    /// Recall per true class, i.e. the confusion matrix diagonal after row
    /// normalization.
    pub fn class_recall(&self) -> [f64; NUM_CLASSES] {
        self.per_class_recall
    }
}

/// Runs the model over every example and scores the predictions.
pub fn evaluate(
    model: &TrainedModel,
    dataset: &LabeledDataset,
) -> Result<EvalReport, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyEvalSet);
    }
    let mut predictions = Vec::with_capacity(dataset.len());
    for example in &dataset.examples {
        predictions.push(model.predict(&to_input(&example.tensor))?);
    }
    EvalReport::from_predictions(&dataset.labels(), &predictions)
}
