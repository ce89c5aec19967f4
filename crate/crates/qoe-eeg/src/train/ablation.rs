//! Leave-one-out ablation over feature columns.
//!
//! An ablation drops every column belonging to one frequency band or one
//! electrode, shrinks the model input to match, and reruns the full
//! cross-validation protocol. The score drop against the unablated
//! baseline measures how much the removed signal contributed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cross_validate, CvResult, TrainConfig, TrainError};
use crate::dataset::LabeledDataset;
use crate::dsp::{canonical_bands, FEATURE_COLS, FEATURES_PER_ELECTRODE};
use crate::ingest::{Electrode, NUM_CHANNELS};
use crate::nn::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationKind {
    Band,
    Electrode,
}

/// One band or electrode to knock out, by index into the canonical band
/// table or electrode order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub kind: AblationKind,
    pub index: usize,
}

impl AblationSpec {
    pub fn band(index: usize) -> AblationSpec {
        AblationSpec { kind: AblationKind::Band, index }
    }

    pub fn electrode(index: usize) -> AblationSpec {
        AblationSpec { kind: AblationKind::Electrode, index }
    }

    /// All five band ablations in band order.
    pub fn bands() -> Vec<AblationSpec> {
        (0..canonical_bands().len()).map(AblationSpec::band).collect()
    }

    /// All eight electrode ablations in channel order.
    pub fn electrodes() -> Vec<AblationSpec> {
        (0..NUM_CHANNELS).map(AblationSpec::electrode).collect()
    }

    pub fn all() -> Vec<AblationSpec> {
        let mut specs = AblationSpec::bands();
        specs.extend(AblationSpec::electrodes());
        specs
    }

    pub fn name(&self) -> Result<String, TrainError> {
        self.check()?;
        Ok(match self.kind {
            AblationKind::Band => canonical_bands()[self.index].name.clone(),
            AblationKind::Electrode => Electrode::ALL[self.index].name().to_string(),
        })
    }

    /// The canonical-layout columns this ablation removes, ascending. A
    /// band takes its PSD and entropy column from every electrode; an
    /// electrode takes its whole ten-column block.
    pub fn columns(&self) -> Result<Vec<usize>, TrainError> {
        self.check()?;
        Ok(match self.kind {
            AblationKind::Band => (0..NUM_CHANNELS)
                .flat_map(|e| {
                    let base = e * FEATURES_PER_ELECTRODE + 2 * self.index;
                    [base, base + 1]
                })
                .collect(),
            AblationKind::Electrode => {
                let start = self.index * FEATURES_PER_ELECTRODE;
                (start..start + FEATURES_PER_ELECTRODE).collect()
            }
        })
    }

    fn check(&self) -> Result<(), TrainError> {
        let limit = match self.kind {
            AblationKind::Band => canonical_bands().len(),
            AblationKind::Electrode => NUM_CHANNELS,
        };
        if self.index >= limit {
            return Err(TrainError::InvalidConfig {
                detail: format!("ablation index {} outside 0..{limit}", self.index),
            });
        }
        Ok(())
    }
}

/// Ablation outcome for one band or electrode. Deltas are ablated minus
/// baseline, so a useful signal shows up as a negative delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub kind: AblationKind,
    pub name: String,
    pub dropped_columns: Vec<usize>,
    pub cv: CvResult,
    pub delta_accuracy: f64,
    pub delta_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub baseline: CvResult,
    pub entries: Vec<AblationEntry>,
}

/// Returns a copy of the dataset without the given columns. `columns`
/// must be ascending and in range; any normalization table is filtered
/// the same way.
fn drop_columns(dataset: &LabeledDataset, columns: &[usize]) -> LabeledDataset {
    let cols = dataset.shape().map(|(_, c)| c).unwrap_or(0);
    let mut keep = vec![true; cols];
    for &c in columns {
        keep[c] = false;
    }
    let kept = keep.iter().filter(|&&k| k).count();

    let mut out = dataset.clone();
    for example in &mut out.examples {
        let t = &mut example.tensor;
        let mut data = Vec::with_capacity(t.rows * kept);
        for r in 0..t.rows {
            for (c, v) in t.row(r).iter().enumerate() {
                if keep[c] {
                    data.push(*v);
                }
            }
        }
        t.data = data;
        t.cols = kept;
    }
    if let Some(table) = &mut out.normalization {
        let filtered: Vec<(f64, f64)> = table
            .iter()
            .enumerate()
            .filter(|(c, _)| keep[*c])
            .map(|(_, &pair)| pair)
            .collect();
        *table = filtered;
    }
    out
}

/// Shrinks the model input to match an ablated dataset. The conv grid
/// keeps its electrode-by-feature shape: a band ablation removes two
/// columns per electrode row, an electrode ablation removes one row.
fn ablated_config(base: &ModelConfig, spec: AblationSpec) -> Result<ModelConfig, TrainError> {
    let mut config = base.clone();
    config.input_dim = base.input_dim - spec.columns()?.len();
    match spec.kind {
        AblationKind::Band => config.convlstm.grid_cols -= 2,
        AblationKind::Electrode => config.convlstm.grid_rows -= 1,
    }
    Ok(config)
}

/// Runs the baseline cross-validation and one ablated rerun per spec.
///
/// Every run uses the same `train_config`, so the baseline here is
/// bit-identical to calling [`cross_validate`] directly and the ablated
/// runs differ from it only through the missing columns.
pub fn ablate(
    dataset: &LabeledDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    specs: &[AblationSpec],
) -> Result<AblationReport, TrainError> {
    let cols = dataset.shape().map(|(_, c)| c).unwrap_or(0);
    if cols != FEATURE_COLS || model_config.input_dim != FEATURE_COLS {
        return Err(TrainError::InvalidConfig {
            detail: format!(
                "ablation assumes the canonical {FEATURE_COLS}-column layout, got \
                 {cols} data columns and input_dim {}",
                model_config.input_dim
            ),
        });
    }

    let baseline = cross_validate(dataset, model_config, train_config)?;
    let entries: Vec<AblationEntry> = specs
        .par_iter()
        .map(|&spec| -> Result<AblationEntry, TrainError> {
            let columns = spec.columns()?;
            let reduced = drop_columns(dataset, &columns);
            let config = ablated_config(model_config, spec)?;
            let cv = cross_validate(&reduced, &config, train_config)?;
            Ok(AblationEntry {
                kind: spec.kind,
                name: spec.name()?,
                dropped_columns: columns,
                delta_accuracy: cv.mean_accuracy - baseline.mean_accuracy,
                delta_macro_f1: cv.mean_macro_f1 - baseline.mean_macro_f1,
                cv,
            })
        })
        .collect::<Result<_, _>>()?;

    Ok(AblationReport { baseline, entries })
}
