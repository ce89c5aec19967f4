//! Exhaustive hyperparameter search over the recurrent-model grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cross_validate, CvResult, TrainConfig, TrainError};
use crate::nn::ModelConfig;
use crate::rng::{derive, tag};

/// Axis values for the four swept hyperparameters. Cells are enumerated
/// with `units1` outermost and `l2` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub units1: Vec<usize>,
    pub units2: Vec<usize>,
    pub dropout: Vec<f64>,
    pub l2: Vec<f64>,
}

impl GridAxes {
    /// The full 4 x 4 x 3 x 3 table: 144 cells.
    pub fn standard() -> GridAxes {
        GridAxes {
            units1: vec![16, 32, 64, 128],
            units2: vec![16, 32, 64, 128],
            dropout: vec![0.2, 0.4, 0.7],
            l2: vec![0.2, 0.4, 0.6],
        }
    }

    pub fn len(&self) -> usize {
        self.units1.len() * self.units2.len() * self.dropout.len() * self.l2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<(), TrainError> {
        for (axis, empty) in [
            ("units1", self.units1.is_empty()),
            ("units2", self.units2.is_empty()),
            ("dropout", self.dropout.is_empty()),
            ("l2", self.l2.is_empty()),
        ] {
            if empty {
                return Err(TrainError::EmptyAxis { axis });
            }
        }
        Ok(())
    }
}

/// Expands the axes into one validated model config per cell. Pure: the
/// cell order is a function of `base` and `axes` alone.
pub fn enumerate_grid(
    base: &ModelConfig,
    axes: &GridAxes,
) -> Result<Vec<ModelConfig>, TrainError> {
    axes.validate()?;
    let mut cells = Vec::with_capacity(axes.len());
    for &units1 in &axes.units1 {
        for &units2 in &axes.units2 {
            for &dropout in &axes.dropout {
                for &l2 in &axes.l2 {
                    let config =
                        ModelConfig { units1, units2, dropout, l2, ..base.clone() };
                    config.validate()?;
                    cells.push(config);
                }
            }
        }
    }
    Ok(cells)
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub config: ModelConfig,
    pub trainable_params: usize,
    pub cv: CvResult,
}

/// Every cell plus the ranking order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
    /// Cell indices from best to worst.
    pub ranking: Vec<usize>,
}

impl GridResult {
    pub fn best(&self) -> &CellResult {
        &self.cells[self.ranking[0]]
    }
}

/// Cell indices ordered by mean macro F1 descending, then trainable
/// parameter count ascending, then cell index. The parameter-count
/// tiebreak prefers the cheaper of two equally scoring models.
fn ranked_order(keys: &[(f64, usize)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .0
            .total_cmp(&keys[a].0)
            .then(keys[a].1.cmp(&keys[b].1))
            .then(a.cmp(&b))
    });
    order
}

/// Cross-validates every cell in the grid. Cell i trains with seed
/// `derive(seed, [tag("grid-cell"), i])`, so adding or removing axis
/// values changes which seeds exist but never what an existing cell
/// computes.
pub fn grid_search(
    dataset: &crate::dataset::LabeledDataset,
    base: &ModelConfig,
    axes: &GridAxes,
    train_config: &TrainConfig,
) -> Result<GridResult, TrainError> {
    train_config.validate()?;
    let configs = enumerate_grid(base, axes)?;

    let cells: Vec<CellResult> = configs
        .into_par_iter()
        .enumerate()
        .map(|(index, config)| -> Result<CellResult, TrainError> {
            let cell_train = TrainConfig {
                seed: derive(train_config.seed, &[tag("grid-cell"), index as u64]),
                ..train_config.clone()
            };
            let cv = cross_validate(dataset, &config, &cell_train)?;
            let (trainable_params, _) = config.param_count()?;
            Ok(CellResult { index, config, trainable_params, cv })
        })
        .collect::<Result<_, _>>()?;

    let keys: Vec<(f64, usize)> =
        cells.iter().map(|c| (c.cv.mean_macro_f1, c.trainable_params)).collect();
    Ok(GridResult { ranking: ranked_order(&keys), cells })
}
