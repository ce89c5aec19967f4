//! `gridsearch`: cross-validate every grid cell, then train the winning
//! configuration on a fresh split so it gets the same eval artifact a
//! plain `train` run would produce.

use std::path::Path;

use qoe_eeg::dataset::load_labeled_dataset;
use qoe_eeg::nn::save_checkpoint;
use qoe_eeg::train::{grid_search, TrainConfig};

use crate::artifacts::{GridCellSummary, GridDocument};
use crate::context::{CliError, CommandContext};
use crate::traincmd::split_train_eval;

pub fn run(ctx: &mut CommandContext, features: &Path) -> Result<(), CliError> {
    ctx.guard(&["grid.json", "eval.json", "model.ckpt"])?;
    let dataset = load_labeled_dataset(features)?;
    let train_config = TrainConfig { seed: ctx.seed, ..ctx.config.train.clone() };

    let result =
        grid_search(&dataset, &ctx.config.model, &ctx.config.grid, &train_config)?;
    let best = result.best();
    ctx.note(format!(
        "searched {} cells, best units1={} units2={} dropout={} l2={} \
         (mean macro F1 {:.3})",
        result.cells.len(),
        best.config.units1,
        best.config.units2,
        best.config.dropout,
        best.config.l2,
        best.cv.mean_macro_f1
    ));

    let document = GridDocument {
        factor: dataset.factor,
        seed: train_config.seed,
        folds: train_config.folds,
        cells: result
            .cells
            .iter()
            .map(|c| GridCellSummary {
                index: c.index,
                units1: c.config.units1,
                units2: c.config.units2,
                dropout: c.config.dropout,
                l2: c.config.l2,
                trainable_params: c.trainable_params,
                mean_accuracy: c.cv.mean_accuracy,
                mean_macro_f1: c.cv.mean_macro_f1,
            })
            .collect(),
        ranking: result.ranking.clone(),
        best: best.config.clone(),
    };
    let best_config = best.config.clone();
    ctx.write_json("grid.json", &document)?;

    let (outcome, eval) = split_train_eval(&dataset, &best_config, &train_config)?;
    ctx.note(format!("retrained best cell, holdout accuracy {:.3}", eval.test.accuracy));
    save_checkpoint(&outcome.model, &ctx.out_path("model.ckpt"))?;
    ctx.note("wrote model.ckpt".to_string());
    ctx.write_json("eval.json", &eval)
}
