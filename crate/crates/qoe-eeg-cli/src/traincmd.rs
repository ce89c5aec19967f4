//! `train`: fit one model on a stratified train split and score the
//! holdout.

use std::path::Path;

use qoe_eeg::dataset::{load_labeled_dataset, stratified_split, LabeledDataset};
use qoe_eeg::nn::{save_checkpoint, ModelConfig};
use qoe_eeg::rng::{derive, tag};
use qoe_eeg::train::{evaluate, train_model, TrainConfig, TrainOutcome};

use crate::artifacts::{EvalDocument, TrainDocument};
use crate::context::{CliError, CommandContext};

/// The single-split protocol shared with `gridsearch`: split by
/// `train_fraction`, fit the normalizer on the train side only, train, and
/// evaluate both sides.
pub fn split_train_eval(
    dataset: &LabeledDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(TrainOutcome, EvalDocument), CliError> {
    let split_seed = derive(train_config.seed, &[tag("split")]);
    let (train_idx, test_idx) =
        stratified_split(&dataset.labels(), train_config.train_fraction, split_seed)?;
    let table = dataset.fit_normalizer(&train_idx)?;
    let normalized = dataset.normalized(&table)?;
    let train_set = normalized.subset(&train_idx);
    let test_set = normalized.subset(&test_idx);

    let outcome = train_model(&train_set, model_config, train_config)?;
    let train_report = evaluate(&outcome.model, &train_set)?;
    let test_report = evaluate(&outcome.model, &test_set)?;
    let document = EvalDocument {
        factor: dataset.factor,
        architecture: model_config.architecture.name().to_string(),
        seed: train_config.seed,
        train_examples: train_idx.len(),
        test_examples: test_idx.len(),
        final_train_loss: outcome.final_loss(),
        train: train_report,
        test: test_report,
    };
    Ok((outcome, document))
}

pub fn run(ctx: &mut CommandContext, features: &Path) -> Result<(), CliError> {
    ctx.guard(&["eval.json", "train.json", "model.ckpt"])?;
    let dataset = load_labeled_dataset(features)?;
    let train_config = TrainConfig { seed: ctx.seed, ..ctx.config.train.clone() };

    let (outcome, document) =
        split_train_eval(&dataset, &ctx.config.model, &train_config)?;
    ctx.note(format!(
        "trained {} on {} examples, holdout accuracy {:.3}",
        document.architecture, document.train_examples, document.test.accuracy
    ));

    save_checkpoint(&outcome.model, &ctx.out_path("model.ckpt"))?;
    ctx.note("wrote model.ckpt".to_string());
    ctx.write_json(
        "train.json",
        &TrainDocument {
            seed: train_config.seed,
            epochs: train_config.epochs,
            history: outcome.history,
        },
    )?;
    ctx.write_json("eval.json", &document)
}
