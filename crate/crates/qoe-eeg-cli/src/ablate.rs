//! `ablate`: rerun cross-validation with each configured band or
//! electrode removed and record the score deltas.

use std::path::Path;

use qoe_eeg::dataset::load_labeled_dataset;
use qoe_eeg::train::{ablate, TrainConfig};

use crate::artifacts::{AblationDocument, AblationSummary};
use crate::context::{CliError, CommandContext};

pub fn run(ctx: &mut CommandContext, features: &Path) -> Result<(), CliError> {
    ctx.guard(&["ablation.json"])?;
    let dataset = load_labeled_dataset(features)?;
    let train_config = TrainConfig { seed: ctx.seed, ..ctx.config.train.clone() };

    let report =
        ablate(&dataset, &ctx.config.model, &train_config, &ctx.config.ablations)?;
    ctx.note(format!(
        "baseline accuracy {:.3}, {} ablations",
        report.baseline.mean_accuracy,
        report.entries.len()
    ));

    let document = AblationDocument {
        factor: dataset.factor,
        architecture: ctx.config.model.architecture.name().to_string(),
        seed: train_config.seed,
        folds: train_config.folds,
        baseline_accuracy: report.baseline.mean_accuracy,
        baseline_macro_f1: report.baseline.mean_macro_f1,
        entries: report
            .entries
            .iter()
            .map(|e| AblationSummary {
                kind: e.kind,
                name: e.name.clone(),
                dropped_columns: e.dropped_columns.len(),
                mean_accuracy: e.cv.mean_accuracy,
                mean_macro_f1: e.cv.mean_macro_f1,
                delta_accuracy: e.delta_accuracy,
                delta_macro_f1: e.delta_macro_f1,
            })
            .collect(),
    };
    ctx.write_json("ablation.json", &document)
}
