//! `extract`: band-pass filter each recording and reduce it to a feature
//! tensor, then write a dataset manifest pairing tensors with ratings.

use std::path::Path;

use rayon::prelude::*;

use qoe_eeg::dataset::{DatasetManifest, DatasetManifestEntry};
use qoe_eeg::dsp::{
    canonical_bands, design_bandpass, extract_features, filter_recording, write_features,
    FeatureSidecar, WindowPlan, DEFAULT_DE_FLOOR,
};
use qoe_eeg::ingest::{load_manifest, write_ratings};

use crate::context::{CliError, CommandContext};

pub fn run(ctx: &mut CommandContext, input: &Path) -> Result<(), CliError> {
    ctx.guard(&["features_manifest.json"])?;
    let pairs = load_manifest(input)?;
    if pairs.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} lists no recordings",
            input.display()
        )));
    }

    for name in ["features", "ratings"] {
        let dir = ctx.out_path(name);
        std::fs::create_dir_all(&dir).map_err(|e| {
            CliError::Runtime(format!("cannot create {}: {e}", dir.display()))
        })?;
    }
    let out_root = ctx.out_path("");

    let entries: Vec<DatasetManifestEntry> = pairs
        .par_iter()
        .enumerate()
        .map(|(index, (recording, ratings))| -> Result<DatasetManifestEntry, CliError> {
            let fs = recording.sample_rate_hz;
            let filter = design_bandpass(1.0, 47.0, 4, fs)?;
            let plan = WindowPlan::for_sample_rate(fs);
            let bands = canonical_bands();

            let filtered = filter_recording(&filter, recording)?;
            let tensor = extract_features(&filtered, &plan, &bands, DEFAULT_DE_FLOOR)?;
            let sidecar = FeatureSidecar {
                subject_id: tensor.subject_id.clone(),
                video_id: tensor.video_id.clone(),
                rows: tensor.rows,
                plan,
                bands,
                filter: filter.design.clone(),
                de_floor: DEFAULT_DE_FLOOR,
            };

            let features_rel = format!("features/feat_{index:03}.csv");
            let ratings_rel = format!("ratings/feat_{index:03}.ratings.json");
            write_features(&tensor, &sidecar, &out_root.join(&features_rel))?;
            write_ratings(ratings, &out_root.join(&ratings_rel))?;
            Ok(DatasetManifestEntry {
                features: features_rel.into(),
                ratings: ratings_rel.into(),
            })
        })
        .collect::<Result<_, _>>()?;

    ctx.note(format!("extracted {} feature tensors", entries.len()));
    let manifest =
        DatasetManifest { factor: ctx.config.factor, entries, seed: ctx.seed };
    ctx.write_json("features_manifest.json", &manifest)
}
