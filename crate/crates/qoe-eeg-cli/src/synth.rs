//! `synth`: generate a labeled synthetic recording set.

use rayon::prelude::*;

use qoe_eeg::ingest::{synth_recording, write_ratings, write_recording, Manifest, ManifestEntry};
use qoe_eeg::rng::{derive, tag};

use crate::context::{CliError, CommandContext};

pub fn run(ctx: &mut CommandContext) -> Result<(), CliError> {
    ctx.guard(&["synth_manifest.json"])?;
    let spec = ctx.config.synth.clone();
    let count = ctx.config.recordings;
    let base_seed = derive(ctx.seed, &[tag("synth")]);

    let dir = ctx.out_path("recordings");
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;

    let entries: Vec<ManifestEntry> = (0..count)
        .into_par_iter()
        .map(|index| -> Result<ManifestEntry, CliError> {
            let (rec_spec, ratings) = spec.recording_spec(index, base_seed);
            let recording = synth_recording(&rec_spec)?;
            let csv = dir.join(format!("rec_{index:03}.csv"));
            let ratings_path = dir.join(format!("rec_{index:03}.ratings.json"));
            write_recording(&recording, &csv)?;
            write_ratings(&ratings, &ratings_path)?;
            Ok(ManifestEntry {
                recording: format!("recordings/rec_{index:03}.csv").into(),
                ratings: format!("recordings/rec_{index:03}.ratings.json").into(),
            })
        })
        .collect::<Result<_, _>>()?;

    ctx.note(format!("synthesized {count} recordings"));
    ctx.write_json("synth_manifest.json", &Manifest { entries })
}
