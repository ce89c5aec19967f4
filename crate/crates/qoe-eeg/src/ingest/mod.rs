//! Raw recording and rating ingestion.
//!
//! A recording is a fixed set of eight scalp electrodes sampled at a nominal
//! 250 Hz. On disk it is a plain CSV (one `time` column plus one column per
//! electrode, microvolts) next to a `.meta.json` sidecar carrying identity and
//! sampling metadata. Subjective ratings arrive as a small JSON document per
//! recording, and a manifest JSON lists (recording, ratings) pairs for batch
//! loading. The [`synth`] submodule generates labeled synthetic recordings
//! with known spectral content, which the tests and the `synth` CLI command
//! use in place of a real export.

mod format;
pub mod synth;

pub use format::{
    load_manifest, load_ratings, load_recording, parse_manifest_json, parse_meta_json,
    parse_ratings_json, parse_recording_csv, write_ratings, write_recording, Manifest,
    ManifestEntry, RecordingMeta,
};
pub use synth::{synth_recording, SynthDatasetSpec, SynthSpec, TierSpec, ToneSpec};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::dataset::QoEFactor;

/// Number of electrodes in the canonical montage.
pub const NUM_CHANNELS: usize = 8;

/// The eight scalp electrodes used throughout, in canonical order.
///
/// Frontal pair, temporal pair, parietal pair, occipital pair. All loaded
/// recordings are reordered to this layout so that feature column indices
/// stay comparable across files regardless of export column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Electrode {
    Fp1,
    Fp2,
    T3,
    T4,
    P3,
    P4,
    O1,
    O2,
}

impl Electrode {
    /// All electrodes in canonical order.
    pub const ALL: [Electrode; NUM_CHANNELS] = [
        Electrode::Fp1,
        Electrode::Fp2,
        Electrode::T3,
        Electrode::T4,
        Electrode::P3,
        Electrode::P4,
        Electrode::O1,
        Electrode::O2,
    ];

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        Electrode::ALL.iter().position(|&e| e == self).unwrap()
    }

    /// Electrode label as it appears in CSV headers.
    pub fn name(self) -> &'static str {
        match self {
            Electrode::Fp1 => "Fp1",
            Electrode::Fp2 => "Fp2",
            Electrode::T3 => "T3",
            Electrode::T4 => "T4",
            Electrode::P3 => "P3",
            Electrode::P4 => "P4",
            Electrode::O1 => "O1",
            Electrode::O2 => "O2",
        }
    }

    /// Parses an electrode label (exact match, case-sensitive).
    pub fn from_name(name: &str) -> Option<Electrode> {
        Electrode::ALL.iter().copied().find(|e| e.name() == name)
    }
}

impl fmt::Display for Electrode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A multi-channel EEG recording in memory.
///
/// `samples[c]` holds the full time series for canonical channel `c` in
/// microvolts. All channels have the same length and the recording is long
/// enough for at least one analysis window (three seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub subject_id: String,
    pub video_id: String,
    pub sample_rate_hz: f64,
    /// Per-channel sample vectors, indexed by [`Electrode::index`].
    pub samples: Vec<Vec<f64>>,
}

impl RawRecording {
    /// Number of samples per channel.
    pub fn num_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Recording length in seconds.
    pub fn duration_s(&self) -> f64 {
        self.num_samples() as f64 / self.sample_rate_hz
    }

    /// Channel data for one electrode.
    pub fn channel(&self, e: Electrode) -> &[f64] {
        &self.samples[e.index()]
    }

    /// Checks the structural invariants.
    ///
    /// Exactly eight equally long channels, a positive finite sample rate,
    /// finite sample values, and at least three seconds of data.
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(IngestError::BadMetadata {
                detail: format!("sample_rate_hz must be positive, got {}", self.sample_rate_hz),
            });
        }
        if self.samples.len() != NUM_CHANNELS {
            return Err(IngestError::BadMetadata {
                detail: format!("expected {NUM_CHANNELS} channels, got {}", self.samples.len()),
            });
        }
        let n = self.num_samples();
        for (c, ch) in self.samples.iter().enumerate() {
            if ch.len() != n {
                return Err(IngestError::BadMetadata {
                    detail: format!(
                        "channel {} has {} samples, channel Fp1 has {n}",
                        Electrode::ALL[c],
                        ch.len()
                    ),
                });
            }
            if let Some(i) = ch.iter().position(|v| !v.is_finite()) {
                return Err(IngestError::MalformedRow {
                    line: i + 2,
                    detail: format!("non-finite sample on channel {}", Electrode::ALL[c]),
                });
            }
        }
        let min = (3.0 * self.sample_rate_hz).round() as usize;
        if n < min {
            return Err(IngestError::ShortRecording { samples: n, required: min });
        }
        Ok(())
    }
}

/// One subject's rating of one video, on a 1..=9 scale per QoE factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub subject_id: String,
    pub video_id: String,
    /// Scores for all five factors, each in 1..=9.
    pub scores: BTreeMap<QoEFactor, u8>,
}

impl RatingRecord {
    /// Checks that every factor is present and every score is in 1..=9.
    pub fn validate(&self) -> Result<(), IngestError> {
        for factor in QoEFactor::ALL {
            match self.scores.get(&factor) {
                None => {
                    return Err(IngestError::BadRatings {
                        detail: format!("missing factor {factor}"),
                    })
                }
                Some(&s) if !(1..=9).contains(&s) => {
                    return Err(IngestError::BadRatings {
                        detail: format!("factor {factor} score {s} outside 1..=9"),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Score for one factor. Only valid after [`RatingRecord::validate`].
    pub fn score(&self, factor: QoEFactor) -> u8 {
        self.scores[&factor]
    }
}

/// Errors from loading, validating, or synthesizing recordings.
#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad CSV header: {detail}")]
    BadHeader { detail: String },

    #[error("required channel {channel} not present in CSV header")]
    MissingChannel { channel: String },

    #[error("malformed CSV row at line {line}: {detail}")]
    MalformedRow { line: usize, detail: String },

    #[error("bad recording metadata: {detail}")]
    BadMetadata { detail: String },

    #[error("bad ratings: {detail}")]
    BadRatings { detail: String },

    #[error("bad manifest: {detail}")]
    BadManifest { detail: String },

    #[error("manifest entry {index}: {source}")]
    Entry {
        index: usize,
        #[source]
        source: Box<IngestError>,
    },

    #[error("recording and ratings disagree: {detail}")]
    PairMismatch { detail: String },

    #[error("recording too short: {samples} samples, need at least {required}")]
    ShortRecording { samples: usize, required: usize },

    #[error("invalid synthesis spec: {detail}")]
    BadSynthSpec { detail: String },
}

impl IngestError {
    fn io(path: &std::path::Path, source: std::io::Error) -> IngestError {
        IngestError::Io { path: path.to_path_buf(), source }
    }

    fn at_entry(self, index: usize) -> IngestError {
        IngestError::Entry { index, source: Box::new(self) }
    }
}
