//! Synthetic EEG generation.
//!
//! Recordings are built as a sum of pure sinusoids plus white Gaussian noise.
//! Noise is drawn from a per-channel stream derived from the recording seed, so
//! generation is reproducible and channels stay statistically independent no
//! matter how many samples each one consumes.
//!
//! [`SynthDatasetSpec`] sits one level up: it describes a whole labeled
//! dataset in which each recording carries an alpha-range carrier whose
//! amplitude depends on its rating tier. Band power then genuinely predicts
//! the label, which gives the training and ablation tests (and the `synth`
//! CLI command) a dataset that is separable by construction.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{Electrode, IngestError, RatingRecord, RawRecording};
use crate::dataset::QoEFactor;
use crate::rng::{derive, tag, Stream};

/// One sinusoidal component of a synthetic channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneSpec {
    pub freq_hz: f64,
    pub amplitude: f64,
}

/// Specification of a single synthetic recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subject_id: String,
    pub video_id: String,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    /// Sinusoidal components per channel; channels not listed get only noise.
    #[serde(default)]
    pub components: BTreeMap<Electrode, Vec<ToneSpec>>,
    /// Standard deviation of the additive white Gaussian noise (microvolts).
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Checks physical plausibility: positive sample rate, at least three
    /// seconds of signal, nonnegative finite noise, and every component
    /// strictly below the Nyquist frequency.
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(IngestError::BadSynthSpec {
                detail: format!("sample_rate_hz must be positive, got {}", self.sample_rate_hz),
            });
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 3.0) {
            return Err(IngestError::BadSynthSpec {
                detail: format!(
                    "duration_s must be at least 3 (one analysis window), got {}",
                    self.duration_s
                ),
            });
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(IngestError::BadSynthSpec {
                detail: format!("noise_std must be nonnegative, got {}", self.noise_std),
            });
        }
        let nyquist = self.sample_rate_hz / 2.0;
        for (electrode, tones) in &self.components {
            for tone in tones {
                if !(tone.freq_hz.is_finite() && tone.freq_hz > 0.0 && tone.freq_hz < nyquist) {
                    return Err(IngestError::BadSynthSpec {
                        detail: format!(
                            "component at {} Hz on channel {electrode} is at or above the \
                             Nyquist frequency ({nyquist} Hz)",
                            tone.freq_hz
                        ),
                    });
                }
                if !tone.amplitude.is_finite() {
                    return Err(IngestError::BadSynthSpec {
                        detail: format!("non-finite amplitude on channel {electrode}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Generates a recording from a [`SynthSpec`].
///
/// Each channel is `sum_k A_k * sin(2*pi*f_k*t) + noise_std * g(t)` where `g`
/// is standard Gaussian noise from that channel's derived stream. With the
/// same spec this is bit-for-bit reproducible.
pub fn synth_recording(spec: &SynthSpec) -> Result<RawRecording, IngestError> {
    spec.validate()?;
    let n = (spec.duration_s * spec.sample_rate_hz).round() as usize;
    let mut samples = Vec::with_capacity(Electrode::ALL.len());
    for electrode in Electrode::ALL {
        let tones = spec.components.get(&electrode).map_or(&[][..], Vec::as_slice);
        let mut noise = Stream::derived(spec.seed, &[tag("synth-noise"), electrode.index() as u64]);
        let mut channel = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / spec.sample_rate_hz;
            let mut x = 0.0;
            for tone in tones {
                x += tone.amplitude * (2.0 * std::f64::consts::PI * tone.freq_hz * t).sin();
            }
            if spec.noise_std > 0.0 {
                x += spec.noise_std * noise.next_gaussian();
            }
            channel.push(x);
        }
        samples.push(channel);
    }
    let recording = RawRecording {
        subject_id: spec.subject_id.clone(),
        video_id: spec.video_id.clone(),
        sample_rate_hz: spec.sample_rate_hz,
        samples,
    };
    recording.validate()?;
    Ok(recording)
}

/// One rating tier of a synthetic dataset.
///
/// Every recording in this tier gets `score` for all five QoE factors and an
/// alpha carrier of the given amplitude, so higher tiers are spectrally
/// distinguishable from lower ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    pub score: u8,
    pub amplitude: f64,
}

/// Specification of a labeled synthetic dataset, as consumed by `synth`.
///
/// Recordings are assigned to tiers round-robin, so `count` recordings over
/// `tiers.len()` tiers stay as balanced as possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDatasetSpec {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub noise_std: f64,
    /// Frequency of the tier-dependent carrier; the default sits mid-alpha.
    pub carrier_hz: f64,
    /// Channels that carry the tier component (occipital by default, where
    /// alpha activity is strongest).
    pub carrier_channels: Vec<Electrode>,
    pub tiers: Vec<TierSpec>,
}

impl Default for SynthDatasetSpec {
    fn default() -> Self {
        SynthDatasetSpec {
            sample_rate_hz: 250.0,
            duration_s: 60.0,
            noise_std: 1.0,
            carrier_hz: 10.0,
            carrier_channels: vec![Electrode::O1, Electrode::O2],
            tiers: vec![
                TierSpec { score: 2, amplitude: 2.0 },
                TierSpec { score: 5, amplitude: 6.0 },
                TierSpec { score: 8, amplitude: 12.0 },
            ],
        }
    }
}

impl SynthDatasetSpec {
    /// Checks the dataset-level constraints, including the carrier Nyquist
    /// bound and tier score range.
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.tiers.is_empty() {
            return Err(IngestError::BadSynthSpec { detail: "tiers must not be empty".into() });
        }
        if self.carrier_channels.is_empty() {
            return Err(IngestError::BadSynthSpec {
                detail: "carrier_channels must not be empty".into(),
            });
        }
        for tier in &self.tiers {
            if !(1..=9).contains(&tier.score) {
                return Err(IngestError::BadSynthSpec {
                    detail: format!("tier score {} outside 1..=9", tier.score),
                });
            }
            if !(tier.amplitude.is_finite() && tier.amplitude >= 0.0) {
                return Err(IngestError::BadSynthSpec {
                    detail: format!("tier amplitude {} must be nonnegative", tier.amplitude),
                });
            }
        }
        // Reuse the single-recording checks for rate, duration, noise, Nyquist.
        self.recording_spec(0, 0).0.validate()
    }

    /// Builds the recording settings and ratings for recording `index` of the dataset.
    ///
    /// Subjects are grouped nine videos apiece to mirror a typical session
    /// layout; the per-recording noise seed is derived from `base_seed` and
    /// the index.
    pub fn recording_spec(&self, index: usize, base_seed: u64) -> (SynthSpec, RatingRecord) {
        let tier = self.tiers[index % self.tiers.len()];
        let subject_id = format!("s{:02}", index / 9 + 1);
        let video_id = format!("v{:02}", index % 9 + 1);
        let mut components = BTreeMap::new();
        for &ch in &self.carrier_channels {
            components.insert(
                ch,
                vec![ToneSpec { freq_hz: self.carrier_hz, amplitude: tier.amplitude }],
            );
        }
        let spec = SynthSpec {
            subject_id: subject_id.clone(),
            video_id: video_id.clone(),
            sample_rate_hz: self.sample_rate_hz,
            duration_s: self.duration_s,
            components,
            noise_std: self.noise_std,
            seed: derive(base_seed, &[tag("synth-rec"), index as u64]),
        };
        let ratings = RatingRecord {
            subject_id,
            video_id,
            scores: QoEFactor::ALL.iter().map(|&f| (f, tier.score)).collect(),
        };
        (spec, ratings)
    }
}

/// Parses and validates a dataset synthesis spec from JSON.
pub fn parse_synth_spec_json(text: &str) -> Result<SynthDatasetSpec, IngestError> {
    let spec: SynthDatasetSpec = serde_json::from_str(text)
        .map_err(|e| IngestError::BadSynthSpec { detail: e.to_string() })?;
    spec.validate()?;
    Ok(spec)
}
