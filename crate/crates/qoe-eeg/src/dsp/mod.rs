//! Spectral feature extraction.
//!
//! The chain is: band-pass filter the recording ([`design_bandpass`],
//! [`apply_zero_phase`]), slide three-second windows with 50% overlap across
//! it, estimate each window's power spectral density with Welch's method
//! ([`welch_psd`]), integrate the density over the five clinical bands
//! ([`band_power`]), and pair each band power with its Gaussian differential
//! entropy ([`differential_entropy`]). The result is one [`FeatureTensor`]
//! per recording: `T` windows by 80 columns (8 electrodes x 5 bands x 2
//! feature kinds).

mod features;
mod filter;
mod welch;

pub use features::{
    band_power, differential_entropy, extract_features, feature_column_index,
    feature_column_name, load_features, parse_features_csv, parse_feature_sidecar_json,
    write_features, FeatureKind, FeatureSidecar, FeatureTensor, DEFAULT_DE_FLOOR, FEATURE_COLS,
    FEATURES_PER_ELECTRODE,
};
pub use filter::{
    apply_zero_phase, design_bandpass, filter_recording, FilterDesign, IirFilter, Sos,
};
pub use welch::{welch_psd, Psd};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// A named frequency band in hertz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl FrequencyBand {
    pub fn new(name: &str, low_hz: f64, high_hz: f64) -> Self {
        FrequencyBand { name: name.to_string(), low_hz, high_hz }
    }
}

/// The canonical five-band table.
///
/// Contiguous from 1 to 47 Hz: delta, theta, alpha, beta, gamma. The gamma
/// band tops out at the filter's 47 Hz cutoff rather than a textbook 60 Hz,
/// since content above the passband edge would measure filter roll-off, not
/// brain activity.
pub fn canonical_bands() -> Vec<FrequencyBand> {
    vec![
        FrequencyBand::new("delta", 1.0, 4.0),
        FrequencyBand::new("theta", 4.0, 8.0),
        FrequencyBand::new("alpha", 8.0, 13.0),
        FrequencyBand::new("beta", 13.0, 30.0),
        FrequencyBand::new("gamma", 30.0, 47.0),
    ]
}

/// Checks that `bands` are well-formed: positive width, ordered, disjoint,
/// and within `[0, sample_rate/2]`.
pub fn validate_bands(bands: &[FrequencyBand], sample_rate_hz: f64) -> Result<(), DspError> {
    let nyquist = sample_rate_hz / 2.0;
    let mut prev_high = 0.0;
    for band in bands {
        if !(band.low_hz.is_finite() && band.high_hz.is_finite() && band.low_hz < band.high_hz) {
            return Err(DspError::InvalidBand {
                detail: format!("band {} has empty range [{}, {}]", band.name, band.low_hz, band.high_hz),
            });
        }
        if band.low_hz < prev_high {
            return Err(DspError::InvalidBand {
                detail: format!("band {} overlaps the previous band", band.name),
            });
        }
        if band.high_hz > nyquist {
            return Err(DspError::InvalidBand {
                detail: format!(
                    "band {} extends to {} Hz, above the Nyquist frequency {nyquist} Hz",
                    band.name, band.high_hz
                ),
            });
        }
        prev_high = band.high_hz;
    }
    Ok(())
}

/// Taper applied to each Welch sub-segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    /// Periodic Hann window, the default.
    Hann,
    /// Rectangular window; mainly useful in tests.
    Boxcar,
}

impl Taper {
    /// Window coefficients for an `n`-point sub-segment.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Taper::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
            Taper::Boxcar => vec![1.0; n],
        }
    }
}

/// Windowing and Welch parameters for feature extraction.
///
/// Windows are `window_len` samples long (three seconds) and advance by
/// `hop = window_len / 2`. A final window shorter than `window_len` is still
/// emitted as long as at least `hop` samples remain, so a 60 s recording at
/// 250 Hz yields exactly 40 windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    /// Analysis window length in samples; three seconds of signal.
    pub window_len: usize,
    /// Window advance in samples; always half the window.
    pub hop: usize,
    /// Welch sub-segment length in samples.
    pub welch_subsegment: usize,
    /// Fractional overlap of Welch sub-segments, in `[0, 1)`.
    pub welch_overlap: f64,
    pub taper: Taper,
}

impl WindowPlan {
    /// The standard plan for a sample rate: 3 s windows, 50% hop, 1 s Welch
    /// sub-segments with 50% overlap under a Hann taper.
    pub fn for_sample_rate(sample_rate_hz: f64) -> WindowPlan {
        let window_len = (3.0 * sample_rate_hz).round() as usize;
        WindowPlan {
            window_len,
            hop: window_len / 2,
            welch_subsegment: sample_rate_hz.round() as usize,
            welch_overlap: 0.5,
            taper: Taper::Hann,
        }
    }

    /// Validates the plan against the sample rate it will be used with.
    pub fn validate(&self, sample_rate_hz: f64) -> Result<(), DspError> {
        let expected = (3.0 * sample_rate_hz).round() as usize;
        if self.window_len != expected {
            return Err(DspError::InvalidPlan {
                detail: format!(
                    "window_len {} does not match three seconds at {sample_rate_hz} Hz ({expected})",
                    self.window_len
                ),
            });
        }
        if self.hop != self.window_len / 2 {
            return Err(DspError::InvalidPlan {
                detail: format!("hop {} must be half the window ({})", self.hop, self.window_len / 2),
            });
        }
        if self.welch_subsegment == 0 || self.welch_subsegment > self.window_len {
            return Err(DspError::InvalidPlan {
                detail: format!(
                    "welch_subsegment {} must be in 1..={}",
                    self.welch_subsegment, self.window_len
                ),
            });
        }
        if !(0.0..1.0).contains(&self.welch_overlap) {
            return Err(DspError::InvalidPlan {
                detail: format!("welch_overlap {} must be in [0, 1)", self.welch_overlap),
            });
        }
        Ok(())
    }
}

/// Errors from filter design, PSD estimation, or feature extraction.
#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("invalid band edges: {detail}")]
    InvalidBand { detail: String },

    #[error("invalid filter order {order}: must be one of 2, 4, 6, 8")]
    InvalidOrder { order: usize },

    #[error("invalid window plan: {detail}")]
    InvalidPlan { detail: String },

    #[error("filter design is unstable: {detail}")]
    Unstable { detail: String },

    #[error("signal too short: {len} samples, need more than {required}")]
    TooShort { len: usize, required: usize },

    #[error("segment too short for Welch estimate: {len} samples, need at least {required}")]
    SegmentTooShort { len: usize, required: usize },

    #[error("band outside the PSD grid: {detail}")]
    BandOutOfRange { detail: String },

    #[error("bad feature file: {detail}")]
    BadFeatureFile { detail: String },

    #[error("malformed feature row at line {line}: {detail}")]
    MalformedRow { line: usize, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
