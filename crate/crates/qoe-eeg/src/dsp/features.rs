//! Windowed band-power and differential-entropy features.
//!
//! Each recording becomes a `T x (electrodes * bands * 2)` tensor: for every
//! three-second window, every electrode, and every band, one power column
//! (the PSD integrated over the band) and one differential-entropy column.
//! With the canonical eight electrodes and five bands that is 80 columns,
//! laid out electrode-major: `col = electrode*10 + band*2 + kind`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{validate_bands, welch_psd, DspError, FilterDesign, FrequencyBand, Psd, WindowPlan};
use crate::fsutil;
use crate::ingest::{Electrode, RawRecording, NUM_CHANNELS};

/// Number of feature columns for the canonical montage and band table.
pub const FEATURE_COLS: usize = 80;

/// Columns per electrode in the canonical layout (5 bands x 2 kinds).
pub const FEATURES_PER_ELECTRODE: usize = 10;

/// Variance floor inside the differential entropy, in squared microvolts.
/// Keeps the logarithm finite for silent windows.
pub const DEFAULT_DE_FLOOR: f64 = 1e-12;

/// Which of the two per-band features a column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Psd,
    De,
}

impl FeatureKind {
    fn suffix(self) -> &'static str {
        match self {
            FeatureKind::Psd => "psd",
            FeatureKind::De => "de",
        }
    }
}

/// Column index of `(electrode, band, kind)` in the canonical 80-column layout.
pub fn feature_column_index(electrode: Electrode, band: usize, kind: FeatureKind) -> usize {
    debug_assert!(band < 5);
    electrode.index() * FEATURES_PER_ELECTRODE
        + band * 2
        + match kind {
            FeatureKind::Psd => 0,
            FeatureKind::De => 1,
        }
}

/// Header name of a canonical column, e.g. `O1_alpha_psd`.
pub fn feature_column_name(col: usize) -> String {
    let bands = super::canonical_bands();
    let electrode = Electrode::ALL[col / FEATURES_PER_ELECTRODE];
    let within = col % FEATURES_PER_ELECTRODE;
    let band = &bands[within / 2];
    let kind = if within % 2 == 0 { FeatureKind::Psd } else { FeatureKind::De };
    format!("{}_{}_{}", electrode.name(), band.name, kind.suffix())
}

/// Expected CSV header names for an arbitrary band table.
pub fn expected_feature_headers(bands: &[FrequencyBand]) -> Vec<String> {
    let mut names = Vec::with_capacity(NUM_CHANNELS * bands.len() * 2);
    for e in Electrode::ALL {
        for band in bands {
            for kind in [FeatureKind::Psd, FeatureKind::De] {
                names.push(format!("{}_{}_{}", e.name(), band.name, kind.suffix()));
            }
        }
    }
    names
}

/// A windows-by-features matrix for one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub subject_id: String,
    pub video_id: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major values, `rows * cols` long.
    pub data: Vec<f64>,
}

impl FeatureTensor {
    pub fn zeros(rows: usize, cols: usize) -> FeatureTensor {
        FeatureTensor {
            subject_id: String::new(),
            video_id: String::new(),
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    /// One full row as a slice.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// Integrates the PSD over `[low_hz, high_hz]` by exact integration of the
/// piecewise-linear interpolant (trapezoids, with interpolated edge values).
///
/// Because adjacent bands share their edge value, summing contiguous bands
/// equals integrating the union in one call, up to rounding.
pub fn band_power(psd: &Psd, band: &FrequencyBand) -> Result<f64, DspError> {
    let lo = band.low_hz;
    let hi = band.high_hz;
    let first = *psd.freqs.first().ok_or_else(|| DspError::BandOutOfRange {
        detail: "empty PSD".to_string(),
    })?;
    let last = *psd.freqs.last().unwrap();
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(DspError::InvalidBand {
            detail: format!("band {} has empty range [{lo}, {hi}]", band.name),
        });
    }
    if lo < first || hi > last {
        return Err(DspError::BandOutOfRange {
            detail: format!(
                "band {} [{lo}, {hi}] exceeds the PSD grid [{first}, {last}]",
                band.name
            ),
        });
    }

    // Linear interpolation of the density at an arbitrary frequency.
    let value_at = |f: f64| -> f64 {
        let idx = psd.freqs.partition_point(|&g| g <= f);
        let k = idx - 1; // freqs[k] <= f, guaranteed by the range check
        if psd.freqs[k] == f || k + 1 == psd.freqs.len() {
            psd.density[k]
        } else {
            let t = (f - psd.freqs[k]) / (psd.freqs[k + 1] - psd.freqs[k]);
            psd.density[k] + t * (psd.density[k + 1] - psd.density[k])
        }
    };

    let mut area = 0.0;
    let mut prev_f = lo;
    let mut prev_v = value_at(lo);
    let start = psd.freqs.partition_point(|&g| g <= lo);
    for k in start..psd.freqs.len() {
        if psd.freqs[k] >= hi {
            break;
        }
        area += 0.5 * (prev_v + psd.density[k]) * (psd.freqs[k] - prev_f);
        prev_f = psd.freqs[k];
        prev_v = psd.density[k];
    }
    area += 0.5 * (prev_v + value_at(hi)) * (hi - prev_f);
    Ok(area)
}

/// Differential entropy of a Gaussian with the given variance:
/// `0.5 * ln(2 * pi * e * max(variance, floor))`, in nats.
pub fn differential_entropy(variance: f64, floor: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * variance.max(floor)).ln()
}

/// Start and end sample of every analysis window for a signal of `n` samples.
///
/// Windows begin at multiples of the hop and are emitted while at least one
/// hop of samples remains; the last window may be truncated below the full
/// window length but never below the hop.
pub fn window_starts(n: usize, plan: &WindowPlan) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while n - start >= plan.hop {
        out.push((start, (start + plan.window_len).min(n)));
        start += plan.hop;
    }
    out
}

/// Extracts the feature tensor of an already-filtered recording.
///
/// For each window and electrode, one Welch PSD is estimated and integrated
/// over every band; the differential entropy column uses the band power as
/// the variance, floored at `de_floor`.
pub fn extract_features(
    recording: &RawRecording,
    plan: &WindowPlan,
    bands: &[FrequencyBand],
    de_floor: f64,
) -> Result<FeatureTensor, DspError> {
    let fs = recording.sample_rate_hz;
    plan.validate(fs)?;
    validate_bands(bands, fs)?;
    let n = recording.num_samples();
    if n < plan.window_len {
        return Err(DspError::TooShort { len: n, required: plan.window_len - 1 });
    }

    let windows = window_starts(n, plan);
    let cols = NUM_CHANNELS * bands.len() * 2;
    let mut tensor = FeatureTensor::zeros(windows.len(), cols);
    tensor.subject_id = recording.subject_id.clone();
    tensor.video_id = recording.video_id.clone();

    for (row, &(start, end)) in windows.iter().enumerate() {
        for electrode in Electrode::ALL {
            let psd = welch_psd(&recording.samples[electrode.index()][start..end], fs, plan)?;
            for (b, band) in bands.iter().enumerate() {
                let power = band_power(&psd, band)?;
                let de = differential_entropy(power, de_floor);
                let base = electrode.index() * bands.len() * 2 + b * 2;
                tensor.set(row, base, power);
                tensor.set(row, base + 1, de);
            }
        }
    }
    Ok(tensor)
}

/// Provenance sidecar stored next to each feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub subject_id: String,
    pub video_id: String,
    pub rows: usize,
    pub plan: WindowPlan,
    pub bands: Vec<FrequencyBand>,
    pub filter: FilterDesign,
    pub de_floor: f64,
}

/// Parses a feature CSV: a header of column names, then one row of finite
/// numbers per window. Identity fields are filled by [`load_features`].
pub fn parse_features_csv(text: &str) -> Result<FeatureTensor, DspError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| DspError::BadFeatureFile {
        detail: "empty file".to_string(),
    })?;
    let names: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    let cols = names.len();
    if cols == 0 || names.iter().any(|n| n.is_empty()) {
        return Err(DspError::BadFeatureFile { detail: "blank column name in header".to_string() });
    }

    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if fields.len() != cols {
            return Err(DspError::MalformedRow {
                line: line_no,
                detail: format!("expected {cols} fields, got {}", fields.len()),
            });
        }
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| DspError::MalformedRow {
                line: line_no,
                detail: format!("field '{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(DspError::MalformedRow {
                    line: line_no,
                    detail: format!("non-finite value '{field}'"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    Ok(FeatureTensor {
        subject_id: String::new(),
        video_id: String::new(),
        rows,
        cols,
        data,
    })
}

/// Parses a feature sidecar JSON document.
pub fn parse_feature_sidecar_json(text: &str) -> Result<FeatureSidecar, DspError> {
    serde_json::from_str(text).map_err(|e| DspError::BadFeatureFile { detail: e.to_string() })
}

fn sidecar_path_for(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes a feature tensor as CSV plus sidecar, atomically.
///
/// Values use the shortest decimal form that round-trips, so load-after-write
/// reproduces the tensor bit for bit.
pub fn write_features(
    tensor: &FeatureTensor,
    sidecar: &FeatureSidecar,
    csv_path: &Path,
) -> Result<(), DspError> {
    let headers = expected_feature_headers(&sidecar.bands);
    if headers.len() != tensor.cols || tensor.rows != sidecar.rows {
        return Err(DspError::BadFeatureFile {
            detail: format!(
                "tensor is {}x{}, sidecar declares {}x{}",
                tensor.rows,
                tensor.cols,
                sidecar.rows,
                headers.len()
            ),
        });
    }
    let mut out = String::with_capacity(tensor.data.len() * 20);
    out.push_str(&headers.join(","));
    out.push('\n');
    for r in 0..tensor.rows {
        for (c, v) in tensor.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fsutil::atomic_write(csv_path, out.as_bytes())
        .map_err(|e| DspError::Io { path: csv_path.to_path_buf(), source: e })?;

    let json = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    let side_path = sidecar_path_for(csv_path);
    fsutil::atomic_write(&side_path, format!("{json}\n").as_bytes())
        .map_err(|e| DspError::Io { path: side_path, source: e })
}

/// Loads a feature CSV and its sidecar, validating that they agree.
pub fn load_features(csv_path: &Path) -> Result<(FeatureTensor, FeatureSidecar), DspError> {
    let text = std::fs::read_to_string(csv_path)
        .map_err(|e| DspError::Io { path: csv_path.to_path_buf(), source: e })?;
    let mut tensor = parse_features_csv(&text)?;

    let side_path = sidecar_path_for(csv_path);
    let side_text = std::fs::read_to_string(&side_path)
        .map_err(|e| DspError::Io { path: side_path, source: e })?;
    let sidecar = parse_feature_sidecar_json(&side_text)?;

    let headers = expected_feature_headers(&sidecar.bands);
    let file_headers: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
    if file_headers != headers.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(DspError::BadFeatureFile {
            detail: "header does not match the sidecar band table".to_string(),
        });
    }
    if tensor.rows != sidecar.rows {
        return Err(DspError::BadFeatureFile {
            detail: format!("{} rows in CSV, sidecar declares {}", tensor.rows, sidecar.rows),
        });
    }
    tensor.subject_id = sidecar.subject_id.clone();
    tensor.video_id = sidecar.video_id.clone();
    Ok((tensor, sidecar))
}
