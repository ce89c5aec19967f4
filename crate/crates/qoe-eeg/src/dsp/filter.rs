//! Butterworth band-pass design and zero-phase filtering.
//!
//! The design path is the classical one: analog Butterworth prototype,
//! low-pass to band-pass transform at the prewarped edges, bilinear transform
//! to the digital plane, then grouping into second-order sections. Prewarping
//! puts the -3 dB points of the digital filter exactly at the requested
//! edges.
//!
//! Application is forward-backward (two passes, second on the reversed
//! signal), which cancels the phase response and squares the magnitude
//! response. Edges are protected by odd reflection padding and per-section
//! steady-state initial conditions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DspError;
use crate::ingest::RawRecording;

/// One second-order section of an IIR cascade.
///
/// `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sos {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Sos {
    /// Largest pole magnitude of this section.
    fn pole_radius(&self) -> f64 {
        // Roots of z^2 + a1 z + a2.
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let r1 = (-self.a1 + sq) / 2.0;
            let r2 = (-self.a1 - sq) / 2.0;
            r1.abs().max(r2.abs())
        } else {
            // Conjugate pair: |z|^2 = a2.
            self.a2.sqrt()
        }
    }

    /// Complex response at `z^-1 = zinv`.
    fn response(&self, zinv: Complex64) -> Complex64 {
        let num = Complex64::new(self.b0, 0.0) + zinv * (self.b1 + zinv * self.b2);
        let den = Complex64::new(1.0, 0.0) + zinv * (self.a1 + zinv * self.a2);
        num / den
    }
}

/// The parameters a filter was designed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterDesign {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub sample_rate_hz: f64,
}

/// A designed IIR band-pass filter as a cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    pub design: FilterDesign,
    pub sections: Vec<Sos>,
}

impl IirFilter {
    /// Complex frequency response at `freq_hz`.
    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let omega = 2.0 * std::f64::consts::PI * freq_hz / self.design.sample_rate_hz;
        let zinv = Complex64::new(omega.cos(), -omega.sin());
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(zinv))
    }

    /// Magnitude response at `freq_hz`.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        self.response_at(freq_hz).norm()
    }

    /// Number of samples a zero-phase application pads on each side; inputs
    /// must be strictly longer than this.
    pub fn pad_len(&self) -> usize {
        3 * 2 * self.sections.len()
    }

    /// Checks stability and band-stop behavior: every pole strictly inside
    /// the unit circle and negligible response at DC and Nyquist.
    pub fn validate(&self) -> Result<(), DspError> {
        for (i, s) in self.sections.iter().enumerate() {
            let r = s.pole_radius();
            if !(r < 1.0) {
                return Err(DspError::Unstable {
                    detail: format!("section {i} has pole radius {r}"),
                });
            }
        }
        let dc = self.magnitude_at(0.0);
        let nyq = self.magnitude_at(self.design.sample_rate_hz / 2.0);
        if dc >= 1e-3 || nyq >= 1e-3 {
            return Err(DspError::Unstable {
                detail: format!("residual response at band stops: |H(0)|={dc}, |H(nyq)|={nyq}"),
            });
        }
        Ok(())
    }
}

/// Designs a Butterworth band-pass filter.
///
/// `order` is the prototype order (2, 4, 6, or 8); the band-pass realization
/// has `order` second-order sections, i.e. `2 * order` poles. The -3 dB
/// points land on `low_hz` and `high_hz`.
///
/// # Example
///
/// ```
/// use qoe_eeg::dsp::design_bandpass;
/// let f = design_bandpass(1.0, 47.0, 4, 250.0).unwrap();
/// assert!((f.magnitude_at(10.0) - 1.0).abs() < 0.01);
/// assert!((f.magnitude_at(1.0) - 0.7071).abs() < 0.01);
/// ```
pub fn design_bandpass(
    low_hz: f64,
    high_hz: f64,
    order: usize,
    sample_rate_hz: f64,
) -> Result<IirFilter, DspError> {
    if !matches!(order, 2 | 4 | 6 | 8) {
        return Err(DspError::InvalidOrder { order });
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(DspError::InvalidBand {
            detail: format!("sample rate must be positive, got {sample_rate_hz}"),
        });
    }
    let nyquist = sample_rate_hz / 2.0;
    if !(low_hz.is_finite() && high_hz.is_finite() && 0.0 < low_hz && low_hz < high_hz) {
        return Err(DspError::InvalidBand {
            detail: format!("need 0 < low < high, got low={low_hz}, high={high_hz}"),
        });
    }
    if high_hz >= nyquist {
        return Err(DspError::InvalidBand {
            detail: format!("high edge {high_hz} Hz must be below the Nyquist frequency {nyquist} Hz"),
        });
    }

    let n = order;
    // Analog Butterworth prototype: poles on the unit circle, left half-plane.
    let prototype: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect();

    // Prewarped analog edges.
    let fs2 = 2.0 * sample_rate_hz;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / sample_rate_hz).tan();
    let wl = warp(low_hz);
    let wh = warp(high_hz);
    let bw = wh - wl;
    let w0_sq = wl * wh;

    // Low-pass to band-pass: each prototype pole becomes a pair.
    let mut analog_poles = Vec::with_capacity(2 * n);
    for p in &prototype {
        let s = p * (bw / 2.0);
        let d = (s * s - w0_sq).sqrt();
        analog_poles.push(s + d);
        analog_poles.push(s - d);
    }
    // Numerator: bw^n * s^n, i.e. n zeros at s = 0 with gain bw^n.
    let k_analog = bw.powi(n as i32);

    // Bilinear transform. Zeros at s=0 map to z=1; the n zeros at infinity
    // map to z=-1. Gain picks up prod(fs2 - zeros)/prod(fs2 - poles).
    let digital_poles: Vec<Complex64> =
        analog_poles.iter().map(|&p| (fs2 + p) / (fs2 - p)).collect();
    let den_prod = analog_poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &p| acc * (fs2 - p));
    let gain = k_analog * (Complex64::new(fs2, 0.0).powi(n as i32) / den_prod).re;

    // Group poles into real-coefficient quadratics: conjugate pairs first,
    // then any (numerically) real poles two at a time.
    let tol = 1e-8;
    let mut upper: Vec<Complex64> = Vec::new();
    let mut real: Vec<f64> = Vec::new();
    for &p in &digital_poles {
        if p.im > tol {
            upper.push(p);
        } else if p.im >= -tol {
            real.push(p.re);
        }
    }
    if upper.len() * 2 + real.len() != 2 * n || real.len() % 2 != 0 {
        return Err(DspError::Unstable {
            detail: "pole conjugate pairing failed".to_string(),
        });
    }
    // Most resonant section (pole nearest the unit circle) goes last.
    upper.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    real.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());

    let mut denominators: Vec<(f64, f64)> = Vec::with_capacity(n);
    for chunk in real.chunks(2) {
        denominators.push((-(chunk[0] + chunk[1]), chunk[0] * chunk[1]));
    }
    for p in &upper {
        denominators.push((-2.0 * p.re, p.norm_sqr()));
    }
    denominators.sort_by(|x, y| {
        let rx = Sos { b0: 1.0, b1: 0.0, b2: 0.0, a1: x.0, a2: x.1 }.pole_radius();
        let ry = Sos { b0: 1.0, b1: 0.0, b2: 0.0, a1: y.0, a2: y.1 }.pole_radius();
        rx.partial_cmp(&ry).unwrap()
    });

    // Each section takes one zero at +1 and one at -1: numerator z^2 - 1.
    // Distribute the gain evenly so no section has extreme coefficients.
    let section_gain = gain.abs().powf(1.0 / n as f64);
    let sections: Vec<Sos> = denominators
        .iter()
        .enumerate()
        .map(|(i, &(a1, a2))| {
            let g = if i == 0 && gain < 0.0 { -section_gain } else { section_gain };
            Sos { b0: g, b1: 0.0, b2: -g, a1, a2 }
        })
        .collect();

    let filter = IirFilter {
        design: FilterDesign { low_hz, high_hz, order, sample_rate_hz },
        sections,
    };
    filter.validate()?;
    Ok(filter)
}

/// Steady-state direct-form II transposed state for a constant input `x`.
fn steady_state_zi(s: &Sos, x: f64) -> (f64, f64) {
    let y = x * (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    let z1 = (s.b1 + s.b2) * x - (s.a1 + s.a2) * y;
    let z2 = s.b2 * x - s.a2 * y;
    (z1, z2)
}

/// Runs the cascade over `buf` in place, each section starting from the
/// steady state for its own first input sample.
fn sosfilt(sections: &[Sos], buf: &mut [f64]) {
    for s in sections {
        let (mut z1, mut z2) = steady_state_zi(s, buf[0]);
        for v in buf.iter_mut() {
            let x = *v;
            let y = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * y + z2;
            z2 = s.b2 * x - s.a2 * y;
            *v = y;
        }
    }
}

/// Applies `filter` forward and backward, yielding zero phase shift.
///
/// The signal is extended on both sides by [`IirFilter::pad_len`] samples of
/// odd reflection (mirrored around the end values) before filtering, and the
/// extension is dropped afterwards. The output has the input's length. The
/// effective magnitude response is `|H|^2`.
pub fn apply_zero_phase(filter: &IirFilter, signal: &[f64]) -> Result<Vec<f64>, DspError> {
    let pad = filter.pad_len();
    let n = signal.len();
    if n <= pad {
        return Err(DspError::TooShort { len: n, required: pad });
    }

    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in 0..pad {
        ext.push(2.0 * signal[0] - signal[pad - i]);
    }
    ext.extend_from_slice(signal);
    for i in 0..pad {
        ext.push(2.0 * signal[n - 1] - signal[n - 2 - i]);
    }

    sosfilt(&filter.sections, &mut ext);
    ext.reverse();
    sosfilt(&filter.sections, &mut ext);
    ext.reverse();

    Ok(ext[pad..pad + n].to_vec())
}

/// Zero-phase filters every channel of a recording.
pub fn filter_recording(
    filter: &IirFilter,
    recording: &RawRecording,
) -> Result<RawRecording, DspError> {
    let mut samples = Vec::with_capacity(recording.samples.len());
    for ch in &recording.samples {
        samples.push(apply_zero_phase(filter, ch)?);
    }
    Ok(RawRecording {
        subject_id: recording.subject_id.clone(),
        video_id: recording.video_id.clone(),
        sample_rate_hz: recording.sample_rate_hz,
        samples,
    })
}
