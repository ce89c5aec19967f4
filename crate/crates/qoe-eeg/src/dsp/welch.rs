//! Welch power spectral density estimation.
//!
//! The estimate is the mean of modified periodograms over tapered,
//! overlapping sub-segments. Each sub-segment has its mean removed before
//! tapering, and the one-sided density is scaled so that the sum of
//! `density * df` over all bins estimates the variance of a stationary
//! input (Parseval convention). A trailing partial sub-segment is dropped.

use realfft::RealFftPlanner;
use std::cell::RefCell;

use super::{DspError, WindowPlan};

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

/// A one-sided power spectral density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    /// Bin frequencies in Hz, from 0 to the Nyquist frequency.
    pub freqs: Vec<f64>,
    /// Density per bin, in (input units)^2 per Hz.
    pub density: Vec<f64>,
    /// Bin spacing in Hz.
    pub df: f64,
}

impl Psd {
    /// `sum(density) * df`, the total-power estimate.
    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.df
    }
}

/// Estimates the one-sided PSD of `segment` with Welch's method.
///
/// Sub-segment length, overlap, and taper come from `plan`. The segment must
/// hold at least one full sub-segment.
///
/// # Example
///
/// ```
/// use qoe_eeg::dsp::{welch_psd, WindowPlan};
/// let fs = 250.0;
/// let x: Vec<f64> = (0..750)
///     .map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / fs).sin())
///     .collect();
/// let psd = welch_psd(&x, fs, &WindowPlan::for_sample_rate(fs)).unwrap();
/// // A unit sine has variance 1/2, concentrated near 10 Hz.
/// assert!((psd.total_power() - 0.5).abs() < 0.05);
/// ```
pub fn welch_psd(segment: &[f64], sample_rate_hz: f64, plan: &WindowPlan) -> Result<Psd, DspError> {
    let n = plan.welch_subsegment;
    if segment.len() < n {
        return Err(DspError::SegmentTooShort { len: segment.len(), required: n });
    }

    let noverlap = (n as f64 * plan.welch_overlap).floor() as usize;
    let hop = (n - noverlap).max(1);
    let num_segments = (segment.len() - n) / hop + 1;

    let window = plan.taper.coefficients(n);
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    let mut spectrum = fft.make_output_vec();
    let mut acc = vec![0.0f64; spectrum.len()];
    let mut buf = vec![0.0f64; n];

    for s in 0..num_segments {
        let chunk = &segment[s * hop..s * hop + n];
        let mean = chunk.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            buf[i] = (chunk[i] - mean) * window[i];
        }
        fft.process(&mut buf, &mut spectrum)
            .expect("buffer lengths match the plan");
        for (a, x) in acc.iter_mut().zip(&spectrum) {
            *a += x.norm_sqr();
        }
    }

    // One-sided density: double every bin except DC, and except Nyquist when
    // the transform length is even (then the last bin is the Nyquist bin).
    let nbins = acc.len();
    let scale = 1.0 / (sample_rate_hz * window_power * num_segments as f64);
    let df = sample_rate_hz / n as f64;
    let mut density = Vec::with_capacity(nbins);
    for (k, &a) in acc.iter().enumerate() {
        let one_sided = if k == 0 || (n % 2 == 0 && k == nbins - 1) { 1.0 } else { 2.0 };
        density.push(a * scale * one_sided);
    }
    let freqs = (0..nbins).map(|k| k as f64 * df).collect();
    Ok(Psd { freqs, density, df })
}
