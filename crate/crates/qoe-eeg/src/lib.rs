//! EEG-based quality-of-experience prediction.
//!
//! This crate turns raw multi-channel EEG recordings into per-video QoE class
//! predictions. The pipeline has five stages, each with its own module:
//!
//! 1. [`ingest`]: load (or synthesize) raw recordings and subjective ratings.
//! 2. [`dsp`]: band-pass filter, estimate Welch power spectra, and reduce each
//!    sliding window to per-band power and differential entropy features.
//! 3. [`dataset`]: pair feature tensors with binned ratings, normalize, and
//!    produce stratified splits and folds.
//! 4. [`nn`]: small from-scratch neural networks (bidirectional LSTM plus two
//!    comparison architectures) trained with Adam.
//! 5. [`train`]: training loops, evaluation metrics, cross-validation, grid
//!    search, and band/electrode ablation.
//!
//! The [`config`] module defines the run configuration consumed by the CLI
//! binary and [`plot`] renders the small set of report charts as SVG.
//!
//! Every random choice in the crate flows from a single `u64` seed through
//! [`rng`], so any two runs with the same seed and inputs produce
//! byte-identical outputs.

pub mod config;
pub mod dataset;
pub mod dsp;
pub mod fsutil;
pub mod ingest;
pub mod nn;
pub mod plot;
pub mod rng;
pub mod train;
