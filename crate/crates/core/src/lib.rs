//! Visually guided conversion of monaural audio into binaural audio.
//!
//! The pieces, bottom up:
//!
//! * [`audio`]: waveforms, STFT/ISTFT, Hilbert envelopes, resampling, WAV files.
//! * [`binaural`]: the mono/difference representation of a two-ear signal and
//!   complex-mask application.
//! * [`scene`]: a parametric binaural renderer and frame painter that produce
//!   synthetic training data with known source geometry.
//! * [`net`]: the visually conditioned U-Net that predicts the difference-signal
//!   mask, and its ratio-mask separation variant.
//! * [`pipeline`]: training loops, sliding-window binauralization, occlusion
//!   localization and mix-and-separate.
//! * [`metrics`]: STFT/envelope distances, baselines, BSS-Eval and benchmarks.
//! * [`config`], [`repro`]: run configuration and reproducibility records.

pub mod audio;
pub mod binaural;
pub mod config;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod repro;
pub mod scene;

mod error;

pub use error::{Error, Result};
