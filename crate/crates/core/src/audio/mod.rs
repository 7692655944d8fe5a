//! Deterministic signal-processing primitives.

mod envelope;
mod resample;
mod stft;
pub mod wav;

pub use envelope::{envelope, Envelope};
pub use resample::resample;
pub use stft::{istft, stft, ComplexSpectrogram, SpectrogramParams};

use crate::{Error, Result};

/// Default analysis sample rate.
pub const SAMPLE_RATE: u32 = 16_000;

/// Sampled audio with one or two equally long channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::InvalidAudio(format!(
                "expected 1 or 2 channels, got {}",
                channels.len()
            )));
        }
        if channels.iter().any(|c| c.len() != channels[0].len()) {
            return Err(Error::shape("channels differ in length"));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAudio("non-finite sample".into()));
        }
        Ok(Waveform { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn stereo(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![left, right], sample_rate)
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Waveform {
            channels: vec![vec![0.0; len]],
            sample_rate,
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn is_mono(&self) -> bool {
        self.channels.len() == 1
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// The single channel of a mono waveform.
    pub fn samples(&self) -> Result<&[f64]> {
        if !self.is_mono() {
            return Err(Error::shape(format!(
                "expected mono audio, got {} channels",
                self.num_channels()
            )));
        }
        Ok(&self.channels[0])
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<Waveform> {
        if start + len > self.len() {
            return Err(Error::shape(format!(
                "slice {start}..{} of {} samples",
                start + len,
                self.len()
            )));
        }
        Ok(Waveform {
            channels: self.channels.iter().map(|c| c[start..start + len].to_vec()).collect(),
            sample_rate: self.sample_rate,
        })
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|v| v * gain).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Root-mean-square over all channels jointly.
    pub fn rms(&self) -> f64 {
        let n = self.len() * self.num_channels();
        if n == 0 {
            return 0.0;
        }
        let energy: f64 = self.channels.iter().flatten().map(|v| v * v).sum();
        (energy / n as f64).sqrt()
    }
}

/// Scales `w` so its joint RMS equals `target_rms`; returns the scaled copy and the gain applied.
pub fn rms_normalize(w: &Waveform, target_rms: f64) -> Result<(Waveform, f64)> {
    if !(target_rms > 0.0 && target_rms.is_finite()) {
        return Err(Error::InvalidAudio(format!("target RMS {target_rms} must be positive")));
    }
    let rms = w.rms();
    if rms == 0.0 {
        return Err(Error::SilentSegment);
    }
    let gain = target_rms / rms;
    Ok((w.scaled(gain), gain))
}
