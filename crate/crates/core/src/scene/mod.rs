//! Parametric binaural renderer, frame painter and synthetic dataset writer.
//!
//! Sources sit on the horizontal plane at an azimuth in `[−90°, 90°]`
//! (0 = front, positive = right). Each source reaches the far ear later
//! (Woodworth ITD), quieter (sine-law ILD) and, optionally, low-passed
//! (head shadow).

mod dataset;
mod frame;
mod timbre;

pub use dataset::{
    dataset_hash, generate_dataset, parse_manifest_line, DatasetManifest, GenerationConfig, ManifestEntry, Split,
};
pub use frame::{disk_geometry, render_frame, FrameImage, PALETTE};
pub use timbre::{synth_ref, synthesize, NUM_TIMBRES};

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::audio::SAMPLE_RATE;
use crate::binaural::BinauralPair;
use crate::{Error, Result};

/// One point source in a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub azimuth_deg: f64,
    pub class_id: u32,
    pub gain: f64,
    pub waveform_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescriptor {
    pub sources: Vec<SourceSpec>,
    pub duration_s: f64,
    pub seed: u64,
}

impl SceneDescriptor {
    pub const MAX_SOURCES: usize = 4;

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.sources.len() > Self::MAX_SOURCES {
            return Err(Error::format(
                "scene",
                format!("needs 1 to {} sources, got {}", Self::MAX_SOURCES, self.sources.len()),
            ));
        }
        for s in &self.sources {
            if !(s.azimuth_deg.abs() <= 90.0) {
                return Err(Error::format(
                    "scene",
                    format!("azimuth {} outside [-90, 90]", s.azimuth_deg),
                ));
            }
            if !(s.gain > 0.0 && s.gain.is_finite()) {
                return Err(Error::format(
                    "scene",
                    format!("source gain {} must be positive", s.gain),
                ));
            }
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::format(
                "scene",
                format!("duration {} must be positive", self.duration_s),
            ));
        }
        Ok(())
    }

    /// Samples at `sample_rate`.
    pub fn num_samples(&self, sample_rate: u32) -> usize {
        (self.duration_s * sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadModel {
    pub head_radius_m: f64,
    pub speed_of_sound_mps: f64,
    pub ild_max_db: f64,
    /// Far-ear low-pass cutoff for a source just off the midline.
    pub shadow_cutoff_max_hz: f64,
    /// Far-ear low-pass cutoff for a source at ±90°.
    pub shadow_cutoff_min_hz: f64,
    pub head_shadow: bool,
}

impl Default for HeadModel {
    fn default() -> Self {
        HeadModel {
            head_radius_m: 0.0875,
            speed_of_sound_mps: 343.0,
            ild_max_db: 10.0,
            shadow_cutoff_max_hz: 8000.0,
            shadow_cutoff_min_hz: 1500.0,
            head_shadow: true,
        }
    }
}

impl HeadModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.head_radius_m,
            self.speed_of_sound_mps,
            self.ild_max_db,
            self.shadow_cutoff_max_hz,
            self.shadow_cutoff_min_hz,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::format(
                "head model",
                format!("all parameters must be positive: {self:?}"),
            ));
        }
        if self.shadow_cutoff_min_hz > self.shadow_cutoff_max_hz {
            return Err(Error::format(
                "head model",
                "shadow_cutoff_min_hz exceeds shadow_cutoff_max_hz",
            ));
        }
        Ok(())
    }

    /// Far-ear cutoff, falling linearly in `sin|θ|`.
    pub fn shadow_cutoff_hz(&self, theta_deg: f64) -> f64 {
        let s = theta_deg.to_radians().sin().abs();
        self.shadow_cutoff_max_hz - (self.shadow_cutoff_max_hz - self.shadow_cutoff_min_hz) * s
    }

    /// `(near, far)` linear gains.
    pub fn ild_gains(&self, theta_deg: f64) -> (f64, f64) {
        let s = theta_deg.to_radians().sin().abs();
        let g = 10f64.powf(self.ild_max_db * s / 40.0);
        (g, 1.0 / g)
    }
}

/// Woodworth interaural time difference; positive when the right ear leads.
pub fn itd_seconds(theta_deg: f64, head: &HeadModel) -> f64 {
    let t = theta_deg.to_radians();
    head.head_radius_m / head.speed_of_sound_mps * (t + t.sin())
}

/// Source waveforms addressed by `waveform_ref`. Synthetic timbres
/// (`synth:<class>:<seed>`) are generated on demand when enabled.
#[derive(Debug, Clone, Default)]
pub struct WaveformBank {
    entries: HashMap<String, Vec<f64>>,
    synth: bool,
}

impl WaveformBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_synth() -> Self {
        WaveformBank {
            entries: HashMap::new(),
            synth: true,
        }
    }

    /// Registers 16 kHz samples under `name`.
    pub fn insert(&mut self, name: impl Into<String>, samples: Vec<f64>) {
        self.entries.insert(name.into(), samples);
    }

    /// `len` samples of the named source; stored waveforms shorter than that are zero-padded.
    pub fn fetch(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        if let Some(samples) = self.entries.get(name) {
            let mut out = samples.iter().copied().take(len).collect::<Vec<_>>();
            out.resize(len, 0.0);
            return Ok(out);
        }
        if self.synth {
            if let Some((class, seed)) = timbre::parse_synth_ref(name) {
                return Ok(synthesize(class, seed, len, SAMPLE_RATE));
            }
        }
        Err(Error::UnknownSource(name.to_string()))
    }
}

/// Delays `x` by `delay` samples (`delay >= 0`), keeping its length. Integer
/// delays are exact shifts; fractional ones use a Blackman-windowed sinc.
pub fn fractional_delay(x: &[f64], delay: f64) -> Vec<f64> {
    assert!(delay >= 0.0 && delay.is_finite(), "delay must be non-negative");
    const HALF: isize = 16;
    let whole = delay.floor() as isize;
    let frac = delay - delay.floor();
    let n = x.len() as isize;
    if frac < 1e-12 {
        return (0..n)
            .map(|i| {
                let j = i - whole;
                if j >= 0 {
                    x[j as usize]
                } else {
                    0.0
                }
            })
            .collect();
    }
    // y[i] = Σ_k h(k − frac) x[i − whole − k]
    let taps: Vec<(isize, f64)> = (-HALF + 1..=HALF)
        .map(|k| {
            let t = k as f64 - frac;
            let sinc = (PI * t).sin() / (PI * t);
            let u = (t + HALF as f64) / (2 * HALF) as f64;
            let w = 0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos();
            (k, sinc * w)
        })
        .collect();
    (0..n)
        .map(|i| {
            taps.iter()
                .map(|&(k, h)| {
                    let j = i - whole - k;
                    if (0..n).contains(&j) {
                        h * x[j as usize]
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}

fn one_pole_lowpass(x: &mut [f64], cutoff_hz: f64, sample_rate: u32) {
    let a = (-2.0 * PI * cutoff_hz / sample_rate as f64).exp();
    let mut y = 0.0;
    for v in x.iter_mut() {
        y = (1.0 - a) * *v + a * y;
        *v = y;
    }
}

/// Ear signals of a single source at `theta_deg`.
pub fn render_source(samples: &[f64], theta_deg: f64, head: &HeadModel, sample_rate: u32) -> BinauralPair {
    if theta_deg == 0.0 {
        return BinauralPair {
            left: samples.to_vec(),
            right: samples.to_vec(),
            sample_rate,
        };
    }
    let (g_near, g_far) = head.ild_gains(theta_deg);
    let delay = itd_seconds(theta_deg, head).abs() * sample_rate as f64;
    let near: Vec<f64> = samples.iter().map(|v| v * g_near).collect();
    let mut far: Vec<f64> = fractional_delay(samples, delay)
        .into_iter()
        .map(|v| v * g_far)
        .collect();
    if head.head_shadow {
        one_pole_lowpass(&mut far, head.shadow_cutoff_hz(theta_deg), sample_rate);
    }
    let (left, right) = if theta_deg > 0.0 { (far, near) } else { (near, far) };
    BinauralPair {
        left,
        right,
        sample_rate,
    }
}

/// Renders every source of `scene` at 16 kHz and sums the ear signals.
pub fn render_binaural(scene: &SceneDescriptor, head: &HeadModel, bank: &WaveformBank) -> Result<BinauralPair> {
    scene.validate()?;
    head.validate()?;
    let len = scene.num_samples(SAMPLE_RATE);
    let mut left = vec![0.0; len];
    let mut right = vec![0.0; len];
    for s in &scene.sources {
        let src: Vec<f64> = bank
            .fetch(&s.waveform_ref, len)?
            .into_iter()
            .map(|v| v * s.gain)
            .collect();
        let pair = render_source(&src, s.azimuth_deg, head, SAMPLE_RATE);
        for i in 0..len {
            left[i] += pair.left[i];
            right[i] += pair.right[i];
        }
    }
    BinauralPair::new(left, right, SAMPLE_RATE)
}
