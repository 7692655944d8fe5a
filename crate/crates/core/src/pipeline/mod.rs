//! Training, sliding-window binauralization, occlusion localization and
//! mix-and-separate.

mod infer;
pub(crate) mod separation;
mod train;

pub use infer::{binauralize, localize_by_occlusion, window_starts, Heatmap, OcclusionConfig};
pub use separation::{ratio_mask, separate, separation_inputs, train_separation, AudioMode, SeparationExample};
pub use train::{train_m2b, Trained};

use std::path::Path;

use m2b_tensor::{Adam, AdamConfig, Element, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::wav::read_wav;
use crate::audio::SAMPLE_RATE;
use crate::net::{ParamGroup, ParamSet};
use crate::scene::{DatasetManifest, FrameImage, ManifestEntry, SceneDescriptor, Split};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Learning-rate multiplier for the visual branch.
    pub visual_lr_mult: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Multiplicative decay applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub segment_len_s: f64,
    /// Segments are scaled to this RMS before analysis.
    pub target_rms: f64,
    /// Probability that a training frame gets a random background square
    /// painted in its mean color (binaural training only).
    pub frame_erase_prob: f64,
    pub frame_erase_px: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            visual_lr_mult: 0.1,
            weight_decay: 5e-4,
            batch_size: 16,
            epochs: 60,
            lr_decay: 0.94,
            decay_every: 10,
            segment_len_s: 0.63,
            target_rms: 0.1,
            frame_erase_prob: 0.0,
            frame_erase_px: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.lr,
            self.visual_lr_mult,
            self.lr_decay,
            self.segment_len_s,
            self.target_rms,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.weight_decay < 0.0 {
            return Err(Error::format(
                "train config",
                format!("rates and lengths must be positive: {self:?}"),
            ));
        }
        if !(0.0..=1.0).contains(&self.frame_erase_prob) || self.frame_erase_px == 0 {
            return Err(Error::format(
                "train config",
                "frame_erase_prob must be in [0, 1] and frame_erase_px positive",
            ));
        }
        if self.batch_size < 2 || self.epochs == 0 || self.decay_every == 0 {
            return Err(Error::format(
                "train config",
                "batch_size must be at least 2 (batch norm) and epochs, decay_every positive",
            ));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }

    pub fn segment_samples(&self) -> usize {
        (self.segment_len_s * SAMPLE_RATE as f64).round() as usize
    }

    pub(crate) fn adam<T: Element>(&self, params: &ParamSet<T>) -> (Adam<T>, Vec<f64>) {
        let adam = Adam::new(
            AdamConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..AdamConfig::default()
            },
            params.values().iter().map(Tensor::shape),
        );
        let scales = params
            .groups()
            .iter()
            .map(|g| match g {
                ParamGroup::Audio => 1.0,
                ParamGroup::Visual => self.visual_lr_mult,
            })
            .collect();
        (adam, scales)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub target_rms: f64,
    /// Windows evaluated per network call.
    pub batch_size: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            window_s: 0.63,
            hop_s: 0.05,
            target_rms: 0.1,
            batch_size: 16,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.hop_s > 0.0 && self.hop_s <= self.window_s && self.target_rms > 0.0)
            || self.batch_size == 0
        {
            return Err(Error::format(
                "infer config",
                format!("need 0 < hop <= window: {self:?}"),
            ));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_s * SAMPLE_RATE as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        ((self.hop_s * SAMPLE_RATE as f64).round() as usize).max(1)
    }
}

/// Supplies the visual frame for an instant of the clip.
pub trait FrameProvider: Sync {
    fn frame_at(&self, time_s: f64) -> Result<FrameImage>;
}

impl FrameProvider for FrameImage {
    fn frame_at(&self, _time_s: f64) -> Result<FrameImage> {
        Ok(self.clone())
    }
}

/// Frames sampled at a fixed rate; times between frames use the nearest one.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Vec<FrameImage>,
    pub fps: f64,
}

impl FrameSequence {
    /// Reads every `.ppm` file in `dir`, in file-name order.
    pub fn from_dir(dir: impl AsRef<Path>, fps: f64) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(Error::at_path(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::format(
                "frame directory",
                format!("no .ppm files in {}", dir.display()),
            ));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::format(
                "frame directory",
                format!("frame rate {fps} must be positive"),
            ));
        }
        let frames = paths.iter().map(FrameImage::read_ppm).collect::<Result<Vec<_>>>()?;
        Ok(FrameSequence { frames, fps })
    }
}

impl FrameProvider for FrameSequence {
    fn frame_at(&self, time_s: f64) -> Result<FrameImage> {
        let i = (time_s * self.fps).round().max(0.0) as usize;
        Ok(self.frames[i.min(self.frames.len() - 1)].clone())
    }
}

/// A clip's audio and frame, loaded into memory.
#[derive(Debug, Clone)]
pub struct Clip {
    pub id: String,
    pub mono: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub frame: FrameImage,
    pub scene: SceneDescriptor,
}

impl Clip {
    pub fn load(manifest: &DatasetManifest, entry: &ManifestEntry) -> Result<Clip> {
        let mono = read_wav(manifest.resolve(&entry.mono_wav))?;
        let bin = read_wav(manifest.resolve(&entry.binaural_wav))?;
        if mono.sample_rate() != SAMPLE_RATE || bin.sample_rate() != SAMPLE_RATE {
            return Err(Error::InvalidAudio(format!(
                "{}: clips must be sampled at {SAMPLE_RATE} Hz",
                entry.id
            )));
        }
        if !mono.is_mono() || bin.num_channels() != 2 || mono.len() != bin.len() {
            return Err(Error::shape(format!("{}: mono/binaural files disagree", entry.id)));
        }
        let mut ch = bin.into_channels();
        let right = ch.pop().expect("two channels");
        let left = ch.pop().expect("two channels");
        Ok(Clip {
            id: entry.id.clone(),
            mono: mono.into_channels().pop().expect("one channel"),
            left,
            right,
            frame: FrameImage::read_ppm(manifest.resolve(&entry.frame_image))?,
            scene: entry.scene.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.mono.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mono.is_empty()
    }
}

/// Loads every clip of `split`, in manifest order.
pub fn load_split(manifest: &DatasetManifest, split: Split) -> Result<Vec<Clip>> {
    let entries: Vec<&ManifestEntry> = manifest.split(split).collect();
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    entries.par_iter().map(|e| Clip::load(manifest, e)).collect()
}

pub(crate) fn frame_tensor<T: Element>(frame: &FrameImage) -> Result<Tensor<T>> {
    let data = frame.to_chw().into_iter().map(|v| T::from_f64(v as f64)).collect();
    Ok(Tensor::new(&[1, 3, frame.height(), frame.width()], data)?)
}

/// Writes a per-step loss history as `step,loss` CSV.
pub fn write_loss_csv(path: impl AsRef<Path>, history: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("step,loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{i},{l:?}\n"));
    }
    std::fs::write(path, out).map_err(Error::at_path(path))
}
