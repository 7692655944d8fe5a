//! Sliding-window binauralization and occlusion-based localization.

use m2b_tensor::Tensor;
use serde::{Deserialize, Serialize};

use super::train::m2b_example;
use super::{frame_tensor, Clip, FrameProvider, InferConfig};
use crate::audio::{istft, stft, SpectrogramParams, Waveform, SAMPLE_RATE};
use crate::binaural::{apply_complex_mask, reconstruct_channels, BinauralPair};
use crate::net::{batch, mask_from_net, spec_to_net, unbatch, Network, Task};
use crate::scene::FrameImage;
use crate::{Error, Result};

/// Window start offsets: every `hop` from 0, plus one window aligned to the
/// clip end when the regular grid stops short of it.
pub fn window_starts(len: usize, window: usize, hop: usize) -> Result<Vec<usize>> {
    if len < window {
        return Err(Error::ClipTooShort { len, needed: window });
    }
    let mut starts: Vec<usize> = (0..=(len - window) / hop).map(|i| i * hop).collect();
    if starts.last().is_some_and(|&s| s + window < len) {
        starts.push(len - window);
    }
    Ok(starts)
}

fn check_binaural(net: &Network<f32>) -> Result<()> {
    if net.config().task != Task::Binaural {
        return Err(Error::format("network", "binauralization needs a binaural network"));
    }
    Ok(())
}

/// Converts a 16 kHz mono clip into a binaural pair.
///
/// Each window is level-normalized, masked and inverted to a difference
/// signal; overlapping difference samples are averaged by coverage count and
/// the ears are recovered from the original mono, so `L + R` reproduces it.
pub fn binauralize(
    net: &Network<f32>,
    mono: &Waveform,
    frames: &dyn FrameProvider,
    cfg: &InferConfig,
) -> Result<BinauralPair> {
    cfg.validate()?;
    check_binaural(net)?;
    if mono.sample_rate() != SAMPLE_RATE {
        return Err(Error::InvalidAudio(format!(
            "binauralization runs at {SAMPLE_RATE} Hz, input is {} Hz",
            mono.sample_rate()
        )));
    }
    let x = mono.samples()?;
    let (window, hop) = (cfg.window_samples(), cfg.hop_samples());
    let starts = window_starts(x.len(), window, hop)?;
    let p = SpectrogramParams::default();
    let mut acc = vec![0.0; x.len()];
    let mut count = vec![0u32; x.len()];

    for chunk in starts.chunks(cfg.batch_size) {
        let mut specs = Vec::new();
        let mut inputs = Vec::new();
        let mut frame_batch = Vec::new();
        let mut active = Vec::new();
        for &s in chunk {
            count[s..s + window].iter_mut().for_each(|c| *c += 1);
            let seg = &x[s..s + window];
            let rms = (seg.iter().map(|v| v * v).sum::<f64>() / window as f64).sqrt();
            // a silent window contributes a zero difference
            if rms == 0.0 {
                continue;
            }
            let g = cfg.target_rms / rms;
            let xm = stft(&Waveform::mono(seg.iter().map(|v| v * g).collect(), SAMPLE_RATE)?, &p)?;
            inputs.push(spec_to_net::<f32>(&xm)?);
            specs.push(xm);
            if net.config().use_visual {
                let center = (s as f64 + window as f64 / 2.0) / SAMPLE_RATE as f64;
                frame_batch.push(frame_tensor(&frames.frame_at(center)?)?);
            }
            active.push((s, g));
        }
        if active.is_empty() {
            continue;
        }
        let fr = if frame_batch.is_empty() {
            None
        } else {
            Some(batch(&frame_batch)?)
        };
        let masks = unbatch(&net.predict(batch(&inputs)?, fr)?)?;
        for ((mask, xm), &(s, g)) in masks.iter().zip(&specs).zip(&active) {
            let xd = apply_complex_mask(xm, &mask_from_net(mask)?)?;
            let d = istft(&xd, &p, window, SAMPLE_RATE)?;
            for (a, v) in acc[s..s + window].iter_mut().zip(d.channel(0)) {
                *a += v / g;
            }
        }
    }
    let diff: Vec<f64> = acc.iter().zip(&count).map(|(a, &c)| a / c as f64).collect();
    reconstruct_channels(mono, &Waveform::mono(diff, SAMPLE_RATE)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcclusionConfig {
    pub mask_px: usize,
    pub stride_px: usize,
    /// Non-overlapping windows of the clip scored per occluder placement.
    pub max_windows: usize,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        OcclusionConfig {
            mask_px: 32,
            stride_px: 16,
            max_windows: 3,
        }
    }
}

/// Loss per occluder placement, row-major over the placement grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub mask_px: usize,
    pub stride_px: usize,
    pub losses: Vec<f64>,
    /// Losses min-max scaled to `[0, 1]`.
    pub normalized: Vec<f64>,
    /// Loss with the unoccluded frame.
    pub baseline_loss: f64,
}

impl Heatmap {
    pub fn argmax(&self) -> (usize, usize) {
        let i = (0..self.losses.len())
            .max_by(|&a, &b| self.losses[a].total_cmp(&self.losses[b]).then(b.cmp(&a)))
            .expect("non-empty grid");
        (i / self.cols, i % self.cols)
    }

    /// Pixel rectangle `(row0, col0, row1, col1)` (exclusive ends) covered by placement `(r, c)`.
    pub fn placement_rect(&self, r: usize, c: usize) -> (usize, usize, usize, usize) {
        let (r0, c0) = (r * self.stride_px, c * self.stride_px);
        (r0, c0, r0 + self.mask_px, c0 + self.mask_px)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,y0,x0,loss,normalized\n");
        for r in 0..self.rows {
            for c in 0..self.cols {
                let i = r * self.cols + c;
                out.push_str(&format!(
                    "{r},{c},{},{},{:?},{:?}\n",
                    r * self.stride_px,
                    c * self.stride_px,
                    self.losses[i],
                    self.normalized[i]
                ));
            }
        }
        out
    }

    /// Grayscale image: each pixel takes the mean normalized value of the placements covering it.
    pub fn to_frame(&self, height: usize, width: usize) -> FrameImage {
        let mut img = FrameImage::filled(height, width, [0.0; 3]);
        for y in 0..height {
            for x in 0..width {
                let mut sum = 0.0;
                let mut n = 0;
                for r in 0..self.rows {
                    for c in 0..self.cols {
                        let (r0, c0, r1, c1) = self.placement_rect(r, c);
                        if (r0..r1).contains(&y) && (c0..c1).contains(&x) {
                            sum += self.normalized[r * self.cols + c];
                            n += 1;
                        }
                    }
                }
                let v = if n > 0 { (sum / n as f64) as f32 } else { 0.0 };
                img.set_pixel(y, x, [v; 3]);
            }
        }
        img
    }
}

/// Mean complex-spectrogram MSE of the network's prediction on `examples` under `frame`.
fn occlusion_loss(net: &Network<f32>, examples: &[(Tensor<f32>, Tensor<f32>)], frame: &FrameImage) -> Result<f64> {
    let xm: Vec<Tensor<f32>> = examples.iter().map(|e| e.0.clone()).collect();
    let fr = frame_tensor::<f32>(frame)?;
    let frames = batch(&vec![fr; examples.len()])?;
    let masks = net.predict(batch(&xm)?, Some(frames))?;
    let per = masks.numel() / examples.len();
    let plane = per / 2;
    let mut total = 0.0;
    for (i, (m, d)) in examples.iter().enumerate() {
        let mk = &masks.data()[i * per..(i + 1) * per];
        let (mv, dv) = (m.data(), d.data());
        for k in 0..plane {
            let (ar, ai) = (mk[k] as f64, mk[plane + k] as f64);
            let (br, bi) = (mv[k] as f64, mv[plane + k] as f64);
            let er = ar * br - ai * bi - dv[k] as f64;
            let ei = ar * bi + ai * br - dv[plane + k] as f64;
            total += er * er + ei * ei;
        }
    }
    Ok(total / (per * examples.len()) as f64)
}

/// Slides a mean-colored square over the clip's frame and records the
/// binauralization loss for each placement.
pub fn localize_by_occlusion(net: &Network<f32>, clip: &Clip, window_s: f64, cfg: &OcclusionConfig) -> Result<Heatmap> {
    check_binaural(net)?;
    if !net.config().use_visual {
        return Err(Error::format(
            "network",
            "occlusion needs a network with a visual branch",
        ));
    }
    let (h, w) = (clip.frame.height(), clip.frame.width());
    if cfg.mask_px == 0 || cfg.stride_px == 0 || cfg.mask_px > h.min(w) || cfg.max_windows == 0 {
        return Err(Error::format(
            "occlusion config",
            format!("{cfg:?} does not fit a {h}x{w} frame"),
        ));
    }
    let window = (window_s * SAMPLE_RATE as f64).round() as usize;
    let starts = window_starts(clip.len(), window, window)?;
    let examples = starts
        .iter()
        .take(cfg.max_windows)
        .filter_map(|&s| match m2b_example(clip, s, window, 0.1) {
            Err(Error::SilentSegment) => None,
            other => Some(other),
        })
        .collect::<Result<Vec<_>>>()?;
    if examples.is_empty() {
        return Err(Error::SilentSegment);
    }
    let rows = 1 + (h - cfg.mask_px) / cfg.stride_px;
    let cols = 1 + (w - cfg.mask_px) / cfg.stride_px;
    let fill = clip.frame.mean_color();
    let baseline_loss = occlusion_loss(net, &examples, &clip.frame)?;
    let mut losses = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let occluded = clip
                .frame
                .occluded(r * cfg.stride_px, c * cfg.stride_px, cfg.mask_px, fill);
            losses.push(occlusion_loss(net, &examples, &occluded)?);
        }
    }
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let normalized = losses
        .iter()
        .map(|l| if hi > lo { (l - lo) / (hi - lo) } else { 0.0 })
        .collect();
    Ok(Heatmap {
        rows,
        cols,
        mask_px: cfg.mask_px,
        stride_px: cfg.stride_px,
        losses,
        normalized,
        baseline_loss,
    })
}
