//! Training loop for the binauralization network.

use m2b_tensor::{Adam, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{frame_tensor, Clip, TrainConfig};
use crate::audio::{stft, SpectrogramParams, Waveform, SAMPLE_RATE};
use crate::net::{batch, spec_to_net, NetConfig, Network, Task};
use crate::scene::disk_geometry;
use crate::{Error, Result};

/// A trained network, its optimizer state and the per-step training loss.
pub struct Trained {
    pub net: Network<f32>,
    pub adam: Adam<f32>,
    pub history: Vec<f64>,
}

const DATA_STREAM: u64 = 0x5eed_da7a;
const AUGMENT_STREAM: u64 = 0xe7a5_e000;
const SEGMENT_RETRIES: usize = 8;

/// Network inputs `(X^M, X^D)` for `clip[start..start + len]`, level-normalized by the mono RMS.
pub(crate) fn m2b_example(
    clip: &Clip,
    start: usize,
    len: usize,
    target_rms: f64,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let m = &clip.mono[start..start + len];
    let rms = (m.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms == 0.0 {
        return Err(Error::SilentSegment);
    }
    let g = target_rms / rms;
    let p = SpectrogramParams::default();
    let mono = Waveform::mono(m.iter().map(|v| v * g).collect(), SAMPLE_RATE)?;
    let diff = Waveform::mono(
        (start..start + len)
            .map(|i| (clip.left[i] - clip.right[i]) * g)
            .collect(),
        SAMPLE_RATE,
    )?;
    Ok((spec_to_net(&stft(&mono, &p)?)?, spec_to_net(&stft(&diff, &p)?)?))
}

const ERASE_TRIES: usize = 16;

/// With probability `frame_erase_prob`, a copy of the clip's frame with a
/// randomly placed square of background filled with the frame's mean color.
/// Squares that would touch a source disk are redrawn.
fn erased_frame(clip: &Clip, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Option<Tensor<f32>>> {
    if cfg.frame_erase_prob == 0.0 || rng.gen::<f64>() >= cfg.frame_erase_prob {
        return Ok(None);
    }
    let frame = &clip.frame;
    let (h, w) = (frame.height(), frame.width());
    let px = cfg.frame_erase_px.min(h).min(w);
    let disks: Vec<(f64, f64, f64)> = clip
        .scene
        .sources
        .iter()
        .map(|s| disk_geometry(s.azimuth_deg, h, w))
        .collect();
    for _ in 0..ERASE_TRIES {
        let row = rng.gen_range(0..=h - px);
        let col = rng.gen_range(0..=w - px);
        let touches = disks.iter().any(|&(cx, cy, r)| {
            let nx = cx.clamp(col as f64, (col + px) as f64);
            let ny = cy.clamp(row as f64, (row + px) as f64);
            (nx - cx).powi(2) + (ny - cy).powi(2) <= r * r
        });
        if !touches {
            return Ok(Some(frame_tensor(&frame.occluded(row, col, px, frame.mean_color()))?));
        }
    }
    Ok(None)
}

/// Trains a binauralization network (full or audio-only, per `net_config`)
/// with L2 loss between predicted and true difference spectrograms.
///
/// An epoch visits every clip once in shuffled order, one random segment per
/// visit. Everything is determined by `cfg.seed`.
pub fn train_m2b(clips: &[Clip], net_config: NetConfig, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if net_config.task != Task::Binaural {
        return Err(Error::format(
            "network config",
            "binaural training needs a binaural network",
        ));
    }
    if clips.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    let seg = cfg.segment_samples();
    if let Some(c) = clips.iter().find(|c| c.len() < seg) {
        return Err(Error::ClipTooShort {
            len: c.len(),
            needed: seg,
        });
    }
    let use_visual = net_config.use_visual;
    let mut net: Network<f32> = Network::new(net_config, cfg.seed)?;
    let (mut adam, scales) = cfg.adam(net.params());
    let frames: Vec<Tensor<f32>> = clips.iter().map(|c| frame_tensor(&c.frame)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_STREAM);
    let mut aug = ChaCha8Rng::seed_from_u64(cfg.seed ^ AUGMENT_STREAM);
    let bsz = cfg.batch_size.min(clips.len());
    let steps_per_epoch = (clips.len() / bsz).max(1);
    let mut order: Vec<usize> = (0..clips.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs * steps_per_epoch);

    for epoch in 0..cfg.epochs {
        adam.config.lr = cfg.lr_at_epoch(epoch);
        order.shuffle(&mut rng);
        for step in 0..steps_per_epoch {
            let mut xm = Vec::with_capacity(bsz);
            let mut xd = Vec::with_capacity(bsz);
            let mut fr = Vec::with_capacity(bsz);
            for &ci in &order[step * bsz..(step + 1) * bsz] {
                for _ in 0..SEGMENT_RETRIES {
                    let start = rng.gen_range(0..=clips[ci].len() - seg);
                    match m2b_example(&clips[ci], start, seg, cfg.target_rms) {
                        Ok((m, d)) => {
                            xm.push(m);
                            xd.push(d);
                            fr.push(erased_frame(&clips[ci], cfg, &mut aug)?.unwrap_or_else(|| frames[ci].clone()));
                            break;
                        }
                        Err(Error::SilentSegment) => continue,
                        Err(e) => return Err(e),
                    }
                }
            }
            if xm.len() < 2 {
                continue;
            }
            let xm = batch(&xm)?;
            let xd = batch(&xd)?;
            let fr = if use_visual { Some(batch(&fr)?) } else { None };

            let mut tape = Tape::new();
            let (mask, vars) = net.forward_train(&mut tape, xm.clone(), fr)?;
            let xm = tape.constant(xm);
            let pred = tape.complex_mul(mask, xm)?;
            let target = tape.constant(xd);
            let loss = tape.mse_loss(pred, target)?;
            let value = tape.value(loss).data()[0] as f64;
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {value} at epoch {epoch}, step {step}"
                )));
            }
            tape.backward(loss)?;
            let grads: Vec<Tensor<f32>> = vars
                .iter()
                .zip(net.params().values())
                .map(|(&v, p)| tape.grad(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            adam.step(net.params_mut().values_mut(), &grads, &scales)?;
            history.push(value);
        }
    }
    Ok(Trained { net, adam, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{render_frame, SceneDescriptor, SourceSpec};

    #[test]
    fn erasing_leaves_disks_intact() {
        let scene = SceneDescriptor {
            sources: vec![SourceSpec {
                azimuth_deg: -30.0,
                class_id: 1,
                gain: 1.0,
                waveform_ref: "synth:1:0".into(),
            }],
            duration_s: 1.0,
            seed: 0,
        };
        let frame = render_frame(&scene, 64, 128);
        let clip = Clip {
            id: "c".into(),
            mono: vec![],
            left: vec![],
            right: vec![],
            frame: frame.clone(),
            scene,
        };
        let cfg = TrainConfig {
            frame_erase_prob: 1.0,
            ..TrainConfig::default()
        };
        let clean = frame.to_chw();
        let disk: Vec<usize> = (0..64 * 128)
            .filter(|&i| frame.data()[3 * i..3 * i + 3].iter().any(|&v| v > 0.5))
            .collect();
        assert!(!disk.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut erased = 0;
        for _ in 0..200 {
            if let Some(t) = erased_frame(&clip, &cfg, &mut rng).unwrap() {
                erased += 1;
                let changed = t.data().iter().zip(&clean).filter(|(a, b)| a != b).count();
                assert!(changed > 0);
                for &i in &disk {
                    for ch in 0..3 {
                        assert_eq!(t.data()[ch * 64 * 128 + i], clean[ch * 64 * 128 + i]);
                    }
                }
            }
        }
        assert!(erased > 150);
        let off = TrainConfig::default();
        assert!(erased_frame(&clip, &off, &mut rng).unwrap().is_none());
    }
}
