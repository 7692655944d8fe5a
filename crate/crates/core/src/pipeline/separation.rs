//! Mix-and-separate: two clips are mixed and the network recovers each one
//! from the mixture, conditioned on that clip's frame.

use std::fmt;
use std::str::FromStr;

use m2b_tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{binauralize, frame_tensor, Clip, InferConfig, TrainConfig, Trained};
use crate::audio::{istft, stft, ComplexSpectrogram, SpectrogramParams, Waveform, SAMPLE_RATE};
use crate::net::{batch, log_magnitude, NetConfig, Network, Task, DEPTH};
use crate::scene::FrameImage;
use crate::{Error, Result};

/// Audio representation seen by the separation network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AudioMode {
    /// The mono mix only.
    Mono,
    /// Binaural audio predicted from each clip's mono track.
    Predicted,
    /// The recorded (rendered) binaural audio.
    Gt,
}

impl AudioMode {
    pub const ALL: [AudioMode; 3] = [AudioMode::Mono, AudioMode::Predicted, AudioMode::Gt];

    pub fn channels(self) -> usize {
        match self {
            AudioMode::Mono => 1,
            AudioMode::Predicted | AudioMode::Gt => 2,
        }
    }
}

impl fmt::Display for AudioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AudioMode::Mono => "mono",
            AudioMode::Predicted => "predicted",
            AudioMode::Gt => "gt",
        })
    }
}

impl FromStr for AudioMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mono" => Ok(AudioMode::Mono),
            "predicted" | "predicted_binaural" => Ok(AudioMode::Predicted),
            "gt" | "gt_binaural" => Ok(AudioMode::Gt),
            other => Err(Error::format(
                "audio mode",
                format!("`{other}` is not mono, predicted or gt"),
            )),
        }
    }
}

/// `|target| / |mix|` per bin, clamped to `[0, 1]`; zero where the mixture is silent.
pub fn ratio_mask(target: &ComplexSpectrogram, mix: &ComplexSpectrogram) -> Result<Vec<f64>> {
    if !target.same_shape(mix) {
        return Err(Error::shape("ratio mask needs equally shaped spectrograms"));
    }
    Ok(target
        .data()
        .iter()
        .zip(mix.data())
        .map(|(t, m)| {
            let mm = m.norm();
            if mm < 1e-12 {
                0.0
            } else {
                (t.norm() / mm).min(1.0)
            }
        })
        .collect())
}

/// Per-channel tracks of each clip in the representation `mode` needs.
pub(crate) fn clip_tracks(
    clips: &[Clip],
    mode: AudioMode,
    m2b: Option<&Network<f32>>,
    infer: &InferConfig,
) -> Result<Vec<Vec<Vec<f64>>>> {
    match mode {
        AudioMode::Mono => Ok(clips.iter().map(|c| vec![c.mono.clone()]).collect()),
        AudioMode::Gt => Ok(clips.iter().map(|c| vec![c.left.clone(), c.right.clone()]).collect()),
        AudioMode::Predicted => {
            let net =
                m2b.ok_or_else(|| Error::MissingCheckpoint("predicted mode needs a binauralization model".into()))?;
            clips
                .par_iter()
                .map(|c| {
                    let pair = binauralize(net, &Waveform::mono(c.mono.clone(), SAMPLE_RATE)?, &c.frame, infer)?;
                    Ok(vec![pair.left, pair.right])
                })
                .collect()
        }
    }
}

/// A two-clip mixture segment with everything needed to train on or score it.
#[derive(Debug, Clone)]
pub struct SeparationExample {
    /// Mixture channels.
    pub mixture: Vec<Vec<f64>>,
    /// Per clip, per channel source tracks (same gain as in the mixture).
    pub sources: [Vec<Vec<f64>>; 2],
    /// Per clip mono references.
    pub mono: [Vec<f64>; 2],
}

/// Cuts `len` samples from each clip at the given offsets, scales each clip
/// to `target_rms` (by its mono RMS) and mixes them.
pub fn separation_inputs(
    tracks: [&[Vec<f64>]; 2],
    monos: [&[f64]; 2],
    starts: [usize; 2],
    len: usize,
    target_rms: f64,
) -> Result<SeparationExample> {
    let mut sources: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut mono: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for k in 0..2 {
        let m = &monos[k][starts[k]..starts[k] + len];
        let rms = (m.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        if rms == 0.0 {
            return Err(Error::SilentSegment);
        }
        let g = target_rms / rms;
        mono[k] = m.iter().map(|v| v * g).collect();
        sources[k] = tracks[k]
            .iter()
            .map(|ch| ch[starts[k]..starts[k] + len].iter().map(|v| v * g).collect())
            .collect();
    }
    if sources[0].len() != sources[1].len() {
        return Err(Error::shape("clips have different channel counts"));
    }
    let mixture = sources[0]
        .iter()
        .zip(&sources[1])
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    Ok(SeparationExample { mixture, sources, mono })
}

fn spectrograms(channels: &[Vec<f64>]) -> Result<Vec<ComplexSpectrogram>> {
    let p = SpectrogramParams::default();
    channels
        .iter()
        .map(|c| stft(&Waveform::mono(c.clone(), SAMPLE_RATE)?, &p))
        .collect()
}

fn stack_channels(planes: Vec<Tensor<f32>>) -> Result<Tensor<f32>> {
    let (_, _, h, w) = planes[0].dims4()?;
    let data: Vec<f32> = planes.iter().flat_map(|t| t.data().iter().copied()).collect();
    Ok(Tensor::new(&[1, planes.len(), h, w], data)?)
}

/// Drops the Nyquist bin of a `T × F` mask and lays it out as one channel plane.
fn mask_plane(mask: &[f64], frames: usize, bins: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(frames * (bins - 1));
    for t in 0..frames {
        out.extend(mask[t * bins..t * bins + bins - 1].iter().map(|&v| v as f32));
    }
    out
}

/// Network input `[1, C, T, F−1]` and the two ratio-mask targets.
fn training_tensors(ex: &SeparationExample) -> Result<(Tensor<f32>, [Tensor<f32>; 2])> {
    let mix = spectrograms(&ex.mixture)?;
    let input = stack_channels(mix.iter().map(log_magnitude).collect::<Result<_>>()?)?;
    let (frames, bins) = (mix[0].frames(), mix[0].bins());
    let mut targets = Vec::with_capacity(2);
    for src in &ex.sources {
        let specs = spectrograms(src)?;
        let mut data = Vec::new();
        for (s, m) in specs.iter().zip(&mix) {
            data.extend(mask_plane(&ratio_mask(s, m)?, frames, bins));
        }
        targets.push(Tensor::new(&[1, mix.len(), frames, bins - 1], data)?);
    }
    let b = targets.pop().expect("two targets");
    let a = targets.pop().expect("two targets");
    Ok((input, [a, b]))
}

fn check_segment(len: usize) -> Result<()> {
    let frames = SpectrogramParams::default().num_frames(len);
    if frames % (1 << DEPTH) != 0 {
        return Err(Error::format(
            "train config",
            format!(
                "a {len}-sample segment gives {frames} frames, not a multiple of {}",
                1 << DEPTH
            ),
        ));
    }
    Ok(())
}

/// Trains a separation network on random two-clip mixtures with L1 loss on
/// ratio masks. In predicted mode each clip is first binauralized with the
/// frozen `m2b` model.
pub fn train_separation(
    clips: &[Clip],
    net_config: NetConfig,
    cfg: &TrainConfig,
    mode: AudioMode,
    m2b: Option<&Network<f32>>,
    infer: &InferConfig,
) -> Result<Trained> {
    cfg.validate()?;
    if net_config.task
        != (Task::Separation {
            channels: mode.channels(),
        })
    {
        return Err(Error::format(
            "network config",
            format!(
                "{mode} separation needs a {}-channel separation network",
                mode.channels()
            ),
        ));
    }
    if clips.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    let seg = cfg.segment_samples();
    check_segment(seg)?;
    if let Some(c) = clips.iter().find(|c| c.len() < seg) {
        return Err(Error::ClipTooShort {
            len: c.len(),
            needed: seg,
        });
    }
    let tracks = clip_tracks(clips, mode, m2b, infer)?;
    let use_visual = net_config.use_visual;
    let mut net: Network<f32> = Network::new(net_config, cfg.seed)?;
    let (mut adam, scales) = cfg.adam(net.params());
    let frames: Vec<Tensor<f32>> = clips.iter().map(|c| frame_tensor(&c.frame)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e9a_4a7e);
    // each mixture contributes two network rows
    let pairs_per_step = (cfg.batch_size / 2).max(1);
    let steps_per_epoch = (clips.len() / (2 * pairs_per_step)).max(1);
    let mut history = Vec::with_capacity(cfg.epochs * steps_per_epoch);

    for epoch in 0..cfg.epochs {
        adam.config.lr = cfg.lr_at_epoch(epoch);
        for step in 0..steps_per_epoch {
            let mut inputs = Vec::new();
            let mut targets = Vec::new();
            let mut fr = Vec::new();
            for _ in 0..pairs_per_step {
                let (a, b) = pick_pair(clips, &mut rng);
                let starts = [
                    rng.gen_range(0..=clips[a].len() - seg),
                    rng.gen_range(0..=clips[b].len() - seg),
                ];
                let ex = match separation_inputs(
                    [&tracks[a], &tracks[b]],
                    [&clips[a].mono, &clips[b].mono],
                    starts,
                    seg,
                    cfg.target_rms,
                ) {
                    Ok(ex) => ex,
                    Err(Error::SilentSegment) => continue,
                    Err(e) => return Err(e),
                };
                let (input, [ta, tb]) = training_tensors(&ex)?;
                inputs.push(input.clone());
                inputs.push(input);
                targets.push(ta);
                targets.push(tb);
                fr.push(frames[a].clone());
                fr.push(frames[b].clone());
            }
            if inputs.is_empty() {
                continue;
            }
            let fr = if use_visual { Some(batch(&fr)?) } else { None };
            let mut tape = Tape::new();
            let (mask, vars) = net.forward_train(&mut tape, batch(&inputs)?, fr)?;
            let target = tape.constant(batch(&targets)?);
            let loss = tape.l1_loss(mask, target)?;
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

/// Two distinct clips, uniformly at random.
fn pick_pair(clips: &[Clip], rng: &mut ChaCha8Rng) -> (usize, usize) {
    let a = rng.gen_range(0..clips.len());
    let mut b = rng.gen_range(0..clips.len() - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Separates a mixture (one or two channels) into one estimate per frame.
///
/// The mixture is processed in consecutive segments of `segment_samples`
/// (the last one zero-padded), level-normalized to `target_rms·√2`. Each
/// estimate keeps the mixture phase. Returns `[video][channel][sample]`.
pub fn separate(
    net: &Network<f32>,
    mixture: &[Vec<f64>],
    frames: &[FrameImage],
    segment_samples: usize,
    target_rms: f64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let channels = match net.config().task {
        Task::Separation { channels } => channels,
        Task::Binaural => return Err(Error::format("network", "separation needs a separation network")),
    };
    if mixture.len() != channels || mixture.iter().any(|c| c.len() != mixture[0].len()) {
        return Err(Error::shape(format!(
            "network separates {channels}-channel mixtures, got {}",
            mixture.len()
        )));
    }
    if frames.is_empty() {
        return Err(Error::shape("need at least one frame to condition on"));
    }
    check_segment(segment_samples)?;
    let len = mixture[0].len();
    if len == 0 {
        return Err(Error::InvalidAudio("empty mixture".into()));
    }
    let p = SpectrogramParams::default();
    let fr: Vec<Tensor<f32>> = frames.iter().map(frame_tensor).collect::<Result<_>>()?;
    let mut out = vec![vec![vec![0.0; len]; channels]; frames.len()];
    let mut start = 0;
    while start < len {
        let n = segment_samples.min(len - start);
        let chunk: Vec<Vec<f64>> = mixture
            .iter()
            .map(|c| {
                let mut v = c[start..start + n].to_vec();
                v.resize(segment_samples, 0.0);
                v
            })
            .collect();
        let mono_rms = {
            let m: Vec<f64> = (0..segment_samples)
                .map(|i| chunk.iter().map(|c| c[i]).sum::<f64>())
                .collect();
            (m.iter().map(|v| v * v).sum::<f64>() / segment_samples as f64).sqrt()
        };
        if mono_rms > 0.0 {
            let g = target_rms * std::f64::consts::SQRT_2 / mono_rms;
            let scaled: Vec<Vec<f64>> = chunk.iter().map(|c| c.iter().map(|v| v * g).collect()).collect();
            let specs = spectrograms(&scaled)?;
            let input = stack_channels(specs.iter().map(log_magnitude).collect::<Result<_>>()?)?;
            let inputs = vec![input; frames.len()];
            let fb = if net.config().use_visual {
                Some(batch(&fr)?)
            } else {
                None
            };
            let masks = net.predict(batch(&inputs)?, fb)?;
            let (frames_t, bins) = (specs[0].frames(), specs[0].bins());
            let plane = frames_t * (bins - 1);
            for (v, video_out) in out.iter_mut().enumerate() {
                for (c, spec) in specs.iter().enumerate() {
                    let m = &masks.data()[(v * channels + c) * plane..(v * channels + c + 1) * plane];
                    let mut est = spec.clone();
                    for t in 0..frames_t {
                        for k in 0..bins {
                            // the Nyquist bin is not predicted
                            let gain = if k + 1 < bins {
                                m[t * (bins - 1) + k] as f64
                            } else {
                                0.0
                            };
                            est.data_mut()[t * bins + k] *= gain;
                        }
                    }
                    let wave = istft(&est, &p, segment_samples, SAMPLE_RATE)?;
                    for (o, s) in video_out[c][start..start + n].iter_mut().zip(wave.channel(0)) {
                        *o = s / g;
                    }
                }
            }
        }
        start += n;
    }
    Ok(out)
}
