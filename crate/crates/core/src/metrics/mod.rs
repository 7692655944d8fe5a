//! Binaural distances, baselines, BSS-Eval and benchmark reports.

mod bss;

pub use bss::{bss_eval, BssResult, DB_CAP, DEFAULT_FILTER_LEN};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::{envelope, stft, SpectrogramParams, Waveform, SAMPLE_RATE};
use crate::binaural::BinauralPair;
use crate::net::Network;
use crate::pipeline::{binauralize, separate, separation_inputs, AudioMode, Clip, FrameProvider, InferConfig};
use crate::scene::FrameImage;
use crate::{Error, Result};

fn check_pair(gt: &BinauralPair, pred: &BinauralPair) -> Result<()> {
    if gt.len() != pred.len() || gt.sample_rate != pred.sample_rate {
        return Err(Error::shape(format!(
            "ground truth {} samples at {} Hz, prediction {} at {} Hz",
            gt.len(),
            gt.sample_rate,
            pred.len(),
            pred.sample_rate
        )));
    }
    Ok(())
}

/// `‖X^L − X̃^L‖ + ‖X^R − X̃^R‖` over complex STFT bins.
pub fn stft_distance(gt: &BinauralPair, pred: &BinauralPair) -> Result<f64> {
    check_pair(gt, pred)?;
    let p = SpectrogramParams::default();
    let mut total = 0.0;
    for (a, b) in [(&gt.left, &pred.left), (&gt.right, &pred.right)] {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        // the transform is linear, so the distance is the norm of the difference's spectrogram
        let s = stft(&Waveform::mono(diff, gt.sample_rate)?, &p)?;
        total += s.energy().sqrt();
    }
    Ok(total)
}

/// `‖E[x^L] − E[x̃^L]‖ + ‖E[x^R] − E[x̃^R]‖` with Hilbert envelopes.
pub fn env_distance(gt: &BinauralPair, pred: &BinauralPair) -> Result<f64> {
    check_pair(gt, pred)?;
    let mut total = 0.0;
    for (a, b) in [(&gt.left, &pred.left), (&gt.right, &pred.right)] {
        let ea = envelope(&Waveform::mono(a.clone(), gt.sample_rate)?)?;
        let eb = envelope(&Waveform::mono(b.clone(), gt.sample_rate)?)?;
        total += ea
            .samples
            .iter()
            .zip(&eb.samples)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Baseline {
    /// The mono mix halved onto both ears.
    MonoMono,
    /// Binauralization without visual input.
    AudioOnly,
    /// The full model shown mirrored frames.
    FlippedVisual,
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::MonoMono => "mono_mono",
            Baseline::AudioOnly => "audio_only",
            Baseline::FlippedVisual => "flipped_visual",
        })
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mono_mono" => Ok(Baseline::MonoMono),
            "audio_only" => Ok(Baseline::AudioOnly),
            "flipped_visual" => Ok(Baseline::FlippedVisual),
            other => Err(Error::format("baseline", format!("unknown baseline `{other}`"))),
        }
    }
}

/// Mirrors every frame of another provider.
pub struct Flipped<'a>(pub &'a dyn FrameProvider);

impl FrameProvider for Flipped<'_> {
    fn frame_at(&self, time_s: f64) -> Result<FrameImage> {
        Ok(self.0.frame_at(time_s)?.flip_horizontal())
    }
}

/// Trained binauralization models available to baselines and benchmarks.
#[derive(Default, Clone, Copy)]
pub struct Models<'a> {
    pub full: Option<&'a Network<f32>>,
    pub audio_only: Option<&'a Network<f32>>,
}

pub fn make_baseline(
    kind: Baseline,
    mono: &Waveform,
    frames: &dyn FrameProvider,
    models: Models<'_>,
    infer: &InferConfig,
) -> Result<BinauralPair> {
    match kind {
        Baseline::MonoMono => {
            let half: Vec<f64> = mono.samples()?.iter().map(|v| v / 2.0).collect();
            BinauralPair::new(half.clone(), half, mono.sample_rate())
        }
        Baseline::AudioOnly => {
            let net = models
                .audio_only
                .ok_or_else(|| Error::MissingCheckpoint("audio-only baseline needs its own model".into()))?;
            binauralize(net, mono, frames, infer)
        }
        Baseline::FlippedVisual => {
            let net = models
                .full
                .ok_or_else(|| Error::MissingCheckpoint("flipped-visual baseline needs the full model".into()))?;
            binauralize(net, mono, &Flipped(frames), infer)
        }
    }
}

/// One aggregate row: mean and standard error over `n` items.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// One raw value for one clip (or mixture).
#[derive(Debug, Clone, PartialEq)]
pub struct ItemRow {
    pub item: String,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub summary: Vec<SummaryRow>,
    pub items: Vec<ItemRow>,
}

impl Report {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,metric,mean,stderr,n\n");
        for r in &self.summary {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{}\n",
                r.method, r.metric, r.mean, r.stderr, r.n
            ));
        }
        out
    }

    pub fn items_csv(&self) -> String {
        let mut out = String::from("item,method,metric,value\n");
        for r in &self.items {
            out.push_str(&format!("{},{},{},{:.6}\n", r.item, r.method, r.metric, r.value));
        }
        out
    }

    pub fn mean(&self, method: &str, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.metric == metric)
            .map(|r| r.mean)
    }

    /// Values of one method and metric, in item order.
    pub fn values(&self, method: &str, metric: &str) -> Vec<f64> {
        self.items
            .iter()
            .filter(|r| r.method == method && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    fn push_items(&mut self, method: &str, metric: &str, items: &[(String, f64)]) {
        let n = items.len();
        let mean = items.iter().map(|(_, v)| v).sum::<f64>() / n.max(1) as f64;
        let var = if n > 1 {
            items.iter().map(|(_, v)| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        self.summary.push(SummaryRow {
            method: method.into(),
            metric: metric.into(),
            mean,
            stderr: (var / n.max(1) as f64).sqrt(),
            n,
        });
        self.items.extend(items.iter().map(|(id, v)| ItemRow {
            item: id.clone(),
            method: method.into(),
            metric: metric.into(),
            value: *v,
        }));
    }
}

/// Binauralization methods scored by [`run_benchmark`], in report order.
pub const BINAURAL_METHODS: [&str; 4] = ["ours", "audio_only", "mono_mono", "flipped_visual"];

/// STFT and envelope distances of the full model and the baselines on each clip.
/// Methods whose model is absent are skipped; the full model is required.
pub fn run_benchmark(clips: &[Clip], models: Models<'_>, infer: &InferConfig) -> Result<Report> {
    if clips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let full = models
        .full
        .ok_or_else(|| Error::MissingCheckpoint("benchmark needs the full model".into()))?;
    let mut report = Report::default();
    for method in BINAURAL_METHODS {
        if method == "audio_only" && models.audio_only.is_none() {
            continue;
        }
        let scores = clips
            .par_iter()
            .map(|c| {
                let gt = BinauralPair::new(c.left.clone(), c.right.clone(), SAMPLE_RATE)?;
                let mono = Waveform::mono(c.mono.clone(), SAMPLE_RATE)?;
                let pred = match method {
                    "ours" => binauralize(full, &mono, &c.frame, infer)?,
                    "audio_only" => make_baseline(Baseline::AudioOnly, &mono, &c.frame, models, infer)?,
                    "mono_mono" => make_baseline(Baseline::MonoMono, &mono, &c.frame, models, infer)?,
                    _ => make_baseline(Baseline::FlippedVisual, &mono, &c.frame, models, infer)?,
                };
                Ok((c.id.clone(), stft_distance(&gt, &pred)?, env_distance(&gt, &pred)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let stft_items: Vec<(String, f64)> = scores.iter().map(|(id, s, _)| (id.clone(), *s)).collect();
        let env_items: Vec<(String, f64)> = scores.iter().map(|(id, _, e)| (id.clone(), *e)).collect();
        report.push_items(method, "stft_distance", &stft_items);
        report.push_items(method, "env_distance", &env_items);
    }
    Ok(report)
}

/// Deterministic list of `count` test mixtures: distinct clip pairs, drawn
/// uniformly, with segment offsets.
pub fn mixture_plan(
    clips: &[Clip],
    count: usize,
    segment: usize,
    seed: u64,
) -> Result<Vec<(usize, usize, [usize; 2])>> {
    if clips.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    if let Some(c) = clips.iter().find(|c| c.len() < segment) {
        return Err(Error::ClipTooShort {
            len: c.len(),
            needed: segment,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = Vec::with_capacity(count);
    while plan.len() < count {
        let a = rng.gen_range(0..clips.len());
        let b = rng.gen_range(0..clips.len());
        if a == b {
            continue;
        }
        let starts = [
            rng.gen_range(0..=clips[a].len() - segment),
            rng.gen_range(0..=clips[b].len() - segment),
        ];
        plan.push((a, b, starts));
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationEval {
    pub segment: usize,
    pub target_rms: f64,
    pub filter_len: usize,
}

/// SDR/SIR/SAR of each separation model on the planned mixtures. Estimates
/// are scored as mono signals (channels summed) against each clip's mono track.
pub fn run_separation_benchmark(
    clips: &[Clip],
    models: &[(AudioMode, &Network<f32>)],
    m2b: Option<&Network<f32>>,
    plan: &[(usize, usize, [usize; 2])],
    opts: &SeparationEval,
    infer: &InferConfig,
) -> Result<Report> {
    let SeparationEval {
        segment,
        target_rms,
        filter_len,
    } = *opts;
    let mut report = Report::default();
    for &(mode, net) in models {
        let tracks = crate::pipeline::separation::clip_tracks(clips, mode, m2b, infer)?;
        let scores = plan
            .par_iter()
            .map(|&(a, b, starts)| {
                let ex = separation_inputs(
                    [&tracks[a], &tracks[b]],
                    [&clips[a].mono, &clips[b].mono],
                    starts,
                    segment,
                    target_rms,
                )?;
                let est = separate(
                    net,
                    &ex.mixture,
                    &[clips[a].frame.clone(), clips[b].frame.clone()],
                    segment,
                    target_rms,
                )?;
                let mono_est: Vec<Vec<f64>> = est
                    .iter()
                    .map(|chans| (0..segment).map(|i| chans.iter().map(|c| c[i]).sum()).collect())
                    .collect();
                let r = bss_eval(&ex.mono, &mono_est, filter_len)?;
                let id = format!("{}+{}", clips[a].id, clips[b].id);
                Ok((id, r))
            })
            .collect::<Result<Vec<_>>>()?;
        let method = format!("sep_{mode}");
        for (metric, pick) in [
            ("sdr", (|r: &BssResult| r.sdr_db.clone()) as fn(&BssResult) -> Vec<f64>),
            ("sir", |r: &BssResult| r.sir_db.clone()),
            ("sar", |r: &BssResult| r.sar_db.clone()),
        ] {
            let items: Vec<(String, f64)> = scores
                .iter()
                .map(|(id, r)| (id.clone(), pick(r).iter().sum::<f64>() / 2.0))
                .collect();
            report.push_items(&method, metric, &items);
        }
    }
    Ok(report)
}
