//! Synthetic dataset generation: rendered binaural WAVs, their mono mixes,
//! frames and a JSON-lines manifest.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    render_binaural, render_frame, synth_ref, HeadModel, SceneDescriptor, SourceSpec, WaveformBank, NUM_TIMBRES,
};
use crate::audio::wav::{write_wav, WavEncoding};
use crate::audio::{Waveform, SAMPLE_RATE};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub clip_duration_s: f64,
    pub sources_per_clip: usize,
    /// Timbre classes drawn from; at most the number of built-in timbres.
    pub num_classes: u32,
    /// Azimuths are uniform in `[−max_azimuth_deg, max_azimuth_deg]`.
    pub max_azimuth_deg: f64,
    pub min_gain: f64,
    pub max_gain: f64,
    pub frame_height: usize,
    pub frame_width: usize,
    pub seed: u64,
    pub head: HeadModel,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            train: 400,
            val: 20,
            test: 50,
            clip_duration_s: 2.0,
            sources_per_clip: 1,
            num_classes: 4,
            max_azimuth_deg: 90.0,
            min_gain: 0.5,
            max_gain: 1.0,
            frame_height: 64,
            frame_width: 128,
            seed: 7,
            head: HeadModel::default(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::format("generation config", d));
        if self.train + self.val + self.test == 0 {
            return bad("at least one clip is required".into());
        }
        if !(self.clip_duration_s > 0.0 && self.clip_duration_s.is_finite()) {
            return bad(format!("clip_duration_s {} must be positive", self.clip_duration_s));
        }
        if !(1..=SceneDescriptor::MAX_SOURCES).contains(&self.sources_per_clip) {
            return bad(format!("sources_per_clip {} outside 1..=4", self.sources_per_clip));
        }
        if !(1..=NUM_TIMBRES).contains(&self.num_classes) {
            return bad(format!("num_classes {} outside 1..={NUM_TIMBRES}", self.num_classes));
        }
        if !(0.0..=90.0).contains(&self.max_azimuth_deg) {
            return bad(format!("max_azimuth_deg {} outside [0, 90]", self.max_azimuth_deg));
        }
        if !(self.min_gain > 0.0 && self.min_gain <= self.max_gain && self.max_gain.is_finite()) {
            return bad(format!("gain range [{}, {}] invalid", self.min_gain, self.max_gain));
        }
        if self.frame_height < 16 || self.frame_width < 16 {
            return bad("frames must be at least 16x16".into());
        }
        self.head.validate()
    }

    fn sample_scene(&self, index: usize) -> SceneDescriptor {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let clip_seed: u64 = rng.gen();
        let k = self.sources_per_clip.min(self.num_classes as usize);
        let mut classes: Vec<u32> = sample(&mut rng, self.num_classes as usize, k)
            .into_iter()
            .map(|c| c as u32)
            .collect();
        while classes.len() < self.sources_per_clip {
            classes.push(rng.gen_range(0..self.num_classes));
        }
        let sources = classes
            .into_iter()
            .enumerate()
            .map(|(j, class_id)| SourceSpec {
                azimuth_deg: rng.gen_range(-self.max_azimuth_deg..=self.max_azimuth_deg),
                class_id,
                gain: rng.gen_range(self.min_gain..=self.max_gain),
                waveform_ref: synth_ref(class_id, clip_seed.wrapping_add(j as u64)),
            })
            .collect();
        SceneDescriptor {
            sources,
            duration_s: self.clip_duration_s,
            seed: clip_seed,
        }
    }
}

/// One clip; paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub mono_wav: String,
    pub binaural_wav: String,
    pub frame_image: String,
    pub scene: SceneDescriptor,
}

pub fn parse_manifest_line(line: &str) -> Result<ManifestEntry> {
    let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::format("manifest line", e.to_string()))?;
    entry.scene.validate()?;
    for p in [&entry.mono_wav, &entry.binaural_wav, &entry.frame_image] {
        let path = Path::new(p);
        if path.is_absolute() || path.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return Err(Error::format(
                "manifest line",
                format!("path `{p}` escapes the dataset root"),
            ));
        }
    }
    Ok(entry)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Reads `dir/manifest.jsonl`.
    pub fn load(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
        let root = dir.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(Error::at_path(&path))?;
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| parse_manifest_line(l).map_err(|e| Error::format("manifest", format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        if entries.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(DatasetManifest { root, entries })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n")
            .collect()
    }
}

/// Renders `cfg.train + cfg.val + cfg.test` clips into `out_dir` and writes the manifest.
/// Output bytes depend only on `cfg`.
pub fn generate_dataset(cfg: &GenerationConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    cfg.validate()?;
    let root = out_dir.as_ref().to_path_buf();
    for sub in ["audio", "frames"] {
        let d = root.join(sub);
        fs::create_dir_all(&d).map_err(Error::at_path(&d))?;
    }
    let splits: Vec<Split> = std::iter::repeat_n(Split::Train, cfg.train)
        .chain(std::iter::repeat_n(Split::Val, cfg.val))
        .chain(std::iter::repeat_n(Split::Test, cfg.test))
        .collect();
    let bank = WaveformBank::with_synth();
    let entries = splits
        .par_iter()
        .enumerate()
        .map(|(i, &split)| {
            let scene = cfg.sample_scene(i);
            let id = format!("{split}_{i:05}");
            let entry = ManifestEntry {
                mono_wav: format!("audio/{id}_mono.wav"),
                binaural_wav: format!("audio/{id}_binaural.wav"),
                frame_image: format!("frames/{id}.ppm"),
                id,
                split,
                scene,
            };
            let pair = render_binaural(&entry.scene, &cfg.head, &bank)?;
            // the stored mono is the f32 sum of the stored f32 ears, so it mixes exactly
            let left: Vec<f32> = pair.left.iter().map(|&v| v as f32).collect();
            let right: Vec<f32> = pair.right.iter().map(|&v| v as f32).collect();
            let mono: Vec<f64> = left.iter().zip(&right).map(|(&l, &r)| (l + r) as f64).collect();
            let stereo = Waveform::stereo(
                left.iter().map(|&v| v as f64).collect(),
                right.iter().map(|&v| v as f64).collect(),
                SAMPLE_RATE,
            )?;
            write_wav(root.join(&entry.binaural_wav), &stereo, WavEncoding::Float32)?;
            write_wav(
                root.join(&entry.mono_wav),
                &Waveform::mono(mono, SAMPLE_RATE)?,
                WavEncoding::Float32,
            )?;
            render_frame(&entry.scene, cfg.frame_height, cfg.frame_width).write_ppm(root.join(&entry.frame_image))?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest { root, entries };
    let path = manifest.root.join(MANIFEST_FILE);
    let mut file = fs::File::create(&path).map_err(Error::at_path(&path))?;
    file.write_all(manifest.to_jsonl().as_bytes())
        .map_err(Error::at_path(&path))?;
    Ok(manifest)
}

/// SHA-256 over the manifest followed by every referenced file, in manifest order.
pub fn dataset_hash(dir: impl AsRef<Path>) -> Result<String> {
    let manifest = DatasetManifest::load(&dir)?;
    let mut h = Sha256::new();
    let mpath = manifest.root.join(MANIFEST_FILE);
    h.update(fs::read(&mpath).map_err(Error::at_path(&mpath))?);
    for e in &manifest.entries {
        for rel in [&e.mono_wav, &e.binaural_wav, &e.frame_image] {
            let p = manifest.resolve(rel);
            h.update(fs::read(&p).map_err(Error::at_path(&p))?);
        }
    }
    Ok(hex::encode(h.finalize()))
}
