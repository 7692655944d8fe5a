//! Sectioned TOML run configuration shared by every command.
//!
//! ```toml
//! [paths]
//! output = "runs/demo"
//!
//! [generation]
//! train = 400
//! seed = 7
//!
//! [train]
//! epochs = 20
//!
//! [separation.train]
//! epochs = 4
//! ```
//!
//! Every section is optional and falls back to defaults; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::DEFAULT_FILTER_LEN;
use crate::net::{NetConfig, Task};
use crate::pipeline::{InferConfig, OcclusionConfig, TrainConfig};
use crate::scene::GenerationConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Dataset directory; defaults to `<output>/dataset`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Root for everything a command writes.
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: None,
            output: PathBuf::from("runs"),
        }
    }
}

/// Layer widths of one network; frame size comes from `[generation]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub unet_channels: Vec<usize>,
    pub visual_channels: Vec<usize>,
    pub visual_embed_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let n = NetConfig::default();
        ModelConfig {
            unet_channels: n.unet_channels,
            visual_channels: n.visual_channels,
            visual_embed_dim: n.visual_embed_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparationConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        SeparationConfig {
            train: TrainConfig {
                epochs: 10,
                batch_size: 8,
                ..TrainConfig::default()
            },
            model: ModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Number of two-clip test mixtures for the separation benchmark.
    pub mixtures: usize,
    pub seed: u64,
    pub filter_len: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            mixtures: 30,
            seed: 11,
            filter_len: DEFAULT_FILTER_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub generation: GenerationConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub infer: InferConfig,
    pub occlusion: OcclusionConfig,
    pub separation: SeparationConfig,
    pub evaluation: EvaluationConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Key named on a `key = value` line, if any.
fn key_on_line(text: &str, line: usize) -> Option<String> {
    let l = text.lines().nth(line.checked_sub(1)?)?;
    let (key, _) = l.split_once('=')?;
    let key = key.trim();
    (!key.is_empty() && !key.starts_with('#')).then(|| key.to_owned())
}

impl RunConfig {
    /// Parses and validates config text. Errors carry the 1-based line and
    /// the offending key.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| line_of(text, s.start));
            let msg = e.message().trim().to_owned();
            let detail = match key_on_line(text, line) {
                Some(k) if !msg.contains(&format!("`{k}`")) => format!("key `{k}`: {msg}"),
                _ => msg,
            };
            Error::Config { line, detail }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::at_path(path))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.output);
        if let Some(d) = self.paths.dataset.as_mut() {
            fix(d);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let section = |name: &str, r: Result<()>| {
            r.map_err(|e| Error::Config {
                line: 0,
                detail: format!("[{name}]: {e}"),
            })
        };
        section("generation", self.generation.validate())?;
        section("train", self.train.validate())?;
        section("separation.train", self.separation.train.validate())?;
        section("infer", self.infer.validate())?;
        section("model", self.net_config(Task::Binaural, true).validate())?;
        section(
            "separation.model",
            self.sep_net_config(Task::Separation { channels: 2 }).validate(),
        )?;
        if self.evaluation.filter_len == 0 {
            return Err(Error::Config {
                line: 0,
                detail: "[evaluation]: filter_len must be positive".into(),
            });
        }
        Ok(())
    }

    fn build(&self, m: &ModelConfig, task: Task, use_visual: bool) -> NetConfig {
        NetConfig {
            task,
            unet_channels: m.unet_channels.clone(),
            use_visual,
            visual_channels: m.visual_channels.clone(),
            visual_embed_dim: m.visual_embed_dim,
            frame_height: self.generation.frame_height,
            frame_width: self.generation.frame_width,
        }
    }

    pub fn net_config(&self, task: Task, use_visual: bool) -> NetConfig {
        self.build(&self.model, task, use_visual)
    }

    pub fn sep_net_config(&self, task: Task) -> NetConfig {
        self.build(&self.separation.model, task, true)
    }

    pub fn output_dir(&self) -> &Path {
        &self.paths.output
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.paths
            .dataset
            .clone()
            .unwrap_or_else(|| self.paths.output.join("dataset"))
    }

    /// Canonical text form: defaults filled in, fixed key order.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form with paths removed, so relocating a run
    /// does not change its identity.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = PathsConfig::default();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn canonical_form_round_trips() {
        let cfg = RunConfig::parse("[train]\nepochs = 3\n[separation.train]\nbatch_size = 4\n").unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.separation.train.batch_size, 4);
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let err = RunConfig::parse("[train]\nepochs = 3\nlearning_rate = 0.1\n").unwrap_err();
        match err {
            Error::Config { line, detail } => {
                assert_eq!(line, 3);
                assert!(detail.contains("learning_rate"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_type_names_key_and_line() {
        let err = RunConfig::parse("\n[infer]\nhop_s = \"fast\"\n").unwrap_err();
        match err {
            Error::Config { line, detail } => {
                assert_eq!(line, 3);
                assert!(detail.contains("hop_s"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        assert!(matches!(
            RunConfig::parse("[train]\nbatch_size = 1\n"),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            RunConfig::parse("[model]\nvisual_embed_dim = 33\n"),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn hash_ignores_paths() {
        let a = RunConfig::parse("[paths]\noutput = \"a\"\n").unwrap();
        let b = RunConfig::parse("[paths]\noutput = \"b\"\n").unwrap();
        let c = RunConfig::parse("[train]\nseed = 1\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
