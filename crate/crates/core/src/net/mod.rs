//! The visually conditioned U-Net and its tensor plumbing.
//!
//! One [`Network`] type covers both tasks. For binauralization the input is
//! the mono spectrogram as two real channels (real, imaginary) and the output
//! a complex mask bounded to `[−1, 1]`; for separation the input is one or two
//! log-magnitude channels and the output a ratio mask in `(0, 1)` per channel.
//! A frame is encoded to a vector, tiled over the bottleneck grid and
//! concatenated with the audio features; the audio-only variant skips that
//! step entirely.

mod layers;
mod spec;
mod verify;

pub use layers::{ParamGroup, ParamSet};
pub use spec::{batch, log_magnitude, mask_from_net, net_to_spec, ratio_from_net, spec_to_net, unbatch, LOG_EPS};
pub use verify::{gradcheck_suite, tiny_unet_check, GradCheckRow, LAYER_TOLERANCE, NETWORK_TOLERANCE};

use std::fmt::Write as _;
use std::path::Path;

use m2b_tensor::checkpoint::Checkpoint;
use m2b_tensor::{Adam, AdamConfig, ConvSpec, Element, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};
use layers::{Activation, Block, Conv, Ctx};

/// Encoder depth; inputs must be divisible by `2^DEPTH`.
pub const DEPTH: usize = 5;
const VISUAL_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Complex difference mask from the mono spectrogram.
    Binaural,
    /// Ratio mask per channel from `channels` log-magnitude inputs.
    Separation { channels: usize },
}

impl Task {
    pub fn in_channels(self) -> usize {
        match self {
            Task::Binaural => 2,
            Task::Separation { channels } => channels,
        }
    }

    fn tag(self) -> String {
        match self {
            Task::Binaural => "binaural".into(),
            Task::Separation { channels } => format!("separation{channels}"),
        }
    }

    fn from_tag(s: &str) -> Option<Task> {
        match s {
            "binaural" => Some(Task::Binaural),
            "separation1" => Some(Task::Separation { channels: 1 }),
            "separation2" => Some(Task::Separation { channels: 2 }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetConfig {
    pub task: Task,
    /// Output widths of the five encoder stages.
    pub unet_channels: Vec<usize>,
    pub use_visual: bool,
    /// Output widths of the four visual conv stages.
    pub visual_channels: Vec<usize>,
    /// Flattened visual vector length; must be a multiple of `(H/16)·(W/16)`.
    pub visual_embed_dim: usize,
    pub frame_height: usize,
    pub frame_width: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            task: Task::Binaural,
            unet_channels: vec![16, 32, 64, 128, 128],
            use_visual: true,
            visual_channels: vec![16, 32, 32, 32],
            visual_embed_dim: 64,
            frame_height: 64,
            frame_width: 128,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::format("network config", d));
        if self.unet_channels.len() != DEPTH || self.unet_channels.contains(&0) {
            return bad(format!(
                "unet_channels needs {DEPTH} positive widths, got {:?}",
                self.unet_channels
            ));
        }
        if let Task::Separation { channels } = self.task {
            if !(1..=2).contains(&channels) {
                return bad(format!("separation input has 1 or 2 channels, got {channels}"));
            }
        }
        if self.use_visual {
            if self.visual_channels.len() != VISUAL_DEPTH || self.visual_channels.contains(&0) {
                return bad(format!(
                    "visual_channels needs {VISUAL_DEPTH} positive widths, got {:?}",
                    self.visual_channels
                ));
            }
            let scale = 1 << VISUAL_DEPTH;
            if !self.frame_height.is_multiple_of(scale)
                || !self.frame_width.is_multiple_of(scale)
                || self.frame_height == 0
            {
                return bad(format!(
                    "frame {}x{} must be a positive multiple of {scale}",
                    self.frame_height, self.frame_width
                ));
            }
            let cells = self.visual_cells();
            if self.visual_embed_dim == 0 || !self.visual_embed_dim.is_multiple_of(cells) {
                return bad(format!(
                    "visual_embed_dim {} is not a positive multiple of the {cells}-cell visual grid",
                    self.visual_embed_dim
                ));
            }
        }
        Ok(())
    }

    fn visual_cells(&self) -> usize {
        (self.frame_height >> VISUAL_DEPTH) * (self.frame_width >> VISUAL_DEPTH)
    }

    /// The same network without the visual branch.
    pub fn audio_only(&self) -> NetConfig {
        NetConfig {
            use_visual: false,
            ..self.clone()
        }
    }

    fn to_meta(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        format!(
            "task={}\nunet_channels={}\nuse_visual={}\nvisual_channels={}\nvisual_embed_dim={}\nframe_height={}\nframe_width={}\n",
            self.task.tag(),
            join(&self.unet_channels),
            self.use_visual,
            join(&self.visual_channels),
            self.visual_embed_dim,
            self.frame_height,
            self.frame_width
        )
    }
}

struct VisualEncoder {
    blocks: Vec<Block>,
    reduce: Conv,
}

/// Visually conditioned U-Net with its parameters.
pub struct Network<T> {
    config: NetConfig,
    params: ParamSet<T>,
    encoder: Vec<Block>,
    decoder: Vec<Block>,
    head: Conv,
    visual: Option<VisualEncoder>,
}

impl<T: Element> Network<T> {
    /// Builds the network with weights drawn from `N(0, 0.02)`.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let c = &config.unet_channels;
        let audio = ParamGroup::Audio;

        let mut encoder = Vec::with_capacity(DEPTH);
        let mut cin = config.task.in_channels();
        for (i, &cout) in c.iter().enumerate() {
            encoder.push(Block::new(
                &mut ps,
                &format!("enc{i}"),
                audio,
                cin,
                cout,
                false,
                Activation::LeakyRelu,
                &mut rng,
            ));
            cin = cout;
        }

        let visual_dim = if config.use_visual { config.visual_embed_dim } else { 0 };
        // decoder stage j consumes the previous stage and encoder stage DEPTH-1-j
        let mut decoder = Vec::with_capacity(DEPTH - 1);
        let mut cin = c[DEPTH - 1] + visual_dim;
        for j in 0..DEPTH - 1 {
            let cout = c[DEPTH - 2 - j];
            decoder.push(Block::new(
                &mut ps,
                &format!("dec{j}"),
                audio,
                cin,
                cout,
                true,
                Activation::Relu,
                &mut rng,
            ));
            cin = cout + c[DEPTH - 2 - j];
        }
        assert_eq!(cin, 2 * c[0], "last skip joins the first encoder stage");
        let head = Conv::new(
            &mut ps,
            "head",
            audio,
            cin,
            config.task.in_channels(),
            ConvSpec::default(),
            true,
            true,
            &mut rng,
        );

        let visual = config.use_visual.then(|| {
            let mut blocks = Vec::with_capacity(VISUAL_DEPTH);
            let mut cin = 3;
            for (i, &cout) in config.visual_channels.iter().enumerate() {
                blocks.push(Block::new(
                    &mut ps,
                    &format!("vis{i}"),
                    ParamGroup::Visual,
                    cin,
                    cout,
                    false,
                    Activation::Relu,
                    &mut rng,
                ));
                cin = cout;
            }
            let r = config.visual_embed_dim / config.visual_cells();
            let reduce = Conv::new(
                &mut ps,
                "vis_reduce",
                ParamGroup::Visual,
                cin,
                r,
                ConvSpec::pointwise(),
                false,
                true,
                &mut rng,
            );
            VisualEncoder { blocks, reduce }
        });

        Ok(Network {
            config,
            params: ps,
            encoder,
            decoder,
            head,
            visual,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn check_inputs(&self, audio: &Tensor<T>, frames: Option<&Tensor<T>>) -> Result<()> {
        let (n, c, h, w) = audio.dims4()?;
        let scale = 1 << DEPTH;
        if c != self.config.task.in_channels() || h % scale != 0 || w % scale != 0 || h == 0 || w == 0 {
            return Err(Error::shape(format!(
                "network expects [n, {}, 32k, 32m] audio, got {:?}",
                self.config.task.in_channels(),
                audio.shape()
            )));
        }
        if self.visual.is_some() {
            let frames = frames.ok_or_else(|| Error::shape("visual network needs frames"))?;
            let want = [n, 3, self.config.frame_height, self.config.frame_width];
            if frames.shape() != want {
                return Err(Error::shape(format!("frames {:?}, expected {want:?}", frames.shape())));
            }
        }
        Ok(())
    }

    fn encode_visual(&self, ctx: &mut Ctx<'_, T>, frames: Var) -> Result<Var> {
        let vis = self.visual.as_ref().expect("visual branch present");
        let mut x = frames;
        for b in &vis.blocks {
            x = b.apply(ctx, x)?;
        }
        let x = vis.reduce.apply(ctx, x)?;
        let n = ctx.tape.value(x).shape()[0];
        ctx.tape
            .reshape(x, &[n, self.config.visual_embed_dim])
            .map_err(Into::into)
    }

    fn forward_impl(&self, ctx: &mut Ctx<'_, T>, audio: Tensor<T>, frames: Option<Tensor<T>>) -> Result<Var> {
        let mut x = ctx.tape.constant(audio);
        let mut skips = Vec::with_capacity(DEPTH);
        for b in &self.encoder {
            x = b.apply(ctx, x)?;
            skips.push(x);
        }
        if self.visual.is_some() {
            let f = ctx.tape.constant(frames.expect("checked by check_inputs"));
            let v = self.encode_visual(ctx, f)?;
            let (_, _, bh, bw) = ctx.tape.value(x).dims4()?;
            let tiled = ctx.tape.tile(v, bh, bw)?;
            x = ctx.tape.concat_channels(x, tiled)?;
        }
        for (j, b) in self.decoder.iter().enumerate() {
            x = b.apply(ctx, x)?;
            x = ctx.tape.concat_channels(x, skips[DEPTH - 2 - j])?;
        }
        let x = self.head.apply(ctx, x)?;
        Ok(match self.config.task {
            Task::Binaural => ctx.tape.scaled_sigmoid(x),
            Task::Separation { .. } => ctx.tape.sigmoid(x),
        })
    }

    /// Training-mode pass: batch statistics, running-stat updates, trainable
    /// parameters. Returns the mask and the parameter variables in
    /// [`ParamSet`] order.
    pub fn forward_train(
        &mut self,
        tape: &mut Tape<T>,
        audio: Tensor<T>,
        frames: Option<Tensor<T>>,
    ) -> Result<(Var, Vec<Var>)> {
        self.check_inputs(&audio, frames.as_ref())?;
        let mut params = std::mem::replace(&mut self.params, ParamSet::new());
        let result = {
            let mut ctx = Ctx::train(tape, &mut params);
            self.forward_impl(&mut ctx, audio, frames).map(|out| (out, ctx.vars))
        };
        self.params = params;
        result
    }

    /// Training-mode pass over caller-created parameter variables, one per
    /// [`ParamSet`] entry and in its order.
    pub fn forward_train_with(
        &mut self,
        tape: &mut Tape<T>,
        vars: Vec<Var>,
        audio: Tensor<T>,
        frames: Option<Tensor<T>>,
    ) -> Result<Var> {
        self.check_inputs(&audio, frames.as_ref())?;
        if vars.len() != self.params.values.len()
            || vars
                .iter()
                .zip(&self.params.values)
                .any(|(&v, p)| tape.value(v).shape() != p.shape())
        {
            return Err(Error::shape("parameter variables do not match the network"));
        }
        let mut params = std::mem::replace(&mut self.params, ParamSet::new());
        let result = {
            let mut ctx = Ctx {
                tape,
                vars,
                stats: layers::Stats::Train(&mut params.stats),
            };
            self.forward_impl(&mut ctx, audio, frames)
        };
        self.params = params;
        result
    }

    /// Evaluation-mode pass with frozen parameters and running statistics.
    pub fn forward_eval(&self, tape: &mut Tape<T>, audio: Tensor<T>, frames: Option<Tensor<T>>) -> Result<Var> {
        self.check_inputs(&audio, frames.as_ref())?;
        let mut ctx = Ctx::eval(tape, &self.params);
        self.forward_impl(&mut ctx, audio, frames)
    }

    /// Evaluation-mode mask for a batch.
    pub fn predict(&self, audio: Tensor<T>, frames: Option<Tensor<T>>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let out = self.forward_eval(&mut tape, audio, frames)?;
        Ok(tape.value(out).clone())
    }

    /// Evaluation-mode visual vectors `[n, visual_embed_dim]` for frames `[n, 3, H, W]`.
    pub fn visual_embedding(&self, frames: Tensor<T>) -> Result<Tensor<T>> {
        if self.visual.is_none() {
            return Err(Error::shape("audio-only network has no visual branch"));
        }
        let (n, c, h, w) = frames.dims4()?;
        if (c, h, w) != (3, self.config.frame_height, self.config.frame_width) {
            return Err(Error::shape(format!(
                "frames {:?} do not match the network",
                frames.shape()
            )));
        }
        let mut tape = Tape::new();
        let mut ctx = Ctx::eval(&mut tape, &self.params);
        let f = ctx.tape.constant(frames);
        let v = self.encode_visual(&mut ctx, f)?;
        debug_assert_eq!(tape.value(v).shape(), [n, self.config.visual_embed_dim]);
        Ok(tape.value(v).clone())
    }

    /// Parameters, running statistics, the configuration and optionally
    /// optimizer state, as a checkpoint.
    pub fn to_checkpoint(&self, adam: Option<&Adam<T>>) -> Checkpoint {
        let mut meta = self.config.to_meta();
        let mut cp = Checkpoint::new();
        for (name, value) in self.params.names.iter().zip(&self.params.values) {
            cp.push_tensor(format!("param.{name}"), value);
        }
        for (name, st) in self.params.bn_names.iter().zip(&self.params.stats) {
            let ch = st.mean.len();
            cp.push_tensor(
                format!("bn.{name}.mean"),
                &Tensor::new(&[ch], st.mean.clone()).expect("1-d"),
            );
            cp.push_tensor(
                format!("bn.{name}.var"),
                &Tensor::new(&[ch], st.var.clone()).expect("1-d"),
            );
        }
        if let Some(adam) = adam {
            let c = adam.config;
            let _ = write!(
                meta,
                "adam_state=true\nadam.lr={:?}\nadam.beta1={:?}\nadam.beta2={:?}\nadam.eps={:?}\nadam.weight_decay={:?}\nadam.steps={}\n",
                c.lr,
                c.beta1,
                c.beta2,
                c.eps,
                c.weight_decay,
                adam.steps()
            );
            for ((name, m), v) in self
                .params
                .names
                .iter()
                .zip(adam.first_moments())
                .zip(adam.second_moments())
            {
                cp.push_tensor(format!("adam.m.{name}"), m);
                cp.push_tensor(format!("adam.v.{name}"), v);
            }
        }
        cp.entries.insert(
            0,
            m2b_tensor::checkpoint::Entry {
                name: "meta".into(),
                dims: vec![meta.len()],
                data: m2b_tensor::checkpoint::TensorData::U8(meta.into_bytes()),
            },
        );
        cp
    }

    /// Rebuilds a network (and optimizer state, when stored) from a checkpoint.
    pub fn from_checkpoint(cp: &Checkpoint) -> Result<(Self, Option<Adam<T>>)> {
        let meta = std::str::from_utf8(cp.bytes("meta")?)
            .map_err(|_| Error::format("checkpoint", "meta block is not UTF-8"))?;
        let (config, adam_meta) = parse_meta(meta)?;
        let mut net = Network::new(config, 0)?;
        for (name, value) in net.params.names.iter().zip(net.params.values.iter_mut()) {
            let t: Tensor<T> = cp.tensor(&format!("param.{name}"))?;
            if t.shape() != value.shape() {
                return Err(Error::format(
                    "checkpoint",
                    format!("{name}: stored {:?}, network expects {:?}", t.shape(), value.shape()),
                ));
            }
            *value = t;
        }
        for (name, st) in net.params.bn_names.iter().zip(net.params.stats.iter_mut()) {
            let mean: Tensor<T> = cp.tensor(&format!("bn.{name}.mean"))?;
            let var: Tensor<T> = cp.tensor(&format!("bn.{name}.var"))?;
            if mean.numel() != st.mean.len() || var.numel() != st.var.len() {
                return Err(Error::format(
                    "checkpoint",
                    format!("{name}: running statistics have the wrong size"),
                ));
            }
            st.mean = mean.into_data();
            st.var = var.into_data();
        }
        let adam = match adam_meta {
            None => None,
            Some((config, steps)) => {
                let mut first = Vec::new();
                let mut second = Vec::new();
                for (name, value) in net.params.names.iter().zip(&net.params.values) {
                    let m: Tensor<T> = cp.tensor(&format!("adam.m.{name}"))?;
                    let v: Tensor<T> = cp.tensor(&format!("adam.v.{name}"))?;
                    if m.shape() != value.shape() || v.shape() != value.shape() {
                        return Err(Error::format(
                            "checkpoint",
                            format!("{name}: optimizer moments have the wrong shape"),
                        ));
                    }
                    first.push(m);
                    second.push(v);
                }
                Some(Adam::from_parts(config, first, second, steps)?)
            }
        };
        Ok((net, adam))
    }

    pub fn save(&self, path: impl AsRef<Path>, adam: Option<&Adam<T>>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint(adam).to_bytes()?).map_err(Error::at_path(path))
    }

    /// Loads a checkpoint file; a missing file is [`Error::MissingCheckpoint`].
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<Adam<T>>)> {
        let path = path.as_ref();
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingCheckpoint(path.display().to_string()))
            }
            Err(e) => return Err(Error::at_path(path)(e)),
        };
        Self::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)
    }
}

fn parse_meta(meta: &str) -> Result<(NetConfig, Option<(AdamConfig, u64)>)> {
    let bad = |d: String| Error::format("checkpoint meta", d);
    let mut config = NetConfig::default();
    let mut adam = AdamConfig::default();
    let mut adam_state = false;
    let mut steps = 0u64;
    let list = |v: &str| -> Result<Vec<usize>> {
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| s.parse().map_err(|_| bad(format!("bad width `{s}`"))))
            .collect()
    };
    let num = |k: &str, v: &str| -> Result<f64> { v.parse().map_err(|_| bad(format!("{k}: bad number `{v}`"))) };
    for line in meta.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line `{line}` lacks `=`")))?;
        match k {
            "task" => config.task = Task::from_tag(v).ok_or_else(|| bad(format!("unknown task `{v}`")))?,
            "unet_channels" => config.unet_channels = list(v)?,
            "use_visual" => config.use_visual = v.parse().map_err(|_| bad(format!("use_visual `{v}`")))?,
            "visual_channels" => config.visual_channels = list(v)?,
            "visual_embed_dim" => config.visual_embed_dim = num(k, v)? as usize,
            "frame_height" => config.frame_height = num(k, v)? as usize,
            "frame_width" => config.frame_width = num(k, v)? as usize,
            "adam_state" => adam_state = v == "true",
            "adam.lr" => adam.lr = num(k, v)?,
            "adam.beta1" => adam.beta1 = num(k, v)?,
            "adam.beta2" => adam.beta2 = num(k, v)?,
            "adam.eps" => adam.eps = num(k, v)?,
            "adam.weight_decay" => adam.weight_decay = num(k, v)?,
            "adam.steps" => steps = v.parse().map_err(|_| bad(format!("adam.steps `{v}`")))?,
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    config.validate()?;
    Ok((config, adam_state.then_some((adam, steps))))
}
