//! `m2b`: dataset synthesis, training, inference, localization, separation and
//! evaluation from one config file.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use m2b::pipeline::AudioMode;
use m2b::Error;

#[derive(Parser)]
#[command(name = "m2b", version, about = "Visually guided mono-to-binaural conversion")]
struct Cli {
    /// Sectioned TOML run config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides `[paths] output`.
    #[arg(long, global = true, env = "M2B_OUTPUT_ROOT")]
    output: Option<PathBuf>,
    /// Dataset directory; overrides `[paths] dataset`.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Full,
    AudioOnly,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::AudioOnly => "audio_only",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Mono,
    Predicted,
    Gt,
}

impl From<ModeArg> for AudioMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Mono => AudioMode::Mono,
            ModeArg::Predicted => AudioMode::Predicted,
            ModeArg::Gt => AudioMode::Gt,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset.
    Synth,
    /// Train a binauralization network.
    TrainM2b {
        #[arg(long, value_enum, default_value = "full")]
        variant: Variant,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convert a mono WAV into a binaural (stereo) WAV.
    Binauralize {
        #[arg(long)]
        input: PathBuf,
        /// A `.ppm` frame, or a directory of frames sampled at `--fps`.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        fps: f64,
        /// Defaults to the full model under the output root.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Relative paths are placed under the output root.
        #[arg(long)]
        out: PathBuf,
    },
    /// Occlusion heatmap for one dataset clip (CSV plus a PPM beside it).
    Localize {
        #[arg(long)]
        clip: String,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a mix-and-separate network.
    TrainSep {
        #[arg(long, value_enum)]
        audio_mode: ModeArg,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Binauralization model for predicted mode.
        #[arg(long)]
        m2b_ckpt: Option<PathBuf>,
    },
    /// Separate a mixture WAV into one track per frame.
    Separate {
        #[arg(long)]
        mixture: PathBuf,
        /// One `.ppm` per video in the mixture.
        #[arg(long, required = true, num_args = 1..)]
        frames: Vec<PathBuf>,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark every available model on the test split.
    Evaluate {
        #[arg(long)]
        skip_separation: bool,
    },
    /// Finite-difference check of every layer type.
    Gradcheck,
}

/// 2 config, 3 data, 4 numeric.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Format { kind, .. } if kind.ends_with("config") => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
