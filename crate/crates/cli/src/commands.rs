//! Subcommand implementations. Each writes only under the output root and
//! leaves a reproducibility record in `<output>/repro/`.

use std::path::{Path, PathBuf};

use m2b::audio::wav::{read_wav, write_wav, WavEncoding};
use m2b::audio::{resample, Waveform, SAMPLE_RATE};
use m2b::config::RunConfig;
use m2b::metrics::{mixture_plan, run_benchmark, run_separation_benchmark, Models, SeparationEval};
use m2b::net::{gradcheck_suite, Network, Task};
use m2b::pipeline::{
    binauralize, load_split, localize_by_occlusion, separate, train_m2b, train_separation, write_loss_csv, AudioMode,
    Clip, FrameProvider, FrameSequence,
};
use m2b::repro::ReproRecord;
use m2b::scene::{dataset_hash, generate_dataset, DatasetManifest, FrameImage, Split};
use m2b::{Error, Result};

use crate::{Cli, Command, Variant};

struct Run {
    cfg: RunConfig,
    out: PathBuf,
}

impl Run {
    fn load(cli: &Cli) -> Result<Run> {
        let mut cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &cli.output {
            cfg.paths.output = o.clone();
        }
        if let Some(d) = &cli.dataset {
            cfg.paths.dataset = Some(d.clone());
        }
        let out = cfg.output_dir().to_path_buf();
        std::fs::create_dir_all(&out).map_err(|e| Error::Path {
            path: out.clone(),
            source: e,
        })?;
        Ok(Run { cfg, out })
    }

    /// Relative paths land under the output root.
    fn under_out(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    fn m2b_ckpt(&self, variant: Variant) -> PathBuf {
        self.out.join(format!("m2b_{}.ckpt", variant.tag()))
    }

    fn sep_ckpt(&self, mode: AudioMode) -> PathBuf {
        self.out.join(format!("sep_{mode}.ckpt"))
    }

    fn record(&self, command: &str, seed: u64) -> ReproRecord {
        ReproRecord::new(command, seed, &self.cfg)
    }

    fn finish(&self, rec: &ReproRecord, name: &str) -> Result<()> {
        let dir = self.out.join("repro");
        std::fs::create_dir_all(&dir).map_err(|e| Error::Path {
            path: dir.clone(),
            source: e,
        })?;
        rec.write(dir.join(format!("{name}.json")))
    }

    fn manifest(&self) -> Result<DatasetManifest> {
        DatasetManifest::load(self.cfg.dataset_dir())
    }

    fn split(&self, split: Split) -> Result<Vec<Clip>> {
        load_split(&self.manifest()?, split)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::Path {
            path: p.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn load_net(path: &Path) -> Result<Network<f32>> {
    Ok(Network::load(path)?.0)
}

pub fn run(cli: Cli) -> Result<()> {
    let run = Run::load(&cli)?;
    match cli.command {
        Command::Synth => synth(&run),
        Command::TrainM2b { variant, epochs, seed } => train_m2b_cmd(&run, variant, epochs, seed),
        Command::Binauralize {
            input,
            frames,
            fps,
            ckpt,
            out,
        } => binauralize_cmd(&run, &input, &frames, fps, ckpt, &out),
        Command::Localize { clip, ckpt, out } => localize(&run, &clip, ckpt, &out),
        Command::TrainSep {
            audio_mode,
            epochs,
            seed,
            m2b_ckpt,
        } => train_sep(&run, audio_mode.into(), epochs, seed, m2b_ckpt),
        Command::Separate {
            mixture,
            frames,
            ckpt,
            out,
        } => separate_cmd(&run, &mixture, &frames, &ckpt, &out),
        Command::Evaluate { skip_separation } => evaluate(&run, skip_separation),
        Command::Gradcheck => gradcheck(),
    }
}

fn synth(run: &Run) -> Result<()> {
    let dir = run.cfg.dataset_dir();
    let manifest = generate_dataset(&run.cfg.generation, &dir)?;
    let hash = dataset_hash(&dir)?;
    let mut rec = run.record("synth", run.cfg.generation.seed);
    rec.dataset_hash = Some(hash.clone());
    run.finish(&rec, "synth")?;
    println!(
        "dataset {}: {} train, {} val, {} test; sha256 {hash}",
        dir.display(),
        manifest.count(Split::Train),
        manifest.count(Split::Val),
        manifest.count(Split::Test)
    );
    Ok(())
}

fn train_m2b_cmd(run: &Run, variant: Variant, epochs: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut tc = run.cfg.train.clone();
    tc.epochs = epochs.unwrap_or(tc.epochs);
    tc.seed = seed.unwrap_or(tc.seed);
    let clips = run.split(Split::Train)?;
    let net_cfg = run.cfg.net_config(Task::Binaural, variant == Variant::Full);
    let trained = train_m2b(&clips, net_cfg, &tc)?;
    let ckpt = run.m2b_ckpt(variant);
    trained.net.save(&ckpt, Some(&trained.adam))?;
    let loss = run.out.join(format!("loss_m2b_{}.csv", variant.tag()));
    write_loss_csv(&loss, &trained.history)?;

    let name = format!("train_m2b_{}", variant.tag());
    let mut rec = run.record(&name, tc.seed);
    rec.dataset_hash = Some(dataset_hash(run.cfg.dataset_dir())?);
    rec.output(&run.out, &ckpt)?;
    rec.output(&run.out, &loss)?;
    run.finish(&rec, &name)?;
    println!(
        "trained {} model: {} steps, final loss {:.6}, saved {}",
        variant.tag(),
        trained.history.len(),
        trained.history.last().copied().unwrap_or(f64::NAN),
        ckpt.display()
    );
    Ok(())
}

fn frames_from(path: &Path, fps: f64) -> Result<Box<dyn FrameProvider>> {
    if path.is_dir() {
        Ok(Box::new(FrameSequence::from_dir(path, fps)?))
    } else {
        Ok(Box::new(FrameImage::read_ppm(path)?))
    }
}

fn binauralize_cmd(run: &Run, input: &Path, frames: &Path, fps: f64, ckpt: Option<PathBuf>, out: &Path) -> Result<()> {
    let ckpt = ckpt.unwrap_or_else(|| run.m2b_ckpt(Variant::Full));
    let net = load_net(&ckpt)?;
    let wav = read_wav(input)?;
    if !wav.is_mono() {
        return Err(Error::InvalidAudio(format!(
            "{} has {} channels; binauralization takes mono input",
            input.display(),
            wav.num_channels()
        )));
    }
    let mono = if wav.sample_rate() == SAMPLE_RATE {
        wav
    } else {
        resample(&wav, SAMPLE_RATE)?
    };
    let provider = frames_from(frames, fps)?;
    let pair = binauralize(&net, &mono, provider.as_ref(), &run.cfg.infer)?;
    let out = run.under_out(out);
    create_parent(&out)?;
    write_wav(&out, &pair.to_stereo(), WavEncoding::Float32)?;

    let mut rec = run.record("binauralize", 0);
    rec.input("checkpoint", &ckpt)?;
    rec.input("audio", input)?;
    rec.output(&run.out, &out)?;
    run.finish(&rec, "binauralize")?;
    println!(
        "wrote {} ({:.2} s)",
        out.display(),
        pair.len() as f64 / SAMPLE_RATE as f64
    );
    Ok(())
}

fn localize(run: &Run, clip_id: &str, ckpt: Option<PathBuf>, out: &Path) -> Result<()> {
    let ckpt = ckpt.unwrap_or_else(|| run.m2b_ckpt(Variant::Full));
    let net = load_net(&ckpt)?;
    let manifest = run.manifest()?;
    let entry = manifest.get(clip_id).ok_or_else(|| Error::Format {
        kind: "clip id",
        detail: format!("`{clip_id}` is not in the manifest"),
    })?;
    let clip = Clip::load(&manifest, entry)?;
    let heat = localize_by_occlusion(&net, &clip, run.cfg.infer.window_s, &run.cfg.occlusion)?;
    let csv = run.under_out(out);
    create_parent(&csv)?;
    std::fs::write(&csv, heat.to_csv()).map_err(|e| Error::Path {
        path: csv.clone(),
        source: e,
    })?;
    let ppm = csv.with_extension("ppm");
    heat.to_frame(clip.frame.height(), clip.frame.width()).write_ppm(&ppm)?;

    let mut rec = run.record("localize", 0);
    rec.input("checkpoint", &ckpt)?;
    rec.dataset_hash = Some(dataset_hash(run.cfg.dataset_dir())?);
    rec.output(&run.out, &csv)?;
    rec.output(&run.out, &ppm)?;
    run.finish(&rec, "localize")?;
    let (r, c) = heat.argmax();
    let (y0, x0, y1, x1) = heat.placement_rect(r, c);
    println!(
        "peak at rows {y0}..{y1}, cols {x0}..{x1}; wrote {} and {}",
        csv.display(),
        ppm.display()
    );
    Ok(())
}

fn train_sep(
    run: &Run,
    mode: AudioMode,
    epochs: Option<usize>,
    seed: Option<u64>,
    m2b_ckpt: Option<PathBuf>,
) -> Result<()> {
    let mut tc = run.cfg.separation.train.clone();
    tc.epochs = epochs.unwrap_or(tc.epochs);
    tc.seed = seed.unwrap_or(tc.seed);
    let clips = run.split(Split::Train)?;
    let name = format!("train_sep_{mode}");
    let mut rec = run.record(&name, tc.seed);
    let m2b = if mode == AudioMode::Predicted {
        let p = m2b_ckpt.unwrap_or_else(|| run.m2b_ckpt(Variant::Full));
        let net = load_net(&p)?;
        rec.input("m2b_checkpoint", &p)?;
        Some(net)
    } else {
        None
    };
    let net_cfg = run.cfg.sep_net_config(Task::Separation {
        channels: mode.channels(),
    });
    let trained = train_separation(&clips, net_cfg, &tc, mode, m2b.as_ref(), &run.cfg.infer)?;
    let ckpt = run.sep_ckpt(mode);
    trained.net.save(&ckpt, Some(&trained.adam))?;
    let loss = run.out.join(format!("loss_sep_{mode}.csv"));
    write_loss_csv(&loss, &trained.history)?;

    rec.dataset_hash = Some(dataset_hash(run.cfg.dataset_dir())?);
    rec.output(&run.out, &ckpt)?;
    rec.output(&run.out, &loss)?;
    run.finish(&rec, &name)?;
    println!(
        "trained {mode} separation model: {} steps, final loss {:.6}, saved {}",
        trained.history.len(),
        trained.history.last().copied().unwrap_or(f64::NAN),
        ckpt.display()
    );
    Ok(())
}

fn separate_cmd(run: &Run, mixture: &Path, frames: &[PathBuf], ckpt: &Path, out: &Path) -> Result<()> {
    let net = load_net(ckpt)?;
    let wav = read_wav(mixture)?;
    let wav = if wav.sample_rate() == SAMPLE_RATE {
        wav
    } else {
        resample(&wav, SAMPLE_RATE)?
    };
    let images = frames.iter().map(FrameImage::read_ppm).collect::<Result<Vec<_>>>()?;
    let seg = run.cfg.separation.train.segment_samples();
    let est = separate(&net, wav.channels(), &images, seg, run.cfg.separation.train.target_rms)?;
    let dir = run.under_out(out);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Path {
        path: dir.clone(),
        source: e,
    })?;
    let mut rec = run.record("separate", 0);
    rec.input("checkpoint", ckpt)?;
    rec.input("mixture", mixture)?;
    for (k, chans) in est.into_iter().enumerate() {
        let path = dir.join(format!("source_{k}.wav"));
        write_wav(&path, &Waveform::new(chans, SAMPLE_RATE)?, WavEncoding::Float32)?;
        rec.output(&run.out, &path)?;
        println!("wrote {}", path.display());
    }
    run.finish(&rec, "separate")
}

fn write_csv(run: &Run, rec: &mut ReproRecord, name: &str, text: &str) -> Result<()> {
    let path = run.out.join(name);
    std::fs::write(&path, text).map_err(|e| Error::Path {
        path: path.clone(),
        source: e,
    })?;
    rec.output(&run.out, &path)
}

fn evaluate(run: &Run, skip_separation: bool) -> Result<()> {
    let clips = run.split(Split::Test)?;
    let mut rec = run.record("evaluate", run.cfg.evaluation.seed);
    rec.dataset_hash = Some(dataset_hash(run.cfg.dataset_dir())?);

    let full_path = run.m2b_ckpt(Variant::Full);
    let full = load_net(&full_path)?;
    rec.input("m2b_full", &full_path)?;
    let ao_path = run.m2b_ckpt(Variant::AudioOnly);
    let audio_only = if ao_path.exists() {
        rec.input("m2b_audio_only", &ao_path)?;
        Some(load_net(&ao_path)?)
    } else {
        eprintln!("note: {} absent; skipping the audio-only baseline", ao_path.display());
        None
    };
    let models = Models {
        full: Some(&full),
        audio_only: audio_only.as_ref(),
    };
    let report = run_benchmark(&clips, models, &run.cfg.infer)?;
    write_csv(run, &mut rec, "binaural_summary.csv", &report.summary_csv())?;
    write_csv(run, &mut rec, "binaural_clips.csv", &report.items_csv())?;
    print!("{}", report.summary_csv());

    if !skip_separation {
        let mut nets = Vec::new();
        for mode in AudioMode::ALL {
            let p = run.sep_ckpt(mode);
            if p.exists() {
                rec.input(&format!("sep_{mode}"), &p)?;
                nets.push((mode, load_net(&p)?));
            }
        }
        if nets.is_empty() {
            eprintln!("note: no separation checkpoints; skipping the separation benchmark");
        } else {
            let seg = run.cfg.separation.train.segment_samples();
            let plan = mixture_plan(&clips, run.cfg.evaluation.mixtures, seg, run.cfg.evaluation.seed)?;
            let refs: Vec<(AudioMode, &Network<f32>)> = nets.iter().map(|(m, n)| (*m, n)).collect();
            let sep = run_separation_benchmark(
                &clips,
                &refs,
                Some(&full),
                &plan,
                &SeparationEval {
                    segment: seg,
                    target_rms: run.cfg.separation.train.target_rms,
                    filter_len: run.cfg.evaluation.filter_len,
                },
                &run.cfg.infer,
            )?;
            write_csv(run, &mut rec, "separation_summary.csv", &sep.summary_csv())?;
            write_csv(run, &mut rec, "separation_mixtures.csv", &sep.items_csv())?;
            print!("{}", sep.summary_csv());
        }
    }
    run.finish(&rec, "evaluate")
}

fn gradcheck() -> Result<()> {
    let rows = gradcheck_suite()?;
    println!(
        "{:<20} {:>14} {:>10} {:>8}  result",
        "layer", "max_rel_error", "tolerance", "checked"
    );
    for r in &rows {
        println!(
            "{:<20} {:>14.3e} {:>10.0e} {:>8}  {}",
            r.name,
            r.max_rel_error,
            r.tolerance,
            r.checked,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )))
    }
}
