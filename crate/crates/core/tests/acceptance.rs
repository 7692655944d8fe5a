//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.
//!
//! Criteria 4 to 7 share one synthetic dataset (400 train / 50 test clips, two
//! source classes) and the models trained on it. Widths and epoch counts are
//! reduced from the library defaults so the whole run fits in about an hour on
//! one core.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use m2b::audio::{istft, stft, SpectrogramParams, Waveform, SAMPLE_RATE};
use m2b::binaural::{difference, mix_to_mono, reconstruct_channels, BinauralPair};
use m2b::metrics::{
    bss_eval, make_baseline, mixture_plan, run_benchmark, run_separation_benchmark, Baseline, Models, Report,
    SeparationEval, DB_CAP,
};
use m2b::net::{gradcheck_suite, NetConfig, Network, Task};
use m2b::pipeline::{
    binauralize, load_split, localize_by_occlusion, train_m2b, train_separation, AudioMode, Clip, InferConfig,
    OcclusionConfig, TrainConfig,
};
use m2b::scene::{dataset_hash, disk_geometry, generate_dataset, synthesize, DatasetManifest, GenerationConfig, Split};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<(bool, String), String>;

const LEARNING_BUDGET_S: f64 = 30.0 * 60.0;
const SEPARATION_BUDGET_S: f64 = 45.0 * 60.0;
const MIXTURES: usize = 200;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn report(id: u32, name: &str, started: Instant, r: Check) -> bool {
    let (pass, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
    println!(
        "criterion {id} [{name}]: {} | {detail} | {:.0} s",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    std::io::stdout().flush().ok();
    pass
}

fn noise(len: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = Normal::new(0.0, std).unwrap();
    (0..len).map(|_| n.sample(rng)).collect()
}

fn binaural_net(task: Task, use_visual: bool) -> NetConfig {
    NetConfig {
        task,
        unet_channels: vec![8, 16, 32, 64, 64],
        use_visual,
        visual_channels: vec![8, 16, 16, 16],
        visual_embed_dim: 64,
        ..NetConfig::default()
    }
}

fn m2b_train() -> TrainConfig {
    TrainConfig {
        epochs: 20,
        visual_lr_mult: 1.0,
        frame_erase_prob: 0.5,
        ..TrainConfig::default()
    }
}

fn sep_train() -> TrainConfig {
    TrainConfig {
        epochs: 50,
        lr: 2e-3,
        visual_lr_mult: 1.0,
        ..TrainConfig::default()
    }
}

// ---------------------------------------------------------------- criterion 1

fn signal_algebra() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.gen_range(1..2000);
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let pair =
            BinauralPair::new(noise(len, scale, &mut rng), noise(len, scale, &mut rng), SAMPLE_RATE).map_err(err)?;
        let back =
            reconstruct_channels(&mix_to_mono(&pair).map_err(err)?, &difference(&pair).map_err(err)?).map_err(err)?;
        let peak = pair.left.iter().chain(&pair.right).fold(0.0f64, |m, v| m.max(v.abs()));
        let e = pair
            .left
            .iter()
            .zip(&back.left)
            .chain(pair.right.iter().zip(&back.right))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(e / peak);
    }

    // any network, trained or not, must give L + R = mono
    let mut sum_err = 0.0f64;
    for (seed, use_visual) in [(1, true), (2, false)] {
        let net: Network<f32> = Network::new(binaural_net(Task::Binaural, use_visual), seed).map_err(err)?;
        let frame = m2b::scene::FrameImage::filled(64, 128, [0.3, 0.2, 0.1]);
        for len in [10_080, 16_000, 33_333] {
            let mut x = noise(len, 0.1, &mut rng);
            x[len / 3..len / 2].iter_mut().for_each(|v| *v = 0.0);
            let mono = Waveform::mono(x.clone(), SAMPLE_RATE).map_err(err)?;
            let out = binauralize(&net, &mono, &frame, &InferConfig::default()).map_err(err)?;
            let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..len {
                sum_err = sum_err.max((out.left[i] + out.right[i] - x[i]).abs() / peak);
            }
        }
    }
    Ok((
        worst <= 1e-12 && sum_err <= 1e-12,
        format!("reconstruction max rel err {worst:.1e} over 1000 pairs; binauralize |L+R-M|/peak {sum_err:.1e}"),
    ))
}

// ---------------------------------------------------------------- criterion 2

fn snr_db(x: &[f64], y: &[f64]) -> f64 {
    let s: f64 = x.iter().map(|v| v * v).sum();
    let n: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    10.0 * (s / n.max(1e-300)).log10()
}

fn stft_fidelity() -> Check {
    let p = SpectrogramParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let len = 2 * SAMPLE_RATE as usize;
    let white = noise(len, 0.1, &mut rng);
    // voiced harmonic notes under a syllable-rate envelope, with noisy consonant bursts
    let voiced = synthesize(2, 9, len, SAMPLE_RATE);
    let bursts = noise(len, 0.02, &mut rng);
    let speech: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let syllable = (0.5 + 0.5 * (2.0 * std::f64::consts::PI * 4.0 * t).sin()).powi(2);
            let consonant = if (t * 4.0).fract() < 0.1 { bursts[i] } else { 0.0 };
            voiced[i] * syllable + consonant
        })
        .collect();
    let mut snrs = Vec::new();
    for x in [&white, &speech] {
        let w = Waveform::mono(x.clone(), SAMPLE_RATE).map_err(err)?;
        let s = stft(&w, &p).map_err(err)?;
        let back = istft(&s, &p, x.len(), SAMPLE_RATE).map_err(err)?;
        snrs.push(snr_db(x, back.channel(0)));
    }
    let shape = |secs: f64| -> Result<(usize, usize), String> {
        let n = (secs * SAMPLE_RATE as f64).round() as usize;
        let s = stft(&Waveform::mono(vec![0.0; n], SAMPLE_RATE).map_err(err)?, &p).map_err(err)?;
        Ok((s.bins(), s.frames()))
    };
    let (a, b) = (shape(0.63)?, shape(2.55)?);
    Ok((
        snrs.iter().all(|&s| s > 50.0) && a == (257, 64) && b == (257, 256),
        format!(
            "round-trip SNR white {:.1} dB, speech-like {:.1} dB; 0.63 s -> {}x{}, 2.55 s -> {}x{}",
            snrs[0], snrs[1], a.0, a.1, b.0, b.1
        ),
    ))
}

// ---------------------------------------------------------------- criterion 3

fn differentiation() -> Check {
    let rows = gradcheck_suite().map_err(err)?;
    let layers = rows.iter().filter(|r| r.name != "tiny_unet");
    let worst_layer = layers.clone().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let net = rows.iter().find(|r| r.name == "tiny_unet").ok_or("no network row")?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    Ok((
        failed.is_empty(),
        format!(
            "{} layer checks, worst rel err {worst_layer:.1e} (< 1e-4); tiny U-Net {:.1e} (< 1e-3){}",
            layers.count(),
            net.max_rel_error,
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failed.join(", "))
            }
        ),
    ))
}

// ---------------------------------------------------------------- criterion 4

struct Trained {
    test: Vec<Clip>,
    train: Vec<Clip>,
    full: Network<f32>,
    audio_only: Network<f32>,
    report: Report,
    full_train_s: f64,
}

fn learning(work: &Path) -> Result<(Check, Option<Trained>), String> {
    let started = Instant::now();
    let dir = work.join("dataset");
    // two classes, so half of all mixtures pair look-alike sources that only
    // spatial cues can tell apart
    let gen = GenerationConfig {
        train: 400,
        val: 0,
        test: 50,
        num_classes: 2,
        ..GenerationConfig::default()
    };
    let manifest = generate_dataset(&gen, &dir).map_err(err)?;
    let train = load_split(&manifest, Split::Train).map_err(err)?;
    let test = load_split(&manifest, Split::Test).map_err(err)?;
    let classes: std::collections::BTreeSet<u32> = train
        .iter()
        .chain(&test)
        .flat_map(|c| c.scene.sources.iter().map(|s| s.class_id))
        .collect();
    let (lo, hi) = train
        .iter()
        .map(|c| c.scene.sources[0].azimuth_deg)
        .fold((f64::MAX, f64::MIN), |(lo, hi), a| (lo.min(a), hi.max(a)));

    let t = Instant::now();
    let full = train_m2b(&train, binaural_net(Task::Binaural, true), &m2b_train()).map_err(err)?;
    let full_train_s = t.elapsed().as_secs_f64();
    let audio_only = train_m2b(&train, binaural_net(Task::Binaural, false), &m2b_train()).map_err(err)?;
    full.net
        .save(work.join("m2b_full.ckpt"), Some(&full.adam))
        .map_err(err)?;
    audio_only
        .net
        .save(work.join("m2b_audio_only.ckpt"), Some(&audio_only.adam))
        .map_err(err)?;

    let models = Models {
        full: Some(&full.net),
        audio_only: Some(&audio_only.net),
    };
    let rep = run_benchmark(&test, models, &InferConfig::default()).map_err(err)?;
    std::fs::write(work.join("binaural_summary.csv"), rep.summary_csv()).map_err(err)?;
    std::fs::write(work.join("binaural_clips.csv"), rep.items_csv()).map_err(err)?;
    let elapsed = started.elapsed().as_secs_f64();

    let get = |m: &str, k: &str| rep.mean(m, k).unwrap_or(f64::NAN);
    let mut pass = train.len() >= 400 && test.len() >= 50 && classes.len() >= 2 && elapsed <= LEARNING_BUDGET_S;
    let mut detail = format!(
        "{} train / {} test clips, {} classes, azimuth [{lo:.1}, {hi:.1}]",
        train.len(),
        test.len(),
        classes.len()
    );
    for metric in ["stft_distance", "env_distance"] {
        let (ours, ao, mm) = (get("ours", metric), get("audio_only", metric), get("mono_mono", metric));
        pass &= ours <= 0.9 * mm && ours < ao;
        detail.push_str(&format!(
            "; {metric}: ours {ours:.3} ({:.3}x mono_mono), audio_only {ao:.3}, mono_mono {mm:.3}",
            ours / mm
        ));
    }
    detail.push_str(&format!("; total {elapsed:.0} s of {LEARNING_BUDGET_S:.0} s budget"));
    let trained = Trained {
        test,
        train,
        full: full.net,
        audio_only: audio_only.net,
        report: rep,
        full_train_s,
    };
    Ok((Ok((pass, detail)), Some(trained)))
}

// ---------------------------------------------------------------- criterion 5

fn spatial(t: &Trained) -> Check {
    let infer = InferConfig::default();
    let models = Models {
        full: Some(&t.full),
        audio_only: Some(&t.audio_only),
    };
    let (mut n, mut correct, mut inverted) = (0, 0, 0);
    for c in &t.test {
        let az = c.scene.sources[0].azimuth_deg;
        if az.abs() < 30.0 {
            continue;
        }
        n += 1;
        let mono = Waveform::mono(c.mono.clone(), SAMPLE_RATE).map_err(err)?;
        let right_side = az > 0.0;
        let pred = binauralize(&t.full, &mono, &c.frame, &infer).map_err(err)?;
        let (l, r) = pred.rms();
        if (r > l) == right_side {
            correct += 1;
        }
        let flipped = make_baseline(Baseline::FlippedVisual, &mono, &c.frame, models, &infer).map_err(err)?;
        let (l, r) = flipped.rms();
        if (r > l) != right_side {
            inverted += 1;
        }
    }
    if n == 0 {
        return Err("no test clips with |azimuth| >= 30".into());
    }
    let (fc, ff) = (correct as f64 / n as f64, inverted as f64 / n as f64);
    Ok((
        fc >= 0.9 && ff >= 0.8,
        format!(
            "louder channel on source side {correct}/{n} ({:.0}% >= 90%); flipped frames invert it {inverted}/{n} ({:.0}% >= 80%)",
            100.0 * fc,
            100.0 * ff
        ),
    ))
}

// ---------------------------------------------------------------- criterion 6

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn localization(t: &Trained) -> Check {
    let cfg = OcclusionConfig::default();
    let (mut hits, mut deltas) = (0, Vec::new());
    for c in &t.test {
        let heat = localize_by_occlusion(&t.full, c, 0.63, &cfg).map_err(err)?;
        let (h, w) = (c.frame.height(), c.frame.width());
        let (cx, cy, radius) = disk_geometry(c.scene.sources[0].azimuth_deg, h, w);
        let center = |r: usize, col: usize| {
            let (y0, x0, y1, x1) = heat.placement_rect(r, col);
            ((x0 + x1) as f64 / 2.0, (y0 + y1) as f64 / 2.0)
        };
        let dist = |(x, y): (f64, f64)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
        let (ar, ac) = heat.argmax();
        let (x, y) = center(ar, ac);
        let reach = radius + cfg.stride_px as f64;
        if (x - cx).abs() <= reach && (y - cy).abs() <= reach {
            hits += 1;
        }
        // loss with the disk covered versus with only background covered
        let mut disk = (f64::MAX, 0.0);
        let mut background = Vec::new();
        for r in 0..heat.rows {
            for col in 0..heat.cols {
                let loss = heat.losses[r * heat.cols + col];
                let d = dist(center(r, col));
                if d < disk.0 {
                    disk = (d, loss);
                }
                let (y0, x0, y1, x1) = heat.placement_rect(r, col);
                let nx = cx.clamp(x0 as f64, x1 as f64);
                let ny = cy.clamp(y0 as f64, y1 as f64);
                if ((nx - cx).powi(2) + (ny - cy).powi(2)).sqrt() > radius {
                    background.push(loss);
                }
            }
        }
        if !background.is_empty() {
            deltas.push(disk.1 - background.iter().sum::<f64>() / background.len() as f64);
        }
    }
    let n = t.test.len();
    let rate = hits as f64 / n as f64;
    let med = median(deltas.clone());
    Ok((
        rate >= 0.8 && med > 0.0,
        format!(
            "argmax within stride-dilated disk box {hits}/{n} ({:.0}% >= 80%); median (disk - background) occlusion loss {med:.3e} over {} scenes",
            100.0 * rate,
            deltas.len()
        ),
    ))
}

// ---------------------------------------------------------------- criterion 7

fn separation(t: &Trained, work: &Path) -> Check {
    let started = Instant::now();
    let infer = InferConfig::default();
    let cfg = sep_train();
    let mut nets = Vec::new();
    for mode in [AudioMode::Mono, AudioMode::Predicted, AudioMode::Gt] {
        let net_cfg = binaural_net(
            Task::Separation {
                channels: mode.channels(),
            },
            true,
        );
        let trained = train_separation(&t.train, net_cfg, &cfg, mode, Some(&t.full), &infer).map_err(err)?;
        trained
            .net
            .save(work.join(format!("sep_{mode}.ckpt")), Some(&trained.adam))
            .map_err(err)?;
        nets.push((mode, trained.net));
    }
    let segment = cfg.segment_samples();
    let plan = mixture_plan(&t.test, MIXTURES, segment, 11).map_err(err)?;
    let refs: Vec<(AudioMode, &Network<f32>)> = nets.iter().map(|(m, n)| (*m, n)).collect();
    let opts = SeparationEval {
        segment,
        target_rms: cfg.target_rms,
        filter_len: m2b::metrics::DEFAULT_FILTER_LEN,
    };
    let rep = run_separation_benchmark(&t.test, &refs, Some(&t.full), &plan, &opts, &infer).map_err(err)?;
    std::fs::write(work.join("separation_summary.csv"), rep.summary_csv()).map_err(err)?;
    std::fs::write(work.join("separation_mixtures.csv"), rep.items_csv()).map_err(err)?;
    // the binaural model this criterion relies on is part of its cost
    let elapsed = started.elapsed().as_secs_f64() + t.full_train_s;

    let sdr = |m: &str| rep.mean(m, "sdr").unwrap_or(f64::NAN);
    let (mono, pred, gt) = (sdr("sep_mono"), sdr("sep_predicted"), sdr("sep_gt"));
    // same-class mixtures can only be told apart by where the sources are
    let class: std::collections::HashMap<&str, u32> = t
        .test
        .iter()
        .map(|c| (c.id.as_str(), c.scene.sources[0].class_id))
        .collect();
    let regime_mean = |method: &str, same: bool| {
        let v: Vec<f64> = rep
            .items
            .iter()
            .filter(|r| r.method == method && r.metric == "sdr")
            .filter(|r| {
                let (a, b) = r.item.split_once('+').expect("pair id");
                (class[a] == class[b]) == same
            })
            .map(|r| r.value)
            .collect();
        (v.iter().sum::<f64>() / v.len() as f64, v.len())
    };
    let mut regimes = String::new();
    for (same, label) in [(true, "same-class"), (false, "different-class")] {
        let (g, n) = regime_mean("sep_gt", same);
        let (p, _) = regime_mean("sep_predicted", same);
        let (m, _) = regime_mean("sep_mono", same);
        regimes.push_str(&format!("; {label} ({n}): gt {g:.2} / predicted {p:.2} / mono {m:.2}"));
    }
    Ok((
        plan.len() >= 30 && gt >= pred && pred >= mono && pred - mono > 0.0 && elapsed <= SEPARATION_BUDGET_S,
        format!(
            "{} mixtures; mean SDR gt {gt:.2}, predicted {pred:.2}, mono {mono:.2} dB (need gt >= predicted > mono; predicted - mono {:+.2} dB){regimes}; {elapsed:.0} s of {SEPARATION_BUDGET_S:.0} s budget",
            plan.len(),
            pred - mono,
        ),
    ))
}

// ---------------------------------------------------------------- criterion 8

/// Least-squares projection of `est` onto delays `0..l` of `refs`, from
/// time-domain lag sums and an LU solve. Returns the length `n + l − 1` projection.
fn direct_projection(refs: &[&[f64]], est: &[f64], l: usize) -> Vec<f64> {
    let n = est.len();
    let lag = |a: &[f64], b: &[f64], m: isize| -> f64 {
        // sum_u a[u] b[u + m]
        let (lo, hi) = (0.max(-m) as usize, (n as isize).min(n as isize - m) as usize);
        (lo..hi).map(|u| a[u] * b[(u as isize + m) as usize]).sum()
    };
    let k = refs.len() * l;
    let mut g = DMatrix::<f64>::zeros(k, k);
    for (i, a) in refs.iter().enumerate() {
        for (j, b) in refs.iter().enumerate() {
            let r: Vec<f64> = (-(l as isize) + 1..l as isize).map(|m| lag(a, b, m)).collect();
            for t1 in 0..l {
                for t2 in 0..l {
                    g[(i * l + t1, j * l + t2)] = r[(t1 as isize - t2 as isize + l as isize - 1) as usize];
                }
            }
        }
    }
    let d = DVector::from_iterator(
        k,
        refs.iter()
            .flat_map(|a| (0..l).map(move |tau| lag(a, est, tau as isize))),
    );
    let c = g.lu().solve(&d).expect("independent references");
    let mut p = vec![0.0; n + l - 1];
    for (i, a) in refs.iter().enumerate() {
        for tau in 0..l {
            let w = c[i * l + tau];
            for (u, v) in a.iter().enumerate() {
                p[u + tau] += w * v;
            }
        }
    }
    p
}

fn oracle_scores(refs: &[Vec<f64>], est: &[f64], j: usize, l: usize) -> [f64; 3] {
    let all: Vec<&[f64]> = refs.iter().map(Vec::as_slice).collect();
    let s_target = direct_projection(&all[j..j + 1], est, l);
    let p_all = direct_projection(&all, est, l);
    let mut padded = est.to_vec();
    padded.resize(p_all.len(), 0.0);
    let e_interf: Vec<f64> = p_all.iter().zip(&s_target).map(|(p, s)| p - s).collect();
    let e_artif: Vec<f64> = padded.iter().zip(&p_all).map(|(x, p)| x - p).collect();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let db = |a: f64, b: f64| (10.0 * (a / b).log10()).clamp(-DB_CAP, DB_CAP);
    let distortion: Vec<f64> = e_interf.iter().zip(&e_artif).map(|(a, b)| a + b).collect();
    [
        db(sq(&s_target), sq(&distortion)),
        db(sq(&s_target), sq(&e_interf)),
        db(sq(&p_all), sq(&e_artif)),
    ]
}

fn bss_correctness() -> Check {
    let n = SAMPLE_RATE as usize;
    let l = m2b::metrics::DEFAULT_FILTER_LEN;
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let s1 = noise(n, 1.0, &mut rng);
    let s2 = noise(n, 1.0, &mut rng);
    let art = noise(n, 1.0, &mut rng);
    let e1: Vec<f64> = (0..n)
        .map(|t| s1[t] + 0.6 * if t >= 40 { s1[t - 40] } else { 0.0 } + 0.3 * s2[t] + 0.1 * art[t])
        .collect();
    let e2: Vec<f64> = (0..n)
        .map(|t| 0.9 * s2[t] + 0.25 * if t >= 7 { s1[t - 7] } else { 0.0 } + 0.05 * art[(t + 1000) % n])
        .collect();
    let refs = vec![s1, s2];
    let est = vec![e1, e2];
    let got = bss_eval(&refs, &est, l).map_err(err)?;
    let mut oracle_err = 0.0f64;
    for j in 0..2 {
        let want = oracle_scores(&refs, &est[j], j, l);
        let have = [got.sdr_db[j], got.sir_db[j], got.sar_db[j]];
        for k in 0..3 {
            oracle_err = oracle_err.max((want[k] - have[k]).abs());
        }
    }
    let scaled: Vec<Vec<f64>> = est.iter().map(|e| e.iter().map(|v| 3.0 * v).collect()).collect();
    let s = bss_eval(&refs, &scaled, l).map_err(err)?;
    let mut scale_err = 0.0f64;
    for j in 0..2 {
        for (a, b) in [
            (got.sdr_db[j], s.sdr_db[j]),
            (got.sir_db[j], s.sir_db[j]),
            (got.sar_db[j], s.sar_db[j]),
        ] {
            scale_err = scale_err.max((a - b).abs());
        }
    }
    let perfect = bss_eval(&refs, &refs, l).map_err(err)?;
    let cap_ok = perfect
        .sdr_db
        .iter()
        .chain(&perfect.sir_db)
        .chain(&perfect.sar_db)
        .all(|&v| v == DB_CAP);
    Ok((
        got.permutation == [0, 1] && oracle_err < 1e-6 && scale_err < 1e-6 && cap_ok,
        format!(
            "max |bss - lag-sum LU oracle| {oracle_err:.1e} dB (SDR {:.2}/{:.2}); x3 scale drift {scale_err:.1e} dB; perfect estimate at +{DB_CAP} dB cap: {cap_ok}",
            got.sdr_db[0], got.sdr_db[1]
        ),
    ))
}

// ---------------------------------------------------------------- criterion 9

struct Artifacts {
    dataset: String,
    m2b_loss: Vec<u64>,
    m2b_ckpt: Vec<u8>,
    sep_loss: Vec<u64>,
    sep_ckpt: Vec<u8>,
    reports: Vec<String>,
}

fn pipeline_once(dir: &Path) -> Result<Artifacts, String> {
    let gen = GenerationConfig {
        train: 24,
        val: 0,
        test: 6,
        clip_duration_s: 1.0,
        seed: 99,
        ..GenerationConfig::default()
    };
    generate_dataset(&gen, dir).map_err(err)?;
    let manifest = DatasetManifest::load(dir).map_err(err)?;
    let train = load_split(&manifest, Split::Train).map_err(err)?;
    let test = load_split(&manifest, Split::Test).map_err(err)?;
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        ..m2b_train()
    };
    let small = |task| NetConfig {
        unet_channels: vec![4, 8, 8, 8, 8],
        visual_channels: vec![4, 4, 4, 4],
        visual_embed_dim: 32,
        ..binaural_net(task, true)
    };
    let infer = InferConfig::default();
    let m2b = train_m2b(&train, small(Task::Binaural), &cfg).map_err(err)?;
    let sep = train_separation(
        &train,
        small(Task::Separation { channels: 2 }),
        &cfg,
        AudioMode::Predicted,
        Some(&m2b.net),
        &infer,
    )
    .map_err(err)?;
    let models = Models {
        full: Some(&m2b.net),
        audio_only: None,
    };
    let bench = run_benchmark(&test, models, &infer).map_err(err)?;
    let plan = mixture_plan(&test, 4, cfg.segment_samples(), 5).map_err(err)?;
    let opts = SeparationEval {
        segment: cfg.segment_samples(),
        target_rms: cfg.target_rms,
        filter_len: 64,
    };
    let sep_rep = run_separation_benchmark(
        &test,
        &[(AudioMode::Predicted, &sep.net)],
        Some(&m2b.net),
        &plan,
        &opts,
        &infer,
    )
    .map_err(err)?;
    Ok(Artifacts {
        dataset: dataset_hash(dir).map_err(err)?,
        m2b_loss: m2b.history.iter().map(|v| v.to_bits()).collect(),
        m2b_ckpt: m2b.net.to_checkpoint(Some(&m2b.adam)).to_bytes().map_err(err)?,
        sep_loss: sep.history.iter().map(|v| v.to_bits()).collect(),
        sep_ckpt: sep.net.to_checkpoint(Some(&sep.adam)).to_bytes().map_err(err)?,
        reports: vec![
            bench.summary_csv(),
            bench.items_csv(),
            sep_rep.summary_csv(),
            sep_rep.items_csv(),
        ],
    })
}

fn determinism(work: &Path, trained: Option<&Trained>) -> Check {
    let a = pipeline_once(&work.join("repeat_a"))?;
    let b = pipeline_once(&work.join("repeat_b"))?;
    let mut same = vec![
        ("dataset hash", a.dataset == b.dataset),
        ("binaural loss curve", a.m2b_loss == b.m2b_loss),
        ("binaural checkpoint", a.m2b_ckpt == b.m2b_ckpt),
        ("separation loss curve", a.sep_loss == b.sep_loss),
        ("separation checkpoint", a.sep_ckpt == b.sep_ckpt),
        ("report CSVs", a.reports == b.reports),
    ];
    // the full-scale benchmark recomputed from the saved checkpoints
    if let Some(t) = trained {
        let full = Network::<f32>::load(work.join("m2b_full.ckpt")).map_err(err)?.0;
        let ao = Network::<f32>::load(work.join("m2b_audio_only.ckpt")).map_err(err)?.0;
        let models = Models {
            full: Some(&full),
            audio_only: Some(&ao),
        };
        let again = run_benchmark(&t.test, models, &InferConfig::default()).map_err(err)?;
        same.push((
            "full-scale benchmark from reloaded checkpoints",
            again.summary_csv() == t.report.summary_csv() && again.items_csv() == t.report.items_csv(),
        ));
    }
    let bad: Vec<&str> = same.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    Ok((
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "two identical runs agree byte-for-byte on: {}",
                same.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            )
        } else {
            format!("differs: {}", bad.join(", "))
        },
    ))
}

fn main() {
    let work: PathBuf = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&work);
    std::fs::create_dir_all(&work).expect("create work dir");
    println!("acceptance run; artifacts in {}", work.display());
    let mut pass = Vec::new();

    let t = Instant::now();
    pass.push(report(1, "signal algebra", t, signal_algebra()));
    let t = Instant::now();
    pass.push(report(2, "STFT fidelity", t, stft_fidelity()));
    let t = Instant::now();
    pass.push(report(3, "differentiation", t, differentiation()));

    let t = Instant::now();
    let (check, trained) = learning(&work).unwrap_or_else(|e| (Err(e), None));
    pass.push(report(4, "learning efficacy", t, check));
    let need = || Err::<(bool, String), String>("needs the models from criterion 4".into());
    let t = Instant::now();
    pass.push(report(
        5,
        "spatial correctness",
        t,
        trained.as_ref().map_or_else(need, spatial),
    ));
    let t = Instant::now();
    pass.push(report(
        6,
        "localization",
        t,
        trained.as_ref().map_or_else(need, localization),
    ));
    let t = Instant::now();
    pass.push(report(
        7,
        "separation",
        t,
        trained.as_ref().map_or_else(need, |tr| separation(tr, &work)),
    ));
    let t = Instant::now();
    pass.push(report(8, "BSS-Eval correctness", t, bss_correctness()));
    let t = Instant::now();
    pass.push(report(9, "determinism", t, determinism(&work, trained.as_ref())));

    let ok = pass.iter().filter(|&&p| p).count();
    println!("acceptance: {ok}/{} criteria passed", pass.len());
    if ok != pass.len() {
        std::process::exit(1);
    }
}
