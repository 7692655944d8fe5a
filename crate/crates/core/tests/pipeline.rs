use m2b::audio::{istft, stft, SpectrogramParams, Waveform, SAMPLE_RATE};
use m2b::metrics::bss_eval;
use m2b::net::{NetConfig, Network, Task};
use m2b::pipeline::{
    binauralize, load_split, localize_by_occlusion, ratio_mask, separate, train_m2b, train_separation, window_starts,
    AudioMode, Clip, InferConfig, OcclusionConfig, TrainConfig,
};
use m2b::scene::{generate_dataset, GenerationConfig, Split};
use m2b::Error;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 0.1).unwrap();
    (0..len).map(|_| n.sample(&mut rng)).collect()
}

fn tiny_config(task: Task) -> NetConfig {
    NetConfig {
        task,
        unet_channels: vec![4, 8, 8, 8, 8],
        visual_channels: vec![4, 4, 4, 4],
        visual_embed_dim: 32,
        ..NetConfig::default()
    }
}

fn tiny_clips(train: usize) -> (tempfile::TempDir, Vec<Clip>) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GenerationConfig {
        train,
        val: 0,
        test: 0,
        clip_duration_s: 1.0,
        ..GenerationConfig::default()
    };
    let manifest = generate_dataset(&cfg, dir.path()).unwrap();
    let clips = load_split(&manifest, Split::Train).unwrap();
    (dir, clips)
}

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        epochs,
        lr: 3e-3,
        visual_lr_mult: 1.0,
        ..TrainConfig::default()
    }
}

#[test]
fn ten_second_clip_window_count() {
    let infer = InferConfig::default();
    let starts = window_starts(10 * SAMPLE_RATE as usize, infer.window_samples(), infer.hop_samples()).unwrap();
    assert_eq!(starts.len(), 188 + 1);
    assert_eq!(*starts.last().unwrap(), 160_000 - 10_080);
    assert!(matches!(
        window_starts(100, 200, 10),
        Err(Error::ClipTooShort { len: 100, needed: 200 })
    ));
}

#[test]
fn zero_mask_network_reproduces_mono_mono() {
    let (_dir, clips) = tiny_clips(2);
    let mut net: Network<f32> = Network::new(tiny_config(Task::Binaural), 1).unwrap();
    for p in net.params_mut().values_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mono = Waveform::mono(clips[0].mono.clone(), SAMPLE_RATE).unwrap();
    let out = binauralize(&net, &mono, &clips[0].frame, &InferConfig::default()).unwrap();
    for i in 0..mono.len() {
        assert_eq!(out.left[i], clips[0].mono[i] / 2.0);
        assert!((out.right[i] - clips[0].mono[i] / 2.0).abs() < 1e-15);
    }
}

#[test]
fn binauralized_channels_sum_to_input() {
    let (_dir, clips) = tiny_clips(2);
    let net: Network<f32> = Network::new(tiny_config(Task::Binaural), 3).unwrap();
    let mono = Waveform::mono(clips[1].mono.clone(), SAMPLE_RATE).unwrap();
    let out = binauralize(&net, &mono, &clips[1].frame, &InferConfig::default()).unwrap();
    assert_eq!(out.len(), mono.len());
    let diff: f64 = out.left.iter().zip(&out.right).map(|(l, r)| (l - r).abs()).sum();
    assert!(diff > 0.0, "random network should predict a nonzero difference");
    for i in 0..mono.len() {
        assert!((out.left[i] + out.right[i] - clips[1].mono[i]).abs() < 1e-12);
    }
}

#[test]
fn binauralize_rejects_other_rates_and_short_clips() {
    let net: Network<f32> = Network::new(tiny_config(Task::Binaural), 0).unwrap();
    let frame = m2b::scene::FrameImage::filled(64, 128, [0.0, 0.0, 0.0]);
    let w = Waveform::mono(vec![0.1; 20_000], 8_000).unwrap();
    assert!(matches!(
        binauralize(&net, &w, &frame, &InferConfig::default()),
        Err(Error::InvalidAudio(_))
    ));
    let short = Waveform::mono(vec![0.1; 1_000], SAMPLE_RATE).unwrap();
    assert!(matches!(
        binauralize(&net, &short, &frame, &InferConfig::default()),
        Err(Error::ClipTooShort { .. })
    ));
}

#[test]
fn training_lowers_loss_and_is_deterministic() {
    let (_dir, clips) = tiny_clips(8);
    let a = train_m2b(&clips, tiny_config(Task::Binaural), &tiny_train(8)).unwrap();
    assert_eq!(a.history.len(), 8 * 2);
    let head: f64 = a.history[..4].iter().sum::<f64>() / 4.0;
    let tail: f64 = a.history[a.history.len() - 4..].iter().sum::<f64>() / 4.0;
    assert!(tail < head, "loss {head} -> {tail}");

    let b = train_m2b(&clips, tiny_config(Task::Binaural), &tiny_train(8)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.net.params().values(), b.net.params().values());
}

#[test]
fn lr_schedule_steps_every_ten_epochs() {
    let cfg = TrainConfig::default();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-15 * b;
    assert_eq!(cfg.lr_at_epoch(0), 1e-3);
    assert_eq!(cfg.lr_at_epoch(9), 1e-3);
    assert!(close(cfg.lr_at_epoch(10), 1e-3 * 0.94));
    assert!(close(cfg.lr_at_epoch(25), 1e-3 * 0.94 * 0.94));
    assert!(close(cfg.lr_at_epoch(59), 1e-3 * 0.94 * 0.94 * 0.94 * 0.94 * 0.94));
    assert!(TrainConfig {
        batch_size: 1,
        ..cfg.clone()
    }
    .validate()
    .is_err());
}

#[test]
fn occlusion_grid_has_expected_size() {
    let (_dir, clips) = tiny_clips(2);
    let net: Network<f32> = Network::new(tiny_config(Task::Binaural), 5).unwrap();
    let cfg = OcclusionConfig {
        max_windows: 1,
        ..OcclusionConfig::default()
    };
    let heat = localize_by_occlusion(&net, &clips[0], 0.63, &cfg).unwrap();
    assert_eq!((heat.rows, heat.cols), (3, 7));
    assert_eq!(heat.losses.len(), 21);
    let (r, c) = heat.argmax();
    assert_eq!(heat.normalized[r * heat.cols + c], 1.0);
    assert!(heat.normalized.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(heat.to_csv().lines().count(), 1 + 21);

    let audio_only = Network::<f32>::new(tiny_config(Task::Binaural).audio_only(), 5).unwrap();
    assert!(localize_by_occlusion(&audio_only, &clips[0], 0.63, &cfg).is_err());
}

fn spec(x: &[f64]) -> m2b::audio::ComplexSpectrogram {
    stft(
        &Waveform::mono(x.to_vec(), SAMPLE_RATE).unwrap(),
        &SpectrogramParams::default(),
    )
    .unwrap()
}

#[test]
fn ratio_mask_is_clamped_and_reproduces_mixture() {
    let n = 10_080;
    let a = noise(n, 1);
    let b = noise(n, 2);
    let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let loud: Vec<f64> = a.iter().map(|v| 10.0 * v).collect();
    let m = ratio_mask(&spec(&loud), &spec(&mix)).unwrap();
    assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(m.iter().filter(|&&v| v == 1.0).count() > m.len() / 2);

    // an all-ones mask applied with the mixture phase returns the mixture
    let xs = spec(&mix);
    let ones = ratio_mask(&xs, &xs).unwrap();
    assert!(ones.iter().all(|&v| v == 1.0));
    let mut masked = xs.clone();
    for (z, g) in masked.data_mut().iter_mut().zip(&ones) {
        *z *= Complex64::new(*g, 0.0);
    }
    let back = istft(&masked, &SpectrogramParams::default(), n, SAMPLE_RATE).unwrap();
    for (x, y) in back.channel(0).iter().zip(&mix) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn ideal_ratio_masks_beat_the_mixture() {
    let (_dir, clips) = tiny_clips(2);
    let n = 10_080;
    let a: Vec<f64> = clips[0].mono[..n].to_vec();
    let b: Vec<f64> = clips[1].mono[..n].to_vec();
    let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let xs = spec(&mix);
    let p = SpectrogramParams::default();
    let est: Vec<Vec<f64>> = [&a, &b]
        .iter()
        .map(|s| {
            let m = ratio_mask(&spec(s), &xs).unwrap();
            let mut masked = xs.clone();
            for (z, g) in masked.data_mut().iter_mut().zip(&m) {
                *z *= *g;
            }
            istft(&masked, &p, n, SAMPLE_RATE).unwrap().channel(0).to_vec()
        })
        .collect();
    let refs = vec![a, b];
    let ideal = bss_eval(&refs, &est, 128).unwrap();
    let naive = bss_eval(&refs, &[mix.clone(), mix], 128).unwrap();
    for j in 0..2 {
        assert!(ideal.sdr_db[j] > naive.sdr_db[j] + 3.0, "{ideal:?} vs {naive:?}");
    }
}

#[test]
fn separation_trains_and_separates() {
    let (_dir, clips) = tiny_clips(4);
    let cfg = TrainConfig {
        epochs: 2,
        ..tiny_train(2)
    };
    let infer = InferConfig::default();
    let net_cfg = tiny_config(Task::Separation { channels: 2 });
    let t = train_separation(&clips, net_cfg.clone(), &cfg, AudioMode::Gt, None, &infer).unwrap();
    assert!(t.history.iter().all(|v| v.is_finite()));
    assert!(matches!(
        train_separation(&clips, net_cfg.clone(), &cfg, AudioMode::Predicted, None, &infer),
        Err(Error::MissingCheckpoint(_))
    ));
    assert!(train_separation(&clips, net_cfg, &cfg, AudioMode::Mono, None, &infer).is_err());

    let len = 12_000;
    let mixture: Vec<Vec<f64>> = (0..2)
        .map(|ch| {
            let own = if ch == 0 { &clips[0].left } else { &clips[0].right };
            let other = if ch == 0 { &clips[1].left } else { &clips[1].right };
            (0..len).map(|i| own[i] + other[i]).collect()
        })
        .collect();
    let out = separate(
        &t.net,
        &mixture,
        &[clips[0].frame.clone(), clips[1].frame.clone()],
        10_080,
        0.1,
    )
    .unwrap();
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|v| v.len() == 2 && v.iter().all(|c| c.len() == len)));
    assert!(out.iter().flatten().flatten().all(|v| v.is_finite()));
}

#[test]
fn audio_mode_parses_aliases() {
    assert_eq!("gt_binaural".parse::<AudioMode>().unwrap(), AudioMode::Gt);
    assert_eq!("predicted".parse::<AudioMode>().unwrap(), AudioMode::Predicted);
    assert_eq!(AudioMode::Mono.to_string(), "mono");
    assert!("stereo".parse::<AudioMode>().is_err());
}
