use std::f64::consts::PI;

use m2b::audio::{envelope, istft, resample, stft, SpectrogramParams, Waveform};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SR: u32 = 16_000;

fn tone(freq: f64, amp: f64, len: usize, sr: u32) -> Vec<f64> {
    (0..len)
        .map(|i| amp * (2.0 * PI * freq * i as f64 / sr as f64).sin())
        .collect()
}

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn snr_db(reference: &[f64], estimate: &[f64]) -> f64 {
    let sig: f64 = reference.iter().map(|v| v * v).sum();
    let err: f64 = reference.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum();
    10.0 * (sig / err).log10()
}

/// Direct DFT magnitude of `x` at an arbitrary frequency.
fn dft_mag(x: &[f64], freq: f64, sr: u32) -> f64 {
    let w = 2.0 * PI * freq / sr as f64;
    let (re, im) = x.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &v)| {
        (re + v * (w * n as f64).cos(), im - v * (w * n as f64).sin())
    });
    (re * re + im * im).sqrt()
}

#[test]
fn resampled_tone_keeps_its_frequency() {
    let w = Waveform::mono(tone(1000.0, 0.8, 48_000, 48_000), 48_000).unwrap();
    let out = resample(&w, 16_000).unwrap();
    assert_eq!(out.len(), 16_000);
    assert_eq!(out.sample_rate(), 16_000);
    let x = out.channel(0);
    let (best, _) = (1..800)
        .map(|k| (k as f64 * 10.0, dft_mag(x, k as f64 * 10.0, 16_000)))
        .fold((0.0, 0.0), |acc, (f, m)| if m > acc.1 { (f, m) } else { acc });
    assert_eq!(best, 1000.0);
    // amplitude preserved away from the edges
    let interior = &x[1000..15_000];
    let peak = interior.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((peak - 0.8).abs() < 0.01, "peak {peak}");
}

#[test]
fn appendix_shapes() {
    let p = SpectrogramParams::default();
    let s = stft(&Waveform::silence(10_080, SR), &p).unwrap();
    assert_eq!((s.frames(), s.bins()), (64, 257));
    assert!(s.data().iter().all(|c| c.norm() == 0.0));
    let s = stft(&Waveform::silence(40_800, SR), &p).unwrap();
    assert_eq!((s.frames(), s.bins()), (256, 257));
}

#[test]
fn tone_peaks_at_expected_bin_and_matches_direct_dft() {
    let p = SpectrogramParams::default();
    let x = tone(1000.0, 1.0, 8000, SR);
    let s = stft(&Waveform::mono(x.clone(), SR).unwrap(), &p).unwrap();
    let expected_bin = (1000.0f64 * 512.0 / 16000.0).round() as usize;
    assert_eq!(expected_bin, 32);
    // frames whose window lies inside the signal; edge frames see the reflected padding
    let interior = (p.fft_size / 2).div_ceil(p.hop)..(x.len() - p.fft_size / 2) / p.hop;
    assert!(interior.len() > 40);
    for t in interior {
        let argmax = (0..s.bins())
            .max_by(|&a, &b| s.get(t, a).norm().partial_cmp(&s.get(t, b).norm()).unwrap())
            .unwrap();
        assert_eq!(argmax, 32, "frame {t}");
    }
    // an interior frame against a direct windowed DFT
    let window = p.window();
    let t = 20;
    let start = t * p.hop - p.fft_size / 2;
    for k in [0usize, 5, 32, 100, 256] {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..p.fft_size {
            let ang = -2.0 * PI * (k * j) as f64 / p.fft_size as f64;
            acc += Complex64::from_polar(x[start + j] * window[j], ang);
        }
        assert!((acc - s.get(t, k)).norm() < 1e-9, "bin {k}");
    }
}

#[test]
fn roundtrip_snr_on_noise_and_harmonic_signal() {
    let p = SpectrogramParams::default();
    let signals = [
        noise(16_000, 1),
        // speech-like: harmonic stack with a gliding pitch and syllabic amplitude modulation
        (0..16_000)
            .map(|i| {
                let t = i as f64 / SR as f64;
                let f0 = 120.0 + 40.0 * (2.0 * PI * 1.5 * t).sin();
                let am = 0.5 + 0.5 * (2.0 * PI * 4.0 * t).sin().abs();
                am * (1..12)
                    .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                    .sum::<f64>()
            })
            .collect(),
    ];
    for x in signals {
        let w = Waveform::mono(x.clone(), SR).unwrap();
        let y = istft(&stft(&w, &p).unwrap(), &p, x.len(), SR).unwrap();
        let snr = snr_db(&x, y.channel(0));
        assert!(snr > 50.0, "snr {snr}");
    }
}

#[test]
fn zero_spectrogram_inverts_to_silence() {
    let p = SpectrogramParams::default();
    let s = m2b::audio::ComplexSpectrogram::zeros(10, p, 1440);
    let y = istft(&s, &p, 1440, SR).unwrap();
    assert!(y.channel(0).iter().all(|&v| v == 0.0));
}

#[test]
fn istft_is_linear() {
    let p = SpectrogramParams::default();
    let a = stft(&Waveform::mono(noise(3000, 2), SR).unwrap(), &p).unwrap();
    let b = stft(&Waveform::mono(noise(3000, 3), SR).unwrap(), &p).unwrap();
    let sum = a.zip_with(&b, |x, y| x + y).unwrap();
    let ya = istft(&a, &p, 3000, SR).unwrap();
    let yb = istft(&b, &p, 3000, SR).unwrap();
    let ys = istft(&sum, &p, 3000, SR).unwrap();
    for i in 0..3000 {
        assert!((ys.channel(0)[i] - ya.channel(0)[i] - yb.channel(0)[i]).abs() < 1e-6);
    }
}

#[test]
fn envelope_of_constant_tone() {
    let amp = 0.7;
    let x = tone(1000.0, amp, 16_000, SR);
    let env = envelope(&Waveform::mono(x, SR).unwrap()).unwrap();
    // exclude 10 ms at each edge
    for &v in &env.samples[160..16_000 - 160] {
        assert!((v - amp).abs() < 0.01 * amp, "{v}");
    }
}

#[test]
fn envelope_tracks_amplitude_modulation() {
    let n = 16_000;
    let modulator: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * (2.0 * PI * 4.0 * i as f64 / SR as f64).cos())
        .collect();
    let x: Vec<f64> = (0..n)
        .map(|i| modulator[i] * (2.0 * PI * 1000.0 * i as f64 / SR as f64).sin())
        .collect();
    let env = envelope(&Waveform::mono(x, SR).unwrap()).unwrap();
    for i in 160..n - 160 {
        assert!(
            (env.samples[i] - modulator[i]).abs() < 0.02 * modulator[i],
            "sample {i}"
        );
    }
}

#[test]
fn parseval_consistency_for_stationary_noise() {
    let p = SpectrogramParams::default();
    let window = p.window();
    let wsq: f64 = window.iter().map(|w| w * w).sum();
    // one-sided spectra carry half the energy of the full DFT
    let expected_ratio = p.fft_size as f64 * wsq / p.hop as f64 / 2.0;
    for seed in 0..3 {
        let x = noise(48_000, 10 + seed);
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let s = stft(&Waveform::mono(x, SR).unwrap(), &p).unwrap();
        let ratio = s.energy() / energy;
        assert!(
            (ratio / expected_ratio - 1.0).abs() < 0.01,
            "ratio {ratio} vs {expected_ratio}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stft_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0, len in 200usize..3000) {
        let p = SpectrogramParams::default();
        let x = noise(len, seed);
        let y = noise(len, seed + 7777);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let sx = stft(&Waveform::mono(x, SR).unwrap(), &p).unwrap();
        let sy = stft(&Waveform::mono(y, SR).unwrap(), &p).unwrap();
        let sm = stft(&Waveform::mono(mix, SR).unwrap(), &p).unwrap();
        for ((m, u), v) in sm.data().iter().zip(sx.data()).zip(sy.data()) {
            prop_assert!((m - (u * a + v * b)).norm() < 1e-6);
        }
    }

    #[test]
    fn roundtrip_exceeds_50_db(seed in 0u64..1000, len in 1usize..4000, scale in 1e-3f64..1e3) {
        let p = SpectrogramParams::default();
        let x: Vec<f64> = noise(len, seed).into_iter().map(|v| v * scale).collect();
        let w = Waveform::mono(x.clone(), SR).unwrap();
        let y = istft(&stft(&w, &p).unwrap(), &p, len, SR).unwrap();
        prop_assert!(snr_db(&x, y.channel(0)) > 50.0);
    }

    #[test]
    fn envelope_bounds_signal_magnitude(seed in 0u64..1000, len in 2usize..3000) {
        let x = noise(len, seed);
        let env = envelope(&Waveform::mono(x.clone(), SR).unwrap()).unwrap();
        for (e, v) in env.samples.iter().zip(&x) {
            prop_assert!(*e >= v.abs() - 1e-9);
        }
    }
}
