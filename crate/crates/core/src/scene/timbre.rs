//! Band-limited synthetic instrument timbres: harmonic note sequences whose
//! fundamental range and spectral shape depend on the class.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of distinct timbre classes.
pub const NUM_TIMBRES: u32 = 6;

struct Timbre {
    f0_lo: f64,
    f0_hi: f64,
    rolloff: f64,
    odd_only: bool,
    note_s: (f64, f64),
}

const TIMBRES: [Timbre; NUM_TIMBRES as usize] = [
    Timbre {
        f0_lo: 100.0,
        f0_hi: 200.0,
        rolloff: 1.0,
        odd_only: false,
        note_s: (0.15, 0.35),
    },
    Timbre {
        f0_lo: 400.0,
        f0_hi: 800.0,
        rolloff: 2.0,
        odd_only: true,
        note_s: (0.25, 0.5),
    },
    Timbre {
        f0_lo: 200.0,
        f0_hi: 400.0,
        rolloff: 1.5,
        odd_only: false,
        note_s: (0.1, 0.25),
    },
    Timbre {
        f0_lo: 60.0,
        f0_hi: 120.0,
        rolloff: 0.8,
        odd_only: false,
        note_s: (0.3, 0.6),
    },
    Timbre {
        f0_lo: 800.0,
        f0_hi: 1600.0,
        rolloff: 1.0,
        odd_only: false,
        note_s: (0.1, 0.2),
    },
    Timbre {
        f0_lo: 150.0,
        f0_hi: 300.0,
        rolloff: 1.0,
        odd_only: true,
        note_s: (0.2, 0.4),
    },
];

const MAX_HARMONIC_HZ: f64 = 7000.0;
const MAX_HARMONICS: usize = 24;
const TARGET_RMS: f64 = 0.1;

pub fn synth_ref(class_id: u32, seed: u64) -> String {
    format!("synth:{class_id}:{seed}")
}

pub(crate) fn parse_synth_ref(name: &str) -> Option<(u32, u64)> {
    let rest = name.strip_prefix("synth:")?;
    let (class, seed) = rest.split_once(':')?;
    Some((class.parse().ok()?, seed.parse().ok()?))
}

fn adsr(i: usize, len: usize, sr: f64) -> f64 {
    let t = i as f64 / sr;
    let remaining = (len - i) as f64 / sr;
    let (attack, decay, sustain, release) = (0.01, 0.05, 0.7, 0.03);
    let level = if t < attack {
        t / attack
    } else if t < attack + decay {
        1.0 - (1.0 - sustain) * (t - attack) / decay
    } else {
        sustain
    };
    level * (remaining / release).min(1.0)
}

/// `len` samples of class `class_id` (taken modulo [`NUM_TIMBRES`]), RMS 0.1,
/// fully determined by `(class_id, seed)`.
pub fn synthesize(class_id: u32, seed: u64, len: usize, sample_rate: u32) -> Vec<f64> {
    let timbre = &TIMBRES[(class_id % NUM_TIMBRES) as usize];
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut out = vec![0.0; len];
    let mut start = 0;
    let nyquist_guard = MAX_HARMONIC_HZ.min(0.45 * sr);
    while start < len {
        let note_len = ((rng.gen_range(timbre.note_s.0..timbre.note_s.1) * sr) as usize).max(1);
        let end = (start + note_len).min(len);
        let f0 = timbre.f0_lo * (timbre.f0_hi / timbre.f0_lo).powf(rng.gen::<f64>());
        let vibrato_hz = rng.gen_range(4.0..6.0);
        let vibrato_depth = rng.gen_range(0.0..0.01);
        let harmonics: Vec<(f64, f64, f64)> = (1..=MAX_HARMONICS)
            .filter(|h| !timbre.odd_only || h % 2 == 1)
            .map(|h| h as f64)
            .take_while(|h| h * f0 * (1.0 + vibrato_depth) < nyquist_guard)
            .map(|h| (h, h.powf(-timbre.rolloff), rng.gen_range(0.0..2.0 * PI)))
            .collect();
        let mut phase = 0.0;
        for i in start..end {
            let k = i - start;
            let inst = f0 * (1.0 + vibrato_depth * (2.0 * PI * vibrato_hz * k as f64 / sr).sin());
            phase += 2.0 * PI * inst / sr;
            let v: f64 = harmonics.iter().map(|&(h, a, p)| a * (h * phase + p).sin()).sum();
            out[i] = v * adsr(k, end - start, sr);
        }
        start = end;
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= TARGET_RMS / rms);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refs_roundtrip() {
        assert_eq!(parse_synth_ref(&synth_ref(3, 99)), Some((3, 99)));
        assert_eq!(parse_synth_ref("synth:x:1"), None);
        assert_eq!(parse_synth_ref("file.wav"), None);
    }

    #[test]
    fn deterministic_and_normalized() {
        let a = synthesize(1, 5, 8000, 16000);
        assert_eq!(a, synthesize(1, 5, 8000, 16000));
        assert_ne!(a, synthesize(1, 6, 8000, 16000));
        assert_ne!(a, synthesize(2, 5, 8000, 16000));
        let rms = (a.iter().map(|v| v * v).sum::<f64>() / 8000.0).sqrt();
        assert!((rms - TARGET_RMS).abs() < 1e-12);
        assert!(synthesize(0, 0, 0, 16000).is_empty());
    }
}
