//! Band-limited sample-rate conversion by windowed-sinc interpolation.

use std::f64::consts::PI;

use super::Waveform;
use crate::{Error, Result};

/// Kernel length in input-rate taps.
const TAPS: usize = 64;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Blackman window over `|x| < half`.
fn blackman(x: f64, half: f64) -> f64 {
    if x.abs() >= half {
        return 0.0;
    }
    let t = (x / half + 1.0) * 0.5;
    0.42 - 0.5 * (2.0 * PI * t).cos() + 0.08 * (4.0 * PI * t).cos()
}

/// Resamples every channel to `target_hz`. Output length is `round(len · target / source)`.
pub fn resample(w: &Waveform, target_hz: u32) -> Result<Waveform> {
    if target_hz == 0 {
        return Err(Error::InvalidAudio("target sample rate must be positive".into()));
    }
    let source_hz = w.sample_rate();
    if source_hz == target_hz {
        return Ok(w.clone());
    }
    let ratio = target_hz as f64 / source_hz as f64;
    let out_len = (w.len() as f64 * ratio).round() as usize;
    // cutoff at the lower Nyquist, expressed in input-sample units
    let cutoff = ratio.min(1.0);
    let half = TAPS as f64 / 2.0 / cutoff;
    let channels = w
        .channels()
        .iter()
        .map(|x| {
            (0..out_len)
                .map(|j| {
                    let t = j as f64 / ratio;
                    let lo = (t - half).ceil().max(0.0) as usize;
                    let hi = ((t + half).floor() as usize).min(x.len().saturating_sub(1));
                    (lo..=hi)
                        .map(|k| {
                            let d = t - k as f64;
                            x[k] * cutoff * sinc(cutoff * d) * blackman(d, half)
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    Waveform::new(channels, target_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_rates_match() {
        let w = Waveform::mono(vec![0.1, -0.2, 0.3], 16000).unwrap();
        assert_eq!(resample(&w, 16000).unwrap(), w);
    }

    #[test]
    fn output_length() {
        let w = Waveform::silence(48000, 48000);
        assert_eq!(resample(&w, 16000).unwrap().len(), 16000);
        let w = Waveform::silence(1001, 44100);
        assert_eq!(
            resample(&w, 16000).unwrap().len(),
            (1001.0f64 * 16000.0 / 44100.0).round() as usize
        );
    }

    #[test]
    fn rejects_zero_target() {
        assert!(resample(&Waveform::silence(4, 8000), 0).is_err());
    }
}
