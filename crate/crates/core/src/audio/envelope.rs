//! Amplitude envelope as the magnitude of the analytic signal.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::Waveform;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Hilbert envelope `|x + i·H{x}|`, computed with one full-length FFT.
pub fn envelope(w: &Waveform) -> Result<Envelope> {
    let x = w.samples()?;
    let n = x.len();
    if n == 0 {
        return Ok(Envelope {
            samples: Vec::new(),
            sample_rate: w.sample_rate(),
        });
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    // keep DC (and Nyquist for even n), double positive frequencies, drop negative ones
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let h = if k == 0 || (n % 2 == 0 && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *c *= h;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(Envelope {
        samples: buf.iter().map(|c| c.norm() * scale).collect(),
        sample_rate: w.sample_rate(),
    })
}
