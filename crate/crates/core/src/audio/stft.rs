//! Centered short-time Fourier transform and its overlap-add inverse.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::Waveform;
use crate::{Error, Result};

/// Analysis parameters. Defaults: 25 ms Hann window, 10 ms hop and a
/// 512-point FFT at 16 kHz, reflect-padded by half an FFT on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectrogramParams {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub centered: bool,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        SpectrogramParams {
            window_len: 400,
            hop: 160,
            fft_size: 512,
            centered: true,
        }
    }
}

impl SpectrogramParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop > 0 && self.hop <= self.window_len && self.window_len <= self.fft_size) {
            return Err(Error::InvalidAudio(format!(
                "need 0 < hop <= window_len <= fft_size, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if self.centered {
            1 + len / self.hop
        } else if len < self.fft_size {
            0
        } else {
            1 + (len - self.fft_size) / self.hop
        }
    }

    fn pad(&self) -> usize {
        if self.centered {
            self.fft_size / 2
        } else {
            0
        }
    }

    /// Periodic Hann window of `window_len`, zero-padded symmetrically to `fft_size`.
    pub fn window(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.fft_size];
        let off = (self.fft_size - self.window_len) / 2;
        for i in 0..self.window_len {
            w[off + i] = 0.5 - 0.5 * (2.0 * PI * i as f64 / self.window_len as f64).cos();
        }
        w
    }
}

/// `T × F` complex time-frequency grid, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
    pub params: SpectrogramParams,
    /// Length in samples of the analysed signal.
    pub source_len: usize,
}

impl ComplexSpectrogram {
    pub fn new(
        frames: usize,
        bins: usize,
        data: Vec<Complex64>,
        params: SpectrogramParams,
        source_len: usize,
    ) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(Error::shape(format!(
                "{frames}x{bins} spectrogram given {} values",
                data.len()
            )));
        }
        if bins != params.num_bins() {
            return Err(Error::shape(format!("{bins} bins, params imply {}", params.num_bins())));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidAudio("non-finite spectrogram value".into()));
        }
        Ok(ComplexSpectrogram {
            frames,
            bins,
            data,
            params,
            source_len,
        })
    }

    pub fn zeros(frames: usize, params: SpectrogramParams, source_len: usize) -> Self {
        let bins = params.num_bins();
        ComplexSpectrogram {
            frames,
            bins,
            data: vec![Complex64::new(0.0, 0.0); frames * bins],
            params,
            source_len,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.bins + f]
    }

    pub fn same_shape(&self, other: &ComplexSpectrogram) -> bool {
        self.frames == other.frames && self.bins == other.bins
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Per-bin binary operation on two equally shaped spectrograms.
    pub fn zip_with(&self, other: &ComplexSpectrogram, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::shape(format!(
                "{}x{} vs {}x{}",
                self.frames, self.bins, other.frames, other.bins
            )));
        }
        Ok(ComplexSpectrogram {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..self.clone()
        })
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

/// Short-time Fourier transform of a mono waveform.
pub fn stft(w: &Waveform, p: &SpectrogramParams) -> Result<ComplexSpectrogram> {
    p.validate()?;
    let x = w.samples()?;
    if x.is_empty() {
        return Err(Error::InvalidAudio("cannot analyse an empty signal".into()));
    }
    let frames = p.num_frames(x.len());
    if frames == 0 {
        return Err(Error::InvalidAudio(format!(
            "{} samples is shorter than one {}-point frame",
            x.len(),
            p.fft_size
        )));
    }
    let n = p.fft_size;
    let bins = p.num_bins();
    let pad = p.pad() as isize;
    let window = p.window();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut data = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let start = (t * p.hop) as isize - pad;
        for (j, slot) in buf.iter_mut().enumerate() {
            let idx = start + j as isize;
            let v = if p.centered {
                x[reflect(idx, x.len())]
            } else {
                x[idx as usize]
            };
            *slot = Complex64::new(v * window[j], 0.0);
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(ComplexSpectrogram {
        frames,
        bins,
        data,
        params: *p,
        source_len: x.len(),
    })
}

/// Weighted overlap-add inverse with squared-window normalization; output has `out_len` samples.
pub fn istft(s: &ComplexSpectrogram, p: &SpectrogramParams, out_len: usize, sample_rate: u32) -> Result<Waveform> {
    p.validate()?;
    if s.bins != p.num_bins() || s.params.fft_size != p.fft_size {
        return Err(Error::shape(format!(
            "spectrogram has {} bins, params expect {}",
            s.bins,
            p.num_bins()
        )));
    }
    let n = p.fft_size;
    let pad = p.pad();
    let window = p.window();
    let total = pad + (s.frames.saturating_sub(1)) * p.hop + n;
    let mut acc = vec![0.0; total.max(pad + out_len)];
    let mut norm = vec![0.0; acc.len()];
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;
    for t in 0..s.frames {
        let row = &s.data[t * s.bins..(t + 1) * s.bins];
        buf[..s.bins].copy_from_slice(row);
        // real-signal spectra are Hermitian; DC and Nyquist must be real
        buf[0].im = 0.0;
        if n.is_multiple_of(2) {
            buf[n / 2].im = 0.0;
        }
        for k in s.bins..n {
            buf[k] = buf[n - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * p.hop;
        for j in 0..n {
            acc[start + j] += buf[j].re * scale * window[j];
            norm[start + j] += window[j] * window[j];
        }
    }
    let out: Vec<f64> = (0..out_len)
        .map(|i| {
            let k = pad + i;
            if norm[k] > 1e-10 {
                acc[k] / norm[k]
            } else {
                0.0
            }
        })
        .collect();
    Waveform::mono(out, sample_rate)
}
