//! Mono/difference algebra of a two-ear signal.
//!
//! A binaural pair `(L, R)` is carried as the mono mix `M = L + R` and the
//! difference `D = L − R`. The network predicts `D` in the STFT domain as a
//! bounded complex mask applied to `M`; both ears are then recovered as
//! `L = (M + D) / 2`, `R = M − L`.

use num_complex::Complex64;

use crate::audio::{ComplexSpectrogram, Waveform};
use crate::{Error, Result};

/// Left and right ear signals of equal length and rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BinauralPair {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub sample_rate: u32,
}

impl BinauralPair {
    pub fn new(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if left.len() != right.len() {
            return Err(Error::shape(format!(
                "left has {} samples, right has {}",
                left.len(),
                right.len()
            )));
        }
        // validates rate and finiteness
        let w = Waveform::stereo(left, right, sample_rate)?;
        Ok(Self::from_stereo(&w).expect("stereo by construction"))
    }

    pub fn from_stereo(w: &Waveform) -> Result<Self> {
        if w.num_channels() != 2 {
            return Err(Error::shape(format!(
                "binaural audio needs 2 channels, got {}",
                w.num_channels()
            )));
        }
        Ok(BinauralPair {
            left: w.channel(0).to_vec(),
            right: w.channel(1).to_vec(),
            sample_rate: w.sample_rate(),
        })
    }

    pub fn to_stereo(&self) -> Waveform {
        Waveform::stereo(self.left.clone(), self.right.clone(), self.sample_rate)
            .expect("pair invariants match waveform invariants")
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn left_wave(&self) -> Waveform {
        Waveform::mono(self.left.clone(), self.sample_rate).expect("valid channel")
    }

    pub fn right_wave(&self) -> Waveform {
        Waveform::mono(self.right.clone(), self.sample_rate).expect("valid channel")
    }

    /// Exchanges the ears.
    pub fn swapped(&self) -> BinauralPair {
        BinauralPair {
            left: self.right.clone(),
            right: self.left.clone(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<BinauralPair> {
        BinauralPair::from_stereo(&self.to_stereo().slice(start, len)?)
    }

    /// Samplewise sum with another pair.
    pub fn add(&self, other: &BinauralPair) -> Result<BinauralPair> {
        if self.len() != other.len() || self.sample_rate != other.sample_rate {
            return Err(Error::shape("pairs differ in length or rate"));
        }
        Ok(BinauralPair {
            left: self.left.iter().zip(&other.left).map(|(a, b)| a + b).collect(),
            right: self.right.iter().zip(&other.right).map(|(a, b)| a + b).collect(),
            sample_rate: self.sample_rate,
        })
    }

    pub fn rms(&self) -> (f64, f64) {
        let rms = |x: &[f64]| {
            if x.is_empty() {
                0.0
            } else {
                (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
            }
        };
        (rms(&self.left), rms(&self.right))
    }
}

/// `x^M = x^L + x^R`
pub fn mix_to_mono(b: &BinauralPair) -> Result<Waveform> {
    if b.left.len() != b.right.len() {
        return Err(Error::shape("left and right differ in length"));
    }
    Waveform::mono(b.left.iter().zip(&b.right).map(|(l, r)| l + r).collect(), b.sample_rate)
}

/// `x^D = x^L − x^R`
pub fn difference(b: &BinauralPair) -> Result<Waveform> {
    if b.left.len() != b.right.len() {
        return Err(Error::shape("left and right differ in length"));
    }
    Waveform::mono(b.left.iter().zip(&b.right).map(|(l, r)| l - r).collect(), b.sample_rate)
}

/// Recovers both ears from the mono mix and the difference signal.
///
/// The right ear is formed as `mono − left`, so `left + right` reproduces
/// `mono` to within one rounding step.
pub fn reconstruct_channels(mono: &Waveform, diff: &Waveform) -> Result<BinauralPair> {
    let (m, d) = (mono.samples()?, diff.samples()?);
    if m.len() != d.len() || mono.sample_rate() != diff.sample_rate() {
        return Err(Error::shape(format!(
            "mono has {} samples, difference has {}",
            m.len(),
            d.len()
        )));
    }
    let left: Vec<f64> = m.iter().zip(d).map(|(&m, &d)| 0.5 * (m + d)).collect();
    let right = m.iter().zip(&left).map(|(&m, &l)| m - l).collect();
    Ok(BinauralPair {
        left,
        right,
        sample_rate: mono.sample_rate(),
    })
}

/// Per-bin complex multiplier with real and imaginary parts in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMask {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
}

impl ComplexMask {
    pub fn new(frames: usize, bins: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(Error::shape(format!(
                "{frames}x{bins} mask given {} values",
                data.len()
            )));
        }
        if data.iter().any(|c| !(c.re.abs() <= 1.0 && c.im.abs() <= 1.0)) {
            return Err(Error::InvalidAudio("mask values must lie in [-1, 1]".into()));
        }
        Ok(ComplexMask { frames, bins, data })
    }

    pub fn constant(frames: usize, bins: usize, value: Complex64) -> Result<Self> {
        Self::new(frames, bins, vec![value; frames * bins])
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
}

/// Predicted difference spectrogram `X̃^D = M ⊙ X^M`.
pub fn apply_complex_mask(xm: &ComplexSpectrogram, mask: &ComplexMask) -> Result<ComplexSpectrogram> {
    if xm.frames() != mask.frames || xm.bins() != mask.bins {
        return Err(Error::shape(format!(
            "spectrogram {}x{}, mask {}x{}",
            xm.frames(),
            xm.bins(),
            mask.frames,
            mask.bins
        )));
    }
    let data = xm.data().iter().zip(&mask.data).map(|(x, m)| x * m).collect();
    ComplexSpectrogram::new(xm.frames(), xm.bins(), data, xm.params, xm.source_len)
}

/// The mask that would turn `xm` into `xd`, regularized by `eps` and clamped to the mask range.
///
/// Each bin is `xd / (xm + eps·u)` where `u` is the unit phasor of `xm` (1 when `xm = 0`).
pub fn ideal_difference_mask(xm: &ComplexSpectrogram, xd: &ComplexSpectrogram, eps: f64) -> Result<ComplexMask> {
    if !xm.same_shape(xd) {
        return Err(Error::shape(format!(
            "{}x{} vs {}x{}",
            xm.frames(),
            xm.bins(),
            xd.frames(),
            xd.bins()
        )));
    }
    let data = xm
        .data()
        .iter()
        .zip(xd.data())
        .map(|(&m, &d)| {
            let mag = m.norm();
            let unit = if mag > 0.0 { m / mag } else { Complex64::new(1.0, 0.0) };
            let q = d / (m + unit * eps);
            Complex64::new(q.re.clamp(-1.0, 1.0), q.im.clamp(-1.0, 1.0))
        })
        .collect();
    ComplexMask::new(xm.frames(), xm.bins(), data)
}
