//! Conversions between spectrograms and network tensors.
//!
//! Network grids are `time × frequency` with 256 frequency rows: the Nyquist
//! bin is dropped on the way in and restored as zero on the way out, so both
//! axes divide by 32.

use m2b_tensor::{Element, Tensor};
use num_complex::Complex64;

use crate::audio::{ComplexSpectrogram, SpectrogramParams};
use crate::binaural::ComplexMask;
use crate::{Error, Result};

/// Offset inside the log-magnitude transform `log(1 + |X| / LOG_EPS)`.
pub const LOG_EPS: f64 = 1e-3;

fn net_bins(bins: usize) -> Result<usize> {
    if bins < 2 {
        return Err(Error::shape(format!(
            "{bins} bins leave nothing after dropping Nyquist"
        )));
    }
    Ok(bins - 1)
}

/// `[1, 2, T, F−1]` real and imaginary parts, Nyquist bin dropped.
pub fn spec_to_net<T: Element>(s: &ComplexSpectrogram) -> Result<Tensor<T>> {
    let (frames, f) = (s.frames(), net_bins(s.bins())?);
    let plane = frames * f;
    let mut data = vec![T::zero(); 2 * plane];
    for t in 0..frames {
        for k in 0..f {
            let c = s.get(t, k);
            data[t * f + k] = T::from_f64(c.re);
            data[plane + t * f + k] = T::from_f64(c.im);
        }
    }
    Ok(Tensor::new(&[1, 2, frames, f], data)?)
}

fn two_channel_planes<T: Element>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match *t.shape() {
        [1, 2, frames, f] | [2, frames, f] => Ok((frames, f)),
        ref other => Err(Error::shape(format!(
            "expected [1, 2, T, F] or [2, T, F], got {other:?}"
        ))),
    }
}

/// Inverse of [`spec_to_net`]; the Nyquist bin is zero.
pub fn net_to_spec<T: Element>(
    t: &Tensor<T>,
    params: &SpectrogramParams,
    source_len: usize,
) -> Result<ComplexSpectrogram> {
    let (frames, f) = two_channel_planes(t)?;
    let bins = f + 1;
    let plane = frames * f;
    let v = t.data();
    let mut data = vec![Complex64::new(0.0, 0.0); frames * bins];
    for ti in 0..frames {
        for k in 0..f {
            data[ti * bins + k] = Complex64::new(v[ti * f + k].as_f64(), v[plane + ti * f + k].as_f64());
        }
    }
    ComplexSpectrogram::new(frames, bins, data, *params, source_len)
}

/// A two-channel network output as a complex mask over the full bin range.
pub fn mask_from_net<T: Element>(t: &Tensor<T>) -> Result<ComplexMask> {
    let (frames, f) = two_channel_planes(t)?;
    let bins = f + 1;
    let plane = frames * f;
    let v = t.data();
    let mut data = vec![Complex64::new(0.0, 0.0); frames * bins];
    for ti in 0..frames {
        for k in 0..f {
            data[ti * bins + k] = Complex64::new(v[ti * f + k].as_f64(), v[plane + ti * f + k].as_f64());
        }
    }
    ComplexMask::new(frames, bins, data)
}

/// `[1, 1, T, F−1]` of `log(1 + |X| / LOG_EPS)`.
pub fn log_magnitude<T: Element>(s: &ComplexSpectrogram) -> Result<Tensor<T>> {
    let (frames, f) = (s.frames(), net_bins(s.bins())?);
    let mut data = Vec::with_capacity(frames * f);
    for t in 0..frames {
        for k in 0..f {
            data.push(T::from_f64((s.get(t, k).norm() / LOG_EPS).ln_1p()));
        }
    }
    Ok(Tensor::new(&[1, 1, frames, f], data)?)
}

/// A one-channel `[T, F−1]` ratio plane expanded to `T × F` with a zero Nyquist bin.
pub fn ratio_from_net<T: Element>(plane: &[T], frames: usize, f: usize) -> Result<Vec<f64>> {
    if plane.len() != frames * f {
        return Err(Error::shape(format!("{} values for a {frames}x{f} plane", plane.len())));
    }
    let bins = f + 1;
    let mut out = vec![0.0; frames * bins];
    for t in 0..frames {
        for k in 0..f {
            out[t * bins + k] = plane[t * f + k].as_f64();
        }
    }
    Ok(out)
}

/// Stacks `[1, c, h, w]` tensors along the batch axis.
pub fn batch<T: Element>(items: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = items.first().ok_or_else(|| Error::shape("cannot batch zero tensors"))?;
    let (_, c, h, w) = first.dims4()?;
    let mut data = Vec::with_capacity(items.len() * c * h * w);
    for t in items {
        if t.shape() != [1, c, h, w] {
            return Err(Error::shape(format!(
                "batch item {:?} vs [1, {c}, {h}, {w}]",
                t.shape()
            )));
        }
        data.extend_from_slice(t.data());
    }
    Ok(Tensor::new(&[items.len(), c, h, w], data)?)
}

/// Splits `[n, c, h, w]` into `n` tensors of shape `[1, c, h, w]`.
pub fn unbatch<T: Element>(t: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let (n, c, h, w) = t.dims4()?;
    let size = c * h * w;
    (0..n)
        .map(|i| Ok(Tensor::new(&[1, c, h, w], t.data()[i * size..(i + 1) * size].to_vec())?))
        .collect()
}
