//! im2col based convolution kernels.
//!
//! A strided convolution maps a "big" spatial grid onto a "small" one; the
//! transposed convolution maps it back. Both directions share one geometry
//! description, so the forward pass of one is the data-gradient of the other.

use crate::{Element, Result, TensorError};

/// Kernel size, stride and symmetric zero padding of a square 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Default for ConvSpec {
    /// 4×4 kernel, stride 2, padding 1: halves (or doubles) the spatial size.
    fn default() -> Self {
        ConvSpec {
            kernel: 4,
            stride: 2,
            pad: 1,
        }
    }
}

impl ConvSpec {
    /// 1×1 kernel, stride 1, no padding.
    pub fn pointwise() -> Self {
        ConvSpec {
            kernel: 1,
            stride: 1,
            pad: 0,
        }
    }

    /// Output extent of a convolution over `n` input samples.
    pub fn conv_out(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.pad;
        if self.stride == 0 || padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    /// Output extent of a transposed convolution over `n` input samples.
    pub fn conv_transpose_out(&self, n: usize) -> Option<usize> {
        if n == 0 || self.stride == 0 {
            return None;
        }
        ((n - 1) * self.stride + self.kernel).checked_sub(2 * self.pad)
    }
}

/// Geometry linking a big `channels × big_h × big_w` grid to the small grid of
/// kernel placements.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub big_h: usize,
    pub big_w: usize,
    pub small_h: usize,
    pub small_w: usize,
    pub spec: ConvSpec,
}

impl Geometry {
    pub fn for_conv(channels: usize, h: usize, w: usize, spec: ConvSpec) -> Result<Self> {
        let (small_h, small_w) = match (spec.conv_out(h), spec.conv_out(w)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(TensorError::shape(
                    "conv2d",
                    format!("input {h}x{w} too small for {spec:?}"),
                ))
            }
        };
        Ok(Geometry {
            channels,
            big_h: h,
            big_w: w,
            small_h,
            small_w,
            spec,
        })
    }

    pub fn for_conv_transpose(channels: usize, h: usize, w: usize, spec: ConvSpec) -> Result<Self> {
        let (big_h, big_w) = match (spec.conv_transpose_out(h), spec.conv_transpose_out(w)) {
            (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
            _ => {
                return Err(TensorError::shape(
                    "conv_transpose2d",
                    format!("input {h}x{w} invalid for {spec:?}"),
                ))
            }
        };
        // the transposed map must tile back onto exactly h×w placements
        let geom = Geometry {
            channels,
            big_h,
            big_w,
            small_h: h,
            small_w: w,
            spec,
        };
        if spec.conv_out(big_h) != Some(h) || spec.conv_out(big_w) != Some(w) {
            return Err(TensorError::shape(
                "conv_transpose2d",
                format!("input {h}x{w} does not invert under {spec:?}"),
            ));
        }
        Ok(geom)
    }

    pub fn rows(&self) -> usize {
        self.channels * self.spec.kernel * self.spec.kernel
    }

    pub fn positions(&self) -> usize {
        self.small_h * self.small_w
    }

    pub fn big_len(&self) -> usize {
        self.channels * self.big_h * self.big_w
    }

    /// Valid placement range `[lo, hi)` along one axis for kernel offset `k`.
    #[inline]
    fn valid_range(&self, k: usize, big: usize, small: usize) -> (usize, usize) {
        let s = self.spec.stride;
        let p = self.spec.pad;
        // need 0 <= o*s + k - p < big
        let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
        let hi = if big + p > k {
            ((big + p - k - 1) / s + 1).min(small)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    /// Gathers kernel patches: `col[(c, ky, kx)][placement]`.
    pub fn im2col<T: Element>(&self, big: &[T], col: &mut [T]) {
        let k = self.spec.kernel;
        let s = self.spec.stride;
        let p = self.spec.pad;
        let np = self.positions();
        debug_assert_eq!(big.len(), self.big_len());
        debug_assert_eq!(col.len(), self.rows() * np);
        for c in 0..self.channels {
            let plane = &big[c * self.big_h * self.big_w..(c + 1) * self.big_h * self.big_w];
            for ky in 0..k {
                let (oy_lo, oy_hi) = self.valid_range(ky, self.big_h, self.small_h);
                for kx in 0..k {
                    let (ox_lo, ox_hi) = self.valid_range(kx, self.big_w, self.small_w);
                    let row = ((c * k + ky) * k + kx) * np;
                    let dst = &mut col[row..row + np];
                    dst.fill(T::zero());
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - p;
                        let src_row = &plane[iy * self.big_w..(iy + 1) * self.big_w];
                        let out_row = &mut dst[oy * self.small_w..(oy + 1) * self.small_w];
                        for ox in ox_lo..ox_hi {
                            out_row[ox] = src_row[ox * s + kx - p];
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds patches back onto the big grid; adjoint of [`Self::im2col`].
    pub fn col2im<T: Element>(&self, col: &[T], big: &mut [T]) {
        let k = self.spec.kernel;
        let s = self.spec.stride;
        let p = self.spec.pad;
        let np = self.positions();
        for c in 0..self.channels {
            let plane = &mut big[c * self.big_h * self.big_w..(c + 1) * self.big_h * self.big_w];
            for ky in 0..k {
                let (oy_lo, oy_hi) = self.valid_range(ky, self.big_h, self.small_h);
                for kx in 0..k {
                    let (ox_lo, ox_hi) = self.valid_range(kx, self.big_w, self.small_w);
                    let row = ((c * k + ky) * k + kx) * np;
                    let src = &col[row..row + np];
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - p;
                        let dst_row = &mut plane[iy * self.big_w..(iy + 1) * self.big_w];
                        let src_row = &src[oy * self.small_w..(oy + 1) * self.small_w];
                        for ox in ox_lo..ox_hi {
                            let ix = ox * s + kx - p;
                            dst_row[ix] = dst_row[ix] + src_row[ox];
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy<T: Element>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + alpha * xv;
    }
}

#[inline]
pub(crate) fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] = acc[j] + x[j] * y[j];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// `out (m×n) += a (m×kk) · b (kk×n)`
pub(crate) fn gemm_acc<T: Element>(out: &mut [T], a: &[T], b: &[T], m: usize, kk: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for k in 0..kk {
            let alpha = a[i * kk + k];
            if alpha != T::zero() {
                axpy(alpha, &b[k * n..(k + 1) * n], out_row);
            }
        }
    }
}

/// `out (kk×n) += aᵀ · b` with `a (m×kk)`, `b (m×n)`
pub(crate) fn gemm_at_b<T: Element>(out: &mut [T], a: &[T], b: &[T], m: usize, kk: usize, n: usize) {
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for k in 0..kk {
            let alpha = a[i * kk + k];
            if alpha != T::zero() {
                axpy(alpha, b_row, &mut out[k * n..(k + 1) * n]);
            }
        }
    }
}

/// `out (m×kk) += a · bᵀ` with `a (m×n)`, `b (kk×n)`
pub(crate) fn gemm_a_bt<T: Element>(out: &mut [T], a: &[T], b: &[T], m: usize, kk: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for k in 0..kk {
            let v = dot(a_row, &b[k * n..(k + 1) * n]);
            out[i * kk + k] = out[i * kk + k] + v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_size_formulas() {
        let spec = ConvSpec::default();
        assert_eq!(spec.conv_out(4), Some(2));
        assert_eq!(spec.conv_out(64), Some(32));
        assert_eq!(spec.conv_transpose_out(2), Some(4));
        assert_eq!(spec.conv_transpose_out(8), Some(16));
        assert_eq!(spec.conv_out(1), None);
        assert_eq!(ConvSpec::pointwise().conv_out(7), Some(7));
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let geom = Geometry::for_conv(2, 6, 5, ConvSpec::default()).unwrap();
        let big: Vec<f64> = (0..geom.big_len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let col_in: Vec<f64> = (0..geom.rows() * geom.positions())
            .map(|i| (i as f64 * 0.91).cos())
            .collect();
        let mut col = vec![0.0; col_in.len()];
        geom.im2col(&big, &mut col);
        let mut back = vec![0.0; big.len()];
        geom.col2im(&col_in, &mut back);
        let lhs: f64 = col.iter().zip(&col_in).map(|(a, b)| a * b).sum();
        let rhs: f64 = big.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..29).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..29).map(|i| 1.0 - i as f64 * 0.1).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-10);
    }
}
