//! Differentiable operations recorded on a [`Tape`].

use crate::conv::{gemm_a_bt, gemm_acc, gemm_at_b, Geometry};
use crate::tape::Var;
use crate::{ConvSpec, Element, Result, Tape, Tensor, TensorError};

pub(crate) enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: Geometry,
        out_channels: usize,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: Geometry,
        in_channels: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        training: bool,
    },
    Relu(Var),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    ScaledSigmoid(Var),
    Concat(Var, Var),
    Tile(Var),
    Reshape(Var),
    Add(Var, Var),
    ComplexMul(Var, Var),
    Mse(Var, Var),
    L1(Var, Var),
    WeightedSum(Var, Vec<T>),
}

/// Running mean and variance of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Element> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: T::from_f64(0.1),
            eps: T::from_f64(1e-5),
        }
    }
}

/// Batch-norm behaviour: batch statistics (and running-stat update) or frozen running statistics.
pub enum BatchNormMode<'a, T> {
    Train(&'a mut RunningStats<T>),
    Eval(&'a RunningStats<T>),
}

fn sigmoid<T: Element>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Element> Tape<T> {
    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    /// 2-D convolution. `w` is `[out, in, k, k]`, `b` is `[out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (cout, wcin, kh, kw) = self.value(w).dims4()?;
        if wcin != cin || kh != spec.kernel || kw != spec.kernel {
            return Err(TensorError::shape(
                "conv2d",
                format!(
                    "input channels {cin}, weight {:?}, kernel {}",
                    self.value(w).shape(),
                    spec.kernel
                ),
            ));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [cout] {
                return Err(TensorError::shape(
                    "conv2d",
                    format!("bias {:?} for {cout} outputs", self.value(b).shape()),
                ));
            }
        }
        let geom = Geometry::for_conv(cin, h, wd, spec)?;
        let (rows, np) = (geom.rows(), geom.positions());
        let mut out = vec![T::zero(); n * cout * np];
        let mut col = vec![T::zero(); rows * np];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        for s in 0..n {
            geom.im2col(&xv[s * geom.big_len()..(s + 1) * geom.big_len()], &mut col);
            let o = &mut out[s * cout * np..(s + 1) * cout * np];
            if let Some(b) = b {
                for (oc, &bv) in self.value(b).data().iter().enumerate() {
                    o[oc * np..(oc + 1) * np].fill(bv);
                }
            }
            gemm_acc(o, wv, &col, cout, rows, np);
        }
        let value = Tensor::new(&[n, cout, geom.small_h, geom.small_w], out)?;
        let rg = self.any_grad(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                out_channels: cout,
            },
            rg,
        ))
    }

    /// Transposed 2-D convolution. `w` is `[in, out, k, k]`, `b` is `[out]`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (wcin, cout, kh, kw) = self.value(w).dims4()?;
        if wcin != cin || kh != spec.kernel || kw != spec.kernel {
            return Err(TensorError::shape(
                "conv_transpose2d",
                format!(
                    "input channels {cin}, weight {:?}, kernel {}",
                    self.value(w).shape(),
                    spec.kernel
                ),
            ));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [cout] {
                return Err(TensorError::shape(
                    "conv_transpose2d",
                    format!("bias {:?} for {cout} outputs", self.value(b).shape()),
                ));
            }
        }
        let geom = Geometry::for_conv_transpose(cout, h, wd, spec)?;
        let (rows, np, big) = (geom.rows(), geom.positions(), geom.big_len());
        let mut out = vec![T::zero(); n * big];
        let mut col = vec![T::zero(); rows * np];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let plane = geom.big_h * geom.big_w;
        for s in 0..n {
            col.fill(T::zero());
            gemm_at_b(&mut col, wv, &xv[s * cin * np..(s + 1) * cin * np], cin, rows, np);
            let o = &mut out[s * big..(s + 1) * big];
            if let Some(b) = b {
                for (oc, &bv) in self.value(b).data().iter().enumerate() {
                    o[oc * plane..(oc + 1) * plane].fill(bv);
                }
            }
            geom.col2im(&col, o);
        }
        let value = Tensor::new(&[n, cout, geom.big_h, geom.big_w], out)?;
        let rg = self.any_grad(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(
            value,
            Op::ConvTranspose2d {
                x,
                w,
                b,
                geom,
                in_channels: cin,
            },
            rg,
        ))
    }

    /// Per-channel batch normalization of a `[n, c, h, w]` tensor followed by the affine `gamma·x̂ + beta`.
    pub fn batch_norm2d(&mut self, x: Var, gamma: Var, beta: Var, mode: BatchNormMode<'_, T>) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(TensorError::shape(
                "batch_norm2d",
                format!(
                    "{c} channels, gamma {:?}, beta {:?}",
                    self.value(gamma).shape(),
                    self.value(beta).shape()
                ),
            ));
        }
        let plane = h * w;
        let count = n * plane;
        let xv = self.value(x).data();
        let mut inv_std = vec![T::zero(); c];
        let mut xhat = vec![T::zero(); xv.len()];
        let training = matches!(mode, BatchNormMode::Train(_));
        match mode {
            BatchNormMode::Train(stats) => {
                if n < 2 {
                    return Err(TensorError::DegenerateBatch(n));
                }
                let cnt = T::from_f64(count as f64);
                for ch in 0..c {
                    let mut sum = T::zero();
                    for s in 0..n {
                        let off = (s * c + ch) * plane;
                        sum = sum + xv[off..off + plane].iter().copied().sum::<T>();
                    }
                    let mean = sum / cnt;
                    let mut sq = T::zero();
                    for s in 0..n {
                        let off = (s * c + ch) * plane;
                        sq = sq + xv[off..off + plane].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
                    }
                    let var = sq / cnt;
                    let istd = T::one() / (var + stats.eps).sqrt();
                    inv_std[ch] = istd;
                    for s in 0..n {
                        let off = (s * c + ch) * plane;
                        for i in off..off + plane {
                            xhat[i] = (xv[i] - mean) * istd;
                        }
                    }
                    let m = stats.momentum;
                    let unbiased = sq / T::from_f64((count - 1) as f64);
                    stats.mean[ch] = (T::one() - m) * stats.mean[ch] + m * mean;
                    stats.var[ch] = (T::one() - m) * stats.var[ch] + m * unbiased;
                }
            }
            BatchNormMode::Eval(stats) => {
                if stats.mean.len() != c {
                    return Err(TensorError::shape(
                        "batch_norm2d",
                        format!("running stats for {} channels, input has {c}", stats.mean.len()),
                    ));
                }
                for ch in 0..c {
                    let istd = T::one() / (stats.var[ch] + stats.eps).sqrt();
                    inv_std[ch] = istd;
                    for s in 0..n {
                        let off = (s * c + ch) * plane;
                        for i in off..off + plane {
                            xhat[i] = (xv[i] - stats.mean[ch]) * istd;
                        }
                    }
                }
            }
        }
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut out = vec![T::zero(); xv.len()];
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * plane;
                for i in off..off + plane {
                    out[i] = g[ch] * xhat[i] + bt[ch];
                }
            }
        }
        let value = Tensor::new(&[n, c, h, w], out)?;
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            },
            rg,
        ))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(x).map(f);
        let rg = self.requires_grad(x);
        self.push(value, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(T::zero()), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        self.unary(
            x,
            move |v| if v > T::zero() { v } else { v * slope },
            Op::LeakyRelu(x, slope),
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    /// `2·σ(x) − 1`, bounded to (−1, 1).
    pub fn scaled_sigmoid(&mut self, x: Var) -> Var {
        let two = T::from_f64(2.0);
        self.unary(x, move |v| two * sigmoid(v) - T::one(), Op::ScaledSigmoid(x))
    }

    /// Concatenates two `[n, c, h, w]` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, ca, ha, wa) = self.value(a).dims4()?;
        let (nb, cb, hb, wb) = self.value(b).dims4()?;
        if (na, ha, wa) != (nb, hb, wb) {
            return Err(TensorError::shape(
                "concat_channels",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let plane = ha * wa;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(av.len() + bv.len());
        for s in 0..na {
            out.extend_from_slice(&av[s * ca * plane..(s + 1) * ca * plane]);
            out.extend_from_slice(&bv[s * cb * plane..(s + 1) * cb * plane]);
        }
        let value = Tensor::new(&[na, ca + cb, ha, wa], out)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Concat(a, b), rg))
    }

    /// Replicates each row of an `[n, d]` matrix over an `h × w` grid, giving `[n, d, h, w]`.
    pub fn tile(&mut self, v: Var, h: usize, w: usize) -> Result<Var> {
        let (n, d) = match self.value(v).shape() {
            &[n, d] => (n, d),
            other => return Err(TensorError::shape("tile", format!("expected [n, d], got {other:?}"))),
        };
        let src = self.value(v).data();
        let mut out = Vec::with_capacity(n * d * h * w);
        for &val in src {
            out.extend(std::iter::repeat_n(val, h * w));
        }
        let value = Tensor::new(&[n, d, h, w], out)?;
        let rg = self.requires_grad(v);
        Ok(self.push(value, Op::Tile(v), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(self.value(a).shape(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Per-bin complex product of two `[n, 2, h, w]` tensors whose channels hold real and imaginary parts.
    pub fn complex_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("complex_mul", a, b)?;
        let (n, c, h, w) = self.value(a).dims4()?;
        if c != 2 {
            return Err(TensorError::shape(
                "complex_mul",
                format!("expected 2 channels (re, im), got {c}"),
            ));
        }
        let plane = h * w;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); av.len()];
        for s in 0..n {
            let (re, im) = (s * 2 * plane, s * 2 * plane + plane);
            for i in 0..plane {
                let (ar, ai) = (av[re + i], av[im + i]);
                let (br, bi) = (bv[re + i], bv[im + i]);
                out[re + i] = ar * br - ai * bi;
                out[im + i] = ar * bi + ai * br;
            }
        }
        let value = Tensor::new(&[n, c, h, w], out)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::ComplexMul(a, b), rg))
    }

    /// Mean squared error.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check_same("mse_loss", pred, target)?;
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let sum: T = p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum();
        let value = Tensor::scalar(sum / T::from_f64(p.len() as f64));
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(value, Op::Mse(pred, target), rg))
    }

    /// Mean absolute error.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check_same("l1_loss", pred, target)?;
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let sum: T = p.iter().zip(t).map(|(&a, &b)| (a - b).abs()).sum();
        let value = Tensor::scalar(sum / T::from_f64(p.len() as f64));
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(value, Op::L1(pred, target), rg))
    }

    /// `Σ xᵢ·wᵢ` for constant weights; a scalar probe for gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        if weights.len() != self.value(x).numel() {
            return Err(TensorError::shape(
                "weighted_sum",
                format!("{} weights for {} values", weights.len(), self.value(x).numel()),
            ));
        }
        let s: T = self.value(x).data().iter().zip(&weights).map(|(&a, &b)| a * b).sum();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum(x, weights), rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ones = vec![T::one(); self.value(x).numel()];
        self.weighted_sum(x, ones)
    }
}

impl<T: Element> Op<T> {
    /// Gradient contributions to this node's parents given its upstream gradient.
    pub(crate) fn backward(&self, tape: &Tape<T>, id: usize, dy: &[T]) -> Vec<(Var, Vec<T>)> {
        let val = |v: Var| tape.value(v).data();
        let wants = |v: Var| tape.requires_grad(v);
        let mut out = Vec::new();
        match self {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                out_channels,
            } => {
                let (rows, np, big) = (geom.rows(), geom.positions(), geom.big_len());
                let n = tape.value(*x).shape()[0];
                let cout = *out_channels;
                let (xv, wv) = (val(*x), val(*w));
                let mut dx = wants(*x).then(|| vec![T::zero(); xv.len()]);
                let mut dw = wants(*w).then(|| vec![T::zero(); wv.len()]);
                let mut col = vec![T::zero(); rows * np];
                let mut dcol = vec![T::zero(); rows * np];
                for s in 0..n {
                    let g = &dy[s * cout * np..(s + 1) * cout * np];
                    if let Some(dw) = dw.as_mut() {
                        geom.im2col(&xv[s * big..(s + 1) * big], &mut col);
                        gemm_a_bt(dw, g, &col, cout, rows, np);
                    }
                    if let Some(dx) = dx.as_mut() {
                        dcol.fill(T::zero());
                        gemm_at_b(&mut dcol, wv, g, cout, rows, np);
                        geom.col2im(&dcol, &mut dx[s * big..(s + 1) * big]);
                    }
                }
                if let Some(dx) = dx {
                    out.push((*x, dx));
                }
                if let Some(dw) = dw {
                    out.push((*w, dw));
                }
                if let Some(b) = b.filter(|b| wants(*b)) {
                    let mut db = vec![T::zero(); cout];
                    for s in 0..n {
                        for (oc, acc) in db.iter_mut().enumerate() {
                            let off = (s * cout + oc) * np;
                            *acc = *acc + dy[off..off + np].iter().copied().sum::<T>();
                        }
                    }
                    out.push((b, db));
                }
            }
            Op::ConvTranspose2d {
                x,
                w,
                b,
                geom,
                in_channels,
            } => {
                let (rows, np, big) = (geom.rows(), geom.positions(), geom.big_len());
                let n = tape.value(*x).shape()[0];
                let cin = *in_channels;
                let (xv, wv) = (val(*x), val(*w));
                let mut dx = wants(*x).then(|| vec![T::zero(); xv.len()]);
                let mut dw = wants(*w).then(|| vec![T::zero(); wv.len()]);
                let mut dcol = vec![T::zero(); rows * np];
                for s in 0..n {
                    geom.im2col(&dy[s * big..(s + 1) * big], &mut dcol);
                    if let Some(dx) = dx.as_mut() {
                        gemm_acc(&mut dx[s * cin * np..(s + 1) * cin * np], wv, &dcol, cin, rows, np);
                    }
                    if let Some(dw) = dw.as_mut() {
                        gemm_a_bt(dw, &xv[s * cin * np..(s + 1) * cin * np], &dcol, cin, rows, np);
                    }
                }
                if let Some(dx) = dx {
                    out.push((*x, dx));
                }
                if let Some(dw) = dw {
                    out.push((*w, dw));
                }
                if let Some(b) = b.filter(|b| wants(*b)) {
                    let cout = geom.channels;
                    let plane = geom.big_h * geom.big_w;
                    let mut db = vec![T::zero(); cout];
                    for s in 0..n {
                        for (oc, acc) in db.iter_mut().enumerate() {
                            let off = s * big + oc * plane;
                            *acc = *acc + dy[off..off + plane].iter().copied().sum::<T>();
                        }
                    }
                    out.push((b, db));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            } => {
                let (n, c, h, w) = tape.value(*x).dims4().expect("rank checked in forward");
                let plane = h * w;
                let count = T::from_f64((n * plane) as f64);
                let g = val(*gamma);
                let mut sum_dy = vec![T::zero(); c];
                let mut sum_dy_xhat = vec![T::zero(); c];
                for s in 0..n {
                    for ch in 0..c {
                        let off = (s * c + ch) * plane;
                        for i in off..off + plane {
                            sum_dy[ch] = sum_dy[ch] + dy[i];
                            sum_dy_xhat[ch] = sum_dy_xhat[ch] + dy[i] * xhat[i];
                        }
                    }
                }
                if wants(*x) {
                    let mut dx = vec![T::zero(); dy.len()];
                    for s in 0..n {
                        for ch in 0..c {
                            let off = (s * c + ch) * plane;
                            let scale = g[ch] * inv_std[ch];
                            for i in off..off + plane {
                                dx[i] = if *training {
                                    scale * (dy[i] - sum_dy[ch] / count - xhat[i] * sum_dy_xhat[ch] / count)
                                } else {
                                    scale * dy[i]
                                };
                            }
                        }
                    }
                    out.push((*x, dx));
                }
                out.push((*gamma, sum_dy_xhat));
                out.push((*beta, sum_dy));
            }
            Op::Relu(x) => {
                let d = val(*x)
                    .iter()
                    .zip(dy)
                    .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                out.push((*x, d));
            }
            Op::LeakyRelu(x, slope) => {
                let d = val(*x)
                    .iter()
                    .zip(dy)
                    .map(|(&v, &g)| if v > T::zero() { g } else { g * *slope })
                    .collect();
                out.push((*x, d));
            }
            Op::Sigmoid(x) => {
                let y = tape.nodes[id].value.data();
                let d = y.iter().zip(dy).map(|(&s, &g)| g * s * (T::one() - s)).collect();
                out.push((*x, d));
            }
            Op::ScaledSigmoid(x) => {
                let y = tape.nodes[id].value.data();
                let half = T::from_f64(0.5);
                let d = y.iter().zip(dy).map(|(&s, &g)| g * half * (T::one() - s * s)).collect();
                out.push((*x, d));
            }
            Op::Concat(a, b) => {
                let (n, ca, h, w) = tape.value(*a).dims4().expect("rank checked in forward");
                let cb = tape.value(*b).shape()[1];
                let plane = h * w;
                let mut da = Vec::with_capacity(n * ca * plane);
                let mut db = Vec::with_capacity(n * cb * plane);
                for s in 0..n {
                    let base = s * (ca + cb) * plane;
                    da.extend_from_slice(&dy[base..base + ca * plane]);
                    db.extend_from_slice(&dy[base + ca * plane..base + (ca + cb) * plane]);
                }
                out.push((*a, da));
                out.push((*b, db));
            }
            Op::Tile(v) => {
                let cells = dy.len() / tape.value(*v).numel();
                let d = dy.chunks_exact(cells).map(|c| c.iter().copied().sum()).collect();
                out.push((*v, d));
            }
            Op::Reshape(x) => out.push((*x, dy.to_vec())),
            Op::Add(a, b) => {
                out.push((*a, dy.to_vec()));
                out.push((*b, dy.to_vec()));
            }
            Op::ComplexMul(a, b) => {
                let (n, _, h, w) = tape.value(*a).dims4().expect("rank checked in forward");
                let plane = h * w;
                let (av, bv) = (val(*a), val(*b));
                let mut da = vec![T::zero(); av.len()];
                let mut db = vec![T::zero(); bv.len()];
                for s in 0..n {
                    let (re, im) = (s * 2 * plane, s * 2 * plane + plane);
                    for i in 0..plane {
                        let (gr, gi) = (dy[re + i], dy[im + i]);
                        let (ar, ai) = (av[re + i], av[im + i]);
                        let (br, bi) = (bv[re + i], bv[im + i]);
                        da[re + i] = gr * br + gi * bi;
                        da[im + i] = gi * br - gr * bi;
                        db[re + i] = gr * ar + gi * ai;
                        db[im + i] = gi * ar - gr * ai;
                    }
                }
                out.push((*a, da));
                out.push((*b, db));
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (val(*p), val(*t));
                let k = T::from_f64(2.0) * dy[0] / T::from_f64(pv.len() as f64);
                let dp: Vec<T> = pv.iter().zip(tv).map(|(&a, &b)| k * (a - b)).collect();
                let dt = dp.iter().map(|&g| -g).collect();
                out.push((*p, dp));
                out.push((*t, dt));
            }
            Op::L1(p, t) => {
                let (pv, tv) = (val(*p), val(*t));
                let k = dy[0] / T::from_f64(pv.len() as f64);
                let dp: Vec<T> = pv
                    .iter()
                    .zip(tv)
                    .map(|(&a, &b)| {
                        let d = a - b;
                        if d > T::zero() {
                            k
                        } else if d < T::zero() {
                            -k
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let dt = dp.iter().map(|&g| -g).collect();
                out.push((*p, dp));
                out.push((*t, dt));
            }
            Op::WeightedSum(x, weights) => {
                out.push((*x, weights.iter().map(|&w| w * dy[0]).collect()));
            }
        }
        out
    }
}
