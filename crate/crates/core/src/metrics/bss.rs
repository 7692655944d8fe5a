//! BSS-Eval source decomposition with time-invariant distortion filters.
//!
//! An estimate is split into the part explained by filtered versions of its
//! reference (`s_target`), the extra part explained by the other references
//! (`e_interf`) and the remainder (`e_artif`), all by least-squares projection
//! onto delayed copies (lags `0..filter_len`) of the references.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// Reported ratios are clamped to `±DB_CAP`.
pub const DB_CAP: f64 = 100.0;
pub const DEFAULT_FILTER_LEN: usize = 512;

/// Metrics per estimate, in estimate order, after permutation matching.
#[derive(Debug, Clone, PartialEq)]
pub struct BssResult {
    pub sdr_db: Vec<f64>,
    pub sir_db: Vec<f64>,
    pub sar_db: Vec<f64>,
    /// `permutation[j]` is the reference matched to estimate `j`.
    pub permutation: Vec<usize>,
}

fn db(num: f64, den: f64) -> f64 {
    let v = if den <= 0.0 {
        f64::INFINITY
    } else if num <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (num / den).log10()
    };
    v.clamp(-DB_CAP, DB_CAP)
}

/// All permutations of `0..n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("successor exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

struct Spectra {
    n_fft: usize,
    refs: Vec<Vec<Complex64>>,
}

fn fft_of(x: &[f64], n_fft: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n_fft, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(n_fft).process(&mut buf);
    buf
}

/// `r(k) = Σ_t a(t)·b(t + k)` for `k in 0..l`, and for negative lags `r(−k)` at index `n_fft − k`.
fn xcorr(a: &[Complex64], b: &[Complex64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = a.len();
    let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x.conj() * y).collect();
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Delay-basis Gram matrix for the references in `set`.
fn gram(spec: &Spectra, set: &[usize], l: usize, planner: &mut FftPlanner<f64>) -> DMatrix<f64> {
    let m = set.len() * l;
    let mut g = DMatrix::zeros(m, m);
    for (bi, &i) in set.iter().enumerate() {
        for (bj, &j) in set.iter().enumerate().skip(bi) {
            // G[(i,τ),(j,τ')] = Σ_u s_i(u) s_j(u + τ − τ')
            let r = xcorr(&spec.refs[i], &spec.refs[j], planner);
            let at = |k: isize| {
                if k >= 0 {
                    r[k as usize]
                } else {
                    r[(spec.n_fft as isize + k) as usize]
                }
            };
            for t in 0..l {
                for t2 in 0..l {
                    let v = at(t as isize - t2 as isize);
                    g[(bi * l + t, bj * l + t2)] = v;
                    g[(bj * l + t2, bi * l + t)] = v;
                }
            }
        }
    }
    g
}

struct Projector {
    set: Vec<usize>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Projector {
    fn new(spec: &Spectra, set: Vec<usize>, l: usize, planner: &mut FftPlanner<f64>) -> Result<Self> {
        let mut g = gram(spec, &set, l, planner);
        // a relative ridge keeps the factorization defined for band-limited
        // references whose delayed copies are nearly dependent
        let ridge = 1e-10 * g.diagonal().mean();
        for k in 0..g.nrows() {
            g[(k, k)] += ridge;
        }
        let chol = g.cholesky().ok_or(Error::DegenerateReferences)?;
        Ok(Projector { set, chol })
    }

    /// Least-squares projection of the estimate (spectrum `est`) onto the
    /// delay span, over `len + l − 1` samples.
    fn project(
        &self,
        spec: &Spectra,
        est: &[Complex64],
        l: usize,
        out_len: usize,
        planner: &mut FftPlanner<f64>,
    ) -> Vec<f64> {
        let mut d = DVector::zeros(self.set.len() * l);
        for (bi, &i) in self.set.iter().enumerate() {
            let r = xcorr(&spec.refs[i], est, planner);
            for t in 0..l {
                d[bi * l + t] = r[t];
            }
        }
        let c = self.chol.solve(&d);
        let n = spec.n_fft;
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for (bi, &i) in self.set.iter().enumerate() {
            let mut filt: Vec<Complex64> = (0..l).map(|t| Complex64::new(c[bi * l + t], 0.0)).collect();
            filt.resize(n, Complex64::new(0.0, 0.0));
            planner.plan_fft_forward(n).process(&mut filt);
            for (a, (f, s)) in acc.iter_mut().zip(filt.iter().zip(&spec.refs[i])) {
                *a += f * s;
            }
        }
        planner.plan_fft_inverse(n).process(&mut acc);
        acc[..out_len].iter().map(|c| c.re / n as f64).collect()
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// SDR, SIR and SAR of `estimates` against `references` (equal counts and
/// lengths), resolving the estimate-to-reference assignment by the
/// permutation with the highest mean SIR.
pub fn bss_eval(references: &[Vec<f64>], estimates: &[Vec<f64>], filter_len: usize) -> Result<BssResult> {
    let j = references.len();
    if j == 0 || estimates.len() != j {
        return Err(Error::shape(format!("{j} references, {} estimates", estimates.len())));
    }
    let n = references[0].len();
    if n == 0 || references.iter().chain(estimates).any(|x| x.len() != n) {
        return Err(Error::shape("references and estimates must share one non-zero length"));
    }
    if filter_len == 0 || filter_len > n {
        return Err(Error::shape(format!("filter length {filter_len} for {n} samples")));
    }
    if references.iter().chain(estimates).flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidAudio("non-finite sample".into()));
    }
    check_independent(references)?;

    let l = filter_len;
    let out_len = n + l - 1;
    let n_fft = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let spec = Spectra {
        n_fft,
        refs: references.iter().map(|r| fft_of(r, n_fft, &mut planner)).collect(),
    };
    let all = Projector::new(&spec, (0..j).collect(), l, &mut planner)?;
    let singles: Vec<Projector> = (0..j)
        .map(|i| Projector::new(&spec, vec![i], l, &mut planner))
        .collect::<Result<_>>()?;

    // crit[e][r] = (sdr, sir, sar) of estimate e judged against reference r
    let mut crit = vec![vec![(0.0, 0.0, 0.0); j]; j];
    for (e, est) in estimates.iter().enumerate() {
        let est_f = fft_of(est, n_fft, &mut planner);
        let p_all = all.project(&spec, &est_f, l, out_len, &mut planner);
        for (r, single) in singles.iter().enumerate() {
            // s_target = projection onto the reference's own delays
            let s_target = single.project(&spec, &est_f, l, out_len, &mut planner);
            let e_interf: Vec<f64> = p_all.iter().zip(&s_target).map(|(a, b)| a - b).collect();
            let e_artif: Vec<f64> = (0..out_len)
                .map(|t| if t < n { est[t] } else { 0.0 } - p_all[t])
                .collect();
            let noise: Vec<f64> = e_interf.iter().zip(&e_artif).map(|(a, b)| a + b).collect();
            let st = energy(&s_target);
            crit[e][r] = (
                db(st, energy(&noise)),
                db(st, energy(&e_interf)),
                db(energy(&p_all), energy(&e_artif)),
            );
        }
    }
    let permutation = permutations(j)
        .into_iter()
        .map(|p| {
            let mean_sir = p.iter().enumerate().map(|(e, &r)| crit[e][r].1).sum::<f64>() / j as f64;
            (p, mean_sir)
        })
        .fold((Vec::new(), f64::NEG_INFINITY), |best, cand| {
            if cand.1 > best.1 {
                cand
            } else {
                best
            }
        })
        .0;
    Ok(BssResult {
        sdr_db: permutation.iter().enumerate().map(|(e, &r)| crit[e][r].0).collect(),
        sir_db: permutation.iter().enumerate().map(|(e, &r)| crit[e][r].1).collect(),
        sar_db: permutation.iter().enumerate().map(|(e, &r)| crit[e][r].2).collect(),
        permutation,
    })
}

/// Rejects silent references and references that are (nearly) scaled copies
/// or combinations of each other at zero lag.
fn check_independent(references: &[Vec<f64>]) -> Result<()> {
    let j = references.len();
    let norms: Vec<f64> = references.iter().map(|r| energy(r).sqrt()).collect();
    if norms.contains(&0.0) {
        return Err(Error::DegenerateReferences);
    }
    let cos = DMatrix::from_fn(j, j, |a, b| {
        references[a]
            .iter()
            .zip(&references[b])
            .map(|(x, y)| x * y)
            .sum::<f64>()
            / (norms[a] * norms[b])
    });
    let min_eig = cos.symmetric_eigenvalues().min();
    if min_eig < 1e-10 {
        return Err(Error::DegenerateReferences);
    }
    Ok(())
}
