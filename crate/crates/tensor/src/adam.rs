//! Adam with classic (coupled) L2 weight decay.

use crate::{Element, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Added to the gradient as `weight_decay · param` before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Optimizer state: first and second moments per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    steps: u64,
}

impl<T: Element> Adam<T> {
    pub fn new<'a>(config: AdamConfig, shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let first: Vec<Tensor<T>> = shapes.into_iter().map(Tensor::zeros).collect();
        Adam {
            config,
            second: first.clone(),
            first,
            steps: 0,
        }
    }

    /// Rebuilds state saved by a checkpoint.
    pub fn from_parts(config: AdamConfig, first: Vec<Tensor<T>>, second: Vec<Tensor<T>>, steps: u64) -> Result<Self> {
        if first.len() != second.len() || first.iter().zip(&second).any(|(a, b)| a.shape() != b.shape()) {
            return Err(TensorError::shape("adam", "moment tensors disagree"));
        }
        Ok(Adam {
            config,
            first,
            second,
            steps,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.second
    }

    /// One update of every parameter. `lr_scale[i]` multiplies the base learning
    /// rate for parameter `i`; pass an empty slice for a uniform rate.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>], lr_scale: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(TensorError::shape(
                "adam",
                format!(
                    "{} params, {} grads, state for {}",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            ));
        }
        if !lr_scale.is_empty() && lr_scale.len() != params.len() {
            return Err(TensorError::shape("adam", "lr_scale length"));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() || g.shape() != p.shape() {
                return Err(TensorError::shape(
                    "adam",
                    format!(
                        "parameter {i}: {:?}, grad {:?}, state {:?}",
                        p.shape(),
                        g.shape(),
                        self.first[i].shape()
                    ),
                ));
            }
        }
        self.steps += 1;
        let c = self.config;
        let t = self.steps as f64;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let wd = T::from_f64(c.weight_decay);
        let eps = T::from_f64(c.eps);
        let (inv_bc1, inv_bc2) = (T::from_f64(1.0 / bc1), T::from_f64(1.0 / bc2));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let lr = T::from_f64(c.lr * lr_scale.get(i).copied().unwrap_or(1.0));
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                let grad = gv + wd * *pv;
                *mv = b1 * *mv + one_b1 * grad;
                *vv = b2 * *vv + one_b2 * grad * grad;
                let mhat = *mv * inv_bc1;
                let vhat = *vv * inv_bc2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut params = vec![Tensor::new(&[3], vec![1.0f64, -2.0, 0.5]).unwrap()];
        let grads = vec![Tensor::new(&[3], vec![0.3, -4.0, 1e-3]).unwrap()];
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.01,
                ..Default::default()
            },
            [params[0].shape()],
        );
        let before = params[0].clone();
        adam.step(&mut params, &grads, &[]).unwrap();
        for ((a, b), g) in params[0].data().iter().zip(before.data()).zip(grads[0].data()) {
            let delta = a - b;
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((delta - expected).abs() < 1e-9, "{delta} vs {expected}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Tensor::new(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap()];
        let grads = vec![Tensor::zeros(&[2, 2])];
        let mut adam = Adam::new(AdamConfig::default(), [params[0].shape()]);
        let before = params.clone();
        for _ in 0..5 {
            adam.step(&mut params, &grads, &[]).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn minimizes_quadratic_bowl() {
        // f(w) = |w|², gradient 2w
        let mut params = vec![Tensor::full(&[4], 1.0f64)];
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.01,
                ..Default::default()
            },
            [params[0].shape()],
        );
        let mut reached = None;
        for step in 1..=2000 {
            let grads = vec![params[0].map(|w| 2.0 * w)];
            adam.step(&mut params, &grads, &[]).unwrap();
            let norm = params[0].data().iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm < 1e-3 {
                reached = Some(step);
                break;
            }
        }
        assert!(reached.is_some(), "did not converge: {:?}", params[0]);
    }

    #[test]
    fn shape_drift_is_rejected() {
        let mut params = vec![Tensor::<f32>::zeros(&[3])];
        let mut adam = Adam::new(AdamConfig::default(), [&[2usize][..]]);
        let err = adam.step(&mut params, &[Tensor::zeros(&[3])], &[]);
        assert!(matches!(err, Err(TensorError::ShapeMismatch { .. })));
    }
}
