//! Parameter initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Element, Tensor};

/// Tensor with entries drawn from `Normal(0, std)`.
pub fn normal<T: Element, R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("standard deviation is finite and positive");
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| T::from_f64(dist.sample(rng))).collect();
    Tensor::new(shape, data).expect("data sized from shape")
}

/// Tensor with entries uniform in `[-bound, bound)`.
pub fn uniform<T: Element, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("data sized from shape")
}
