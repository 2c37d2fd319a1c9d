//! Neural layers with explicit forward and backward passes.
//!
//! Layers own their parameters and gradient buffers. A training-mode
//! forward caches whatever the backward pass needs; backward consumes the
//! cache and accumulates into the gradient buffers, so a layer instance is
//! single-owner during training. Eval-mode forwards cache nothing and are
//! freely shareable for read-only inference.

mod conv;
mod dense;
mod lstm;
mod norm;
mod pool;

pub use conv::{Conv3d, ConvSpec};
pub use dense::{Dropout, Linear, Relu};
pub use lstm::Lstm;
pub use norm::BatchNorm;
pub use pool::MaxPool3d;

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{NDTensor, Scalar};

/// Forward-pass mode. Train caches for backward and enables dropout /
/// batch statistics; Eval is the deterministic inference path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// A trainable tensor and its gradient accumulator (always shape-matched).
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: NDTensor<T>,
    pub grad: NDTensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: NDTensor<T>) -> Self {
        let grad = NDTensor::zeros(value.shape()).expect("valid shape");
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.data_mut() {
            *g = T::zero();
        }
    }
}

/// Uniform He-style init: U[-b, b] with b = sqrt(6 / fan_in).
pub fn init_uniform<T: Scalar>(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Result<NDTensor<T>> {
    let b = (6.0 / fan_in as f64).sqrt();
    NDTensor::rand_uniform(rng, shape, T::of_f64(-b), T::of_f64(b))
}

/// Walks every trainable parameter (and optionally every non-trainable
/// buffer such as batch-norm running statistics) in a fixed order with a
/// stable hierarchical name. The order is the checkpoint and optimizer
/// contract.
pub trait Parameterized<T: Scalar> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>));

    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&str, &mut NDTensor<T>)) {}

    fn zero_grads(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.value.len());
        n
    }
}

/// Prefixes parameter names when composing layers into larger modules.
pub fn nested<'a, T>(
    prefix: &'a str,
    f: &'a mut dyn FnMut(&str, &mut Param<T>),
) -> impl FnMut(&str, &mut Param<T>) + 'a {
    move |name, p| f(&format!("{prefix}.{name}"), p)
}

/// Buffer-visitor variant of [`nested`].
pub fn nested_buf<'a, T>(
    prefix: &'a str,
    f: &'a mut dyn FnMut(&str, &mut NDTensor<T>),
) -> impl FnMut(&str, &mut NDTensor<T>) + 'a {
    move |name, t| f(&format!("{prefix}.{name}"), t)
}
