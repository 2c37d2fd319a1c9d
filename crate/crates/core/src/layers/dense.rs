//! Linear, ReLU and dropout layers.

use crate::error::{Error, Result};
use crate::layers::{init_uniform, Param, Phase};
use crate::rng::Rng;
use crate::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, NDTensor, Scalar};

/// Fully connected layer: y = x . W^T + b, W stored [out, in].
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<NDTensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Linear {
            in_dim,
            out_dim,
            weight: Param::new(init_uniform(rng, &[out_dim, in_dim], in_dim)?),
            bias: Param::new(NDTensor::zeros(&[out_dim])?),
            cache: None,
        })
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }

    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase) -> Result<NDTensor<T>> {
        if x.rank() != 2 || x.shape()[1] != self.in_dim {
            return Err(Error::Shape(format!(
                "linear expects [N,{}], got {:?}",
                self.in_dim,
                x.shape()
            )));
        }
        let n = x.shape()[0];
        let mut y = NDTensor::zeros(&[n, self.out_dim])?;
        matmul_nt_into(
            x.data(),
            n,
            self.in_dim,
            self.weight.value.data(),
            self.out_dim,
            y.data_mut(),
        );
        let b = self.bias.value.data();
        for row in y.data_mut().chunks_mut(self.out_dim) {
            for (v, &bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        if phase == Phase::Train {
            self.cache = Some(x.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &NDTensor<T>) -> Result<NDTensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("linear backward without cached forward".into()))?;
        let n = x.shape()[0];
        if grad_out.shape() != [n, self.out_dim] {
            return Err(Error::Shape(format!(
                "linear backward: grad shape {:?}, expected [{n}, {}]",
                grad_out.shape(),
                self.out_dim
            )));
        }
        // dW += g^T . x
        matmul_tn_into(
            grad_out.data(),
            n,
            self.out_dim,
            x.data(),
            self.in_dim,
            self.weight.grad.data_mut(),
        );
        // db += column sums of g
        let gb = self.bias.grad.data_mut();
        for row in grad_out.data().chunks(self.out_dim) {
            for (b, &g) in gb.iter_mut().zip(row) {
                *b += g;
            }
        }
        // dx = g . W
        let mut grad_x = NDTensor::zeros(&[n, self.in_dim])?;
        matmul_into(
            grad_out.data(),
            n,
            self.out_dim,
            self.weight.value.data(),
            self.in_dim,
            grad_x.data_mut(),
        );
        Ok(grad_x)
    }
}

/// Elementwise max(0, x) on tensors of any rank.
#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    cache: Option<NDTensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu { cache: None }
    }

    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase) -> Result<NDTensor<T>> {
        let y = x.map(|v| if v > T::zero() { v } else { T::zero() });
        if phase == Phase::Train {
            self.cache = Some(x.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &NDTensor<T>) -> Result<NDTensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("relu backward without cached forward".into()))?;
        if x.shape() != grad_out.shape() {
            return Err(Error::Shape("relu backward shape mismatch".into()));
        }
        let mut g = grad_out.clone();
        for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
            if xv <= T::zero() {
                *gv = T::zero();
            }
        }
        Ok(g)
    }
}

/// Inverted dropout: active only in training with a seeded mask; identity
/// in eval mode.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    pub p: f64,
    mask: Option<NDTensor<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Range(format!("dropout probability {p} outside [0,1)")));
        }
        Ok(Dropout { p, mask: None })
    }

    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase, rng: &mut Rng) -> Result<NDTensor<T>> {
        if phase == Phase::Eval || self.p == 0.0 {
            return Ok(x.clone());
        }
        let keep_scale = T::of_f64(1.0 / (1.0 - self.p));
        let mut mask = NDTensor::zeros(x.shape())?;
        for m in mask.data_mut() {
            if rng.unit_f64() >= self.p {
                *m = keep_scale;
            }
        }
        let y = x.mul(&mask)?;
        self.mask = Some(mask);
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &NDTensor<T>) -> Result<NDTensor<T>> {
        match self.mask.take() {
            Some(mask) => grad_out.mul(&mask),
            // p == 0 or eval-mode forward: identity.
            None => Ok(grad_out.clone()),
        }
    }
}
