//! Batch normalization.

use crate::error::{Error, Result};
use crate::layers::{Param, Phase};
use crate::tensor::{NDTensor, Scalar};

/// Per-channel batch normalization with running statistics for inference.
///
/// The channel axis depends on rank: axis 1 for [N,C] and [N,C,L,H,W],
/// the trailing axis for [N,T,D] feature sequences. Internally every input
/// is treated as [outer, C, inner]; statistics are taken over outer*inner
/// elements per channel.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub num_features: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: NDTensor<T>,
    pub running_var: NDTensor<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    dims: (usize, usize, usize),
    shape: Vec<usize>,
}

/// Decomposes a supported input shape into (outer, channels, inner).
fn decompose(shape: &[usize], num_features: usize) -> Result<(usize, usize, usize)> {
    match shape.len() {
        2 => Ok((shape[0], shape[1], 1)),
        3 => Ok((shape[0] * shape[1], shape[2], 1)),
        5 => Ok((shape[0], shape[1], shape[2] * shape[3] * shape[4])),
        r => Err(Error::Shape(format!("batchnorm does not support rank {r}"))),
    }
    .and_then(|(outer, c, inner)| {
        if c != num_features {
            Err(Error::Shape(format!(
                "batchnorm built for {num_features} features, input has {c}"
            )))
        } else {
            Ok((outer, c, inner))
        }
    })
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(num_features: usize) -> Result<Self> {
        Ok(BatchNorm {
            num_features,
            eps: 1e-5,
            momentum: 0.1,
            gamma: Param::new(NDTensor::filled(&[num_features], T::one())?),
            beta: Param::new(NDTensor::zeros(&[num_features])?),
            running_mean: NDTensor::zeros(&[num_features])?,
            running_var: NDTensor::filled(&[num_features], T::one())?,
            cache: None,
        })
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("gamma", &mut self.gamma);
        f("beta", &mut self.beta);
    }

    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut NDTensor<T>)) {
        f("running_mean", &mut self.running_mean);
        f("running_var", &mut self.running_var);
    }

    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase) -> Result<NDTensor<T>> {
        let (outer, c, inner) = decompose(x.shape(), self.num_features)?;
        let count = outer * inner;
        let eps = T::of_f64(self.eps);
        let mut y = NDTensor::zeros(x.shape())?;
        let xd = x.data();

        match phase {
            Phase::Train => {
                if count < 2 {
                    return Err(Error::Data(format!(
                        "batchnorm training needs >= 2 elements per channel, got {count} \
                         (degenerate variance)"
                    )));
                }
                let countf = T::of_f64(count as f64);
                let mut xhat = vec![T::zero(); xd.len()];
                let mut inv_std = vec![T::zero(); c];
                for ch in 0..c {
                    let mut mean = T::zero();
                    for o in 0..outer {
                        let base = (o * c + ch) * inner;
                        for i in 0..inner {
                            mean += xd[base + i];
                        }
                    }
                    mean = mean / countf;
                    let mut var = T::zero();
                    for o in 0..outer {
                        let base = (o * c + ch) * inner;
                        for i in 0..inner {
                            let d = xd[base + i] - mean;
                            var += d * d;
                        }
                    }
                    var = var / countf;
                    let istd = T::one() / (var + eps).sqrt();
                    inv_std[ch] = istd;
                    let g = self.gamma.value.data()[ch];
                    let b = self.beta.value.data()[ch];
                    let yd = y.data_mut();
                    for o in 0..outer {
                        let base = (o * c + ch) * inner;
                        for i in 0..inner {
                            let xh = (xd[base + i] - mean) * istd;
                            xhat[base + i] = xh;
                            yd[base + i] = g * xh + b;
                        }
                    }
                    // Running stats: biased variance normalizes the batch,
                    // the unbiased estimate feeds the running buffer.
                    let mom = T::of_f64(self.momentum);
                    let one_m = T::one() - mom;
                    let unbiased = var * countf / T::of_f64((count - 1) as f64);
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = one_m * *rm + mom * mean;
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = one_m * *rv + mom * unbiased;
                }
                self.cache = Some(BnCache {
                    xhat,
                    inv_std,
                    dims: (outer, c, inner),
                    shape: x.shape().to_vec(),
                });
            }
            Phase::Eval => {
                let yd = y.data_mut();
                for ch in 0..c {
                    let mean = self.running_mean.data()[ch];
                    let istd = T::one() / (self.running_var.data()[ch] + eps).sqrt();
                    let g = self.gamma.value.data()[ch];
                    let b = self.beta.value.data()[ch];
                    for o in 0..outer {
                        let base = (o * c + ch) * inner;
                        for i in 0..inner {
                            yd[base + i] = g * (xd[base + i] - mean) * istd + b;
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &NDTensor<T>) -> Result<NDTensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("batchnorm backward without training forward".into()))?;
        if grad_out.shape() != &cache.shape[..] {
            return Err(Error::Shape("batchnorm backward shape mismatch".into()));
        }
        let (outer, c, inner) = cache.dims;
        let count = outer * inner;
        let countf = T::of_f64(count as f64);
        let gd = grad_out.data();
        let mut grad_x = NDTensor::zeros(&cache.shape)?;

        for ch in 0..c {
            let g = self.gamma.value.data()[ch];
            let istd = cache.inv_std[ch];
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for o in 0..outer {
                let base = (o * c + ch) * inner;
                for i in 0..inner {
                    let dy = gd[base + i];
                    sum_dy += dy;
                    sum_dy_xhat += dy * cache.xhat[base + i];
                }
            }
            self.beta.grad.data_mut()[ch] += sum_dy;
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat;

            let gx = grad_x.data_mut();
            for o in 0..outer {
                let base = (o * c + ch) * inner;
                for i in 0..inner {
                    let dy = gd[base + i];
                    let xh = cache.xhat[base + i];
                    gx[base + i] =
                        g * istd * (countf * dy - sum_dy - xh * sum_dy_xhat) / countf;
                }
            }
        }
        Ok(grad_x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn training_output_is_standardized() {
        let mut rng = Rng::from_seed(10);
        let x = NDTensor::<f64>::rand_uniform(&mut rng, &[8, 3], -5.0, 5.0).unwrap();
        let mut bn = BatchNorm::<f64>::new(3).unwrap();
        let y = bn.forward(&x, Phase::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..8).map(|n| y.at(&[n, ch])).collect();
            let mean: f64 = vals.iter().sum::<f64>() / 8.0;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-4, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {ch} var {var}");
        }
    }

    #[test]
    fn batch_of_one_rejected_in_training() {
        let x = NDTensor::<f32>::zeros(&[1, 4]).unwrap();
        let mut bn = BatchNorm::<f32>::new(4).unwrap();
        assert!(matches!(bn.forward(&x, Phase::Train), Err(Error::Data(_))));
    }

    #[test]
    fn video_rank5_single_sample_has_spatial_statistics() {
        // [1, C, L, H, W] is fine in training: stats pool over L*H*W.
        let mut rng = Rng::from_seed(2);
        let x = NDTensor::<f64>::rand_uniform(&mut rng, &[1, 2, 2, 3, 3], -1.0, 1.0).unwrap();
        let mut bn = BatchNorm::<f64>::new(2).unwrap();
        assert!(bn.forward(&x, Phase::Train).is_ok());
    }

    #[test]
    fn eval_uses_running_statistics() {
        let mut bn = BatchNorm::<f64>::new(1).unwrap();
        bn.running_mean.data_mut()[0] = 2.0;
        bn.running_var.data_mut()[0] = 4.0;
        let x = NDTensor::<f64>::from_vec(&[2, 1], vec![2.0, 4.0]).unwrap();
        let y = bn.forward(&x, Phase::Eval).unwrap();
        assert!((y.data()[0] - 0.0).abs() < 1e-9);
        assert!((y.data()[1] - 2.0 / (4.0f64 + 1e-5).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn feature_sequence_rank3_normalizes_last_axis() {
        let mut rng = Rng::from_seed(6);
        let x = NDTensor::<f64>::rand_uniform(&mut rng, &[2, 5, 3], -4.0, 4.0).unwrap();
        let mut bn = BatchNorm::<f64>::new(3).unwrap();
        let y = bn.forward(&x, Phase::Train).unwrap();
        for d in 0..3 {
            let mut vals = Vec::new();
            for n in 0..2 {
                for t in 0..5 {
                    vals.push(y.at(&[n, t, d]));
                }
            }
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-4);
        }
    }
}
