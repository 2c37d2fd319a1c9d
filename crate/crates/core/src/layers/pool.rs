//! 3D max pooling with ceil-mode output extents.

use crate::error::{Error, Result};
use crate::layers::Phase;
use crate::tensor::{NDTensor, Scalar};

/// Max pooling over [N, C, L, H, W]. Ceil mode means partial windows at the
/// high boundary pool over their valid elements, so a size-1 axis passes
/// through unchanged. Ties go to the lowest row-major input index.
#[derive(Debug, Clone)]
pub struct MaxPool3d {
    pub kernel: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    in_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// ceil-mode output extent: ceil((in - k)/s) + 1, clamped so every window
/// starts inside the input.
fn pooled_extent(input: usize, k: usize, s: usize) -> usize {
    if input <= k {
        return 1;
    }
    (input - k + s - 1) / s + 1
}

impl Default for MaxPool3d {
    fn default() -> Self {
        MaxPool3d {
            kernel: (2, 2, 2),
            stride: (2, 2, 2),
            cache: None,
        }
    }
}

impl MaxPool3d {
    pub fn new(kernel: (usize, usize, usize), stride: (usize, usize, usize)) -> Self {
        MaxPool3d {
            kernel,
            stride,
            cache: None,
        }
    }

    pub fn out_extents(&self, l: usize, h: usize, w: usize) -> (usize, usize, usize) {
        (
            pooled_extent(l, self.kernel.0, self.stride.0),
            pooled_extent(h, self.kernel.1, self.stride.1),
            pooled_extent(w, self.kernel.2, self.stride.2),
        )
    }

    pub fn forward<T: Scalar>(&mut self, x: &NDTensor<T>, phase: Phase) -> Result<NDTensor<T>> {
        if x.rank() != 5 {
            return Err(Error::Shape(format!(
                "maxpool expects [N,C,L,H,W], got rank {}",
                x.rank()
            )));
        }
        let s = x.shape();
        let (n_batch, c, l, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        let (ol, oh, ow) = self.out_extents(l, h, w);
        let (kl, kh, kw) = self.kernel;
        let (sl, sh, sw) = self.stride;

        let mut y = NDTensor::zeros(&[n_batch, c, ol, oh, ow])?;
        let mut argmax = vec![0usize; n_batch * c * ol * oh * ow];
        let xd = x.data();
        let yd = y.data_mut();
        let mut out_idx = 0;
        for n in 0..n_batch {
            for ci in 0..c {
                let base = (n * c + ci) * l * h * w;
                for out_l in 0..ol {
                    let l0 = out_l * sl;
                    let l1 = (l0 + kl).min(l);
                    for out_h in 0..oh {
                        let h0 = out_h * sh;
                        let h1 = (h0 + kh).min(h);
                        for out_w in 0..ow {
                            let w0 = out_w * sw;
                            let w1 = (w0 + kw).min(w);
                            let mut best = T::neg_infinity();
                            let mut best_idx = 0usize;
                            // Row-major window scan; strict > keeps the first
                            // (lowest-index) winner on ties.
                            for il in l0..l1 {
                                for ih in h0..h1 {
                                    for iw in w0..w1 {
                                        let idx = base + (il * h + ih) * w + iw;
                                        if xd[idx] > best {
                                            best = xd[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                            }
                            yd[out_idx] = best;
                            argmax[out_idx] = best_idx;
                            out_idx += 1;
                        }
                    }
                }
            }
        }
        if phase == Phase::Train {
            self.cache = Some(PoolCache {
                in_shape: x.shape().to_vec(),
                argmax,
            });
        }
        Ok(y)
    }

    /// Routes each output gradient to its argmax source element.
    pub fn backward<T: Scalar>(&mut self, grad_out: &NDTensor<T>) -> Result<NDTensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("maxpool backward without cached forward".into()))?;
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::Shape(format!(
                "maxpool backward: grad has {} elements, expected {}",
                grad_out.len(),
                cache.argmax.len()
            )));
        }
        let mut grad_x = NDTensor::zeros(&cache.in_shape)?;
        let gx = grad_x.data_mut();
        for (&src, &g) in cache.argmax.iter().zip(grad_out.data()) {
            gx[src] += g;
        }
        Ok(grad_x)
    }
}
