//! 3D convolution over [N, C, L, H, W] volumes.
//!
//! Cross-correlation semantics (no kernel flip). Planar 2D and axial 1D
//! convolutions are degenerate kernels of the same operator: HW-plane 2D is
//! (1,3,3), temporal 1D is (3,1,1), and so on. The forward path lowers each
//! sample to an im2col matrix and multiplies; the independent nested-loop
//! reference lives in the verify module.

use crate::error::{Error, Result};
use crate::layers::{init_uniform, Param, Phase};
use crate::rng::Rng;
use crate::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, NDTensor, Scalar};

/// Geometry of one convolution: channels, kernel, stride, padding.
///
/// Kernel/stride extents are (l, h, w) tuples; degenerate axes use kernel 1
/// with padding 0 so a "2D" or "1D" convolution is just a special case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub padding: (usize, usize, usize),
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: (usize, usize, usize),
        stride: (usize, usize, usize),
        padding: (usize, usize, usize),
    ) -> Self {
        ConvSpec {
            cin,
            cout,
            kernel,
            stride,
            padding,
            bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (kl, kh, kw) = self.kernel;
        let (sl, sh, sw) = self.stride;
        if self.cin == 0 || self.cout == 0 {
            return Err(Error::Shape("channel counts must be >= 1".into()));
        }
        if kl == 0 || kh == 0 || kw == 0 {
            return Err(Error::Shape(format!("kernel extents must be >= 1, got {:?}", self.kernel)));
        }
        if sl == 0 || sh == 0 || sw == 0 {
            return Err(Error::Shape(format!("stride extents must be >= 1, got {:?}", self.stride)));
        }
        Ok(())
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.kernel.2
    }

    /// Weight element count [cout, cin, kl, kh, kw].
    pub fn weight_count(&self) -> usize {
        self.cout * self.cin * self.kernel_volume()
    }

    pub fn bias_count(&self) -> usize {
        if self.bias {
            self.cout
        } else {
            0
        }
    }

    /// Output extents for an input volume; errors when a padded extent is
    /// smaller than the kernel (non-positive output).
    pub fn out_extents(&self, l: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        let axis = |x: usize, k: usize, s: usize, p: usize, name: &str| -> Result<usize> {
            let padded = x + 2 * p;
            if padded < k {
                return Err(Error::Shape(format!(
                    "{name} extent {x} with padding {p} is smaller than kernel {k}"
                )));
            }
            Ok((padded - k) / s + 1)
        };
        Ok((
            axis(l, self.kernel.0, self.stride.0, self.padding.0, "L")?,
            axis(h, self.kernel.1, self.stride.1, self.padding.1, "H")?,
            axis(w, self.kernel.2, self.stride.2, self.padding.2, "W")?,
        ))
    }
}

/// Convolution layer: seeded-init weights [cout, cin, kl, kh, kw] plus an
/// optional bias.
#[derive(Debug, Clone)]
pub struct Conv3d<T> {
    pub spec: ConvSpec,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    cache: Option<NDTensor<T>>,
}

impl<T: Scalar> Conv3d<T> {
    pub fn new(spec: ConvSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let (kl, kh, kw) = spec.kernel;
        let fan_in = spec.cin * spec.kernel_volume();
        let weight = Param::new(init_uniform(
            rng,
            &[spec.cout, spec.cin, kl, kh, kw],
            fan_in,
        )?);
        let bias = if spec.bias {
            Some(Param::new(NDTensor::zeros(&[spec.cout])?))
        } else {
            None
        };
        Ok(Conv3d {
            spec,
            weight,
            bias,
            cache: None,
        })
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("weight", &mut self.weight);
        if let Some(b) = &mut self.bias {
            f("bias", b);
        }
    }

    fn check_input(&self, x: &NDTensor<T>) -> Result<(usize, usize, usize, usize)> {
        if x.rank() != 5 {
            return Err(Error::Shape(format!(
                "conv expects [N,C,L,H,W], got rank {}",
                x.rank()
            )));
        }
        let s = x.shape();
        if s[1] != self.spec.cin {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.spec.cin, s[1]
            )));
        }
        Ok((s[0], s[2], s[3], s[4]))
    }

    /// Lowers sample `n` of `x` to a [cin*kvol, P] matrix, P = ol*oh*ow.
    /// Out-of-range taps are the implicit zero padding.
    fn im2col(&self, x: &NDTensor<T>, n: usize, out_ext: (usize, usize, usize), col: &mut [T]) {
        let (cin, _) = (self.spec.cin, ());
        let (kl, kh, kw) = self.spec.kernel;
        let (sl, sh, sw) = self.spec.stride;
        let (pl, ph, pw) = self.spec.padding;
        let (ol, oh, ow) = out_ext;
        let s = x.shape();
        let (l, h, w) = (s[2], s[3], s[4]);
        let p = ol * oh * ow;
        let xd = x.data();
        let sample = &xd[n * cin * l * h * w..(n + 1) * cin * l * h * w];
        let mut r = 0;
        for ci in 0..cin {
            let chan = &sample[ci * l * h * w..(ci + 1) * l * h * w];
            for dl in 0..kl {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let dst = &mut col[r * p..(r + 1) * p];
                        let mut q = 0;
                        for out_l in 0..ol {
                            let il = (out_l * sl + dl) as isize - pl as isize;
                            let l_ok = il >= 0 && (il as usize) < l;
                            for out_h in 0..oh {
                                let ih = (out_h * sh + dh) as isize - ph as isize;
                                let lh_ok = l_ok && ih >= 0 && (ih as usize) < h;
                                for out_w in 0..ow {
                                    let iw = (out_w * sw + dw) as isize - pw as isize;
                                    dst[q] = if lh_ok && iw >= 0 && (iw as usize) < w {
                                        chan[(il as usize * h + ih as usize) * w + iw as usize]
                                    } else {
                                        T::zero()
                                    };
                                    q += 1;
                                }
                            }
                        }
                        r += 1;
                    }
                }
            }
        }
    }

    /// Scatters a [cin*kvol, P] gradient matrix back onto sample `n` of
    /// `grad_x` (the adjoint of im2col). Traversal order is fixed.
    fn col2im_add(
        &self,
        col: &[T],
        n: usize,
        out_ext: (usize, usize, usize),
        grad_x: &mut NDTensor<T>,
    ) {
        let cin = self.spec.cin;
        let (kl, kh, kw) = self.spec.kernel;
        let (sl, sh, sw) = self.spec.stride;
        let (pl, ph, pw) = self.spec.padding;
        let (ol, oh, ow) = out_ext;
        let s = grad_x.shape().to_vec();
        let (l, h, w) = (s[2], s[3], s[4]);
        let p = ol * oh * ow;
        let gd = grad_x.data_mut();
        let sample = &mut gd[n * cin * l * h * w..(n + 1) * cin * l * h * w];
        let mut r = 0;
        for ci in 0..cin {
            for dl in 0..kl {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let src = &col[r * p..(r + 1) * p];
                        let mut q = 0;
                        for out_l in 0..ol {
                            let il = (out_l * sl + dl) as isize - pl as isize;
                            let l_ok = il >= 0 && (il as usize) < l;
                            for out_h in 0..oh {
                                let ih = (out_h * sh + dh) as isize - ph as isize;
                                let lh_ok = l_ok && ih >= 0 && (ih as usize) < h;
                                for out_w in 0..ow {
                                    let iw = (out_w * sw + dw) as isize - pw as isize;
                                    if lh_ok && iw >= 0 && (iw as usize) < w {
                                        sample[(ci * l + il as usize) * h * w
                                            + ih as usize * w
                                            + iw as usize] += src[q];
                                    }
                                    q += 1;
                                }
                            }
                        }
                        r += 1;
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: &NDTensor<T>, phase: Phase) -> Result<NDTensor<T>> {
        let (n_batch, l, h, w) = self.check_input(x)?;
        let (ol, oh, ow) = self.spec.out_extents(l, h, w)?;
        let p = ol * oh * ow;
        let cout = self.spec.cout;
        let kdim = self.spec.cin * self.spec.kernel_volume();

        let mut y = NDTensor::zeros(&[n_batch, cout, ol, oh, ow])?;
        let mut col = vec![T::zero(); kdim * p];
        for n in 0..n_batch {
            self.im2col(x, n, (ol, oh, ow), &mut col);
            let out_slice = &mut y.data_mut()[n * cout * p..(n + 1) * cout * p];
            matmul_into(self.weight.value.data(), cout, kdim, &col, p, out_slice);
            if let Some(b) = &self.bias {
                for co in 0..cout {
                    let bv = b.value.data()[co];
                    for v in &mut out_slice[co * p..(co + 1) * p] {
                        *v += bv;
                    }
                }
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
            .ok_or_else(|| Error::Shape("conv backward without cached forward".into()))?;
        let (n_batch, l, h, w) = self.check_input(&x)?;
        let (ol, oh, ow) = self.spec.out_extents(l, h, w)?;
        let p = ol * oh * ow;
        let cout = self.spec.cout;
        let kdim = self.spec.cin * self.spec.kernel_volume();
        let expected = [n_batch, cout, ol, oh, ow];
        if grad_out.shape() != expected {
            return Err(Error::Shape(format!(
                "conv backward: grad shape {:?} != output shape {:?}",
                grad_out.shape(),
                expected
            )));
        }

        let mut grad_x = NDTensor::zeros(x.shape())?;
        let mut col = vec![T::zero(); kdim * p];
        let mut col_grad = vec![T::zero(); kdim * p];
        for n in 0..n_batch {
            let g_mat = &grad_out.data()[n * cout * p..(n + 1) * cout * p];
            // dW += g . col^T
            self.im2col(&x, n, (ol, oh, ow), &mut col);
            matmul_nt_into(g_mat, cout, p, &col, kdim, self.weight.grad.data_mut());
            // db += row sums of g
            if let Some(b) = &mut self.bias {
                let gb = b.grad.data_mut();
                for co in 0..cout {
                    let mut acc = T::zero();
                    for &gv in &g_mat[co * p..(co + 1) * p] {
                        acc += gv;
                    }
                    gb[co] += acc;
                }
            }
            // dX = col2im(W^T . g)
            for v in &mut col_grad {
                *v = T::zero();
            }
            matmul_tn_into(
                self.weight.value.data(),
                cout,
                kdim,
                g_mat,
                p,
                &mut col_grad,
            );
            self.col2im_add(&col_grad, n, (ol, oh, ow), &mut grad_x);
        }
        Ok(grad_x)
    }
}
