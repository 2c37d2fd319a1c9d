//! Single-layer LSTM over [N, T, D] sequences.

use crate::error::{Error, Result};
use crate::layers::{init_uniform, Param, Phase};
use crate::rng::Rng;
use crate::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, NDTensor, Scalar};

/// Standard LSTM cell unrolled over time with zero initial state.
///
/// Gate rows of `w_ih`/`w_hh` are grouped (input, forget, cell, output).
/// Input and forget/output gates use the logistic sigmoid, the cell
/// candidate and cell output use tanh.
#[derive(Debug, Clone)]
pub struct Lstm<T> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_ih: Param<T>, // [4H, D]
    pub w_hh: Param<T>, // [4H, H]
    pub bias: Param<T>, // [4H]
    cache: Option<LstmCache<T>>,
}

#[derive(Debug, Clone)]
struct LstmCache<T> {
    x: NDTensor<T>,
    // Index t holds the state *entering* step t; index T holds the final.
    hs: Vec<Vec<T>>,
    cs: Vec<Vec<T>>,
    // Post-activation gates per step: [N, 4H] grouped (i, f, g, o).
    gates: Vec<Vec<T>>,
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Scalar> Lstm<T> {
    pub fn new(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Result<Self> {
        let h4 = 4 * hidden_dim;
        Ok(Lstm {
            input_dim,
            hidden_dim,
            w_ih: Param::new(init_uniform(rng, &[h4, input_dim], input_dim)?),
            w_hh: Param::new(init_uniform(rng, &[h4, hidden_dim], hidden_dim)?),
            bias: Param::new(NDTensor::zeros(&[h4])?),
            cache: None,
        })
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("w_ih", &mut self.w_ih);
        f("w_hh", &mut self.w_hh);
        f("bias", &mut self.bias);
    }

    /// Runs the recurrence; returns all step outputs [N,T,H] and the final
    /// hidden state [N,H].
    pub fn forward(
        &mut self,
        x: &NDTensor<T>,
        phase: Phase,
    ) -> Result<(NDTensor<T>, NDTensor<T>)> {
        if x.rank() != 3 || x.shape()[2] != self.input_dim {
            return Err(Error::Shape(format!(
                "lstm expects [N,T,{}], got {:?}",
                self.input_dim,
                x.shape()
            )));
        }
        let (n, t_len, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let h = self.hidden_dim;
        let h4 = 4 * h;

        let mut outputs = NDTensor::zeros(&[n, t_len, h])?;
        let mut h_prev = vec![T::zero(); n * h];
        let mut c_prev = vec![T::zero(); n * h];
        let mut hs = vec![h_prev.clone()];
        let mut cs = vec![c_prev.clone()];
        let mut gates_all = Vec::with_capacity(t_len);

        let mut x_t = vec![T::zero(); n * d];
        for t in 0..t_len {
            for nn in 0..n {
                let src = &x.data()[(nn * t_len + t) * d..(nn * t_len + t) * d + d];
                x_t[nn * d..nn * d + d].copy_from_slice(src);
            }
            // z = x_t.Wih^T + h_prev.Whh^T + b
            let mut z = vec![T::zero(); n * h4];
            matmul_nt_into(&x_t, n, d, self.w_ih.value.data(), h4, &mut z);
            matmul_nt_into(&h_prev, n, h, self.w_hh.value.data(), h4, &mut z);
            for row in z.chunks_mut(h4) {
                for (v, &b) in row.iter_mut().zip(self.bias.value.data()) {
                    *v += b;
                }
            }
            // Activate in place: i,f,o sigmoid; g tanh.
            for row in z.chunks_mut(h4) {
                for j in 0..h {
                    row[j] = sigmoid(row[j]);
                    row[h + j] = sigmoid(row[h + j]);
                    row[2 * h + j] = row[2 * h + j].tanh();
                    row[3 * h + j] = sigmoid(row[3 * h + j]);
                }
            }
            let mut h_t = vec![T::zero(); n * h];
            let mut c_t = vec![T::zero(); n * h];
            for nn in 0..n {
                let g_row = &z[nn * h4..(nn + 1) * h4];
                for j in 0..h {
                    let (gi, gf, gg, go) = (g_row[j], g_row[h + j], g_row[2 * h + j], g_row[3 * h + j]);
                    let c = gf * c_prev[nn * h + j] + gi * gg;
                    c_t[nn * h + j] = c;
                    h_t[nn * h + j] = go * c.tanh();
                }
            }
            for nn in 0..n {
                let dst_base = (nn * t_len + t) * h;
                outputs.data_mut()[dst_base..dst_base + h]
                    .copy_from_slice(&h_t[nn * h..(nn + 1) * h]);
            }
            h_prev = h_t;
            c_prev = c_t;
            if phase == Phase::Train {
                hs.push(h_prev.clone());
                cs.push(c_prev.clone());
                gates_all.push(z);
            }
        }
        let final_hidden = NDTensor::from_vec(&[n, h], h_prev)?;
        if phase == Phase::Train {
            self.cache = Some(LstmCache {
                x: x.clone(),
                hs,
                cs,
                gates: gates_all,
            });
        }
        Ok((outputs, final_hidden))
    }

    /// Backprop through time. `grad_outputs` is the gradient on every step
    /// output [N,T,H]; `grad_final` optionally adds a gradient on the final
    /// hidden state (the classifier-head path).
    pub fn backward(
        &mut self,
        grad_outputs: &NDTensor<T>,
        grad_final: Option<&NDTensor<T>>,
    ) -> Result<NDTensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("lstm backward without cached forward".into()))?;
        let (n, t_len, d) = (
            cache.x.shape()[0],
            cache.x.shape()[1],
            cache.x.shape()[2],
        );
        let h = self.hidden_dim;
        let h4 = 4 * h;
        if grad_outputs.shape() != [n, t_len, h] {
            return Err(Error::Shape("lstm backward grad_outputs shape mismatch".into()));
        }

        let mut grad_x = NDTensor::zeros(cache.x.shape())?;
        let mut dh_next = vec![T::zero(); n * h];
        let mut dc_next = vec![T::zero(); n * h];
        if let Some(gf) = grad_final {
            if gf.shape() != [n, h] {
                return Err(Error::Shape("lstm backward grad_final shape mismatch".into()));
            }
            dh_next.copy_from_slice(gf.data());
        }

        let mut x_t = vec![T::zero(); n * d];
        let mut dz = vec![T::zero(); n * h4];
        for t in (0..t_len).rev() {
            let gates = &cache.gates[t];
            let c_prev = &cache.cs[t];
            let c_t = &cache.cs[t + 1];
            let h_prev = &cache.hs[t];

            for nn in 0..n {
                for j in 0..h {
                    let idx = nn * h + j;
                    let dh = dh_next[idx]
                        + grad_outputs.data()[(nn * t_len + t) * h + j];
                    let g_row = &gates[nn * h4..(nn + 1) * h4];
                    let (gi, gf, gg, go) = (g_row[j], g_row[h + j], g_row[2 * h + j], g_row[3 * h + j]);
                    let tc = c_t[idx].tanh();
                    let dct = dh * go * (T::one() - tc * tc) + dc_next[idx];
                    let d_o = dh * tc;
                    let d_i = dct * gg;
                    let d_f = dct * c_prev[idx];
                    let d_g = dct * gi;
                    dc_next[idx] = dct * gf;
                    let dz_row = &mut dz[nn * h4..(nn + 1) * h4];
                    dz_row[j] = d_i * gi * (T::one() - gi);
                    dz_row[h + j] = d_f * gf * (T::one() - gf);
                    dz_row[2 * h + j] = d_g * (T::one() - gg * gg);
                    dz_row[3 * h + j] = d_o * go * (T::one() - go);
                }
            }

            for nn in 0..n {
                let src = &cache.x.data()[(nn * t_len + t) * d..(nn * t_len + t) * d + d];
                x_t[nn * d..nn * d + d].copy_from_slice(src);
            }
            // dWih += dz^T . x_t ; dWhh += dz^T . h_prev ; db += col sums
            matmul_tn_into(&dz, n, h4, &x_t, d, self.w_ih.grad.data_mut());
            matmul_tn_into(&dz, n, h4, h_prev, h, self.w_hh.grad.data_mut());
            let db = self.bias.grad.data_mut();
            for row in dz.chunks(h4) {
                for (b, &g) in db.iter_mut().zip(row) {
                    *b += g;
                }
            }
            // dx_t = dz . Wih ; dh_prev = dz . Whh
            let mut dx_t = vec![T::zero(); n * d];
            matmul_into(&dz, n, h4, self.w_ih.value.data(), d, &mut dx_t);
            for nn in 0..n {
                let dst = &mut grad_x.data_mut()[(nn * t_len + t) * d..(nn * t_len + t) * d + d];
                dst.copy_from_slice(&dx_t[nn * d..(nn + 1) * d]);
            }
            for v in &mut dh_next {
                *v = T::zero();
            }
            matmul_into(&dz, n, h4, self.w_hh.value.data(), h, &mut dh_next);
        }
        Ok(grad_x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_zero_inputs_give_zero_hidden() {
        let mut rng = Rng::from_seed(1);
        let mut lstm = Lstm::<f64>::new(3, 2, &mut rng).unwrap();
        for v in lstm.w_ih.value.data_mut() {
            *v = 0.0;
        }
        for v in lstm.w_hh.value.data_mut() {
            *v = 0.0;
        }
        let x = NDTensor::<f64>::zeros(&[2, 4, 3]).unwrap();
        let (outs, final_h) = lstm.forward(&x, Phase::Eval).unwrap();
        assert!(outs.data().iter().all(|&v| v == 0.0));
        assert!(final_h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn t1_equals_single_cell_step() {
        let mut rng = Rng::from_seed(7);
        let mut lstm = Lstm::<f64>::new(2, 2, &mut rng).unwrap();
        let x1 = NDTensor::<f64>::rand_uniform(&mut rng, &[1, 1, 2], -1.0, 1.0).unwrap();
        let (outs, final_h) = lstm.forward(&x1, Phase::Eval).unwrap();
        // With T=1 the sequence output row equals the final hidden state.
        assert_eq!(&outs.data()[..2], final_h.data());

        // Hand-computed single cell step with zero initial state.
        let h = 2usize;
        for j in 0..h {
            let mut zi = lstm.bias.value.data()[j];
            let mut zf = lstm.bias.value.data()[h + j];
            let mut zg = lstm.bias.value.data()[2 * h + j];
            let mut zo = lstm.bias.value.data()[3 * h + j];
            for k in 0..2 {
                let xv = x1.data()[k];
                zi += lstm.w_ih.value.at(&[j, k]) * xv;
                zf += lstm.w_ih.value.at(&[h + j, k]) * xv;
                zg += lstm.w_ih.value.at(&[2 * h + j, k]) * xv;
                zo += lstm.w_ih.value.at(&[3 * h + j, k]) * xv;
            }
            let (gi, gg, go) = (sigmoid(zi), zg.tanh(), sigmoid(zo));
            let _ = sigmoid(zf); // forget gate multiplies zero initial cell
            let c = gi * gg;
            let expect = go * c.tanh();
            assert!((final_h.data()[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_input_dim_rejected() {
        let mut rng = Rng::from_seed(1);
        let mut lstm = Lstm::<f32>::new(3, 2, &mut rng).unwrap();
        let x = NDTensor::<f32>::zeros(&[1, 4, 5]).unwrap();
        assert!(matches!(lstm.forward(&x, Phase::Eval), Err(Error::Shape(_))));
    }
}
