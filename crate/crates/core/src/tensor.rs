//! Dense n-dimensional arrays.
//!
//! `NDTensor` is a row-major buffer plus a shape: the last axis varies
//! fastest, which is the bit-exact contract the binary container format
//! relies on. Video volumes use the `[N, C, L, H, W]` layout so the HW
//! plane is innermost-contiguous.
//!
//! Everything is generic over [`Scalar`], which is implemented for `f32`
//! (default) and `f64` (high-precision mode used by the gradient checks).

use crate::error::{Error, Result};
use crate::rng::Rng;
use num_traits::Float;
use rayon::prelude::*;

/// Element width tag used by the binary container format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Floating-point element type of a tensor.
pub trait Scalar:
    Float
    + num_traits::NumAssign
    + Send
    + Sync
    + Default
    + std::fmt::Debug
    + std::fmt::Display
    + 'static
{
    const DTYPE: Dtype;

    fn of_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    /// Reads one scalar from exactly `Self::DTYPE.size_bytes()` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn of_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte slice"))
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn of_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte slice"))
    }
}

/// Validates a shape and returns its element count.
pub fn element_count(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("rank must be >= 1".into()));
    }
    let mut n: usize = 1;
    for &e in shape {
        if e == 0 {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        n = n
            .checked_mul(e)
            .ok_or_else(|| Error::Shape(format!("shape {shape:?} overflows element count")))?;
    }
    Ok(n)
}

/// Dense n-dimensional array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NDTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> NDTensor<T> {
    /// Constant-filled tensor.
    pub fn filled(shape: &[usize], fill: T) -> Result<Self> {
        let n = element_count(shape)?;
        Ok(NDTensor {
            shape: shape.to_vec(),
            data: vec![fill; n],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = element_count(shape)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} implies {n} elements, got {}",
                data.len()
            )));
        }
        Ok(NDTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Seeded uniform tensor with every element in [lo, hi).
    pub fn rand_uniform(rng: &mut Rng, shape: &[usize], lo: T, hi: T) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Range(format!("uniform bounds require lo < hi, got [{lo}, {hi})")));
        }
        let n = element_count(shape)?;
        let (lo64, hi64) = (lo.as_f64(), hi.as_f64());
        let width = hi64 - lo64;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            // Casting to f32 can round the top of the range up to `hi`;
            // resample those draws so the half-open contract holds.
            let v = loop {
                let v = T::of_f64(lo64 + rng.unit_f64() * width);
                if v < hi {
                    break v;
                }
            };
            data.push(v);
        }
        Ok(NDTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Row-major linear offset of a multi-index. Panics on rank or bounds
    /// violations; this is an internal/test accessor, not a parsing surface.
    pub fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (i, (&x, &e)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(x < e, "index {x} out of bounds for axis {i} (extent {e})");
            off = off * e + x;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn at_mut(&mut self, idx: &[usize]) -> &mut T {
        let off = self.offset(idx);
        &mut self.data[off]
    }

    fn ensure_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(NDTensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(NDTensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other, "mul")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(NDTensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Adds `other` into `self` in place.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.ensure_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|x| x * k)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        NDTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Sum of all elements in ascending row-major order.
    pub fn sum(&self) -> T {
        let mut acc = T::zero();
        for &x in &self.data {
            acc += x;
        }
        acc
    }

    /// Matrix product of two rank-2 tensors: [M,K] x [K,N] -> [M,N].
    ///
    /// Each output element accumulates over K in ascending index order no
    /// matter how rows are distributed over threads, so results are
    /// bit-identical across thread counts.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::Shape(format!(
                "matmul expects rank-2 operands, got {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(&self.data, m, k, &other.data, n, &mut out);
        Ok(NDTensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Same data, new shape (element counts must match).
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n = element_count(shape)?;
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) to {shape:?} ({n} elements)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(NDTensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose2(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!(
                "transpose2 expects rank 2, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(NDTensor {
            shape: vec![n, m],
            data,
        })
    }

    /// Lossy dtype conversion (used only by tooling, never by training paths).
    pub fn cast<U: Scalar>(&self) -> NDTensor<U> {
        NDTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of_f64(x.as_f64())).collect(),
        }
    }
}

// Raw GEMM kernels shared by the tensor API and the layer implementations.
// All of them accumulate into `out` with the contraction index ascending,
// and parallelize over independent output rows only, so results do not
// depend on the thread count.

const PAR_FLOP_THRESHOLD: usize = 64 * 1024;

/// out[M,N] += a[M,K] . b[K,N]
pub(crate) fn matmul_into<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row = |i: usize, out_row: &mut [T]| {
        for kk in 0..k {
            let aik = a[i * k + kk];
            let brow = &b[kk * n..kk * n + n];
            for (o, &bv) in out_row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    };
    if m * n * k >= PAR_FLOP_THRESHOLD && m > 1 {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, out_row)| row(i, out_row));
    } else {
        for (i, out_row) in out.chunks_mut(n).enumerate() {
            row(i, out_row);
        }
    }
}

/// out[M,N] += a[M,K] . b[N,K]^T  (b stored row-major as [N,K])
pub(crate) fn matmul_nt_into<T: Scalar>(
    a: &[T],
    m: usize,
    k: usize,
    b: &[T],
    n: usize,
    out: &mut [T],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    let row = |i: usize, out_row: &mut [T]| {
        let arow = &a[i * k..i * k + k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let brow = &b[j * k..j * k + k];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o += acc;
        }
    };
    if m * n * k >= PAR_FLOP_THRESHOLD && m > 1 {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, out_row)| row(i, out_row));
    } else {
        for (i, out_row) in out.chunks_mut(n).enumerate() {
            row(i, out_row);
        }
    }
}

/// out[M,N] += a[K,M]^T . b[K,N]  (a stored row-major as [K,M])
pub(crate) fn matmul_tn_into<T: Scalar>(
    a: &[T],
    k: usize,
    m: usize,
    b: &[T],
    n: usize,
    out: &mut [T],
) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row = |i: usize, out_row: &mut [T]| {
        for kk in 0..k {
            let aki = a[kk * m + i];
            let brow = &b[kk * n..kk * n + n];
            for (o, &bv) in out_row.iter_mut().zip(brow) {
                *o += aki * bv;
            }
        }
    };
    if m * n * k >= PAR_FLOP_THRESHOLD && m > 1 {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, out_row)| row(i, out_row));
    } else {
        for (i, out_row) in out.chunks_mut(n).enumerate() {
            row(i, out_row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filled_constructor() {
        let t = NDTensor::<f32>::filled(&[2, 3], 0.0).unwrap();
        assert_eq!(t.len(), 6);
        assert!(t.data().iter().all(|&x| x == 0.0));

        let t = NDTensor::<f32>::filled(&[1], 7.5).unwrap();
        assert_eq!(t.data(), &[7.5]);

        let t = NDTensor::<f32>::filled(&[2, 2, 2], 1.0).unwrap();
        assert_eq!(t.sum(), 8.0);
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(matches!(
            NDTensor::<f32>::filled(&[2, 0], 1.0),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            NDTensor::<f32>::filled(&[], 1.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rand_uniform_deterministic_per_seed() {
        let mut r1 = Rng::from_seed(42);
        let mut r2 = Rng::from_seed(42);
        let a = NDTensor::<f32>::rand_uniform(&mut r1, &[4], 0.0, 1.0).unwrap();
        let b = NDTensor::<f32>::rand_uniform(&mut r2, &[4], 0.0, 1.0).unwrap();
        assert_eq!(a, b);

        let mut r3 = Rng::from_seed(43);
        let c = NDTensor::<f32>::rand_uniform(&mut r3, &[4], 0.0, 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rand_uniform_bounds_and_mean() {
        let mut rng = Rng::from_seed(5);
        let t = NDTensor::<f64>::rand_uniform(&mut rng, &[1000], -1.0, 1.0).unwrap();
        assert!(t.data().iter().all(|&x| (-1.0..1.0).contains(&x)));
        // Var of U(-1,1) is 1/3, so the sample mean has sigma ~ 0.0183;
        // |mean| < 0.1 is a > 5-sigma band.
        let mean = t.sum() / 1000.0;
        assert!(mean.abs() < 0.1, "sample mean {mean} outside LLN band");
    }

    #[test]
    fn rand_uniform_rejects_bad_range() {
        let mut rng = Rng::from_seed(1);
        assert!(matches!(
            NDTensor::<f32>::rand_uniform(&mut rng, &[3], 1.0, 1.0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn elementwise_ops() {
        let a = NDTensor::<f32>::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = NDTensor::<f32>::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(a.sub(&a).unwrap().data(), &[0.0, 0.0]);
        let c = NDTensor::<f32>::from_vec(&[2], vec![2.0, 3.0]).unwrap();
        let d = NDTensor::<f32>::from_vec(&[2], vec![4.0, 5.0]).unwrap();
        assert_eq!(c.mul(&d).unwrap().data(), &[8.0, 15.0]);
    }

    #[test]
    fn elementwise_shape_mismatch() {
        let a = NDTensor::<f32>::zeros(&[2]).unwrap();
        let b = NDTensor::<f32>::zeros(&[3]).unwrap();
        assert!(matches!(a.add(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn add_commutes_bitwise() {
        let mut rng = Rng::from_seed(11);
        let a = NDTensor::<f32>::rand_uniform(&mut rng, &[64], -2.0, 2.0).unwrap();
        let b = NDTensor::<f32>::rand_uniform(&mut rng, &[64], -2.0, 2.0).unwrap();
        assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
    }

    #[test]
    fn matmul_identity() {
        let mut id = NDTensor::<f64>::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            *id.at_mut(&[i, i]) = 1.0;
        }
        let mut rng = Rng::from_seed(3);
        let a = NDTensor::<f64>::rand_uniform(&mut rng, &[3, 3], -1.0, 1.0).unwrap();
        assert_eq!(id.matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_small_known() {
        let a = NDTensor::<f32>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = NDTensor::<f32>::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_vs_triple_loop_oracle() {
        let mut rng = Rng::from_seed(17);
        let a = NDTensor::<f32>::rand_uniform(&mut rng, &[5, 7], -1.0, 1.0).unwrap();
        let b = NDTensor::<f32>::rand_uniform(&mut rng, &[7, 3], -1.0, 1.0).unwrap();
        let c = a.matmul(&b).unwrap();
        let mut max_diff = 0.0f32;
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = 0.0f32;
                for k in 0..7 {
                    acc += a.at(&[i, k]) * b.at(&[k, j]);
                }
                max_diff = max_diff.max((acc - c.at(&[i, j])).abs());
            }
        }
        assert!(max_diff <= 1e-6, "max abs diff {max_diff}");
    }

    #[test]
    fn matmul_inner_mismatch() {
        let a = NDTensor::<f32>::zeros(&[2, 3]).unwrap();
        let b = NDTensor::<f32>::zeros(&[4, 2]).unwrap();
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_parallel_path_matches_serial() {
        // 80x80x80 crosses the parallel threshold; compare against the
        // sequential row loop on the same operands.
        let mut rng = Rng::from_seed(23);
        let a = NDTensor::<f64>::rand_uniform(&mut rng, &[80, 80], -1.0, 1.0).unwrap();
        let b = NDTensor::<f64>::rand_uniform(&mut rng, &[80, 80], -1.0, 1.0).unwrap();
        let c = a.matmul(&b).unwrap();
        let mut serial = vec![0.0f64; 80 * 80];
        for i in 0..80 {
            for kk in 0..80 {
                let aik = a.data()[i * 80 + kk];
                for j in 0..80 {
                    serial[i * 80 + j] += aik * b.data()[kk * 80 + j];
                }
            }
        }
        assert_eq!(c.data(), &serial[..]);
    }

    #[test]
    fn offset_is_row_major() {
        let t = NDTensor::<f32>::zeros(&[2, 3, 4]).unwrap();
        assert_eq!(t.offset(&[0, 0, 0]), 0);
        assert_eq!(t.offset(&[0, 0, 1]), 1);
        assert_eq!(t.offset(&[0, 1, 0]), 4);
        assert_eq!(t.offset(&[1, 0, 0]), 12);
        assert_eq!(t.offset(&[1, 2, 3]), 23);
    }

    #[test]
    fn transpose2_round_trip() {
        let mut rng = Rng::from_seed(2);
        let a = NDTensor::<f32>::rand_uniform(&mut rng, &[3, 5], -1.0, 1.0).unwrap();
        let t = a.transpose2().unwrap();
        assert_eq!(t.shape(), &[5, 3]);
        assert_eq!(t.transpose2().unwrap(), a);
    }
}
