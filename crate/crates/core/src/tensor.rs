//! Tensors with explicit index positions, and small dense matrix helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Position of one tensor index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Upper,
    Lower,
}

/// Components of a tensor at a point, stored row-major over all index slots.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue<T = f64> {
    variance: Vec<Slot>,
    dim: usize,
    comps: Vec<T>,
}

/// Calls `f` with every multi-index of the given rank, in storage order.
pub fn for_each_index(rank: usize, dim: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; rank];
    let total = dim.pow(rank as u32);
    for _ in 0..total {
        f(&idx);
        for k in (0..rank).rev() {
            idx[k] += 1;
            if idx[k] < dim {
                break;
            }
            idx[k] = 0;
        }
    }
}

impl<T: Scalar> TensorValue<T> {
    pub fn new(variance: Vec<Slot>, dim: usize, comps: Vec<T>) -> Result<Self> {
        let want = dim.pow(variance.len() as u32);
        if comps.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "{} components for rank {} in dimension {dim}",
                comps.len(),
                variance.len()
            )));
        }
        Ok(TensorValue {
            variance,
            dim,
            comps,
        })
    }

    pub fn zeros(variance: Vec<Slot>, dim: usize) -> Self {
        let n = dim.pow(variance.len() as u32);
        TensorValue {
            variance,
            dim,
            comps: vec![T::zero(); n],
        }
    }

    pub fn from_fn(variance: Vec<Slot>, dim: usize, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let mut comps = Vec::with_capacity(dim.pow(variance.len() as u32));
        for_each_index(variance.len(), dim, |idx| comps.push(f(idx)));
        TensorValue {
            variance,
            dim,
            comps,
        }
    }

    /// A (0,2) tensor from a row-major matrix.
    pub fn covariant2(dim: usize, comps: Vec<T>) -> Result<Self> {
        Self::new(vec![Slot::Lower, Slot::Lower], dim, comps)
    }

    /// A (1,1) tensor from a row-major matrix, row = upper index.
    pub fn mixed(dim: usize, comps: Vec<T>) -> Result<Self> {
        Self::new(vec![Slot::Upper, Slot::Lower], dim, comps)
    }

    pub fn covector(comps: Vec<T>) -> Self {
        let dim = comps.len();
        TensorValue {
            variance: vec![Slot::Lower],
            dim,
            comps,
        }
    }

    pub fn vector(comps: Vec<T>) -> Self {
        let dim = comps.len();
        TensorValue {
            variance: vec![Slot::Upper],
            dim,
            comps,
        }
    }

    pub fn scalar(v: T) -> Self {
        TensorValue {
            variance: vec![],
            dim: 0,
            comps: vec![v],
        }
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variance(&self) -> &[Slot] {
        &self.variance
    }

    pub fn comps(&self) -> &[T] {
        &self.comps
    }

    pub fn comps_mut(&mut self) -> &mut [T] {
        &mut self.comps
    }

    pub fn into_comps(self) -> Vec<T> {
        self.comps
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> &T {
        &self.comps[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.comps[o] = v;
    }

    pub fn map<U: Scalar>(&self, f: impl FnMut(&T) -> U) -> TensorValue<U> {
        TensorValue {
            variance: self.variance.clone(),
            dim: self.dim,
            comps: self.comps.iter().map(f).collect(),
        }
    }

    pub fn try_map<U: Scalar>(&self, f: impl FnMut(&T) -> Result<U>) -> Result<TensorValue<U>> {
        Ok(TensorValue {
            variance: self.variance.clone(),
            dim: self.dim,
            comps: self.comps.iter().map(f).collect::<Result<_>>()?,
        })
    }

    /// Plain numeric components.
    pub fn values(&self) -> TensorValue<f64> {
        self.map(|x| x.value())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.variance != other.variance || self.dim != other.dim {
            return Err(Error::ShapeMismatch(format!(
                "{:?}/{} vs {:?}/{}",
                self.variance, self.dim, other.variance, other.dim
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(TensorValue {
            variance: self.variance.clone(),
            dim: self.dim,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.add_ref(b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(TensorValue {
            variance: self.variance.clone(),
            dim: self.dim,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.sub_ref(b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| x.scale(s))
    }

    pub fn scale_by(&self, s: &T) -> Self {
        self.map(|x| x.mul_ref(s))
    }

    /// Reorder slots: slot `k` of the result is slot `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        if perm.len() != r {
            return Err(Error::ShapeMismatch("permutation length".into()));
        }
        let variance = perm.iter().map(|&p| self.variance[p]).collect();
        let mut src = vec![0usize; r];
        Ok(TensorValue::from_fn(variance, self.dim, |idx| {
            for k in 0..r {
                src[perm[k]] = idx[k];
            }
            self.get(&src).clone()
        }))
    }

    /// Contract slot `a` (upper) with slot `b` (lower) of the same tensor.
    pub fn trace(&self, a: usize, b: usize) -> Result<Self> {
        if a == b || self.variance[a] == self.variance[b] {
            return Err(Error::ShapeMismatch(
                "trace needs one upper and one lower slot".into(),
            ));
        }
        let keep: Vec<usize> = (0..self.rank()).filter(|&k| k != a && k != b).collect();
        let variance = keep.iter().map(|&k| self.variance[k]).collect();
        let mut full = vec![0usize; self.rank()];
        Ok(TensorValue::from_fn(variance, self.dim, |idx| {
            for (p, &k) in keep.iter().enumerate() {
                full[k] = idx[p];
            }
            let mut acc = T::zero();
            for s in 0..self.dim {
                full[a] = s;
                full[b] = s;
                acc = acc + self.get(&full).clone();
            }
            acc
        }))
    }

    /// Contract `slot` against a rank-2 tensor `m` along the first index of `m`.
    ///
    /// The slot keeps its position and takes the variance of `m`'s second slot.
    pub fn contract_slot(&self, slot: usize, m: &TensorValue<T>) -> Result<Self> {
        if m.rank() != 2 || m.dim != self.dim {
            return Err(Error::ShapeMismatch("contract_slot needs a rank-2 tensor".into()));
        }
        let mut variance = self.variance.clone();
        variance[slot] = m.variance[1];
        let mut src = vec![0usize; self.rank()];
        Ok(TensorValue::from_fn(variance, self.dim, |idx| {
            src.copy_from_slice(idx);
            let mut acc = T::zero();
            for s in 0..self.dim {
                src[slot] = s;
                acc = acc + self.get(&src).mul_ref(m.get(&[s, idx[slot]]));
            }
            acc
        }))
    }

    /// Raise `slot` with the inverse metric.
    pub fn raise(&self, slot: usize, ginv: &TensorValue<T>) -> Result<Self> {
        if self.variance[slot] != Slot::Lower || ginv.variance != [Slot::Upper, Slot::Upper] {
            return Err(Error::ShapeMismatch("raise needs a lower slot and g^-1".into()));
        }
        self.contract_slot(slot, ginv)
    }

    /// Lower `slot` with the metric.
    pub fn lower(&self, slot: usize, g: &TensorValue<T>) -> Result<Self> {
        if self.variance[slot] != Slot::Upper || g.variance != [Slot::Lower, Slot::Lower] {
            return Err(Error::ShapeMismatch("lower needs an upper slot and g".into()));
        }
        self.contract_slot(slot, g)
    }

    /// Outer product, slots of `self` first.
    pub fn outer(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim && self.rank() > 0 && other.rank() > 0 {
            return Err(Error::ShapeMismatch("outer product dimensions".into()));
        }
        let mut variance = self.variance.clone();
        variance.extend_from_slice(&other.variance);
        let mut comps = Vec::with_capacity(self.comps.len() * other.comps.len());
        for a in &self.comps {
            for b in &other.comps {
                comps.push(a.mul_ref(b));
            }
        }
        Ok(TensorValue {
            variance,
            dim: self.dim.max(other.dim),
            comps,
        })
    }

    /// Row-major matrix of a rank-2 tensor.
    pub fn matrix(&self) -> Result<Vec<T>> {
        if self.rank() != 2 {
            return Err(Error::ShapeMismatch("not a rank-2 tensor".into()));
        }
        Ok(self.comps.clone())
    }
}

impl TensorValue<f64> {
    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.comps.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Row-major `n x n` matrix product.
pub fn mat_mul<T: Scalar>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = T::zero();
            for k in 0..n {
                acc = acc + a[i * n + k].mul_ref(&b[k * n + j]);
            }
            out.push(acc);
        }
    }
    out
}

pub fn mat_transpose<T: Scalar>(a: &[T], n: usize) -> Vec<T> {
    (0..n * n).map(|k| a[(k % n) * n + k / n].clone()).collect()
}

pub fn mat_identity<T: Scalar>(n: usize) -> Vec<T> {
    (0..n * n)
        .map(|k| if k / n == k % n { T::one() } else { T::zero() })
        .collect()
}

/// Relative threshold below which a determinant counts as zero.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Determinant and inverse by Gauss-Jordan elimination with partial pivoting.
///
/// Pivots are chosen on the numeric values. The matrix is declared singular when
/// `|det| < 1e-12 * prod(row norms)`.
pub fn det_inverse<T: Scalar>(a: &[T], n: usize) -> Result<(T, Vec<T>)> {
    if a.len() != n * n {
        return Err(Error::ShapeMismatch("det_inverse: not square".into()));
    }
    let scale: f64 = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| a[i * n + j].value().powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .product();
    let mut m = a.to_vec();
    let mut inv = mat_identity::<T>(n);
    let mut det = T::one();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                m[i * n + col]
                    .value()
                    .abs()
                    .total_cmp(&m[j * n + col].value().abs())
            })
            .unwrap();
        if m[piv * n + col].value() == 0.0 {
            return Err(Error::SingularMetric {
                det: 0.0,
                threshold: SINGULAR_RATIO * scale,
            });
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
                inv.swap(col * n + k, piv * n + k);
            }
            det = -det;
        }
        let p = m[col * n + col].clone();
        det = det.mul_ref(&p);
        let pinv = p.recip();
        for k in 0..n {
            m[col * n + k] = m[col * n + k].mul_ref(&pinv);
            inv[col * n + k] = inv[col * n + k].mul_ref(&pinv);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col].clone();
            if f.is_zero() {
                continue;
            }
            for k in 0..n {
                let mk = f.mul_ref(&m[col * n + k]);
                m[r * n + k] = m[r * n + k].sub_ref(&mk);
                let ik = f.mul_ref(&inv[col * n + k]);
                inv[r * n + k] = inv[r * n + k].sub_ref(&ik);
            }
        }
    }
    if det.value().abs() < SINGULAR_RATIO * scale {
        return Err(Error::SingularMetric {
            det: det.value(),
            threshold: SINGULAR_RATIO * scale,
        });
    }
    Ok((det, inv))
}

/// Determinant only.
pub fn det<T: Scalar>(a: &[T], n: usize) -> Result<T> {
    det_inverse(a, n).map(|(d, _)| d)
}
