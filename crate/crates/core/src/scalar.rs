//! Numbers that tensors and small matrices can be built from.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::jet::Jet;

/// Field-like scalar: plain `f64` or a [`Jet`].
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;
    fn scale(&self, s: f64) -> Self;
    fn mul_ref(&self, o: &Self) -> Self;
    fn add_ref(&self, o: &Self) -> Self;
    fn sub_ref(&self, o: &Self) -> Self;
    fn powf(&self, p: f64) -> Self;
    fn recip(&self) -> Self;
    /// True when every stored coefficient is zero.
    fn is_zero(&self) -> bool;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn mul_ref(&self, o: &Self) -> Self {
        self * o
    }
    fn add_ref(&self, o: &Self) -> Self {
        self + o
    }
    fn sub_ref(&self, o: &Self) -> Self {
        self - o
    }
    fn powf(&self, p: f64) -> Self {
        f64::powf(*self, p)
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

impl Scalar for Jet {
    fn from_f64(v: f64) -> Self {
        Jet::constant(v)
    }
    fn value(&self) -> f64 {
        Jet::value(self)
    }
    fn scale(&self, s: f64) -> Self {
        self.clone().scale(s)
    }
    fn mul_ref(&self, o: &Self) -> Self {
        self * o
    }
    fn add_ref(&self, o: &Self) -> Self {
        self + o
    }
    fn sub_ref(&self, o: &Self) -> Self {
        self - o
    }
    fn powf(&self, p: f64) -> Self {
        Jet::powf(self, p)
    }
    fn recip(&self) -> Self {
        Jet::recip(self)
    }
    fn is_zero(&self) -> bool {
        self.coeffs().iter().all(|&c| c == 0.0)
    }
}
