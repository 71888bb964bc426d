//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] stores the Taylor polynomial of a scalar function around a point,
//! truncated at some total degree (at most [`MAX_ORDER`]). Coefficients are kept
//! in a graded monomial basis, so a jet of order `k` is a prefix of the same
//! jet at order `k + 1`. Arithmetic truncates to the smaller order of its
//! operands. Constants carry no order and never truncate anything.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

/// Highest supported total derivative order.
pub const MAX_ORDER: usize = 4;

/// Highest supported number of variables.
pub const MAX_VARS: usize = 16;

/// Monomial tables for a fixed number of variables, shared by all jets of that size.
pub struct JetBasis {
    nvars: usize,
    exps: Vec<Vec<u8>>,
    len_upto: [usize; MAX_ORDER + 1],
    mul: Vec<(u32, u32, u32)>,
    mul_upto: [usize; MAX_ORDER + 1],
    raise: Vec<Vec<u32>>,
    index: HashMap<Vec<u8>, u32>,
    alpha_factorial: Vec<f64>,
}

impl JetBasis {
    fn build(nvars: usize) -> JetBasis {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        let mut len_upto = [0usize; MAX_ORDER + 1];
        for d in 0..=MAX_ORDER {
            let mut cur = vec![0u8; nvars];
            push_monomials(&mut exps, &mut cur, 0, d as u8);
            len_upto[d] = exps.len();
        }
        let degree: Vec<u8> = exps.iter().map(|e| e.iter().sum()).collect();
        let index: HashMap<Vec<u8>, u32> = exps
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i as u32))
            .collect();

        let mut mul = Vec::new();
        for i in 0..exps.len() {
            for j in 0..exps.len() {
                let d = degree[i] as usize + degree[j] as usize;
                if d > MAX_ORDER {
                    continue;
                }
                let sum: Vec<u8> = exps[i].iter().zip(&exps[j]).map(|(a, b)| a + b).collect();
                mul.push((i as u32, j as u32, index[&sum]));
            }
        }
        mul.sort_by_key(|&(_, _, k)| degree[k as usize]);
        let mut mul_upto = [0usize; MAX_ORDER + 1];
        for (d, slot) in mul_upto.iter_mut().enumerate() {
            *slot = mul
                .iter()
                .take_while(|&&(_, _, k)| degree[k as usize] as usize <= d)
                .count();
        }

        let lower = len_upto[MAX_ORDER - 1];
        let raise = (0..nvars)
            .map(|l| {
                (0..lower)
                    .map(|i| {
                        let mut e = exps[i].clone();
                        e[l] += 1;
                        index[&e]
                    })
                    .collect()
            })
            .collect();
        let alpha_factorial = exps
            .iter()
            .map(|e| e.iter().map(|&k| factorial(k as usize)).product())
            .collect();

        JetBasis {
            nvars,
            exps,
            len_upto,
            mul,
            mul_upto,
            raise,
            index,
            alpha_factorial,
        }
    }

    /// Shared basis for `nvars` variables.
    pub fn get(nvars: usize) -> &'static JetBasis {
        static CACHE: OnceLock<Mutex<HashMap<usize, &'static JetBasis>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|p| p.into_inner());
        guard
            .entry(nvars)
            .or_insert_with(|| Box::leak(Box::new(JetBasis::build(nvars))))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Number of monomials of total degree at most `order`.
    pub fn len(&self, order: usize) -> usize {
        self.len_upto[order]
    }

    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.exps[i]
    }

    fn monomial(&self, idx: &[usize]) -> Option<usize> {
        let mut e = vec![0u8; self.nvars];
        for &i in idx {
            if i >= self.nvars {
                return None;
            }
            e[i] += 1;
        }
        self.index.get(&e).map(|&k| k as usize)
    }
}

fn push_monomials(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, remaining: u8) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k;
        push_monomials(out, cur, pos + 1, remaining - k);
    }
    cur[pos] = 0;
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Truncated Taylor polynomial of a scalar function of several variables.
#[derive(Clone)]
pub struct Jet {
    basis: Option<&'static JetBasis>,
    order: u8,
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.basis {
            None => write!(f, "Jet::constant({})", self.c[0]),
            Some(b) => f
                .debug_struct("Jet")
                .field("nvars", &b.nvars)
                .field("order", &self.order)
                .field("coeffs", &self.c)
                .finish(),
        }
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.order() == other.order() && self.nvars() == other.nvars() && self.c == other.c
    }
}

impl Jet {
    pub fn constant(v: f64) -> Jet {
        Jet {
            basis: None,
            order: 0,
            c: vec![v],
        }
    }

    pub fn zero() -> Jet {
        Jet::constant(0.0)
    }

    /// The coordinate function `x_index` expanded at `value`.
    pub fn variable(value: f64, index: usize, nvars: usize, order: usize) -> Jet {
        assert!(nvars >= 1 && nvars <= MAX_VARS, "unsupported jet size {nvars}");
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        assert!(index < nvars);
        let basis = JetBasis::get(nvars);
        let mut c = vec![0.0; basis.len(order)];
        c[0] = value;
        if order >= 1 {
            c[1 + index] = 1.0;
        }
        Jet {
            basis: Some(basis),
            order: order as u8,
            c,
        }
    }

    /// Coordinate jets for every variable at `point`.
    pub fn seed(point: &[f64], order: usize) -> Vec<Jet> {
        point
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(v, i, point.len(), order))
            .collect()
    }

    /// A jet with every coefficient zero except the value, at a fixed size and order.
    pub fn lift(v: f64, nvars: usize, order: usize) -> Jet {
        let basis = JetBasis::get(nvars);
        let mut c = vec![0.0; basis.len(order)];
        c[0] = v;
        Jet {
            basis: Some(basis),
            order: order as u8,
            c,
        }
    }

    /// Build a jet from partial derivatives, given as a map from sorted index lists.
    pub fn from_derivatives(
        nvars: usize,
        order: usize,
        mut deriv: impl FnMut(&[usize]) -> f64,
    ) -> Jet {
        let basis = JetBasis::get(nvars);
        let n = basis.len(order);
        let mut c = vec![0.0; n];
        for (i, slot) in c.iter_mut().enumerate() {
            let idx = exps_to_indices(&basis.exps[i]);
            *slot = deriv(&idx) / basis.alpha_factorial[i];
        }
        Jet {
            basis: Some(basis),
            order: order as u8,
            c,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.basis.is_none()
    }

    /// Truncation order; `None` for exact constants.
    pub fn order(&self) -> Option<usize> {
        self.basis.map(|_| self.order as usize)
    }

    pub fn nvars(&self) -> Option<usize> {
        self.basis.map(|b| b.nvars)
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// Partial derivative of the underlying function at the expansion point.
    ///
    /// `idx` lists variable indices with repetition, in any order.
    pub fn derivative(&self, idx: &[usize]) -> Result<f64> {
        let Some(b) = self.basis else {
            return Ok(if idx.is_empty() { self.c[0] } else { 0.0 });
        };
        if idx.len() > self.order as usize {
            return Err(Error::InsufficientJet {
                needed: idx.len(),
                available: self.order as usize,
            });
        }
        let k = b
            .monomial(idx)
            .ok_or_else(|| Error::InvalidInput(format!("variable index out of range: {idx:?}")))?;
        Ok(self.c[k] * b.alpha_factorial[k])
    }

    pub fn gradient(&self, nvars: usize) -> Result<Vec<f64>> {
        (0..nvars).map(|i| self.derivative(&[i])).collect()
    }

    /// The jet of `∂f/∂x_l`, one order lower.
    pub fn partial(&self, l: usize) -> Result<Jet> {
        let Some(b) = self.basis else {
            return Ok(Jet::zero());
        };
        if l >= b.nvars {
            return Err(Error::InvalidInput(format!("variable index {l} out of range")));
        }
        if self.order == 0 {
            return Err(Error::InsufficientJet {
                needed: 1,
                available: 0,
            });
        }
        let order = self.order as usize - 1;
        let n = b.len(order);
        let raise = &b.raise[l];
        let c = (0..n)
            .map(|i| {
                let k = raise[i] as usize;
                let e = b.exps[k][l] as f64;
                e * self.c[k]
            })
            .collect();
        Ok(Jet {
            basis: Some(b),
            order: order as u8,
            c,
        })
    }

    /// Drop all coefficients above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        match self.basis {
            Some(b) if order < self.order as usize => Jet {
                basis: Some(b),
                order: order as u8,
                c: self.c[..b.len(order)].to_vec(),
            },
            _ => self.clone(),
        }
    }

    /// Shift the value, keeping all derivative coefficients.
    pub fn add_scalar(mut self, v: f64) -> Jet {
        self.c[0] += v;
        self
    }

    pub fn scale(mut self, s: f64) -> Jet {
        for x in &mut self.c {
            *x *= s;
        }
        self
    }

    fn shape_with(&self, other: &Jet) -> (Option<&'static JetBasis>, u8) {
        match (self.basis, other.basis) {
            (None, None) => (None, 0),
            (Some(b), None) => (Some(b), self.order),
            (None, Some(b)) => (Some(b), other.order),
            (Some(a), Some(b)) => {
                assert_eq!(a.nvars, b.nvars, "jets over different variable sets");
                (Some(a), self.order.min(other.order))
            }
        }
    }

    fn add_impl(&self, other: &Jet, sign: f64) -> Jet {
        let (basis, order) = self.shape_with(other);
        let n = basis.map_or(1, |b| b.len(order as usize));
        let mut c = vec![0.0; n];
        for (i, slot) in c.iter_mut().enumerate() {
            let x = self.c.get(i).copied().unwrap_or(0.0);
            let y = other.c.get(i).copied().unwrap_or(0.0);
            *slot = x + sign * y;
        }
        Jet { basis, order, c }
    }

    fn mul_impl(&self, other: &Jet) -> Jet {
        if self.basis.is_none() {
            return other.clone().scale(self.c[0]);
        }
        if other.basis.is_none() {
            return self.clone().scale(other.c[0]);
        }
        let (basis, order) = self.shape_with(other);
        let b = basis.unwrap();
        let mut c = vec![0.0; b.len(order as usize)];
        let a = &self.c;
        let d = &other.c;
        for &(i, j, k) in &b.mul[..b.mul_upto[order as usize]] {
            c[k as usize] += a[i as usize] * d[j as usize];
        }
        Jet { basis, order, c }
    }

    /// Compose with a scalar function given its derivatives at the value.
    ///
    /// `derivs[k]` must hold the `k`-th derivative of the outer function at
    /// `self.value()`, for `k` up to the jet order.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let Some(_) = self.basis else {
            return Jet::constant(derivs[0]);
        };
        let order = self.order as usize;
        let mut delta = self.clone();
        delta.c[0] = 0.0;
        let mut r = Jet::lift(derivs[order] / factorial(order), delta.basis.unwrap().nvars, order);
        for k in (0..order).rev() {
            r = r.mul_impl(&delta);
            r.c[0] += derivs[k] / factorial(k);
        }
        r
    }

    fn order_or_zero(&self) -> usize {
        self.order().unwrap_or(0)
    }

    pub fn powf(&self, p: f64) -> Jet {
        let x = self.value();
        let k = self.order_or_zero();
        let mut d = Vec::with_capacity(k + 1);
        let mut coef = 1.0;
        for i in 0..=k {
            d.push(coef * x.powf(p - i as f64));
            coef *= p - i as f64;
        }
        self.compose(&d)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Jet {
        let x = self.value();
        let k = self.order_or_zero();
        let mut d = Vec::with_capacity(k + 1);
        let mut coef = 1.0;
        let mut xp = 1.0 / x;
        for i in 0..=k {
            d.push(coef * xp);
            coef *= -((i + 1) as f64);
            xp /= x;
        }
        self.compose(&d)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.order_or_zero() + 1])
    }

    pub fn ln(&self) -> Jet {
        let x = self.value();
        let k = self.order_or_zero();
        let mut d = vec![x.ln()];
        let mut coef = 1.0;
        let mut xp = 1.0 / x;
        for i in 1..=k {
            d.push(coef * xp);
            coef *= -(i as f64);
            xp /= x;
        }
        self.compose(&d)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.order_or_zero()).map(|i| cycle[i % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.order_or_zero()).map(|i| cycle[i % 4]).collect();
        self.compose(&d)
    }
}

fn exps_to_indices(e: &[u8]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, &k) in e.iter().enumerate() {
        for _ in 0..k {
            out.push(i);
        }
    }
    out
}

impl From<f64> for Jet {
    fn from(v: f64) -> Jet {
        Jet::constant(v)
    }
}

macro_rules! bin_op {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                self.$m(&rhs)
            }
        }
        impl $tr<f64> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: f64) -> Jet {
                self.$m(&Jet::constant(rhs))
            }
        }
        impl $tr<f64> for Jet {
            type Output = Jet;
            fn $m(self, rhs: f64) -> Jet {
                (&self).$m(&Jet::constant(rhs))
            }
        }
    };
}

bin_op!(Add, add, |a, b| a.add_impl(b, 1.0));
bin_op!(Sub, sub, |a, b| a.add_impl(b, -1.0));
bin_op!(Mul, mul, |a, b| a.mul_impl(b));
bin_op!(Div, div, |a, b| if b.is_constant() {
    a.clone().scale(1.0 / b.value())
} else {
    a.mul_impl(&b.recip())
});

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.clone().scale(-1.0)
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        if rhs.is_constant() {
            self.c[0] += rhs.c[0];
        } else if self.basis.is_some() && self.order <= rhs.order {
            for (x, y) in self.c.iter_mut().zip(&rhs.c) {
                *x += y;
            }
        } else {
            *self = self.add_impl(rhs, 1.0);
        }
    }
}

impl AddAssign<Jet> for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        *self += &rhs;
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        *self = self.add_impl(rhs, -1.0);
    }
}

impl SubAssign<Jet> for Jet {
    fn sub_assign(&mut self, rhs: Jet) {
        *self -= &rhs;
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, rhs: f64) {
        for x in &mut self.c {
            *x *= rhs;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn basis_sizes_match_binomials() {
        let b = JetBasis::get(4);
        assert_eq!(b.len(0), 1);
        assert_eq!(b.len(1), 5);
        assert_eq!(b.len(2), 15);
        assert_eq!(b.len(3), 35);
        assert_eq!(b.len(4), 70);
    }

    #[test]
    fn product_of_coordinates() {
        let x = Jet::seed(&[0.3, -0.7, 1.1], 3);
        let f = &(&x[0] * &x[1]) * &x[2];
        assert!(close(f.value(), 0.3 * -0.7 * 1.1, 1e-15));
        assert!(close(f.derivative(&[0]).unwrap(), -0.7 * 1.1, 1e-15));
        assert!(close(f.derivative(&[0, 1]).unwrap(), 1.1, 1e-15));
        assert!(close(f.derivative(&[2, 0, 1]).unwrap(), 1.0, 1e-15));
        assert_eq!(f.derivative(&[0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn rational_function_against_closed_form() {
        // f(x, y) = 1 / (1 + x^2 + y^2)
        let (x0, y0) = (0.4, -0.2);
        let x = Jet::seed(&[x0, y0], 4);
        let r2 = &x[0] * &x[0] + &x[1] * &x[1];
        let f = (r2 + 1.0).recip();
        let s = 1.0 + x0 * x0 + y0 * y0;
        assert!(close(f.value(), 1.0 / s, 1e-14));
        assert!(close(f.derivative(&[0]).unwrap(), -2.0 * x0 / (s * s), 1e-14));
        let fxx = -2.0 / (s * s) + 8.0 * x0 * x0 / (s * s * s);
        assert!(close(f.derivative(&[0, 0]).unwrap(), fxx, 1e-13));
        let fxy = 8.0 * x0 * y0 / (s * s * s);
        assert!(close(f.derivative(&[0, 1]).unwrap(), fxy, 1e-13));
        // fxx = -2 s^-2 + 8 x^2 s^-3, differentiated in y
        let fxxy = 8.0 * y0 / s.powi(3) - 48.0 * x0 * x0 * y0 / s.powi(4);
        assert!(close(f.derivative(&[0, 0, 1]).unwrap(), fxxy, 1e-12));
    }

    #[test]
    fn unary_functions_match_one_variable_derivatives() {
        let x = Jet::variable(0.8, 0, 1, 4);
        let e = x.exp();
        for k in 0..=4 {
            let idx = vec![0; k];
            assert!(close(e.derivative(&idx).unwrap(), 0.8f64.exp(), 1e-14));
        }
        let l = x.ln();
        let expect = [0.8f64.ln(), 1.0 / 0.8, -1.0 / 0.64, 2.0 / 0.512, -6.0 / 0.4096];
        for (k, v) in expect.iter().enumerate() {
            assert!(close(l.derivative(&vec![0; k]).unwrap(), *v, 1e-13));
        }
        let s = x.sqrt();
        let expect = [
            0.8f64.sqrt(),
            0.5 * 0.8f64.powf(-0.5),
            -0.25 * 0.8f64.powf(-1.5),
            0.375 * 0.8f64.powf(-2.5),
            -0.9375 * 0.8f64.powf(-3.5),
        ];
        for (k, v) in expect.iter().enumerate() {
            assert!(close(s.derivative(&vec![0; k]).unwrap(), *v, 1e-13));
        }
        let sc = &x.sin() * &x.sin() + &x.cos() * &x.cos();
        assert!(close(sc.value(), 1.0, 1e-15));
        for k in 1..=4 {
            assert!(sc.derivative(&vec![0; k]).unwrap().abs() < 1e-13);
        }
    }

    #[test]
    fn partial_commutes_with_products() {
        let x = Jet::seed(&[0.1, 0.2, 0.3, 0.4], 3);
        let f = (&x[0] * &x[1] + &x[2]).exp() * (&x[3] + 2.0).ln();
        let g = f.partial(2).unwrap();
        assert_eq!(g.order(), Some(2));
        for (i, j) in [(0, 1), (1, 3), (2, 2)] {
            let a = g.derivative(&[i, j]).unwrap();
            let b = f.derivative(&[2, i, j]).unwrap();
            assert!(close(a, b, 1e-13));
        }
        let h = f.partial(0).unwrap().partial(1).unwrap();
        assert!(close(h.value(), f.derivative(&[0, 1]).unwrap(), 1e-14));
    }

    #[test]
    fn mixed_orders_truncate_to_lower() {
        let a = Jet::variable(1.0, 0, 2, 4);
        let b = Jet::variable(2.0, 1, 2, 2);
        let c = &a * &b;
        assert_eq!(c.order(), Some(2));
        assert!(c.derivative(&[0, 0, 1]).is_err());
        let k = &Jet::constant(3.0) * &a;
        assert_eq!(k.order(), Some(4));
    }

    #[test]
    fn from_derivatives_round_trip() {
        let x = Jet::seed(&[0.5, -0.25, 0.75], 4);
        let f = (&x[0] * &x[1] - &x[2] * &x[2] * &x[0]).exp();
        let g = Jet::from_derivatives(3, 4, |idx| f.derivative(idx).unwrap());
        for (p, q) in f.coeffs().iter().zip(g.coeffs()) {
            assert!(close(*p, *q, 1e-13));
        }
    }

    #[test]
    fn derivative_beyond_order_is_reported() {
        let x = Jet::variable(1.0, 0, 2, 1);
        assert!(matches!(
            x.derivative(&[0, 0]),
            Err(Error::InsufficientJet { needed: 2, available: 1 })
        ));
        assert!(Jet::variable(1.0, 0, 2, 0).partial(0).is_err());
    }
}
