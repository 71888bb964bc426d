//! The extended operator
//!
//! ```text
//!        ( μ    0    λ_j  )
//! L  =   ( 0    μ    λ̄_j  )
//!        ( λ^i  λ̄^i  a^i_j )
//! ```
//!
//! acting on `R² × T_xM`, its products, minimal polynomial and projectors.
//! For solutions of the `B = -1` system, polynomials of `L` are again of
//! this form and give new solutions. Use [`normalize_b`] first for other `B`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::chart::ChartPoint;
use crate::error::{Error, Result};
use crate::geometry::{covariant_derivative, christoffel, inverse_metric, j_bar, ScalarField, TensorField};
use crate::hproj::{lambda_scalar, HSolution};
use crate::jet::Jet;
use crate::prolongation::ProlongedState;
use crate::scalar::Scalar;
use crate::tensor::{mat_identity, mat_mul, Slot, TensorValue};

/// `J₂` on the first two coordinates of the extended space. With this sign
/// `diag(J₂, J)` commutes with `L`.
pub const J2: [[f64; 2]; 2] = [[0.0, 1.0], [-1.0, 0.0]];

/// Default clustering tolerance, applied after scaling `L` to unit norm.
pub const CLUSTER_TOL: f64 = 1e-6;

/// An extended operator at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedOperator {
    pub base_point: ChartPoint,
    /// Side length `2n + 2`.
    pub size: usize,
    /// Row-major entries.
    pub matrix: Vec<f64>,
}

/// `(a_{ij}, λ_i, μ)` read off an extended operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub a: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: f64,
}

/// Matrix of `L` from values or jets of `g`, `J`, `a`, `λ`, `μ`.
pub fn build_l_matrix<T: Scalar>(
    g: &TensorValue<T>,
    j: &TensorValue<T>,
    a: &TensorValue<T>,
    lambda: &TensorValue<T>,
    mu: &T,
) -> Result<Vec<T>> {
    let m = g.dim();
    let s = m + 2;
    let ginv = inverse_metric(g)?;
    let lb = j_bar(lambda, j);
    let raise = |v: &TensorValue<T>, i: usize| -> T {
        let mut acc = T::zero();
        for k in 0..m {
            acc = acc + ginv.get(&[i, k]).mul_ref(v.get(&[k]));
        }
        acc
    };
    let mut out = vec![T::zero(); s * s];
    out[0] = mu.clone();
    out[s + 1] = mu.clone();
    for jj in 0..m {
        out[2 + jj] = lambda.get(&[jj]).clone();
        out[s + 2 + jj] = lb.get(&[jj]).clone();
    }
    for i in 0..m {
        out[(2 + i) * s] = raise(lambda, i);
        out[(2 + i) * s + 1] = raise(&lb, i);
        for jj in 0..m {
            let mut acc = T::zero();
            for k in 0..m {
                acc = acc + ginv.get(&[i, k]).mul_ref(a.get(&[k, jj]));
            }
            out[(2 + i) * s + 2 + jj] = acc;
        }
    }
    Ok(out)
}

/// Read `(a_{ij}, λ_i, μ)` back from the blocks; `a` is lowered with `g`.
pub fn extract_triple<T: Scalar>(l: &[T], g: &TensorValue<T>) -> (TensorValue<T>, TensorValue<T>, T) {
    let m = g.dim();
    let s = m + 2;
    let a = TensorValue::from_fn(vec![Slot::Lower, Slot::Lower], m, |idx| {
        let mut acc = T::zero();
        for k in 0..m {
            acc = acc + g.get(&[idx[0], k]).mul_ref(&l[(2 + k) * s + 2 + idx[1]]);
        }
        acc
    });
    let lambda = TensorValue::covector((0..m).map(|jj| l[2 + jj].clone()).collect());
    (a, lambda, l[0].clone())
}

/// Apply a polynomial with ascending coefficients to a square matrix (Horner).
pub fn poly_apply<T: Scalar>(coeffs: &[f64], l: &[T], n: usize) -> Vec<T> {
    let id = mat_identity::<T>(n);
    let mut acc = vec![T::zero(); n * n];
    for c in coeffs.iter().rev() {
        acc = mat_mul(&acc, l, n);
        for (x, e) in acc.iter_mut().zip(&id) {
            *x = x.add_ref(&e.scale(*c));
        }
    }
    acc
}

impl ExtendedOperator {
    /// `L(a, λ, μ)` of a solution at `x`.
    pub fn build(g: &TensorField, j: &TensorField, sol: &HSolution, x: &ChartPoint) -> Result<Self> {
        let mu = sol
            .mu
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("extended operator needs mu".into()))?;
        let seeds = Jet::seed(&x.coords, 2);
        let gv = g(&seeds)?.values();
        let jv = j(&seeds)?.values();
        let a = (sol.a)(&seeds)?.values();
        let lam = (sol.lambda)(&seeds)?.values();
        let muv = mu(&seeds)?.value();
        Self::from_values(x.clone(), &gv, &jv, &a, &lam, muv)
    }

    pub fn from_values(
        base_point: ChartPoint,
        g: &TensorValue<f64>,
        j: &TensorValue<f64>,
        a: &TensorValue<f64>,
        lambda: &TensorValue<f64>,
        mu: f64,
    ) -> Result<Self> {
        let matrix = build_l_matrix(g, j, a, lambda, &mu)?;
        Ok(ExtendedOperator {
            base_point,
            size: g.dim() + 2,
            matrix,
        })
    }

    /// `L` of a transported state, with `g` and `J` evaluated at the state's point.
    pub fn from_state(g: &TensorValue<f64>, j: &TensorValue<f64>, s: &ProlongedState) -> Result<Self> {
        Self::from_values(
            s.point.clone(),
            g,
            j,
            &s.a_tensor(),
            &TensorValue::covector(s.lambda.clone()),
            s.mu,
        )
    }

    pub fn identity(base_point: ChartPoint, size: usize) -> Self {
        ExtendedOperator {
            base_point,
            size,
            matrix: mat_identity(size),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.size + j]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.size, self.size, &self.matrix)
    }

    pub fn norm(&self) -> f64 {
        self.matrix.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn triple(&self, g: &TensorValue<f64>) -> Triple {
        let (a, l, mu) = extract_triple(&self.matrix, g);
        Triple {
            a: a.into_comps(),
            lambda: l.into_comps(),
            mu,
        }
    }

    /// `max |ĝL - (ĝL)ᵀ|` with `ĝ = diag(1, 1, g)`.
    pub fn self_adjoint_residual(&self, g: &TensorValue<f64>) -> f64 {
        let s = self.size;
        let gh = |i: usize, k: usize| -> f64 {
            match (i < 2, k < 2) {
                (true, true) => f64::from(u8::from(i == k)),
                (false, false) => *g.get(&[i - 2, k - 2]),
                _ => 0.0,
            }
        };
        let mut gl = vec![0.0; s * s];
        for i in 0..s {
            for jj in 0..s {
                gl[i * s + jj] = (0..s).map(|k| gh(i, k) * self.get(k, jj)).sum();
            }
        }
        let mut worst: f64 = 0.0;
        for i in 0..s {
            for jj in 0..s {
                worst = worst.max((gl[i * s + jj] - gl[jj * s + i]).abs());
            }
        }
        worst
    }

    /// `max |ĴL - LĴ|` for `Ĵ = diag(J₂, J)` with the given 2x2 block.
    pub fn j_commutation_residual(&self, j: &TensorValue<f64>, j2: [[f64; 2]; 2]) -> f64 {
        let s = self.size;
        let jh = |i: usize, k: usize| -> f64 {
            match (i < 2, k < 2) {
                (true, true) => j2[i][k],
                (false, false) => *j.get(&[i - 2, k - 2]),
                _ => 0.0,
            }
        };
        let mut worst: f64 = 0.0;
        for i in 0..s {
            for jj in 0..s {
                let a: f64 = (0..s).map(|k| jh(i, k) * self.get(k, jj)).sum();
                let b: f64 = (0..s).map(|k| self.get(i, k) * jh(k, jj)).sum();
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    /// Eigenvalues as `(re, im)`, sorted by real then imaginary part.
    pub fn spectrum(&self) -> Vec<(f64, f64)> {
        let mut ev: Vec<(f64, f64)> = self
            .to_dmatrix()
            .complex_eigenvalues()
            .iter()
            .map(|c| (c.re, c.im))
            .collect();
        ev.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        ev
    }

    pub fn apply_poly(&self, coeffs: &[f64]) -> Self {
        ExtendedOperator {
            base_point: self.base_point.clone(),
            size: self.size,
            matrix: poly_apply(coeffs, &self.matrix, self.size),
        }
    }
}

/// Result of multiplying two extended operators.
#[derive(Debug, Clone, Serialize)]
pub struct ProductResult {
    pub operator: ExtendedOperator,
    /// Triple read off the product (meaningful when `closes`).
    pub triple: Triple,
    /// `max |μΛ_j + λ_k A^k_j - Mλ_j - a^k_j Λ_k|`
    pub commutation_residual: f64,
    /// `|λ^k Λ̄_k|`
    pub orthogonality_residual: f64,
    pub closes: bool,
}

/// `L1 · L2` with the closure conditions that make it an extended operator of a solution.
pub fn l_product(
    l1: &ExtendedOperator,
    l2: &ExtendedOperator,
    g: &TensorValue<f64>,
    tol: f64,
) -> Result<ProductResult> {
    if l1.base_point != l2.base_point || l1.size != l2.size {
        return Err(Error::InvalidInput("operators at different points".into()));
    }
    let s = l1.size;
    let m = s - 2;
    let matrix = mat_mul(&l1.matrix, &l2.matrix, s);
    let (mu, big_m) = (l1.get(0, 0), l2.get(0, 0));
    let mut comm: f64 = 0.0;
    for jj in 0..m {
        let mut lhs = mu * l2.get(0, 2 + jj);
        let mut rhs = big_m * l1.get(0, 2 + jj);
        for k in 0..m {
            lhs += l1.get(0, 2 + k) * l2.get(2 + k, 2 + jj);
            rhs += l1.get(2 + k, 2 + jj) * l2.get(0, 2 + k);
        }
        comm = comm.max((lhs - rhs).abs());
    }
    let orth: f64 = (0..m).map(|k| l1.get(2 + k, 0) * l2.get(1, 2 + k)).sum::<f64>().abs();
    let operator = ExtendedOperator {
        base_point: l1.base_point.clone(),
        size: s,
        matrix,
    };
    let triple = operator.triple(g);
    let scale = 1.0f64.max(l1.norm() * l2.norm());
    Ok(ProductResult {
        operator,
        triple,
        commutation_residual: comm,
        orthogonality_residual: orth,
        closes: comm <= tol * scale && orth <= tol * scale,
    })
}

/// A group of numerically equal eigenvalues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenCluster {
    pub re: f64,
    pub im: f64,
    /// Algebraic multiplicity.
    pub multiplicity: usize,
    /// Size of the largest Jordan block.
    pub index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimalPolynomial {
    /// Ascending coefficients, monic.
    pub coeffs: Vec<f64>,
    pub clusters: Vec<EigenCluster>,
    /// Set when two clusters are closer than ten times the tolerance.
    pub ambiguous: bool,
    /// Set when some cluster has a Jordan block of size > 1.
    pub defective: bool,
}

impl MinimalPolynomial {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Max coefficient difference, or infinity for different degrees.
    pub fn distance(&self, other: &MinimalPolynomial) -> f64 {
        if self.coeffs.len() != other.coeffs.len() {
            return f64::INFINITY;
        }
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn real_clusters(&self) -> impl Iterator<Item = &EigenCluster> {
        self.clusters.iter().filter(|c| c.im == 0.0)
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().filter(|s| **s > tol).count()
}

/// Cluster eigenvalues of `L / |L|` within `tol`, detect Jordan indices by rank
/// stabilisation, and return the monic real minimal polynomial.
pub fn minimal_poly(l: &ExtendedOperator, tol: f64) -> MinimalPolynomial {
    let s = l.size;
    let scale = l.norm().max(f64::MIN_POSITIVE);
    let ln = l.to_dmatrix() / scale;
    let ev: Vec<(f64, f64)> = ln.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
    // greedy single-linkage clustering in the complex plane
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    for e in ev {
        let hit = groups.iter().position(|g| {
            g.iter()
                .any(|p| ((p.0 - e.0).powi(2) + (p.1 - e.1).powi(2)).sqrt() <= tol)
        });
        match hit {
            Some(i) => groups[i].push(e),
            None => groups.push(vec![e]),
        }
    }
    let mut clusters: Vec<EigenCluster> = groups
        .iter()
        .map(|g| {
            let re = g.iter().map(|p| p.0).sum::<f64>() / g.len() as f64;
            let im = g.iter().map(|p| p.1).sum::<f64>() / g.len() as f64;
            let im = if im.abs() <= tol { 0.0 } else { im };
            EigenCluster {
                re,
                im,
                multiplicity: g.len(),
                index: 1,
            }
        })
        .collect();
    // Jordan index of real clusters (complex ones stay at 1; they do not occur for
    // self-adjoint operators and only feed the diagnostic)
    let rank_tol = (tol * 1e-2).max(1e-10);
    for c in clusters.iter_mut().filter(|c| c.im == 0.0) {
        let shifted = &ln - DMatrix::identity(s, s) * c.re;
        let mut power = shifted.clone();
        let mut prev = numerical_rank(&power, rank_tol);
        let mut k = 1;
        while k < c.multiplicity {
            power = &power * &shifted;
            let r = numerical_rank(&power, rank_tol);
            if r == prev {
                break;
            }
            prev = r;
            k += 1;
        }
        c.index = k;
    }
    let mut ambiguous = false;
    for (i, a) in clusters.iter().enumerate() {
        for b in &clusters[i + 1..] {
            if ((a.re - b.re).powi(2) + (a.im - b.im).powi(2)).sqrt() < 10.0 * tol {
                ambiguous = true;
            }
        }
    }
    let mut coeffs = vec![1.0];
    let mut out_clusters = Vec::new();
    for c in &clusters {
        let (re, im) = (c.re * scale, c.im * scale);
        if c.im < 0.0 {
            continue;
        }
        let factor = if c.im == 0.0 {
            vec![-re, 1.0]
        } else {
            vec![re * re + im * im, -2.0 * re, 1.0]
        };
        for _ in 0..c.index {
            coeffs = poly_mul(&coeffs, &factor);
        }
        out_clusters.push(EigenCluster { re, im, ..c.clone() });
        if c.im > 0.0 {
            out_clusters.push(EigenCluster { re, im: -im, ..c.clone() });
        }
    }
    out_clusters.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let defective = out_clusters.iter().any(|c| c.index > 1);
    MinimalPolynomial {
        coeffs,
        clusters: out_clusters,
        ambiguous,
        defective,
    }
}

/// Which real eigenvalue cluster the projector keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClusterChoice {
    Largest,
    /// The smallest real cluster not below this value (minus tolerance).
    AtLeast(f64),
    Nearest(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct Projector {
    pub operator: ExtendedOperator,
    /// Ascending coefficients of the polynomial `P` with `P(L)` the projector.
    pub polynomial: Vec<f64>,
    /// Eigenvalue sent to 1.
    pub theta: f64,
    /// `max |P² - P|`
    pub idempotency: f64,
}

/// Lagrange polynomial of `L` sending one real cluster to 1 and the others to 0.
pub fn make_projector(l: &ExtendedOperator, choice: ClusterChoice, tol: f64) -> Result<Projector> {
    let mp = minimal_poly(l, tol);
    if mp.clusters.len() < 2 {
        return Err(Error::NoProjector("only one eigenvalue cluster".into()));
    }
    if mp.ambiguous {
        return Err(Error::NoProjector("eigenvalue clusters too close to separate".into()));
    }
    if mp.defective {
        return Err(Error::NoProjector("operator is not diagonalizable".into()));
    }
    let scale = l.norm().max(1.0);
    let slack = tol * scale;
    let reals: Vec<f64> = mp.real_clusters().map(|c| c.re).collect();
    let theta = match choice {
        ClusterChoice::Largest => reals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ClusterChoice::AtLeast(v) => reals
            .iter()
            .cloned()
            .filter(|r| *r >= v - slack)
            .fold(f64::INFINITY, f64::min),
        ClusterChoice::Nearest(v) => reals
            .iter()
            .cloned()
            .min_by(|a, b| (a - v).abs().total_cmp(&(b - v).abs()))
            .unwrap_or(f64::NAN),
    };
    if !theta.is_finite() {
        return Err(Error::NoProjector("no real eigenvalue matches the choice".into()));
    }
    let mut poly = vec![1.0];
    for c in &mp.clusters {
        if c.im < 0.0 || (c.im == 0.0 && c.re == theta) {
            continue;
        }
        let (factor, at_theta) = if c.im == 0.0 {
            (vec![-c.re, 1.0], theta - c.re)
        } else {
            let q = c.re * c.re + c.im * c.im;
            (vec![q, -2.0 * c.re, 1.0], theta * theta - 2.0 * c.re * theta + q)
        };
        poly = poly_mul(&poly, &factor.iter().map(|v| v / at_theta).collect::<Vec<_>>());
    }
    let p = l.apply_poly(&poly);
    let p2 = mat_mul(&p.matrix, &p.matrix, p.size);
    let idempotency = p2
        .iter()
        .zip(&p.matrix)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let id = mat_identity::<f64>(p.size);
    let dist_id = p.matrix.iter().zip(&id).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if p.norm() < 0.5 || dist_id < 0.5 {
        return Err(Error::NoProjector("projector is trivial".into()));
    }
    Ok(Projector {
        operator: p,
        polynomial: poly,
        theta,
        idempotency,
    })
}

/// The solution whose extended operator is `P(L)` at every point, as jet fields.
pub fn polynomial_solution(
    g: TensorField,
    j: TensorField,
    sol: &HSolution,
    coeffs: Vec<f64>,
) -> Result<HSolution> {
    let mu = sol
        .mu
        .clone()
        .ok_or_else(|| Error::InvalidInput("polynomial solution needs mu".into()))?;
    let (a, lambda) = (sol.a.clone(), sol.lambda.clone());
    let coeffs = Arc::new(coeffs);
    let triple = {
        let g = g.clone();
        Arc::new(move |x: &[Jet]| -> Result<(TensorValue<Jet>, TensorValue<Jet>, Jet)> {
            let gv = g(x)?;
            let l = build_l_matrix(&gv, &j(x)?, &a(x)?, &lambda(x)?, &mu(x)?)?;
            let p = poly_apply(&coeffs, &l, gv.dim() + 2);
            Ok(extract_triple(&p, &gv))
        })
    };
    let af: TensorField = {
        let t = triple.clone();
        Arc::new(move |x: &[Jet]| Ok(t(x)?.0))
    };
    let lf: TensorField = {
        let t = triple.clone();
        Arc::new(move |x: &[Jet]| Ok(t(x)?.1))
    };
    let mf: ScalarField = {
        let t = triple.clone();
        Arc::new(move |x: &[Jet]| Ok(t(x)?.2))
    };
    let sf: ScalarField = Arc::new(move |x: &[Jet]| {
        let (a, _, _) = triple(x)?;
        lambda_scalar(&g(x)?, &a)
    });
    Ok(HSolution {
        a: af,
        lambda: lf,
        lambda_scalar: sf,
        mu: Some(mf),
    })
}

/// Rescale to `B = -1`: `g → -B g` and `(a, λ, μ) → (-B a, λ, -μ/B)`.
pub fn normalize_b(g: TensorField, sol: &HSolution, b: f64) -> Result<(TensorField, HSolution)> {
    if b >= 0.0 {
        return Err(Error::InvalidInput(format!("normalization needs B < 0, got {b}")));
    }
    let mu = sol
        .mu
        .clone()
        .ok_or_else(|| Error::InvalidInput("normalization needs mu".into()))?;
    let g2: TensorField = Arc::new(move |x: &[Jet]| Ok(g(x)?.scale(-b)));
    let a = sol.a.clone();
    let a2: TensorField = Arc::new(move |x: &[Jet]| Ok(a(x)?.scale(-b)));
    let mu2: ScalarField = Arc::new(move |x: &[Jet]| Ok(mu(x)?.scale(-1.0 / b)));
    Ok((
        g2,
        HSolution {
            a: a2,
            lambda: sol.lambda.clone(),
            lambda_scalar: sol.lambda_scalar.clone(),
            mu: Some(mu2),
        },
    ))
}

/// Which of the three possible shapes the spectrum of `a^i_j` has for a projector solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectorCase {
    /// `0 < μ < 1`: `{1 (2k), 0 (2n-2k-2), 1-μ (2)}`
    Interior,
    /// `μ = 1`: `{1 (2k), 0 (2n-2k)}`
    MuOne,
    /// `μ = 0`: `{1 (2k+2), 0 (2n-2k-2)}`
    MuZero,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenstructureReport {
    pub mu: f64,
    pub case: ProjectorCase,
    /// `(eigenvalue, multiplicity)` of `a^i_j`, ascending.
    pub eigenvalues: Vec<(f64, usize)>,
    pub mult_one: usize,
    pub mult_zero: usize,
    pub mult_other: usize,
    pub k: Option<usize>,
    /// Whether the multiplicities have the expected form for `case`.
    pub matches_case: bool,
    /// Largest principal angle between `span{λ^i, λ̄^i}` and the `(1-μ)`-eigenspace.
    pub lambda_span_angle: Option<f64>,
}

/// Spectrum of `a^i_j` for a projector solution (in the `B = -1` normalization).
pub fn eigenstructure_report(
    g: &TensorField,
    j: &TensorField,
    sol: &HSolution,
    x: &ChartPoint,
    tol: f64,
) -> Result<EigenstructureReport> {
    let mu_f = sol
        .mu
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("eigenstructure needs mu".into()))?;
    let seeds = Jet::seed(&x.coords, 2);
    let gv = g(&seeds)?.values();
    let jv = j(&seeds)?.values();
    let a = (sol.a)(&seeds)?.values();
    let lam = (sol.lambda)(&seeds)?.values();
    let mu = mu_f(&seeds)?.value();
    if mu < -tol || mu > 1.0 + tol {
        return Err(Error::InconsistentProjector { mu });
    }
    let m = gv.dim();
    // a^i_j is g-self-adjoint: use the symmetric form g^{-1/2} a g^{-1/2}
    let gm = DMatrix::from_row_slice(m, m, gv.comps());
    let ge = SymmetricEigen::new(gm.clone());
    if ge.eigenvalues.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidInput("eigenstructure needs a positive metric".into()));
    }
    let inv_sqrt = &ge.eigenvectors
        * DMatrix::from_diagonal(&ge.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * ge.eigenvectors.transpose();
    let am = DMatrix::from_row_slice(m, m, a.comps());
    let sym = &inv_sqrt * am * &inv_sqrt;
    let sym = (&sym + sym.transpose()) * 0.5;
    let se = SymmetricEigen::new(sym);
    let mut vals: Vec<f64> = se.eigenvalues.iter().cloned().collect();
    vals.sort_by(f64::total_cmp);
    let mut eigenvalues: Vec<(f64, usize)> = Vec::new();
    for v in vals {
        match eigenvalues.last_mut() {
            Some((c, k)) if (v - *c).abs() <= tol => {
                *c = (*c * *k as f64 + v) / (*k as f64 + 1.0);
                *k += 1;
            }
            _ => eigenvalues.push((v, 1)),
        }
    }
    let count = |t: f64| -> usize {
        eigenvalues
            .iter()
            .filter(|(v, _)| (v - t).abs() <= tol)
            .map(|(_, k)| k)
            .sum()
    };
    let (mult_one, mult_zero) = (count(1.0), count(0.0));
    let mult_other = m - mult_one - mult_zero;
    let n = m / 2;
    let (case, k, matches) = if mu.abs() <= tol {
        let k = mult_one.checked_sub(2).map(|v| v / 2);
        let ok = mult_one >= 2 && mult_one % 2 == 0 && mult_zero % 2 == 0 && mult_other == 0;
        (ProjectorCase::MuZero, k, ok)
    } else if (mu - 1.0).abs() <= tol {
        let ok = mult_one % 2 == 0 && mult_zero % 2 == 0 && mult_other == 0;
        (ProjectorCase::MuOne, Some(mult_one / 2), ok)
    } else {
        let other = count(1.0 - mu);
        let ok = other == 2
            && mult_other == 2
            && mult_one % 2 == 0
            && mult_one + mult_zero + 2 == m
            && mult_zero <= 2 * n - 2;
        (ProjectorCase::Interior, Some(mult_one / 2), ok)
    };
    let lambda_span_angle = if case == ProjectorCase::Interior {
        // eigenvectors of a^i_j are g^{-1/2} times those of the symmetric form
        let target = 1.0 - mu;
        let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
        for (i, v) in se.eigenvalues.iter().enumerate() {
            if (v - target).abs() <= tol {
                basis.push(&inv_sqrt * se.eigenvectors.column(i));
            }
        }
        let lb = j_bar(&lam, &jv);
        let ginv = inverse_metric(&gv)?;
        let raise = |t: &TensorValue<f64>| -> nalgebra::DVector<f64> {
            nalgebra::DVector::from_fn(m, |i, _| (0..m).map(|k| ginv.get(&[i, k]) * t.get(&[k])).sum())
        };
        Some(principal_angle(&[raise(&lam), raise(&lb)], &basis, &gm))
    } else {
        None
    };
    Ok(EigenstructureReport {
        mu,
        case,
        eigenvalues,
        mult_one,
        mult_zero,
        mult_other,
        k,
        matches_case: matches,
        lambda_span_angle,
    })
}

/// Largest principal angle of `span(u)` inside `span(w)`, in the inner product `gm`.
fn principal_angle(
    u: &[nalgebra::DVector<f64>],
    w: &[nalgebra::DVector<f64>],
    gm: &DMatrix<f64>,
) -> f64 {
    let ortho = |vs: &[nalgebra::DVector<f64>]| -> Vec<nalgebra::DVector<f64>> {
        let mut out: Vec<nalgebra::DVector<f64>> = Vec::new();
        for v in vs {
            let mut x = v.clone();
            for b in &out {
                let c = (b.transpose() * gm * &x)[(0, 0)];
                x -= b * c;
            }
            let nrm = (x.transpose() * gm * &x)[(0, 0)].max(0.0).sqrt();
            if nrm > 1e-12 {
                out.push(x / nrm);
            }
        }
        out
    };
    let (uo, wo) = (ortho(u), ortho(w));
    if uo.is_empty() {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for v in &uo {
        let proj2: f64 = wo
            .iter()
            .map(|b| (b.transpose() * gm * v)[(0, 0)].powi(2))
            .sum();
        worst = worst.max(proj2.min(1.0).sqrt().acos());
    }
    worst
}

/// `max |μ_{,ij} - 2 a_{ij} + 2 μ g_{ij}|`, the `B = -1` form of the `λ` equation.
pub fn hessian_mu_check(g: &TensorField, sol: &HSolution, x: &ChartPoint) -> Result<f64> {
    let mu_f = sol
        .mu
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("hessian check needs mu".into()))?;
    let seeds = Jet::seed(&x.coords, 4);
    let gj = g(&seeds)?;
    let gamma = christoffel(&gj)?;
    let mu = mu_f(&seeds)?;
    let m = gj.dim();
    let dmu = TensorValue::covector((0..m).map(|k| mu.partial(k)).collect::<Result<_>>()?);
    let hess = covariant_derivative(&dmu, &gamma)?.values();
    let a = (sol.a)(&seeds)?.values();
    let want = a.scale(2.0).sub(&gj.values().scale(2.0 * mu.value()))?;
    Ok(hess.sub(&want)?.max_abs())
}

/// Dump of an operator together with its spectral data.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorDump {
    pub base_point: ChartPoint,
    pub matrix: Vec<f64>,
    pub spectrum: Vec<(f64, f64)>,
    pub minimal_polynomial: Vec<f64>,
}

impl OperatorDump {
    pub fn new(l: &ExtendedOperator, tol: f64) -> Self {
        OperatorDump {
            base_point: l.base_point.clone(),
            matrix: l.matrix.clone(),
            spectrum: l.spectrum(),
            minimal_polynomial: minimal_poly(l, tol).coeffs,
        }
    }
}
