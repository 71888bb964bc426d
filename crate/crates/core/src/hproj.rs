//! The h-projective equation for a symmetric hermitian tensor `a`:
//!
//! `a_{ij,k} = λ_i g_{jk} + λ_j g_{ik} - λ̄_i J_{jk} - λ̄_j J_{ik}`,
//! with `λ̄_i = J^α_i λ_α`, `J_{jk} = g_{jα} J^α_k` and `λ = ¼ d(tr a)`.

use std::sync::Arc;

use serde::Serialize;

use crate::chart::ChartPoint;
use crate::error::{Error, Result};
use crate::geometry::{
    christoffel, covariant_derivative, inverse_metric, j_bar, jtensor_contract_leading, lower_j,
    metric_det, partials, riemann, ScalarField, TensorField,
};
use crate::jet::Jet;
use crate::scalar::Scalar;
use crate::tensor::{det_inverse, for_each_index, mat_mul, Slot, TensorValue};

use Slot::Lower;

/// A candidate solution: fields for `a`, `λ_i`, the scalar `λ = ¼ tr a`, and optionally `μ`.
#[derive(Clone)]
pub struct HSolution {
    pub a: TensorField,
    pub lambda: TensorField,
    pub lambda_scalar: ScalarField,
    pub mu: Option<ScalarField>,
}

impl std::fmt::Debug for HSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HSolution")
            .field("has_mu", &self.mu.is_some())
            .finish_non_exhaustive()
    }
}

impl HSolution {
    /// Solution data derived from `a` alone: `λ = ¼ tr(g⁻¹ a)`, `λ_i = ∂_i λ`.
    pub fn from_a(g: TensorField, a: TensorField) -> Self {
        let scalar: ScalarField = {
            let (g, a) = (g.clone(), a.clone());
            Arc::new(move |x: &[Jet]| lambda_scalar(&g(x)?, &a(x)?))
        };
        let lambda: TensorField = {
            let s = scalar.clone();
            Arc::new(move |x: &[Jet]| {
                let l = s(x)?;
                let comps = (0..x.len()).map(|k| l.partial(k)).collect::<Result<_>>()?;
                Ok(TensorValue::covector(comps))
            })
        };
        HSolution {
            a,
            lambda,
            lambda_scalar: scalar,
            mu: None,
        }
    }

    /// The solution built from a pair of metrics via [`a_from_pair`].
    pub fn from_pair(g: TensorField, gbar: TensorField) -> Self {
        let a: TensorField = {
            let (g, gbar) = (g.clone(), gbar.clone());
            Arc::new(move |x: &[Jet]| a_from_pair(&g(x)?, &gbar(x)?))
        };
        HSolution::from_a(g, a)
    }

    pub fn with_mu(mut self, mu: ScalarField) -> Self {
        self.mu = Some(mu);
        self
    }

    /// Attach `μ` fitted from `λ_{i,j} = μ g_{ij} + B a_{ij}` by taking traces.
    pub fn with_fitted_mu(self, g: TensorField, b: f64) -> Self {
        let (a, lambda) = (self.a.clone(), self.lambda.clone());
        let mu: ScalarField = Arc::new(move |x: &[Jet]| {
            let gv = g(x)?;
            let gamma = christoffel(&gv)?;
            let ginv = inverse_metric(&gv)?;
            let dl = covariant_derivative(&lambda(x)?, &gamma)?;
            let av = a(x)?;
            let m = gv.dim();
            let mut acc = Jet::zero();
            for i in 0..m {
                for j in 0..m {
                    let gij = ginv.get(&[i, j]);
                    acc += gij * &(dl.get(&[i, j]) - &av.get(&[i, j]).clone().scale(b));
                }
            }
            Ok(acc.scale(1.0 / m as f64))
        });
        self.with_mu(mu)
    }
}

/// `¼ g^{ij} a_{ij}`.
pub fn lambda_scalar<T: Scalar>(g: &TensorValue<T>, a: &TensorValue<T>) -> Result<T> {
    let ginv = inverse_metric(g)?;
    let m = g.dim();
    let mut acc = T::zero();
    for i in 0..m {
        for j in 0..m {
            acc = acc + ginv.get(&[i, j]).mul_ref(a.get(&[i, j]));
        }
    }
    Ok(acc.scale(0.25))
}

/// `a = (det ḡ / det g)^{1/(2(n+1))} g ḡ⁻¹ g`.
pub fn a_from_pair<T: Scalar>(g: &TensorValue<T>, gbar: &TensorValue<T>) -> Result<TensorValue<T>> {
    let m = g.dim();
    if gbar.dim() != m || g.rank() != 2 || gbar.rank() != 2 {
        return Err(Error::ShapeMismatch("a_from_pair needs two (0,2) tensors".into()));
    }
    let n = m / 2;
    let (dg, _) = det_inverse(g.comps(), m)?;
    let (dgb, gbinv) = det_inverse(gbar.comps(), m)?;
    let ratio = dgb / dg;
    if ratio.value() <= 0.0 {
        return Err(Error::InvalidInput(
            "metrics have determinants of opposite sign".into(),
        ));
    }
    let factor = ratio.powf(1.0 / (2.0 * (n as f64 + 1.0)));
    let prod = mat_mul(&mat_mul(g.comps(), &gbinv, m), g.comps(), m);
    let comps = prod.into_iter().map(|v| v.mul_ref(&factor)).collect();
    TensorValue::covariant2(m, comps)
}

/// Inverse of [`a_from_pair`]: `ḡ⁻¹ = (det a / det g)^{1/2} g⁻¹ a g⁻¹`.
pub fn gbar_from_a<T: Scalar>(g: &TensorValue<T>, a: &TensorValue<T>) -> Result<TensorValue<T>> {
    let m = g.dim();
    let (dg, ginv) = det_inverse(g.comps(), m)?;
    let (da, _) = det_inverse(a.comps(), m)?;
    let ratio = da / dg;
    if ratio.value() <= 0.0 {
        return Err(Error::InvalidInput(
            "a and g have determinants of opposite sign".into(),
        ));
    }
    let factor = ratio.powf(0.5);
    let gbinv: Vec<T> = mat_mul(&mat_mul(&ginv, a.comps(), m), &ginv, m)
        .into_iter()
        .map(|v| v.mul_ref(&factor))
        .collect();
    let (_, gb) = det_inverse(&gbinv, m)?;
    TensorValue::covariant2(m, gb)
}

/// Right-hand side of the equation: `λ_i g_{jk} + λ_j g_{ik} - λ̄_i J_{jk} - λ̄_j J_{ik}`.
pub fn hpr_rhs<T: Scalar>(
    g: &TensorValue<T>,
    j: &TensorValue<T>,
    lambda: &TensorValue<T>,
) -> TensorValue<T> {
    let m = g.dim();
    let jl = lower_j(g, j);
    let lb = j_bar(lambda, j);
    TensorValue::from_fn(vec![Lower, Lower, Lower], m, |i| {
        let (a, b, k) = (i[0], i[1], i[2]);
        lambda.get(&[a]).mul_ref(g.get(&[b, k]))
            + lambda.get(&[b]).mul_ref(g.get(&[a, k]))
            - lb.get(&[a]).mul_ref(jl.get(&[b, k]))
            - lb.get(&[b]).mul_ref(jl.get(&[a, k]))
    })
}

/// Residual tensor `a_{ij,k} - rhs` from jets of `g`, `J`, `a` (order ≥ 1) and `λ`.
pub fn hpr_residual_tensor(
    g: &TensorValue<Jet>,
    j: &TensorValue<Jet>,
    a: &TensorValue<Jet>,
    lambda: &TensorValue<Jet>,
) -> Result<TensorValue<f64>> {
    let gamma = christoffel(g)?;
    let na = covariant_derivative(a, &gamma)?.values();
    let rhs = hpr_rhs(&g.values(), &j.values(), &lambda.values());
    na.sub(&rhs)
}

/// Max-abs residual of the h-projective equation at `x`.
pub fn hpr_residual(
    g: &TensorField,
    j: &TensorField,
    sol: &HSolution,
    x: &ChartPoint,
) -> Result<f64> {
    let seeds = Jet::seed(&x.coords, 2);
    let r = hpr_residual_tensor(&g(&seeds)?, &j(&seeds)?, &(sol.a)(&seeds)?, &(sol.lambda)(&seeds)?)?;
    Ok(r.max_abs())
}

/// `λ` from `∇a` by least squares over all components of the equation.
///
/// Returns the fitted covector and the max-abs residual of the fit.
pub fn lambda_least_squares(
    nabla_a: &TensorValue<f64>,
    g: &TensorValue<f64>,
    j: &TensorValue<f64>,
) -> Result<(Vec<f64>, f64)> {
    let m = g.dim();
    let rows = m * m * m;
    // columns: response of the right-hand side to unit covectors
    let mut design = nalgebra::DMatrix::<f64>::zeros(rows, m);
    for c in 0..m {
        let mut e = vec![0.0; m];
        e[c] = 1.0;
        let r = hpr_rhs(g, j, &TensorValue::covector(e));
        for (row, v) in r.comps().iter().enumerate() {
            design[(row, c)] = *v;
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(nabla_a.comps());
    let svd = design.clone().svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let res = (&design * &sol - rhs).amax();
    Ok((sol.iter().cloned().collect(), res))
}

/// Max-abs of the symmetrised covariant derivative of `λ̄_i`.
pub fn killing_residual(
    g: &TensorField,
    j: &TensorField,
    sol: &HSolution,
    x: &ChartPoint,
) -> Result<f64> {
    let seeds = Jet::seed(&x.coords, 2);
    let gv = g(&seeds)?;
    let jv = j(&seeds)?;
    let lb = j_bar(&(sol.lambda)(&seeds)?, &jv);
    let gamma = christoffel(&gv)?;
    let d = covariant_derivative(&lb, &gamma)?.values();
    let m = gv.dim();
    let mut worst: f64 = 0.0;
    for_each_index(2, m, |i| {
        worst = worst.max((d.get(&[i[0], i[1]]) + d.get(&[i[1], i[0]])).abs());
    });
    Ok(worst)
}

/// Holomorphic vector field on `CP(n)` generated by `X ∈ gl(n+1, C)`, in affine chart `k`.
///
/// Returned as real components `(u_{x1}, u_{y1}, ...)`.
pub fn projective_vector_field(
    n: usize,
    chart: usize,
    x_mat: &crate::models::ComplexMatrix,
    coords: &[Jet],
) -> Result<Vec<Jet>> {
    use crate::models::{affine_lift, CJet};
    if x_mat.size() != n + 1 || coords.len() != 2 * n {
        return Err(Error::ShapeMismatch("projective vector field sizes".into()));
    }
    let w = affine_lift(n, chart, coords);
    let xw: Vec<CJet> = (0..=n)
        .map(|i| {
            let mut acc = CJet::constant(0.0, 0.0);
            for (jj, wj) in w.iter().enumerate() {
                acc = acc.add(&wj.mul_c(x_mat.get(i, jj)));
            }
            acc
        })
        .collect();
    let mut out = Vec::with_capacity(2 * n);
    for (slot, ws) in w.iter().enumerate() {
        if slot == chart {
            continue;
        }
        let u = xw[slot].sub(&ws.mul(&xw[chart]));
        out.push(u.re);
        out.push(u.im);
    }
    Ok(out)
}

/// Lie derivative `(L_u g)_{ij} = u^k ∂_k g_{ij} + g_{kj} ∂_i u^k + g_{ik} ∂_j u^k`.
pub fn lie_derivative_metric(g: &TensorValue<Jet>, u: &[Jet]) -> Result<TensorValue<Jet>> {
    let m = g.dim();
    let dg = partials(g)?;
    let du: Vec<Vec<Jet>> = u
        .iter()
        .map(|c| (0..m).map(|k| c.partial(k)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(TensorValue::from_fn(vec![Lower, Lower], m, |i| {
        let (a, b) = (i[0], i[1]);
        let mut acc = Jet::zero();
        for k in 0..m {
            acc += &u[k] * dg.get(&[a, b, k]);
            acc += g.get(&[k, b]) * &du[k][a];
            acc += g.get(&[a, k]) * &du[k][b];
        }
        acc
    }))
}

/// Infinitesimal solution `a_u = L_u g - tr(g⁻¹ L_u g) / (2(n+1)) g` from a projective
/// vector field in affine chart `chart` of a projective model.
pub fn psi_infinitesimal(
    g: TensorField,
    n: usize,
    chart: usize,
    x_mat: crate::models::ComplexMatrix,
) -> TensorField {
    Arc::new(move |x: &[Jet]| {
        let gv = g(x)?;
        let u = projective_vector_field(n, chart, &x_mat, x)?;
        let lg = lie_derivative_metric(&gv, &u)?;
        let ginv = inverse_metric(&gv)?;
        let m = gv.dim();
        let mut tr = Jet::zero();
        for i in 0..m {
            for j in 0..m {
                tr += ginv.get(&[i, j]) * lg.get(&[i, j]);
            }
        }
        let c = tr.scale(1.0 / (2.0 * (n as f64 + 1.0)));
        lg.sub(&gv.scale_by(&c))
    })
}

/// `a_{iα} R^α_{jkl} + a_{jα} R^α_{ikl}`.
pub fn curvature_lhs<T: Scalar>(a: &TensorValue<T>, r: &TensorValue<T>) -> TensorValue<T> {
    let m = a.dim();
    TensorValue::from_fn(vec![Lower, Lower, Lower, Lower], m, |i| {
        let (ii, jj, k, l) = (i[0], i[1], i[2], i[3]);
        let mut acc = T::zero();
        for al in 0..m {
            acc = acc + a.get(&[ii, al]).mul_ref(r.get(&[al, jj, k, l]));
            acc = acc + a.get(&[jj, al]).mul_ref(r.get(&[al, ii, k, l]));
        }
        acc
    })
}

/// `𝒥^{ī j̄}_{ij} (h_{l ī} g_{j̄ k} + h_{l j̄} g_{ī k} - h_{k ī} g_{j̄ l} - h_{k j̄} g_{ī l})`
/// for a (0,2) tensor `h`.
pub fn curvature_rhs<T: Scalar>(
    h: &TensorValue<T>,
    g: &TensorValue<T>,
    j: &TensorValue<T>,
) -> Result<TensorValue<T>> {
    let m = g.dim();
    let inner = TensorValue::from_fn(vec![Lower, Lower, Lower, Lower], m, |i| {
        let (a, b, k, l) = (i[0], i[1], i[2], i[3]);
        h.get(&[l, a]).mul_ref(g.get(&[b, k])) + h.get(&[l, b]).mul_ref(g.get(&[a, k]))
            - h.get(&[k, a]).mul_ref(g.get(&[b, l]))
            - h.get(&[k, b]).mul_ref(g.get(&[a, l]))
    });
    jtensor_contract_leading(&inner, j)
}

/// Residual of the integrability condition with `h = ∇λ`.
pub fn integrability_residual(
    g: &TensorField,
    j: &TensorField,
    sol: &HSolution,
    x: &ChartPoint,
) -> Result<f64> {
    let seeds = Jet::seed(&x.coords, 2);
    let gv = g(&seeds)?;
    let r = riemann(&gv)?.values();
    let gamma = christoffel(&gv)?;
    let dl = covariant_derivative(&(sol.lambda)(&seeds)?, &gamma)?.values();
    let av = (sol.a)(&seeds)?.values();
    let jv = j(&seeds)?.values();
    let lhs = curvature_lhs(&av, &r);
    let rhs = curvature_rhs(&dl, &gv.values(), &jv)?;
    Ok(lhs.sub(&rhs)?.max_abs())
}

/// Result of the trace-free commutator identity between two solutions.
#[derive(Debug, Clone, Serialize)]
pub struct CIdentityReport {
    /// max-abs of `c_{il} = a^α_i Λ_{α,l} - A^α_l λ_{α,i}` (trace-free parts)
    pub c_max: f64,
    /// max-abs of `2n c_{il} + (c_{jk} g^{jk}) g_{il}`
    pub endpoint_residual: f64,
    /// `a`, `A` and `g` are linearly dependent at the point
    pub hypothesis_violated: bool,
}

/// Evaluate the commutator identity for solutions `sa = (a, λ)` and `sb = (A, Λ)`.
pub fn c_identity_check(
    g: &TensorField,
    sa: &HSolution,
    sb: &HSolution,
    x: &ChartPoint,
) -> Result<CIdentityReport> {
    let seeds = Jet::seed(&x.coords, 2);
    let gj = g(&seeds)?;
    let gamma = christoffel(&gj)?;
    let gv = gj.values();
    let ginv = inverse_metric(&gv)?;
    let m = gv.dim();
    let n = m / 2;
    let trace_free = |t: &TensorValue<f64>| -> Result<TensorValue<f64>> {
        let mut tr = 0.0;
        for_each_index(2, m, |i| tr += ginv.get(i) * t.get(i));
        t.sub(&gv.scale(tr / m as f64))
    };
    let a = (sa.a)(&seeds)?.values();
    let big_a = (sb.a)(&seeds)?.values();
    let dl = covariant_derivative(&(sa.lambda)(&seeds)?, &gamma)?.values();
    let d_big_l = covariant_derivative(&(sb.lambda)(&seeds)?, &gamma)?.values();
    let a0 = trace_free(&a)?.raise(0, &ginv)?;
    let big_a0 = trace_free(&big_a)?.raise(0, &ginv)?;
    let dl0 = trace_free(&dl)?;
    let d_big_l0 = trace_free(&d_big_l)?;
    let c = TensorValue::<f64>::from_fn(vec![Lower, Lower], m, |i| {
        let (ii, l) = (i[0], i[1]);
        let mut acc = 0.0;
        for al in 0..m {
            acc += a0.get(&[al, ii]) * d_big_l0.get(&[al, l]);
            acc -= big_a0.get(&[al, l]) * dl0.get(&[al, ii]);
        }
        acc
    });
    let mut tr = 0.0;
    for_each_index(2, m, |i| tr += ginv.get(i) * c.get(i));
    let endpoint = c.scale(2.0 * n as f64).add(&gv.scale(tr))?.max_abs();

    let stack = nalgebra::DMatrix::from_fn(3, m * m, |r, k| match r {
        0 => a.comps()[k],
        1 => big_a.comps()[k],
        _ => gv.comps()[k],
    });
    let sv = stack.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    Ok(CIdentityReport {
        c_max: c.max_abs(),
        endpoint_residual: endpoint,
        hypothesis_violated: smax == 0.0 || smin / smax < 1e-8,
    })
}

/// Metric signature `(p, q)` from eigenvalue signs.
pub fn signature(g: &TensorValue<f64>) -> Result<(usize, usize)> {
    let m = g.dim();
    let mat = nalgebra::DMatrix::from_row_slice(m, m, g.comps());
    let sym = (&mat + mat.transpose()) * 0.5;
    let ev = sym.symmetric_eigenvalues();
    let scale = ev.amax();
    let mut p = 0;
    let mut q = 0;
    for v in ev.iter() {
        if v.abs() <= 1e-12 * scale {
            return Err(Error::SingularMetric {
                det: 0.0,
                threshold: 1e-12 * scale,
            });
        }
        if *v > 0.0 {
            p += 1;
        } else {
            q += 1;
        }
    }
    Ok((p, q))
}

/// Signed determinant ratio `det ḡ / det g` at a point; handy for diagnostics.
pub fn det_ratio(g: &TensorValue<f64>, gbar: &TensorValue<f64>) -> Result<f64> {
    Ok(metric_det(gbar)? / metric_det(g)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ComplexMatrix, KahlerModel};

    fn pair() -> (KahlerModel, KahlerModel) {
        let fs = KahlerModel::fubini_study(2).unwrap();
        let pb = KahlerModel::pullback(2, ComplexMatrix::diagonal(&[2.0, 1.0, 1.0])).unwrap();
        (fs, pb)
    }

    #[test]
    fn pair_solves_equation_and_integrability() {
        let (fs, pb) = pair();
        let g = fs.default_metric_field();
        let sol = HSolution::from_pair(g.clone(), pb.default_metric_field());
        let j = fs.j_field();
        for p in fs.sample_points(7, 6, 1.2) {
            let r = hpr_residual(&g, &j, &sol, &p).unwrap();
            assert!(r < 1e-10, "hpr residual {r}");
            let k = killing_residual(&g, &j, &sol, &p).unwrap();
            assert!(k < 1e-10, "killing residual {k}");
            let i = integrability_residual(&g, &j, &sol, &p).unwrap();
            assert!(i < 1e-10, "integrability residual {i}");
        }
    }

    #[test]
    fn perturbed_metric_fails_equation() {
        let (fs, pb) = pair();
        let g = fs.default_metric_field();
        let pbf = pb.default_metric_field();
        let bumped: TensorField = Arc::new(move |x: &[Jet]| {
            let mut t = pbf(x)?;
            let bump = (&x[0] * &x[0]).scale(0.1) + 1.0;
            let v = t.get(&[0, 0]) * &bump;
            t.set(&[0, 0], v.clone());
            t.set(&[1, 1], t.get(&[1, 1]) * &bump);
            Ok(t)
        });
        let sol = HSolution::from_pair(g.clone(), bumped);
        let p = ChartPoint::new("affine0", vec![0.3, 0.1, -0.2, 0.4]);
        let r = hpr_residual(&g, &fs.j_field(), &sol, &p).unwrap();
        assert!(r > 1e-3, "residual {r}");
    }

    #[test]
    fn gbar_round_trip() {
        let (fs, pb) = pair();
        let p = ChartPoint::new("affine0", vec![0.3, -0.5, 0.2, 0.7]);
        let g = fs.metric_value(&p).unwrap();
        let gb = pb.metric_value(&p).unwrap();
        let a = a_from_pair(&g, &gb).unwrap();
        let back = gbar_from_a(&g, &a).unwrap();
        assert!(back.sub(&gb).unwrap().max_abs() < 1e-12 * gb.max_abs());
    }

    #[test]
    fn psi_of_non_unitary_generator_solves_equation() {
        let fs = KahlerModel::fubini_study(2).unwrap();
        let g = fs.default_metric_field();
        let x = ComplexMatrix::new(
            3,
            vec![
                (1.0, 0.0), (0.3, 0.2), (0.0, 0.0),
                (0.3, -0.2), (0.0, 0.0), (0.5, 0.0),
                (0.0, 0.0), (0.5, 0.0), (-1.0, 0.0),
            ],
        )
        .unwrap();
        let a = psi_infinitesimal(g.clone(), 2, 0, x);
        let sol = HSolution::from_a(g.clone(), a);
        for p in fs.sample_points(17, 4, 1.0) {
            let r = hpr_residual(&g, &fs.j_field(), &sol, &p).unwrap();
            assert!(r < 1e-10, "{r}");
        }
    }

    #[test]
    fn commutator_identity_on_pair_and_trivial_solution() {
        let (fs, pb) = pair();
        let g = fs.default_metric_field();
        let sa = HSolution::from_pair(g.clone(), pb.default_metric_field());
        let other = KahlerModel::pullback(2, ComplexMatrix::diagonal(&[1.0, 1.0, 3.0])).unwrap();
        let sb = HSolution::from_pair(g.clone(), other.default_metric_field());
        let p = ChartPoint::new("affine0", vec![0.2, 0.1, -0.3, 0.5]);
        let r = c_identity_check(&g, &sa, &sb, &p).unwrap();
        assert!(r.c_max < 1e-10 && r.endpoint_residual < 1e-10, "{r:?}");
        assert!(!r.hypothesis_violated);
        let trivial = HSolution::from_a(g.clone(), g.clone());
        let same = c_identity_check(&g, &sa, &trivial, &p).unwrap();
        assert!(same.hypothesis_violated);
    }

    #[test]
    fn least_squares_lambda_matches_trace_derivative() {
        let (fs, pb) = pair();
        let g = fs.default_metric_field();
        let sol = HSolution::from_pair(g.clone(), pb.default_metric_field());
        let p = ChartPoint::new("affine0", vec![0.4, -0.1, 0.3, 0.2]);
        let seeds = Jet::seed(&p.coords, 2);
        let gj = g(&seeds).unwrap();
        let na = covariant_derivative(&(sol.a)(&seeds).unwrap(), &christoffel(&gj).unwrap())
            .unwrap()
            .values();
        let (l, res) = lambda_least_squares(&na, &gj.values(), &fs.j_value()).unwrap();
        assert!(res < 1e-10);
        let want = (sol.lambda)(&seeds).unwrap().values();
        for (a, b) in l.iter().zip(want.comps()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn signature_of_indefinite_flat_metric() {
        let m = KahlerModel::flat_with_signs(vec![1.0, -1.0]).unwrap();
        let g = m.metric_value(&ChartPoint::new("affine", vec![0.0; 4])).unwrap();
        assert_eq!(signature(&g).unwrap(), (2, 2));
    }
}
