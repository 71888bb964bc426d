//! Levi-Civita connection, curvature and Kähler structure checks on jets.
//!
//! Index conventions: `Γ^i_{jk}` is stored with slots (upper, lower, lower);
//! `R^a_{bcd} = ∂_c Γ^a_{db} - ∂_d Γ^a_{cb} + Γ^a_{ce} Γ^e_{db} - Γ^a_{de} Γ^e_{cb}`,
//! so `R(X, Y) Z = [∇_X, ∇_Y] Z - ∇_{[X,Y]} Z` has components
//! `R^a_{bcd} Z^b X^c Y^d`. Covariant derivatives append the new index last.

use std::sync::Arc;

use serde::Serialize;

use crate::chart::ChartPoint;
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::scalar::Scalar;
use crate::tensor::{det_inverse, for_each_index, Slot, TensorValue};

/// A tensor field evaluated on coordinate jets.
pub type TensorField = Arc<dyn Fn(&[Jet]) -> Result<TensorValue<Jet>> + Send + Sync>;

/// A scalar field evaluated on coordinate jets.
pub type ScalarField = Arc<dyn Fn(&[Jet]) -> Result<Jet> + Send + Sync>;

use Slot::{Lower, Upper};

/// Coordinate partial derivatives; the derivative index is appended last.
pub fn partials(t: &TensorValue<Jet>) -> Result<TensorValue<Jet>> {
    let m = t.dim();
    let mut variance = t.variance().to_vec();
    variance.push(Lower);
    let mut comps = Vec::with_capacity(t.comps().len() * m);
    for c in t.comps() {
        for k in 0..m {
            comps.push(c.partial(k)?);
        }
    }
    TensorValue::new(variance, m, comps)
}

/// `g^{ij}` from `g_{ij}`, with the singularity check of [`det_inverse`].
pub fn inverse_metric<T: Scalar>(g: &TensorValue<T>) -> Result<TensorValue<T>> {
    if g.variance() != [Lower, Lower] {
        return Err(Error::ShapeMismatch("metric must be a (0,2) tensor".into()));
    }
    let (_, inv) = det_inverse(g.comps(), g.dim())?;
    TensorValue::new(vec![Upper, Upper], g.dim(), inv)
}

pub fn metric_det<T: Scalar>(g: &TensorValue<T>) -> Result<T> {
    det_inverse(g.comps(), g.dim()).map(|(d, _)| d)
}

pub fn christoffel(g: &TensorValue<Jet>) -> Result<TensorValue<Jet>> {
    let ginv = inverse_metric(g)?;
    christoffel_with_inverse(g, &ginv)
}

pub fn christoffel_with_inverse(
    g: &TensorValue<Jet>,
    ginv: &TensorValue<Jet>,
) -> Result<TensorValue<Jet>> {
    let m = g.dim();
    let dg = partials(g)?;
    // first kind: Γ_{l,jk} = ½(∂_j g_{lk} + ∂_k g_{lj} - ∂_l g_{jk})
    let first = TensorValue::from_fn(vec![Lower, Lower, Lower], m, |i| {
        let (l, j, k) = (i[0], i[1], i[2]);
        (dg.get(&[l, k, j]) + dg.get(&[l, j, k]) - dg.get(&[j, k, l])).scale(0.5)
    });
    Ok(TensorValue::from_fn(vec![Upper, Lower, Lower], m, |idx| {
        let mut acc = Jet::zero();
        for l in 0..m {
            acc += ginv.get(&[idx[0], l]) * first.get(&[l, idx[1], idx[2]]);
        }
        acc
    }))
}

pub fn riemann(g: &TensorValue<Jet>) -> Result<TensorValue<Jet>> {
    riemann_from_christoffel(&christoffel(g)?)
}

pub fn riemann_from_christoffel(gamma: &TensorValue<Jet>) -> Result<TensorValue<Jet>> {
    let m = gamma.dim();
    let dgam = partials(gamma)?;
    Ok(TensorValue::from_fn(vec![Upper, Lower, Lower, Lower], m, |i| {
        let (a, b, c, d) = (i[0], i[1], i[2], i[3]);
        let mut acc = dgam.get(&[a, d, b, c]) - dgam.get(&[a, c, b, d]);
        for e in 0..m {
            acc += gamma.get(&[a, c, e]) * gamma.get(&[e, d, b]);
            acc -= gamma.get(&[a, d, e]) * gamma.get(&[e, c, b]);
        }
        acc
    }))
}

/// Christoffel symbols `Γ^a_{bc}` as values, from a metric jet of order at least 1.
///
/// Cheaper than [`christoffel`] when only values are needed.
pub fn christoffel_values(g: &TensorValue<Jet>) -> Result<TensorValue<f64>> {
    let m = g.dim();
    let gv = g.values();
    let ginv = inverse_metric(&gv)?;
    let mut dg = vec![0.0; m * m * m];
    for i in 0..m {
        for j in i..m {
            let e = g.get(&[i, j]);
            for k in 0..m {
                let d = e.derivative(&[k])?;
                dg[(i * m + j) * m + k] = d;
                dg[(j * m + i) * m + k] = d;
            }
        }
    }
    // Γ_{dbc} = ½ (∂_b g_{dc} + ∂_c g_{db} - ∂_d g_{bc})
    let mut low = vec![0.0; m * m * m];
    for d in 0..m {
        for b in 0..m {
            for c in b..m {
                let v = 0.5 * (dg[(d * m + c) * m + b] + dg[(d * m + b) * m + c] - dg[(b * m + c) * m + d]);
                low[(d * m + b) * m + c] = v;
                low[(d * m + c) * m + b] = v;
            }
        }
    }
    let mut gamma = vec![0.0; m * m * m];
    for a in 0..m {
        for d in 0..m {
            let gi = ginv.comps()[a * m + d];
            if gi == 0.0 {
                continue;
            }
            for bc in 0..m * m {
                gamma[a * m * m + bc] += gi * low[d * m * m + bc];
            }
        }
    }
    TensorValue::new(vec![Upper, Lower, Lower], m, gamma)
}

/// `∇T`, with the derivative index appended as the last slot.
pub fn covariant_derivative(
    t: &TensorValue<Jet>,
    gamma: &TensorValue<Jet>,
) -> Result<TensorValue<Jet>> {
    let m = t.dim();
    if gamma.dim() != m {
        return Err(Error::ShapeMismatch("connection dimension".into()));
    }
    let r = t.rank();
    let dt = partials(t)?;
    let variance = dt.variance().to_vec();
    let mut src = vec![0usize; r];
    Ok(TensorValue::from_fn(variance, m, |idx| {
        let k = idx[r];
        let mut acc = dt.get(idx).clone();
        for slot in 0..r {
            src.copy_from_slice(&idx[..r]);
            for s in 0..m {
                src[slot] = s;
                match t.variance()[slot] {
                    Upper => acc += gamma.get(&[idx[slot], k, s]) * t.get(&src),
                    Lower => acc -= gamma.get(&[s, k, idx[slot]]) * t.get(&src),
                }
            }
        }
        acc
    }))
}

/// `J_{jk} = g_{jα} J^α_k`.
pub fn lower_j<T: Scalar>(g: &TensorValue<T>, j: &TensorValue<T>) -> TensorValue<T> {
    let m = g.dim();
    TensorValue::from_fn(vec![Lower, Lower], m, |i| {
        let mut acc = T::zero();
        for a in 0..m {
            acc = acc + g.get(&[i[0], a]).mul_ref(j.get(&[a, i[1]]));
        }
        acc
    })
}

/// `λ̄_i = J^α_i λ_α`.
pub fn j_bar<T: Scalar>(lambda: &TensorValue<T>, j: &TensorValue<T>) -> TensorValue<T> {
    let m = lambda.dim();
    TensorValue::from_fn(vec![Lower], m, |i| {
        let mut acc = T::zero();
        for a in 0..m {
            acc = acc + j.get(&[a, i[0]]).mul_ref(lambda.get(&[a]));
        }
        acc
    })
}

/// `T_{ij} + J^α_i J^β_j T_{αβ}`.
pub fn jtensor_contract<T: Scalar>(t: &TensorValue<T>, j: &TensorValue<T>) -> Result<TensorValue<T>> {
    if t.variance() != [Lower, Lower] {
        return Err(Error::ShapeMismatch("jtensor_contract needs a (0,2) tensor".into()));
    }
    let tj = jj_conjugate(t, j);
    t.add(&tj)
}

fn jj_conjugate<T: Scalar>(t: &TensorValue<T>, j: &TensorValue<T>) -> TensorValue<T> {
    let m = t.dim();
    TensorValue::from_fn(vec![Lower, Lower], m, |i| {
        let mut acc = T::zero();
        for a in 0..m {
            let ja = j.get(&[a, i[0]]);
            if ja.is_zero() {
                continue;
            }
            for b in 0..m {
                let jb = j.get(&[b, i[1]]);
                if jb.is_zero() {
                    continue;
                }
                acc = acc + ja.mul_ref(jb).mul_ref(t.get(&[a, b]));
            }
        }
        acc
    })
}

/// Projection of a (0,2) tensor onto symmetric J-invariant tensors:
/// `¼ (T_{ij} + T_{ji} + J^α_i J^β_j T_{αβ} + J^α_j J^β_i T_{αβ})`.
pub fn hermitize<T: Scalar>(t: &TensorValue<T>, j: &TensorValue<T>) -> Result<TensorValue<T>> {
    if t.variance() != [Lower, Lower] {
        return Err(Error::ShapeMismatch("hermitize needs a (0,2) tensor".into()));
    }
    let sym = t.add(&t.permute(&[1, 0])?)?;
    let both = jtensor_contract(&sym, j)?;
    Ok(both.scale(0.25))
}

/// Generalised contraction `𝒥^{αβ}_{ij}` acting on the first two slots of a tensor.
pub fn jtensor_contract_leading<T: Scalar>(
    t: &TensorValue<T>,
    j: &TensorValue<T>,
) -> Result<TensorValue<T>> {
    let m = t.dim();
    let r = t.rank();
    if r < 2 || t.variance()[0] != Lower || t.variance()[1] != Lower {
        return Err(Error::ShapeMismatch("leading slots must be lower".into()));
    }
    let mut src = vec![0usize; r];
    let out = TensorValue::from_fn(t.variance().to_vec(), m, |idx| {
        let mut acc = t.get(idx).clone();
        src.copy_from_slice(idx);
        for a in 0..m {
            let ja = j.get(&[a, idx[0]]);
            if ja.is_zero() {
                continue;
            }
            for b in 0..m {
                let jb = j.get(&[b, idx[1]]);
                if jb.is_zero() {
                    continue;
                }
                src[0] = a;
                src[1] = b;
                acc = acc + ja.mul_ref(jb).mul_ref(t.get(&src));
            }
        }
        acc
    });
    Ok(out)
}

/// Curvature tensor of constant holomorphic sectional curvature 1:
/// `¼(δ^α_k g_{jl} - δ^α_l g_{jk} + J^α_k J_{jl} - J^α_l J_{jk} + 2 J^α_j J_{kl})`.
pub fn model_curvature_tensor<T: Scalar>(g: &TensorValue<T>, j: &TensorValue<T>) -> TensorValue<T> {
    let m = g.dim();
    let jl = lower_j(g, j);
    TensorValue::from_fn(vec![Upper, Lower, Lower, Lower], m, |i| {
        let (a, jj, k, l) = (i[0], i[1], i[2], i[3]);
        let mut acc = T::zero();
        if a == k {
            acc = acc + g.get(&[jj, l]).clone();
        }
        if a == l {
            acc = acc - g.get(&[jj, k]).clone();
        }
        acc = acc + j.get(&[a, k]).mul_ref(jl.get(&[jj, l]));
        acc = acc - j.get(&[a, l]).mul_ref(jl.get(&[jj, k]));
        acc = acc + j.get(&[a, jj]).mul_ref(jl.get(&[k, l])).scale(2.0);
        acc.scale(0.25)
    })
}

/// `g(R(X, Y) Y, X) / (g(X,X) g(Y,Y) - g(X,Y)^2)`.
pub fn sectional_curvature(
    r: &TensorValue<f64>,
    g: &TensorValue<f64>,
    x: &[f64],
    y: &[f64],
) -> f64 {
    let m = g.dim();
    let gxy = |u: &[f64], v: &[f64]| {
        let mut s = 0.0;
        for i in 0..m {
            for k in 0..m {
                s += u[i] * g.get(&[i, k]) * v[k];
            }
        }
        s
    };
    let mut ryyx = vec![0.0; m];
    for_each_index(4, m, |i| {
        ryyx[i[0]] += r.get(i) * y[i[1]] * x[i[2]] * y[i[3]];
    });
    let num = gxy(&ryyx, x);
    num / (gxy(x, x) * gxy(y, y) - gxy(x, y).powi(2))
}

/// Sectional curvature of the plane spanned by `v` and `Jv`.
pub fn holomorphic_sectional_curvature(
    r: &TensorValue<f64>,
    g: &TensorValue<f64>,
    j: &TensorValue<f64>,
    v: &[f64],
) -> f64 {
    let m = g.dim();
    let jv: Vec<f64> = (0..m)
        .map(|i| (0..m).map(|k| j.get(&[i, k]) * v[k]).sum())
        .collect();
    sectional_curvature(r, g, v, &jv)
}

/// Metric jet at a point, with derivative accessors.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub point: ChartPoint,
    pub jet: TensorValue<Jet>,
}

impl MetricJet {
    pub fn evaluate(field: &TensorField, point: &ChartPoint, order: usize) -> Result<Self> {
        let x = Jet::seed(&point.coords, order);
        let jet = field(&x)?;
        Ok(MetricJet {
            point: point.clone(),
            jet,
        })
    }

    pub fn g(&self) -> TensorValue<f64> {
        self.jet.values()
    }

    /// Partial derivatives of order `k`, appended as trailing lower slots.
    pub fn derivatives(&self, k: usize) -> Result<TensorValue<f64>> {
        derivative_tensor(&self.jet, k)
    }

    pub fn dg(&self) -> Result<TensorValue<f64>> {
        self.derivatives(1)
    }

    pub fn d2g(&self) -> Result<TensorValue<f64>> {
        self.derivatives(2)
    }

    pub fn d3g(&self) -> Result<TensorValue<f64>> {
        self.derivatives(3)
    }
}

/// Complex structure jet at a point.
#[derive(Debug, Clone)]
pub struct ComplexStructureJet {
    pub point: ChartPoint,
    pub jet: TensorValue<Jet>,
}

impl ComplexStructureJet {
    pub fn evaluate(field: &TensorField, point: &ChartPoint, order: usize) -> Result<Self> {
        let x = Jet::seed(&point.coords, order);
        Ok(ComplexStructureJet {
            point: point.clone(),
            jet: field(&x)?,
        })
    }

    pub fn j(&self) -> TensorValue<f64> {
        self.jet.values()
    }
}

/// All `k`-th partial derivatives of a jet tensor as a numeric tensor.
pub fn derivative_tensor(t: &TensorValue<Jet>, k: usize) -> Result<TensorValue<f64>> {
    let m = t.dim();
    let r = t.rank();
    let mut variance = t.variance().to_vec();
    variance.extend(std::iter::repeat(Lower).take(k));
    let mut comps = Vec::with_capacity(t.comps().len() * m.pow(k as u32));
    let mut err = None;
    for c in t.comps() {
        for_each_index(k, m, |d| match c.derivative(d) {
            Ok(v) => comps.push(v),
            Err(e) => {
                err.get_or_insert(e);
                comps.push(f64::NAN);
            }
        });
    }
    if let Some(e) = err {
        return Err(e);
    }
    let _ = r;
    TensorValue::new(variance, m, comps)
}

/// Worst-case defects of the Kähler conditions over a point set.
#[derive(Debug, Clone, Serialize)]
pub struct KahlerReport {
    pub points: usize,
    /// `max |J² + Id|`
    pub j_squared: f64,
    /// `max |g(J·, J·) - g|`, relative to `max |g|`
    pub compatibility: f64,
    /// `max |∇J|`
    pub nabla_j: f64,
    /// `max |dΩ|` for `Ω_{ij} = g_{iα} J^α_j`
    pub d_omega: f64,
    pub worst_point: Option<Vec<f64>>,
}

impl KahlerReport {
    pub fn max_defect(&self) -> f64 {
        self.j_squared
            .max(self.compatibility)
            .max(self.nabla_j)
            .max(self.d_omega)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_defect() <= tol
    }
}

/// Pointwise Kähler defects of a metric and complex structure.
pub fn kahler_defects(g_field: &TensorField, j_field: &TensorField, x: &[f64]) -> Result<[f64; 4]> {
    let seeds = Jet::seed(x, 2);
    let g = g_field(&seeds)?;
    let j = j_field(&seeds)?;
    let m = g.dim();
    if j.dim() != m || j.variance() != [Upper, Lower] {
        return Err(Error::ShapeMismatch("J must be a (1,1) tensor of the metric's dimension".into()));
    }
    let gv = g.values();
    let jv = j.values();
    let gscale = gv.max_abs().max(f64::MIN_POSITIVE);

    let mut j2: f64 = 0.0;
    for_each_index(2, m, |i| {
        let mut s = if i[0] == i[1] { 1.0 } else { 0.0 };
        for a in 0..m {
            s += jv.get(&[i[0], a]) * jv.get(&[a, i[1]]);
        }
        j2 = j2.max(s.abs());
    });

    let conj = jj_conjugate(&gv, &jv);
    let compat = conj.sub(&gv)?.max_abs() / gscale;

    let gamma = christoffel(&g)?;
    let nabla_j = covariant_derivative(&j, &gamma)?.values().max_abs();

    let omega = lower_j(&g, &j);
    let domega = partials(&omega)?;
    let mut dw: f64 = 0.0;
    for_each_index(3, m, |i| {
        let (a, b, c) = (i[0], i[1], i[2]);
        let v = domega.get(&[b, c, a]).value()
            + domega.get(&[c, a, b]).value()
            + domega.get(&[a, b, c]).value();
        dw = dw.max(v.abs());
    });
    Ok([j2, compat, nabla_j, dw / gscale])
}

/// Checks `J² = -Id`, compatibility, `∇J = 0` and `dΩ = 0` at every point.
pub fn verify_kahler(
    g_field: &TensorField,
    j_field: &TensorField,
    points: &[ChartPoint],
) -> Result<KahlerReport> {
    let mut rep = KahlerReport {
        points: points.len(),
        j_squared: 0.0,
        compatibility: 0.0,
        nabla_j: 0.0,
        d_omega: 0.0,
        worst_point: None,
    };
    let mut worst = -1.0;
    for p in points {
        let d = kahler_defects(g_field, j_field, &p.coords)?;
        rep.j_squared = rep.j_squared.max(d[0]);
        rep.compatibility = rep.compatibility.max(d[1]);
        rep.nabla_j = rep.nabla_j.max(d[2]);
        rep.d_omega = rep.d_omega.max(d[3]);
        let m = d.iter().cloned().fold(0.0, f64::max);
        if m > worst {
            worst = m;
            rep.worst_point = Some(p.coords.clone());
        }
    }
    Ok(rep)
}

/// Ricci tensor `R_{bd} = R^a_{bad}`.
pub fn ricci<T: Scalar>(r: &TensorValue<T>) -> Result<TensorValue<T>> {
    r.trace(0, 2)
}

/// Standard complex structure on real coordinates `(x1, y1, x2, y2, ...)`:
/// `J ∂x = ∂y`, `J ∂y = -∂x`.
pub fn standard_j(dim: usize) -> TensorValue<f64> {
    TensorValue::from_fn(vec![Upper, Lower], dim, |i| {
        let (r, c) = (i[0], i[1]);
        if r / 2 != c / 2 {
            0.0
        } else if r % 2 == 1 && c % 2 == 0 {
            1.0
        } else if r % 2 == 0 && c % 2 == 1 {
            -1.0
        } else {
            0.0
        }
    })
}

/// Constant tensor field returning exact constant jets.
pub fn constant_field(t: TensorValue<f64>) -> TensorField {
    Arc::new(move |_x: &[Jet]| Ok(t.map(|&v| Jet::constant(v))))
}
