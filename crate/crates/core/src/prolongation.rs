//! The prolonged (closed) system for `(a, λ, μ)` with constant `B`:
//!
//! ```text
//! a_{ij,k} = λ_i g_{jk} + λ_j g_{ik} - λ̄_i J_{jk} - λ̄_j J_{ik}
//! λ_{i,j}  = μ g_{ij} + B a_{ij}
//! μ_{,i}   = 2 B λ_i
//! ```
//!
//! Its solutions are parallel sections of a connection on a bundle of rank
//! `(n+1)²`. Transport along curves and loop holonomy give a numerical count of
//! local solutions (the degree of mobility).

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartPoint, DomainBox};
use crate::error::{Error, Result};
use crate::geometry::{
    christoffel, christoffel_values, covariant_derivative, hermitize, inverse_metric, j_bar, lower_j,
    model_curvature_tensor, riemann, ScalarField, TensorField,
};
use crate::hproj::{curvature_lhs, curvature_rhs, hpr_rhs, HSolution};
use crate::jet::Jet;
use crate::models::KahlerModel;
use crate::tensor::{for_each_index, Slot, TensorValue};

use Slot::Lower;

/// Values of `(a, λ, μ)` at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProlongedState {
    pub point: ChartPoint,
    /// Row-major `a_{ij}`.
    pub a: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: f64,
}

impl ProlongedState {
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn a_tensor(&self) -> TensorValue<f64> {
        TensorValue::new(vec![Lower, Lower], self.dim(), self.a.clone()).expect("square a")
    }

    /// Flat vector `[a (row-major), λ, μ]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.a.clone();
        v.extend_from_slice(&self.lambda);
        v.push(self.mu);
        v
    }

    pub fn from_vec(point: ChartPoint, v: &[f64]) -> Result<Self> {
        let m = point.dim();
        if v.len() != m * m + m + 1 {
            return Err(Error::ShapeMismatch("state vector length".into()));
        }
        Ok(ProlongedState {
            point,
            a: v[..m * m].to_vec(),
            lambda: v[m * m..m * m + m].to_vec(),
            mu: v[m * m + m],
        })
    }

    /// The solution `(g, 0, -B)` that exists for every metric.
    pub fn trivial(point: ChartPoint, g: &TensorValue<f64>, b: f64) -> Self {
        let m = g.dim();
        ProlongedState {
            point,
            a: g.comps().to_vec(),
            lambda: vec![0.0; m],
            mu: -b,
        }
    }
}

/// Orthonormal basis (Frobenius) of symmetric `J`-invariant (0,2) tensors.
#[derive(Debug, Clone)]
pub struct HermitianBasis {
    pub dim: usize,
    pub elements: Vec<Vec<f64>>,
}

impl HermitianBasis {
    pub fn new(j: &TensorValue<f64>) -> Result<Self> {
        let m = j.dim();
        let mut elements: Vec<Vec<f64>> = Vec::new();
        for p in 0..m {
            for q in p..m {
                let e = TensorValue::<f64>::from_fn(vec![Lower, Lower], m, |i| {
                    if (i[0] == p && i[1] == q) || (i[0] == q && i[1] == p) {
                        1.0
                    } else {
                        0.0
                    }
                });
                let mut h = hermitize(&e, j)?.into_comps();
                for b in &elements {
                    let d: f64 = h.iter().zip(b).map(|(x, y)| x * y).sum();
                    for (x, y) in h.iter_mut().zip(b) {
                        *x -= d * y;
                    }
                }
                let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-10 {
                    elements.push(h.into_iter().map(|x| x / norm).collect());
                }
            }
        }
        if elements.len() != m * m / 4 {
            return Err(Error::Degenerate(format!(
                "hermitian space has dimension {}, expected {}",
                elements.len(),
                m * m / 4
            )));
        }
        Ok(HermitianBasis { dim: m, elements })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Fiber dimension `(n+1)²`.
    pub fn fiber_dim(&self) -> usize {
        self.len() + self.dim + 1
    }

    /// Full state vector from fiber coordinates.
    pub fn embed(&self, s: &[f64]) -> Vec<f64> {
        let m = self.dim;
        let k = self.len();
        let mut out = vec![0.0; m * m + m + 1];
        for (c, e) in s[..k].iter().zip(&self.elements) {
            for (o, x) in out[..m * m].iter_mut().zip(e) {
                *o += c * x;
            }
        }
        out[m * m..].copy_from_slice(&s[k..]);
        out
    }

    /// Fiber coordinates of a full state (orthogonal projection of `a`).
    pub fn coords(&self, v: &[f64]) -> Vec<f64> {
        let m = self.dim;
        let mut out: Vec<f64> = self
            .elements
            .iter()
            .map(|e| e.iter().zip(&v[..m * m]).map(|(x, y)| x * y).sum())
            .collect();
        out.extend_from_slice(&v[m * m..]);
        out
    }
}

/// Geometry needed by the transport equation at one point.
struct PointGeometry {
    g: TensorValue<f64>,
    j: TensorValue<f64>,
    jl: TensorValue<f64>,
    gamma: TensorValue<f64>,
}

struct StageData {
    p: Vec<f64>,
    gv: Vec<f64>,
    jv: Vec<f64>,
    v: Vec<f64>,
    j: Vec<f64>,
}

/// Metric, complex structure and `B` for the prolonged connection in one chart.
#[derive(Clone)]
pub struct Prolongation {
    pub g: TensorField,
    pub j: TensorField,
    pub b: f64,
    pub chart: String,
    pub domain: DomainBox,
    pub dim: usize,
}

impl std::fmt::Debug for Prolongation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prolongation")
            .field("b", &self.b)
            .field("chart", &self.chart)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

/// RK4 settings for transport.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TransportConfig {
    /// Target step length in chart coordinates.
    pub step: f64,
    /// Halve the step until successive results agree to `1e-8` per unit length.
    pub check_halving: bool,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            step: 1e-3,
            check_halving: false,
        }
    }
}

/// A piecewise smooth curve in one chart; each piece is parametrised by `[0, 1]`.
#[derive(Clone)]
pub enum CurvePiece {
    Segment { from: Vec<f64>, to: Vec<f64> },
    Smooth {
        pos: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
        vel: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    },
}

impl CurvePiece {
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            CurvePiece::Segment { from, to } => {
                let v: Vec<f64> = from.iter().zip(to).map(|(a, b)| b - a).collect();
                let x = from.iter().zip(&v).map(|(a, d)| a + t * d).collect();
                (x, v)
            }
            CurvePiece::Smooth { pos, vel } => (pos(t), vel(t)),
        }
    }

    pub fn length(&self) -> f64 {
        let samples = 64;
        (0..samples)
            .map(|k| {
                let t = (k as f64 + 0.5) / samples as f64;
                let (_, v) = self.eval(t);
                v.iter().map(|x| x * x).sum::<f64>().sqrt() / samples as f64
            })
            .sum()
    }
}

#[derive(Clone)]
pub struct Curve {
    pub pieces: Vec<CurvePiece>,
}

impl Curve {
    pub fn segment(from: &[f64], to: &[f64]) -> Self {
        Curve {
            pieces: vec![CurvePiece::Segment {
                from: from.to_vec(),
                to: to.to_vec(),
            }],
        }
    }

    pub fn polyline(points: &[Vec<f64>]) -> Self {
        Curve {
            pieces: points
                .windows(2)
                .map(|w| CurvePiece::Segment {
                    from: w[0].clone(),
                    to: w[1].clone(),
                })
                .collect(),
        }
    }

    /// Axis-aligned rectangle in the `(p, q)` coordinate plane, starting and ending at `x0`.
    pub fn rectangle(x0: &[f64], p: usize, q: usize, side: f64) -> Self {
        let mut c1 = x0.to_vec();
        c1[p] += side;
        let mut c2 = c1.clone();
        c2[q] += side;
        let mut c3 = x0.to_vec();
        c3[q] += side;
        Curve::polyline(&[x0.to_vec(), c1, c2, c3, x0.to_vec()])
    }

    /// Smooth closed loop `x0 + r Σ_h (u_h (cos 2πht - 1) + w_h sin 2πht)`.
    pub fn random_loop(x0: &[f64], radius: f64, rng: &mut impl Rng) -> Self {
        let m = x0.len();
        let mut dirs = Vec::new();
        for _ in 0..4 {
            let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            dirs.push(v.into_iter().map(|x| radius * x / norm).collect::<Vec<f64>>());
        }
        let base = x0.to_vec();
        let d1 = dirs.clone();
        let pos = Arc::new(move |t: f64| {
            let mut x = base.clone();
            for (h, pair) in d1.chunks(2).enumerate() {
                let w = 2.0 * std::f64::consts::PI * (h + 1) as f64;
                let (c, s) = ((w * t).cos() - 1.0, (w * t).sin());
                for i in 0..x.len() {
                    x[i] += (pair[0][i] * c + pair[1][i] * s) / (h + 1) as f64;
                }
            }
            x
        });
        let d2 = dirs;
        let vel = Arc::new(move |t: f64| {
            let mut v = vec![0.0; m];
            for (h, pair) in d2.chunks(2).enumerate() {
                let w = 2.0 * std::f64::consts::PI * (h + 1) as f64;
                let (s, c) = (w * t).sin_cos();
                for i in 0..m {
                    v[i] += w * (-pair[0][i] * s + pair[1][i] * c) / (h + 1) as f64;
                }
            }
            v
        });
        Curve {
            pieces: vec![CurvePiece::Smooth { pos, vel }],
        }
    }

    pub fn start(&self) -> Vec<f64> {
        self.pieces[0].eval(0.0).0
    }

    pub fn end(&self) -> Vec<f64> {
        self.pieces.last().unwrap().eval(1.0).0
    }

    pub fn length(&self) -> f64 {
        self.pieces.iter().map(|p| p.length()).sum()
    }
}

impl Prolongation {
    pub fn new(model: &KahlerModel, chart: &str, b: f64) -> Result<Self> {
        let c = model.chart(chart)?;
        Ok(Prolongation {
            g: model.metric_field(chart)?,
            j: model.j_field(),
            b,
            chart: chart.to_string(),
            domain: c.domain.clone(),
            dim: model.dim(),
        })
    }

    pub fn with_b(&self, b: f64) -> Self {
        let mut p = self.clone();
        p.b = b;
        p
    }

    fn geometry(&self, x: &[f64]) -> Result<PointGeometry> {
        if !self.domain.contains(x) {
            return Err(Error::OutOfDomain(format!(
                "transport left chart {} at {x:?}",
                self.chart
            )));
        }
        let gj = (self.g)(&Jet::seed(x, 1))?;
        let g = gj.values();
        let gamma = christoffel_values(&gj)?;
        let j = (self.j)(&Jet::seed(x, 0))?.values();
        let jl = lower_j(&g, &j);
        Ok(PointGeometry { g, j, jl, gamma })
    }

    /// Velocity-dependent coefficients shared by all states at one stage.
    fn stage(&self, geo: &PointGeometry, v: &[f64]) -> StageData {
        let m = self.dim;
        // P^α_i = Γ^α_{k i} v^k
        let mut p = vec![0.0; m * m];
        for al in 0..m {
            for i in 0..m {
                let mut acc = 0.0;
                for (k, vk) in v.iter().enumerate() {
                    acc += geo.gamma.comps()[(al * m + k) * m + i] * vk;
                }
                p[al * m + i] = acc;
            }
        }
        let gv = (0..m)
            .map(|j| (0..m).map(|k| geo.g.comps()[j * m + k] * v[k]).sum())
            .collect();
        let jv = (0..m)
            .map(|j| (0..m).map(|k| geo.jl.comps()[j * m + k] * v[k]).sum())
            .collect();
        StageData {
            p,
            gv,
            jv,
            v: v.to_vec(),
            j: geo.j.comps().to_vec(),
        }
    }

    /// Right-hand side of the transport ODE for one full state vector.
    fn rhs(&self, st: &StageData, s: &[f64], out: &mut [f64]) {
        let m = self.dim;
        let b = self.b;
        let (p, gv, jv, v) = (&st.p, &st.gv, &st.jv, &st.v);
        let a = &s[..m * m];
        let lam = &s[m * m..m * m + m];
        let mu = s[m * m + m];
        let lb: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|al| st.j[al * m + i] * lam[al]).sum())
            .collect();
        // a stays symmetric, so only the upper triangle is computed
        for i in 0..m {
            for j in i..m {
                let mut d = lam[i] * gv[j] + lam[j] * gv[i] - lb[i] * jv[j] - lb[j] * jv[i];
                for al in 0..m {
                    d += p[al * m + i] * a[al * m + j] + p[al * m + j] * a[i * m + al];
                }
                out[i * m + j] = d;
                out[j * m + i] = d;
            }
        }
        for i in 0..m {
            let mut d = mu * gv[i];
            for k in 0..m {
                d += b * a[i * m + k] * v[k];
            }
            for al in 0..m {
                d += p[al * m + i] * lam[al];
            }
            out[m * m + i] = d;
        }
        out[m * m + m] = 2.0 * b * lam.iter().zip(v).map(|(l, x)| l * x).sum::<f64>();
    }

    fn hermitize_state(&self, j: &TensorValue<f64>, s: &mut [f64]) {
        let m = self.dim;
        let jc = j.comps();
        let sym: Vec<f64> = (0..m * m).map(|q| s[q] + s[(q % m) * m + q / m]).collect();
        for i in 0..m {
            for jj in 0..m {
                let mut acc = sym[i * m + jj];
                for al in 0..m {
                    let ja = jc[al * m + i];
                    if ja == 0.0 {
                        continue;
                    }
                    for be in 0..m {
                        let jb = jc[be * m + jj];
                        if jb != 0.0 {
                            acc += ja * jb * sym[al * m + be];
                        }
                    }
                }
                s[i * m + jj] = 0.25 * acc;
            }
        }
    }

    fn transport_with_steps(&self, curve: &Curve, states: &[Vec<f64>], step: f64) -> Result<Vec<Vec<f64>>> {
        let mut cur: Vec<Vec<f64>> = states.to_vec();
        let len = cur.first().map_or(0, |s| s.len());
        let mut tmp = vec![0.0; len];
        let mut k = vec![vec![vec![0.0; len]; cur.len()]; 4];
        for piece in &curve.pieces {
            let nsteps = ((piece.length() / step).ceil() as usize).max(1);
            let h = 1.0 / nsteps as f64;
            let (x, v) = piece.eval(0.0);
            let mut start = (self.geometry(&x)?, v);
            for sidx in 0..nsteps {
                let t0 = sidx as f64 * h;
                let (xm, vm) = piece.eval(t0 + 0.5 * h);
                let mid = (self.geometry(&xm)?, vm);
                let (xe, ve) = piece.eval(t0 + h);
                let end = (self.geometry(&xe)?, ve);
                let stages = [(&start, 0.0), (&mid, 0.5 * h), (&mid, 0.5 * h), (&end, h)];
                for (stage, ((geo, v), w)) in stages.iter().enumerate() {
                    let st = self.stage(geo, v);
                    let (done, rest) = k.split_at_mut(stage);
                    for (si, s) in cur.iter().enumerate() {
                        if stage == 0 {
                            tmp.copy_from_slice(s);
                        } else {
                            let prev = &done[stage - 1][si];
                            for q in 0..len {
                                tmp[q] = s[q] + w * prev[q];
                            }
                        }
                        self.rhs(&st, &tmp, &mut rest[0][si]);
                    }
                }
                for (si, s) in cur.iter_mut().enumerate() {
                    for q in 0..len {
                        s[q] += h / 6.0
                            * (k[0][si][q] + 2.0 * k[1][si][q] + 2.0 * k[2][si][q] + k[3][si][q]);
                    }
                    self.hermitize_state(&end.0.j, s);
                }
                start = end;
            }
        }
        Ok(cur)
    }

    /// Transport full state vectors `[a, λ, μ]` along a curve.
    pub fn transport_vectors(
        &self,
        curve: &Curve,
        states: &[Vec<f64>],
        cfg: &TransportConfig,
    ) -> Result<Vec<Vec<f64>>> {
        let mut step = cfg.step;
        let mut out = self.transport_with_steps(curve, states, step)?;
        if !cfg.check_halving {
            return Ok(out);
        }
        let len = curve.length().max(1e-12);
        for _ in 0..6 {
            step *= 0.5;
            let finer = self.transport_with_steps(curve, states, step)?;
            let diff = out
                .iter()
                .zip(&finer)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            out = finer;
            if diff <= 1e-8 * len {
                return Ok(out);
            }
        }
        Ok(out)
    }

    /// Transport a state along a curve starting at its point.
    pub fn transport(
        &self,
        state: &ProlongedState,
        curve: &Curve,
        cfg: &TransportConfig,
    ) -> Result<ProlongedState> {
        let out = self.transport_vectors(curve, &[state.to_vec()], cfg)?;
        ProlongedState::from_vec(ChartPoint::new(self.chart.clone(), curve.end()), &out[0])
    }

    /// Curvature condition residual tensor `aR + aR - B 𝒥(...)`, linear in `a`.
    pub fn curvature_condition(&self, x: &[f64], a: &TensorValue<f64>) -> Result<TensorValue<f64>> {
        Ok(self.curvature_conditions(x, std::slice::from_ref(a))?.remove(0))
    }

    /// [`Self::curvature_condition`] for several tensors at one point.
    pub fn curvature_conditions(
        &self,
        x: &[f64],
        a: &[TensorValue<f64>],
    ) -> Result<Vec<TensorValue<f64>>> {
        let seeds = Jet::seed(x, 2);
        let gj = (self.g)(&seeds)?;
        let r = riemann(&gj)?.values();
        let g = gj.values();
        let j = (self.j)(&seeds)?.values();
        a.iter()
            .map(|a| curvature_b_residual_tensor(&r, &g, &j, a, self.b))
            .collect()
    }
}

/// `a_{iα} R^α_{jkl} + a_{jα} R^α_{ikl} - B 𝒥(a_{lī} g_{j̄k} + a_{lj̄} g_{īk} - a_{kī} g_{j̄l} - a_{kj̄} g_{īl})`.
pub fn curvature_b_residual_tensor(
    r: &TensorValue<f64>,
    g: &TensorValue<f64>,
    j: &TensorValue<f64>,
    a: &TensorValue<f64>,
    b: f64,
) -> Result<TensorValue<f64>> {
    let lhs = curvature_lhs(a, r);
    let rhs = curvature_rhs(a, g, j)?.scale(b);
    lhs.sub(&rhs)
}

/// Max-abs residual of the curvature condition for a solution's `a` at `x`.
pub fn curvature_b_condition(
    g: &TensorField,
    j: &TensorField,
    a: &TensorField,
    b: f64,
    x: &ChartPoint,
) -> Result<f64> {
    let seeds = Jet::seed(&x.coords, 2);
    let gj = g(&seeds)?;
    let r = riemann(&gj)?.values();
    let av = a(&seeds)?.values();
    Ok(curvature_b_residual_tensor(&r, &gj.values(), &j(&seeds)?.values(), &av, b)?.max_abs())
}

/// `G = R + 4 B K` with `K` the model tensor of holomorphic curvature 1.
pub fn constant_curvature_tensor(
    g: &TensorField,
    j: &TensorField,
    b: f64,
    x: &ChartPoint,
) -> Result<TensorValue<f64>> {
    let seeds = Jet::seed(&x.coords, 2);
    let gj = g(&seeds)?;
    let r = riemann(&gj)?.values();
    let k = model_curvature_tensor(&gj.values(), &j(&seeds)?.values());
    r.add(&k.scale(4.0 * b))
}

/// Residuals of the three equations of the prolonged system.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExtendedResidual {
    pub hpr: f64,
    pub lambda_eq: f64,
    pub mu_eq: f64,
}

impl ExtendedResidual {
    pub fn max(&self) -> f64 {
        self.hpr.max(self.lambda_eq).max(self.mu_eq)
    }
}

/// Evaluate all three equations for a solution with `μ` attached.
pub fn extended_residual(
    g: &TensorField,
    j: &TensorField,
    sol: &HSolution,
    b: f64,
    x: &ChartPoint,
) -> Result<ExtendedResidual> {
    let mu_field = sol
        .mu
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("extended residual needs mu".into()))?;
    let seeds = Jet::seed(&x.coords, 3);
    let gj = g(&seeds)?;
    let gamma = christoffel(&gj)?;
    let gv = gj.values();
    let jv = j(&seeds)?.values();
    let a = (sol.a)(&seeds)?;
    let lam = (sol.lambda)(&seeds)?;
    let mu = mu_field(&seeds)?;
    let na = covariant_derivative(&a, &gamma)?.values();
    let hpr = na.sub(&hpr_rhs(&gv, &jv, &lam.values()))?.max_abs();
    let nl = covariant_derivative(&lam, &gamma)?.values();
    let want = gv.scale(mu.value()).add(&a.values().scale(b))?;
    let lambda_eq = nl.sub(&want)?.max_abs();
    let m = gv.dim();
    let mut mu_eq: f64 = 0.0;
    for i in 0..m {
        let d = mu.derivative(&[i])? - 2.0 * b * lam.get(&[i]).value();
        mu_eq = mu_eq.max(d.abs());
    }
    Ok(ExtendedResidual {
        hpr,
        lambda_eq,
        mu_eq,
    })
}

/// Least-squares `B` from the trace-free part of `λ_{i,j} = μ g_{ij} + B a_{ij}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BEstimate {
    pub b: f64,
    /// `|X - B Y| / |Y|` for trace-free parts `X` of `∇λ` and `Y` of `a`
    pub residual: f64,
}

pub fn estimate_b(
    g: &TensorField,
    sol: &HSolution,
    x: &ChartPoint,
) -> Result<BEstimate> {
    let seeds = Jet::seed(&x.coords, 2);
    let gj = g(&seeds)?;
    let gamma = christoffel(&gj)?;
    let gv = gj.values();
    let ginv = inverse_metric(&gv)?;
    let m = gv.dim();
    let a = (sol.a)(&seeds)?.values();
    let nl = covariant_derivative(&(sol.lambda)(&seeds)?, &gamma)?.values();
    let tf = |t: &TensorValue<f64>| -> Result<TensorValue<f64>> {
        let mut tr = 0.0;
        for_each_index(2, m, |i| tr += ginv.get(i) * t.get(i));
        t.sub(&gv.scale(tr / m as f64))
    };
    let xt = tf(&nl)?;
    let yt = tf(&a)?;
    let yy: f64 = yt.comps().iter().map(|v| v * v).sum();
    let ascale = a.norm().max(f64::MIN_POSITIVE);
    if yy.sqrt() < 1e-9 * ascale {
        return Err(Error::ProportionalSolution);
    }
    let xy: f64 = xt.comps().iter().zip(yt.comps()).map(|(p, q)| p * q).sum();
    let b = xy / yy;
    let residual = xt.sub(&yt.scale(b))?.norm() / yy.sqrt();
    Ok(BEstimate { b, residual })
}

/// Settings for the mobility rank procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct MobilityConfig {
    /// Fixed `B`; `None` sweeps `b_candidates` and keeps the largest kernel.
    pub b: Option<f64>,
    pub b_candidates: Vec<f64>,
    pub seed: u64,
    pub rect_side: f64,
    pub random_loops: usize,
    pub loop_radius: f64,
    pub samples_per_batch: usize,
    pub sample_radius: f64,
    pub step: f64,
    pub rank_tol: f64,
    /// Singular directions of a batch below this (times `max(1, σ_max)`) are dropped as noise.
    pub noise_floor: f64,
    pub max_batches: usize,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            b: None,
            b_candidates: vec![0.0, 1.0, -1.0, 0.25, -0.25],
            seed: 0,
            rect_side: 0.3,
            random_loops: 4,
            loop_radius: 0.15,
            samples_per_batch: 4,
            sample_radius: 0.3,
            step: 1e-3,
            rank_tol: 1e-8,
            noise_floor: 1e-7,
            max_batches: 10,
        }
    }
}

/// Outcome of the mobility computation.
#[derive(Debug, Clone, Serialize)]
pub struct MobilityReport {
    /// Always "local mobility estimate": global holonomy is only probed by lattice loops.
    pub label: String,
    pub b: f64,
    pub fiber_dim: usize,
    pub dimension: usize,
    pub rank: usize,
    pub batch_names: Vec<String>,
    pub batch_ranks: Vec<usize>,
    pub singular_values: Vec<f64>,
    /// Distance of `(g, 0, -B)` from the kernel, relative to its norm.
    pub trivial_solution_defect: f64,
    pub basis: Vec<ProlongedState>,
    /// `(B, dimension)` for each candidate when `B` was swept.
    pub sweep: Vec<(f64, usize)>,
}

struct ConstraintSet {
    rows: Vec<Vec<f64>>,
    fiber_dim: usize,
    noise_floor: f64,
    rank_tol: f64,
}

impl ConstraintSet {
    /// Add the significant row space of a batch matrix, given as columns (one per fiber basis vector).
    fn add_columns(&mut self, cols: &[Vec<f64>]) {
        let d = self.fiber_dim;
        let r = cols.first().map_or(0, |c| c.len());
        if r == 0 {
            return;
        }
        let mat = DMatrix::from_fn(r.max(d), d, |i, k| if i < r { cols[k][i] } else { 0.0 });
        let svd = mat.svd(false, true);
        let vt = svd.v_t.expect("right singular vectors");
        let smax = svd.singular_values.max();
        let cut = self.noise_floor * smax.max(1.0);
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s > cut {
                self.rows.push(vt.row(i).iter().cloned().collect());
            }
        }
    }

    fn svd(&self) -> (usize, Vec<f64>, DMatrix<f64>) {
        let d = self.fiber_dim;
        let k = self.rows.len();
        let mat = DMatrix::from_fn(k.max(d), d, |i, j| if i < k { self.rows[i][j] } else { 0.0 });
        let svd = mat.svd(false, true);
        let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let rank = if smax == 0.0 {
            0
        } else {
            sv.iter().filter(|s| **s / smax >= self.rank_tol).count()
        };
        (rank, sv, svd.v_t.expect("right singular vectors"))
    }
}

/// Estimate the number of independent local solutions of the prolonged system at `x0`.
pub fn degree_of_mobility(
    model: &KahlerModel,
    x0: &ChartPoint,
    cfg: &MobilityConfig,
) -> Result<MobilityReport> {
    model.check_in_domain(x0)?;
    match cfg.b {
        Some(b) => mobility_at(model, x0, cfg, b),
        None => {
            let mut best: Option<MobilityReport> = None;
            let mut sweep = Vec::new();
            for &b in &cfg.b_candidates {
                let rep = mobility_at(model, x0, cfg, b)?;
                sweep.push((b, rep.dimension));
                if best.as_ref().map_or(true, |r| rep.dimension > r.dimension) {
                    best = Some(rep);
                }
            }
            let mut best = best.ok_or_else(|| Error::InvalidInput("no B candidates".into()))?;
            best.sweep = sweep;
            Ok(best)
        }
    }
}

fn mobility_at(
    model: &KahlerModel,
    x0: &ChartPoint,
    cfg: &MobilityConfig,
    b: f64,
) -> Result<MobilityReport> {
    let pr = Prolongation::new(model, &x0.chart, b)?;
    let m = model.dim();
    let j0 = model.j_value();
    let basis = HermitianBasis::new(&j0)?;
    let d = basis.fiber_dim();
    let units: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut s = vec![0.0; d];
            s[k] = 1.0;
            basis.embed(&s)
        })
        .collect();
    let tcfg = TransportConfig {
        step: cfg.step,
        check_halving: false,
    };
    let mut set = ConstraintSet {
        rows: Vec::new(),
        fiber_dim: d,
        noise_floor: cfg.noise_floor,
        rank_tol: cfg.rank_tol,
    };
    let mut names = Vec::new();
    let mut ranks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let curvature_columns = |x: &[f64], states: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        let a: Vec<TensorValue<f64>> = states
            .iter()
            .map(|s| TensorValue::new(vec![Lower, Lower], m, s[..m * m].to_vec()))
            .collect::<Result<_>>()?;
        Ok(pr
            .curvature_conditions(x, &a)?
            .into_iter()
            .map(|t| t.into_comps())
            .collect())
    };

    // pointwise condition at the base point
    set.add_columns(&curvature_columns(&x0.coords, &units)?);
    names.push("base-point curvature condition".to_string());
    ranks.push(set.svd().0);

    let sample_batch = |rng: &mut ChaCha8Rng| -> Result<Vec<Vec<f64>>> {
        let targets: Vec<Vec<f64>> = (0..cfg.samples_per_batch)
            .map(|_| {
                x0.coords
                    .iter()
                    .map(|c| c + rng.gen_range(-cfg.sample_radius..cfg.sample_radius))
                    .collect()
            })
            .collect();
        let blocks: Vec<Vec<Vec<f64>>> = targets
            .par_iter()
            .map(|p| -> Result<Vec<Vec<f64>>> {
                let moved = pr.transport_vectors(&Curve::segment(&x0.coords, p), &units, &tcfg)?;
                curvature_columns(p, &moved)
            })
            .collect::<Result<_>>()?;
        Ok(stack_columns(&blocks, d))
    };
    let loop_batch = |curves: Vec<(Curve, Option<Vec<f64>>)>| -> Result<Vec<Vec<f64>>> {
        let blocks: Vec<Vec<Vec<f64>>> = curves
            .par_iter()
            .map(|(c, _)| -> Result<Vec<Vec<f64>>> {
                let moved = pr.transport_vectors(c, &units, &tcfg)?;
                Ok(moved
                    .iter()
                    .zip(&units)
                    .map(|(a, u)| a.iter().zip(u).map(|(x, y)| x - y).collect())
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(stack_columns(&blocks, d))
    };

    set.add_columns(&sample_batch(&mut rng)?);
    names.push("transported curvature condition".to_string());
    ranks.push(set.svd().0);

    let mut rects = Vec::new();
    for p in 0..m {
        for q in p + 1..m {
            rects.push((Curve::rectangle(&x0.coords, p, q, cfg.rect_side), None));
        }
    }
    set.add_columns(&loop_batch(rects)?);
    names.push("coordinate rectangles".to_string());
    ranks.push(set.svd().0);

    let random: Vec<(Curve, Option<Vec<f64>>)> = (0..cfg.random_loops)
        .map(|_| (Curve::random_loop(&x0.coords, cfg.loop_radius, &mut rng), None))
        .collect();
    set.add_columns(&loop_batch(random)?);
    names.push("random loops".to_string());
    ranks.push(set.svd().0);

    let lattice = model.lattice_translations();
    if !lattice.is_empty() {
        // a lattice translation identifies the endpoint with x0 and leaves frames unchanged
        let curves = lattice
            .iter()
            .map(|t| {
                let end: Vec<f64> = x0.coords.iter().zip(t).map(|(a, b)| a + b).collect();
                (Curve::segment(&x0.coords, &end), Some(t.clone()))
            })
            .collect();
        set.add_columns(&loop_batch(curves)?);
        names.push("lattice loops".to_string());
        ranks.push(set.svd().0);
    }

    let mut stable = 0;
    let mut last = *ranks.last().unwrap();
    let mut extra = 0;
    while stable < 2 && ranks.len() < cfg.max_batches {
        if extra % 2 == 0 {
            set.add_columns(&sample_batch(&mut rng)?);
            names.push("transported curvature condition".to_string());
        } else {
            let random = (0..cfg.random_loops.max(1))
                .map(|_| (Curve::random_loop(&x0.coords, cfg.loop_radius, &mut rng), None))
                .collect();
            set.add_columns(&loop_batch(random)?);
            names.push("random loops".to_string());
        }
        extra += 1;
        let r = set.svd().0;
        ranks.push(r);
        if r == last {
            stable += 1;
        } else {
            stable = 0;
            last = r;
        }
    }

    let (rank, sv, vt) = set.svd();
    let dimension = d - rank;
    let kernel: Vec<Vec<f64>> = (rank..d).map(|i| vt.row(i).iter().cloned().collect()).collect();

    let g0 = model.metric_value(x0)?;
    let triv = basis.coords(&ProlongedState::trivial(x0.clone(), &g0, b).to_vec());
    let tnorm = triv.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut proj = vec![0.0; d];
    for k in &kernel {
        let c: f64 = k.iter().zip(&triv).map(|(p, q)| p * q).sum();
        for (p, q) in proj.iter_mut().zip(k) {
            *p += c * q;
        }
    }
    let defect = proj
        .iter()
        .zip(&triv)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
        / tnorm.max(f64::MIN_POSITIVE);

    let basis_states = kernel
        .iter()
        .map(|k| ProlongedState::from_vec(x0.clone(), &basis.embed(k)))
        .collect::<Result<_>>()?;

    Ok(MobilityReport {
        label: "local mobility estimate".into(),
        b,
        fiber_dim: d,
        dimension,
        rank,
        batch_names: names,
        batch_ranks: ranks,
        singular_values: sv,
        trivial_solution_defect: defect,
        basis: basis_states,
        sweep: Vec::new(),
    })
}

fn stack_columns(blocks: &[Vec<Vec<f64>>], d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|k| blocks.iter().flat_map(|b| b[k].iter().cloned()).collect())
        .collect()
}

/// Fiber coordinates of a state, for projecting onto kernels.
pub fn fiber_coords(model: &KahlerModel, s: &ProlongedState) -> Result<Vec<f64>> {
    Ok(HermitianBasis::new(&model.j_value())?.coords(&s.to_vec()))
}

/// Residuals of the prolonged system for the field obtained by transporting `base`
/// along straight segments, with derivatives from fourth-order central differences.
pub fn transported_field_residual(
    pr: &Prolongation,
    base: &ProlongedState,
    x: &[f64],
    h: f64,
    cfg: &TransportConfig,
) -> Result<ExtendedResidual> {
    Ok(transported_field_residuals(pr, std::slice::from_ref(base), x, h, cfg)?.remove(0))
}

/// [`transported_field_residual`] for states sharing a base point; every segment is
/// integrated once for all of them.
pub fn transported_field_residuals(
    pr: &Prolongation,
    basis: &[ProlongedState],
    x: &[f64],
    h: f64,
    cfg: &TransportConfig,
) -> Result<Vec<ExtendedResidual>> {
    let Some(first) = basis.first() else {
        return Ok(Vec::new());
    };
    let m = pr.dim;
    let x0 = &first.point.coords;
    if basis.iter().any(|b| &b.point.coords != x0) {
        return Err(Error::InvalidInput("states must share a base point".into()));
    }
    let s0: Vec<Vec<f64>> = basis.iter().map(|b| b.to_vec()).collect();
    let at = |p: &[f64]| pr.transport_vectors(&Curve::segment(x0, p), &s0, cfg);
    let offsets = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
    let mut targets = vec![x.to_vec()];
    for k in 0..m {
        for (o, _) in offsets {
            let mut p = x.to_vec();
            p[k] += o * h;
            targets.push(p);
        }
    }
    // transported[target][state]
    let transported: Vec<Vec<Vec<f64>>> = targets.par_iter().map(|p| at(p)).collect::<Result<_>>()?;
    let geo = pr.geometry(x)?;
    let gam = |a_: usize, b_: usize, c_: usize| geo.gamma.comps()[(a_ * m + b_) * m + c_];
    let mut out = Vec::with_capacity(basis.len());
    for si in 0..basis.len() {
        let center = &transported[0][si];
        let mut deriv = vec![vec![0.0; center.len()]; m];
        for k in 0..m {
            for (oi, (_, w)) in offsets.iter().enumerate() {
                let s = &transported[1 + k * offsets.len() + oi][si];
                for (d, v) in deriv[k].iter_mut().zip(s) {
                    *d += w * v / h;
                }
            }
        }
        let a = &center[..m * m];
        let lam = &center[m * m..m * m + m];
        let mu = center[m * m + m];
        // ∇_k a_ij
        let mut hpr: f64 = 0.0;
        let rhs = hpr_rhs(&geo.g, &geo.j, &TensorValue::covector(lam.to_vec()));
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let mut v = deriv[k][i * m + j];
                    for al in 0..m {
                        v -= gam(al, k, i) * a[al * m + j] + gam(al, k, j) * a[i * m + al];
                    }
                    hpr = hpr.max((v - rhs.get(&[i, j, k])).abs());
                }
            }
        }
        let mut lambda_eq: f64 = 0.0;
        for i in 0..m {
            for k in 0..m {
                let mut v = deriv[k][m * m + i];
                for al in 0..m {
                    v -= gam(al, k, i) * lam[al];
                }
                let want = mu * geo.g.comps()[i * m + k] + pr.b * a[i * m + k];
                lambda_eq = lambda_eq.max((v - want).abs());
            }
        }
        let mut mu_eq: f64 = 0.0;
        for k in 0..m {
            mu_eq = mu_eq.max((deriv[k][m * m + m] - 2.0 * pr.b * lam[k]).abs());
        }
        out.push(ExtendedResidual {
            hpr,
            lambda_eq,
            mu_eq,
        });
    }
    Ok(out)
}

/// Worst [`transported_field_residual`] of each kernel state over the given points.
pub fn kernel_residuals(
    pr: &Prolongation,
    basis: &[ProlongedState],
    points: &[Vec<f64>],
    h: f64,
    cfg: &TransportConfig,
) -> Result<Vec<f64>> {
    let mut worst = vec![0.0f64; basis.len()];
    for x in points {
        for (w, r) in worst.iter_mut().zip(transported_field_residuals(pr, basis, x, h, cfg)?) {
            *w = w.max(r.max());
        }
    }
    Ok(worst)
}

/// Max-abs residual of `f_{,ijk} = κ(2 f_{,k} g_{ij} + f_{,i} g_{jk} + f_{,j} g_{ik} - f̄_{,i} J_{jk} - f̄_{,j} J_{ik})`.
pub fn tanno_residual(
    g: &TensorField,
    j: &TensorField,
    f: &ScalarField,
    kappa: f64,
    x: &ChartPoint,
) -> Result<f64> {
    let seeds = Jet::seed(&x.coords, 3);
    let gj = g(&seeds)?;
    let gamma = christoffel(&gj)?;
    let fj = f(&seeds)?;
    let m = gj.dim();
    let df = TensorValue::covector((0..m).map(|k| fj.partial(k)).collect::<Result<_>>()?);
    let hess = covariant_derivative(&df, &gamma)?;
    let third = covariant_derivative(&hess, &gamma)?.values();
    let gv = gj.values();
    let jv = j(&seeds)?.values();
    let dfv = df.values();
    let jl = lower_j(&gv, &jv);
    let fb = j_bar(&dfv, &jv);
    let mut worst: f64 = 0.0;
    for_each_index(3, m, |i| {
        let (a, b, k) = (i[0], i[1], i[2]);
        let rhs = kappa
            * (2.0 * dfv.get(&[k]) * gv.get(&[a, b])
                + dfv.get(&[a]) * gv.get(&[b, k])
                + dfv.get(&[b]) * gv.get(&[a, k])
                - fb.get(&[a]) * jl.get(&[b, k])
                - fb.get(&[b]) * jl.get(&[a, k]));
        worst = worst.max((third.get(i) - rhs).abs());
    });
    Ok(worst)
}

/// Max-abs of `∂_k(Δf) - 4κ(n+1) f_{,k}`, with `Δf = g^{ij} f_{,ij}`.
pub fn laplace_identity_residual(
    g: &TensorField,
    f: &ScalarField,
    kappa: f64,
    x: &ChartPoint,
) -> Result<f64> {
    let seeds = Jet::seed(&x.coords, 3);
    let gj = g(&seeds)?;
    let gamma = christoffel(&gj)?;
    let ginv = inverse_metric(&gj)?;
    let fj = f(&seeds)?;
    let m = gj.dim();
    let n = m / 2;
    let df = TensorValue::covector((0..m).map(|k| fj.partial(k)).collect::<Result<_>>()?);
    let hess = covariant_derivative(&df, &gamma)?;
    let mut lap = Jet::zero();
    for i in 0..m {
        for jj in 0..m {
            lap += ginv.get(&[i, jj]) * hess.get(&[i, jj]);
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..m {
        let d = lap.derivative(&[k])? - 4.0 * kappa * (n as f64 + 1.0) * fj.derivative(&[k])?;
        worst = worst.max(d.abs());
    }
    Ok(worst)
}

/// The prolonged-system solution `a = κ⁻¹ ∇²f - 2 f g`, `λ = df`, `μ = 2κ f` (with `B = κ`).
pub fn tanno_to_extended(g: TensorField, f: ScalarField, kappa: f64) -> Result<HSolution> {
    if kappa == 0.0 {
        return Err(Error::InvalidInput("kappa must be nonzero".into()));
    }
    let a: TensorField = {
        let (g, f) = (g.clone(), f.clone());
        Arc::new(move |x: &[Jet]| {
            let gj = g(x)?;
            let gamma = christoffel(&gj)?;
            let fj = f(x)?;
            let m = gj.dim();
            let df = TensorValue::covector((0..m).map(|k| fj.partial(k)).collect::<Result<_>>()?);
            let hess = covariant_derivative(&df, &gamma)?;
            hess.scale(1.0 / kappa).sub(&gj.scale_by(&fj.clone().scale(2.0)))
        })
    };
    let lambda: TensorField = {
        let f = f.clone();
        Arc::new(move |x: &[Jet]| {
            let fj = f(x)?;
            Ok(TensorValue::covector(
                (0..x.len()).map(|k| fj.partial(k)).collect::<Result<_>>()?,
            ))
        })
    };
    let lambda_scalar: ScalarField = {
        let (g, a) = (g.clone(), a.clone());
        Arc::new(move |x: &[Jet]| crate::hproj::lambda_scalar(&g(x)?, &a(x)?))
    };
    let mu: ScalarField = Arc::new(move |x: &[Jet]| Ok(f(x)?.scale(2.0 * kappa)));
    Ok(HSolution {
        a,
        lambda,
        lambda_scalar,
        mu: Some(mu),
    })
}

/// Distance between two solutions after removing the best multiple of `(g, 0, -B)`.
///
/// Returns `(c, residual)` where `s1 - s2 ≈ c (g, 0, -B)` at `x`.
pub fn distance_modulo_trivial(
    g: &TensorField,
    s1: &HSolution,
    s2: &HSolution,
    b: f64,
    x: &ChartPoint,
) -> Result<(f64, f64)> {
    let seeds = Jet::seed(&x.coords, 3);
    let gv = g(&seeds)?.values();
    let state = |s: &HSolution| -> Result<Vec<f64>> {
        let mu = s
            .mu
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("solution needs mu".into()))?;
        let mut v = (s.a)(&seeds)?.values().into_comps();
        v.extend((s.lambda)(&seeds)?.values().into_comps());
        v.push(mu(&seeds)?.value());
        Ok(v)
    };
    let d: Vec<f64> = state(s1)?.iter().zip(state(s2)?).map(|(p, q)| p - q).collect();
    let mut t = gv.comps().to_vec();
    t.extend(std::iter::repeat(0.0).take(gv.dim()));
    t.push(-b);
    let c = d.iter().zip(&t).map(|(p, q)| p * q).sum::<f64>() / t.iter().map(|q| q * q).sum::<f64>();
    let res = d.iter().zip(&t).map(|(p, q)| (p - c * q).abs()).fold(0.0, f64::max);
    Ok((c, res))
}
