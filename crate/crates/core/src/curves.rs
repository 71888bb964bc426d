//! Integration of h-planar curves `∇_γ̇ γ̇ = α γ̇ + β J γ̇` and checks on them.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chart::ChartPoint;
use crate::error::{Error, Result};
use crate::geometry::christoffel_values;
use crate::jet::Jet;
use crate::models::KahlerModel;
use crate::tensor::TensorValue;

/// Time-dependent coefficient `α(t)` or `β(t)`.
pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Extra acceleration `F(t, x, ẋ)` in chart coordinates, for building curves that are not h-planar.
pub type Forcing = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A vector field evaluated at chart points.
pub type VectorFieldFn = Arc<dyn Fn(&ChartPoint) -> Result<Vec<f64>> + Send + Sync>;

/// Margin (fraction of the box width) at which integration moves to a better chart.
pub const CHART_MARGIN: f64 = 0.05;

pub fn constant(c: f64) -> Coefficient {
    Arc::new(move |_| c)
}

/// `Σ c_k t^k`.
pub fn polynomial(coeffs: Vec<f64>) -> Coefficient {
    Arc::new(move |t| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c))
}

/// Samples of an integrated curve.
#[derive(Debug, Clone, Serialize)]
pub struct CurveSample {
    pub times: Vec<f64>,
    pub points: Vec<ChartPoint>,
    pub velocities: Vec<Vec<f64>>,
    /// Covariant acceleration `∇_γ̇ γ̇` at each sample.
    pub accelerations: Vec<Vec<f64>>,
}

impl CurveSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_point(&self) -> &ChartPoint {
        self.points.last().expect("nonempty curve")
    }
}

struct Rhs<'a> {
    model: &'a KahlerModel,
    j: TensorValue<f64>,
    alpha: &'a Coefficient,
    beta: &'a Coefficient,
    forcing: Option<&'a Forcing>,
}

impl Rhs<'_> {
    /// `(∇_γ̇ γ̇, ẍ)` at `(t, x, v)` in `chart`.
    fn eval(&self, chart: &str, t: f64, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = x.len();
        let g = self.model.metric_on(chart, &Jet::seed(x, 1))?;
        let gamma = christoffel_values(&g)?;
        let (al, be) = ((self.alpha)(t), (self.beta)(t));
        let mut acc: Vec<f64> = (0..m)
            .map(|i| {
                let jv: f64 = (0..m).map(|k| self.j.get(&[i, k]) * v[k]).sum();
                al * v[i] + be * jv
            })
            .collect();
        if let Some(f) = self.forcing {
            for (a, fi) in acc.iter_mut().zip(f(t, x, v)) {
                *a += fi;
            }
        }
        let mut xdd = acc.clone();
        for (i, xi) in xdd.iter_mut().enumerate() {
            for a in 0..m {
                for b in 0..m {
                    *xi -= gamma.get(&[i, a, b]) * v[a] * v[b];
                }
            }
        }
        Ok((acc, xdd))
    }
}

/// RK4 integration of `ẍ^i + Γ^i_{jk} ẋ^j ẋ^k = α ẋ^i + β J^i_j ẋ^j`.
pub fn integrate_hplanar(
    model: &KahlerModel,
    x0: &ChartPoint,
    v0: &[f64],
    alpha: &Coefficient,
    beta: &Coefficient,
    t_end: f64,
    step: f64,
) -> Result<CurveSample> {
    integrate_forced(model, x0, v0, alpha, beta, None, t_end, step)
}

/// As [`integrate_hplanar`] with an additional forcing term.
#[allow(clippy::too_many_arguments)]
pub fn integrate_forced(
    model: &KahlerModel,
    x0: &ChartPoint,
    v0: &[f64],
    alpha: &Coefficient,
    beta: &Coefficient,
    forcing: Option<&Forcing>,
    t_end: f64,
    step: f64,
) -> Result<CurveSample> {
    if !(step > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidInput("step and t_end must be positive".into()));
    }
    if v0.len() != model.dim() || v0.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput("initial velocity must be nonzero".into()));
    }
    model.check_in_domain(x0)?;
    let rhs = Rhs {
        model,
        j: model.j_value(),
        alpha,
        beta,
        forcing,
    };
    let nsteps = (t_end / step).round().max(1.0) as usize;
    let h = t_end / nsteps as f64;
    let mut chart = x0.chart.clone();
    let mut x = x0.coords.clone();
    let mut v = v0.to_vec();
    let mut out = CurveSample {
        times: Vec::with_capacity(nsteps + 1),
        points: Vec::with_capacity(nsteps + 1),
        velocities: Vec::with_capacity(nsteps + 1),
        accelerations: Vec::with_capacity(nsteps + 1),
    };
    let (acc0, _) = rhs.eval(&chart, 0.0, &x, &v)?;
    out.times.push(0.0);
    out.points.push(x0.clone());
    out.velocities.push(v.clone());
    out.accelerations.push(acc0);
    let m = x.len();
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    for k in 0..nsteps {
        let t = k as f64 * h;
        let (_, a1) = rhs.eval(&chart, t, &x, &v)?;
        let (x2, v2) = (axpy(&x, 0.5 * h, &v), axpy(&v, 0.5 * h, &a1));
        let (_, a2) = rhs.eval(&chart, t + 0.5 * h, &x2, &v2)?;
        let (x3, v3) = (axpy(&x, 0.5 * h, &v2), axpy(&v, 0.5 * h, &a2));
        let (_, a3) = rhs.eval(&chart, t + 0.5 * h, &x3, &v3)?;
        let (x4, v4) = (axpy(&x, h, &v3), axpy(&v, h, &a3));
        let (_, a4) = rhs.eval(&chart, t + h, &x4, &v4)?;
        for i in 0..m {
            x[i] += h / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
            v[i] += h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
        }
        let domain = &model.chart(&chart)?.domain;
        if !domain.contains_with_margin(&x, CHART_MARGIN) {
            let p = ChartPoint::new(chart.clone(), x.clone());
            let q = model.best_chart(&p)?;
            if q.chart != chart {
                let tr = model
                    .chart(&chart)?
                    .transition_to(&q.chart)
                    .ok_or_else(|| Error::OutOfDomain(format!("no transition from {chart}")))?;
                let (_, jac) = tr.apply_with_jacobian(&x)?;
                v = (0..m).map(|i| (0..m).map(|k| jac[i * m + k] * v[k]).sum()).collect();
                x = q.coords;
                chart = q.chart;
            }
            if !model.chart(&chart)?.domain.contains(&x) {
                return Err(Error::OutOfDomain(format!(
                    "curve left all charts after t = {}; last valid sample {:?}",
                    out.times.last().unwrap(),
                    out.points.last().unwrap()
                )));
            }
        }
        let tk = (k + 1) as f64 * h;
        let (acc, _) = rhs.eval(&chart, tk, &x, &v)?;
        out.times.push(tk);
        out.points.push(ChartPoint::new(chart.clone(), x.clone()));
        out.velocities.push(v.clone());
        out.accelerations.push(acc);
    }
    Ok(out)
}

/// Smallest singular value of `[a | v | Jv]` with columns scaled to unit length
/// (zero columns stay zero). Vanishes iff the three vectors are dependent.
pub fn wedge_defect(a: &[f64], v: &[f64], j: &TensorValue<f64>) -> f64 {
    let m = v.len();
    let jv: Vec<f64> = (0..m).map(|i| (0..m).map(|k| j.get(&[i, k]) * v[k]).sum()).collect();
    let cols = [a.to_vec(), v.to_vec(), jv];
    let mat = DMatrix::from_fn(m, 3, |i, c| {
        let n = cols[c].iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            0.0
        } else {
            cols[c][i] / n
        }
    });
    mat.svd(false, false).singular_values.min()
}

/// Covariant accelerations `ẍ + Γ(ẋ, ẋ)` with `ẍ` from five-point differences of the sampled
/// velocities, so they are independent of the equation that produced the curve.
///
/// Stencils stay inside one chart; a sample with no such stencil falls back to
/// [`CurveSample::accelerations`].
pub fn measured_accelerations(model: &KahlerModel, curve: &CurveSample) -> Result<Vec<Vec<f64>>> {
    const W: [[f64; 5]; 5] = [
        [-25.0, 48.0, -36.0, 16.0, -3.0],
        [-3.0, -10.0, 18.0, -6.0, 1.0],
        [1.0, -8.0, 0.0, 8.0, -1.0],
        [-1.0, 6.0, -18.0, 10.0, 3.0],
        [3.0, -16.0, 36.0, -48.0, 25.0],
    ];
    let len = curve.len();
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        let p = &curve.points[k];
        let chart_ok = |lo: usize| (lo..lo + 5).all(|i| curve.points[i].chart == p.chart);
        // prefer the centered stencil, then those shifted towards the interior
        let window = [2usize, 1, 3, 0, 4].into_iter().find_map(|pos| {
            let lo = k.checked_sub(pos)?;
            (lo + 5 <= len && chart_ok(lo)).then_some((lo, pos))
        });
        let Some((lo, pos)) = window else {
            out.push(curve.accelerations[k].clone());
            continue;
        };
        let h = (curve.times[lo + 4] - curve.times[lo]) / 4.0;
        let m = p.coords.len();
        let g = model.metric_on(&p.chart, &Jet::seed(&p.coords, 1))?;
        let gamma = christoffel_values(&g)?;
        let v = &curve.velocities[k];
        let acc = (0..m)
            .map(|i| {
                let xdd: f64 = (0..5).map(|s| W[pos][s] * curve.velocities[lo + s][i]).sum::<f64>() / (12.0 * h);
                let mut c = 0.0;
                for a in 0..m {
                    for b in 0..m {
                        c += gamma.get(&[i, a, b]) * v[a] * v[b];
                    }
                }
                xdd + c
            })
            .collect();
        out.push(acc);
    }
    Ok(out)
}

/// Per-sample h-planarity defects, from [`measured_accelerations`].
pub fn hplanarity_defects(model: &KahlerModel, curve: &CurveSample) -> Result<Vec<f64>> {
    let j = model.j_value();
    Ok(measured_accelerations(model, curve)?
        .iter()
        .zip(&curve.velocities)
        .map(|(a, v)| wedge_defect(a, v, &j))
        .collect())
}

/// Outcome of the reparametrization check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReparametrizationCheck {
    pub original_defect: f64,
    pub reparametrized_defect: f64,
    pub pass: bool,
}

/// Compare the h-planarity defect of a curve with that of `s ↦ γ(T φ(s/T))`, `φ(s) = s²(3 - 2s)`.
///
/// For the reparametrized curve `γ̃' = φ' γ̇` and `∇γ̃' = φ'² ∇γ̇ + φ'' γ̇`. Samples where
/// `φ' < 0.05` are skipped since the velocity degenerates there.
pub fn reparametrization_invariance_check(
    model: &KahlerModel,
    curve: &CurveSample,
    tol: f64,
) -> Result<ReparametrizationCheck> {
    if curve.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 samples".into()));
    }
    let j = model.j_value();
    let t0 = curve.times[0];
    let span = curve.times.last().unwrap() - t0;
    let acc = measured_accelerations(model, curve)?;
    let original = hplanarity_defects(model, curve)?.into_iter().fold(0.0, f64::max);
    let mut repar: f64 = 0.0;
    for k in 0..curve.len() {
        let u = (curve.times[k] - t0) / span;
        // invert φ on [0, 1] by bisection
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if mid * mid * (3.0 - 2.0 * mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let d1 = 6.0 * s * (1.0 - s);
        if d1 < 0.05 {
            continue;
        }
        let d2 = (6.0 - 12.0 * s) / span;
        let v: Vec<f64> = curve.velocities[k].iter().map(|x| d1 * x).collect();
        let a: Vec<f64> = acc[k]
            .iter()
            .zip(&curve.velocities[k])
            .map(|(a, x)| d1 * d1 * a + d2 * x)
            .collect();
        repar = repar.max(wedge_defect(&a, &v, &j));
    }
    Ok(ReparametrizationCheck {
        original_defect: original,
        reparametrized_defect: repar,
        pass: (original < tol) == (repar < tol),
    })
}

/// Distance of each sample from the complex line through `(x0, v0)`.
///
/// Flat models: Euclidean distance to `x0 + span{v0, J v0}`. Projective models: the
/// sine of the angle between the homogeneous lift and the complex 2-plane spanned by
/// the lifts of `x0` and `v0`.
pub fn line_deviations(model: &KahlerModel, curve: &CurveSample, x0: &ChartPoint, v0: &[f64]) -> Result<Vec<f64>> {
    if curve.is_empty() {
        return Err(Error::InvalidInput("empty curve".into()));
    }
    if model.is_flat() && model.factor_blocks().len() <= 1 {
        let m = v0.len();
        let j = model.j_value();
        let jv: Vec<f64> = (0..m).map(|i| (0..m).map(|k| j.get(&[i, k]) * v0[k]).sum()).collect();
        let basis = orthonormalize(&[v0.to_vec(), jv]);
        return Ok(curve
            .points
            .iter()
            .map(|p| {
                let mut d: Vec<f64> = p.coords.iter().zip(&x0.coords).map(|(a, b)| a - b).collect();
                for b in &basis {
                    let c: f64 = d.iter().zip(b).map(|(x, y)| x * y).sum();
                    for (x, y) in d.iter_mut().zip(b) {
                        *x -= c * y;
                    }
                }
                d.iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .collect());
    }
    let w0 = model.homogeneous_lift(x0)?;
    let w1 = model.homogeneous_tangent(x0, v0)?;
    let basis = c_orthonormalize(&[w0, w1]);
    curve
        .points
        .iter()
        .map(|p| {
            let w = model.homogeneous_lift(p)?;
            let nrm = cnorm(&w);
            let mut r = w.clone();
            for b in &basis {
                let c = cdot(b, &w);
                for (x, y) in r.iter_mut().zip(b) {
                    x.0 -= c.0 * y.0 - c.1 * y.1;
                    x.1 -= c.0 * y.1 + c.1 * y.0;
                }
            }
            Ok(cnorm(&r) / nrm)
        })
        .collect()
}

/// Max of [`line_deviations`].
pub fn line_deviation(model: &KahlerModel, curve: &CurveSample, x0: &ChartPoint, v0: &[f64]) -> Result<f64> {
    Ok(line_deviations(model, curve, x0, v0)?.into_iter().fold(0.0, f64::max))
}

fn orthonormalize(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let mut x = v.clone();
        for b in &out {
            let c: f64 = x.iter().zip(b).map(|(p, q)| p * q).sum();
            for (p, q) in x.iter_mut().zip(b) {
                *p -= c * q;
            }
        }
        let n = x.iter().map(|p| p * p).sum::<f64>().sqrt();
        if n > 1e-14 {
            out.push(x.into_iter().map(|p| p / n).collect());
        }
    }
    out
}

/// `⟨a, b⟩ = Σ conj(a_k) b_k`
fn cdot(a: &[(f64, f64)], b: &[(f64, f64)]) -> (f64, f64) {
    a.iter().zip(b).fold((0.0, 0.0), |acc, (x, y)| {
        (acc.0 + x.0 * y.0 + x.1 * y.1, acc.1 + x.0 * y.1 - x.1 * y.0)
    })
}

fn cnorm(a: &[(f64, f64)]) -> f64 {
    a.iter().map(|x| x.0 * x.0 + x.1 * x.1).sum::<f64>().sqrt()
}

fn c_orthonormalize(vs: &[Vec<(f64, f64)>]) -> Vec<Vec<(f64, f64)>> {
    let mut out: Vec<Vec<(f64, f64)>> = Vec::new();
    for v in vs {
        let mut x = v.clone();
        for b in &out {
            let c = cdot(b, &x);
            for (p, q) in x.iter_mut().zip(b) {
                p.0 -= c.0 * q.0 - c.1 * q.1;
                p.1 -= c.0 * q.1 + c.1 * q.0;
            }
        }
        let n = cnorm(&x);
        if n > 1e-14 {
            out.push(x.into_iter().map(|p| (p.0 / n, p.1 / n)).collect());
        }
    }
    out
}

/// `max_t |g(γ̇, v) - g(γ̇(0), v(γ(0)))|` along a curve.
pub fn killing_integral_drift(model: &KahlerModel, curve: &CurveSample, field: &VectorFieldFn) -> Result<f64> {
    let mut first = None;
    let mut worst: f64 = 0.0;
    for (p, v) in curve.points.iter().zip(&curve.velocities) {
        let g = model.metric_value(p)?;
        let w = field(p)?;
        let m = v.len();
        let mut val = 0.0;
        for i in 0..m {
            for k in 0..m {
                val += g.get(&[i, k]) * v[i] * w[k];
            }
        }
        let f0 = *first.get_or_insert(val);
        worst = worst.max((val - f0).abs());
    }
    Ok(worst)
}

/// `max_t |g(γ̇, γ̇) - g(γ̇(0), γ̇(0))|`.
pub fn energy_drift(model: &KahlerModel, curve: &CurveSample) -> Result<f64> {
    let vel: VectorFieldFn = {
        let pts: Vec<(ChartPoint, Vec<f64>)> =
            curve.points.iter().cloned().zip(curve.velocities.iter().cloned()).collect();
        Arc::new(move |p: &ChartPoint| {
            pts.iter()
                .find(|(q, _)| q == p)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::InvalidInput("point not on curve".into()))
        })
    };
    killing_integral_drift(model, curve, &vel)
}

/// Ratio `|x_h - x_{h/2}| / |x_{h/2} - x_{h/4}|` of endpoint differences; about 16 for RK4.
#[allow(clippy::too_many_arguments)]
pub fn step_halving_ratio(
    model: &KahlerModel,
    x0: &ChartPoint,
    v0: &[f64],
    alpha: &Coefficient,
    beta: &Coefficient,
    t_end: f64,
    h0: f64,
) -> Result<f64> {
    let end = |h: f64| -> Result<ChartPoint> {
        let c = integrate_hplanar(model, x0, v0, alpha, beta, t_end, h)?;
        let p = c.last_point().clone();
        model.change_chart(&p, &x0.chart)
    };
    let (a, b, c) = (end(h0)?, end(h0 / 2.0)?, end(h0 / 4.0)?);
    let dist = |p: &ChartPoint, q: &ChartPoint| -> f64 {
        p.coords.iter().zip(&q.coords).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    Ok(dist(&a, &b) / dist(&b, &c))
}

/// Write `t, x.., v.., defect, deviation` rows.
pub fn write_csv<W: Write>(
    w: W,
    model: &KahlerModel,
    curve: &CurveSample,
    x0: &ChartPoint,
    v0: &[f64],
) -> Result<()> {
    let defects = hplanarity_defects(model, curve)?;
    let deviations = line_deviations(model, curve, x0, v0)
        .unwrap_or_else(|_| vec![f64::NAN; curve.len()]);
    let m = model.dim();
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string(), "chart".to_string()];
    header.extend((0..m).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("v{i}")));
    header.push("defect".into());
    header.push("deviation".into());
    let io = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    wr.write_record(&header).map_err(io)?;
    for k in 0..curve.len() {
        let mut row = vec![curve.times[k].to_string(), curve.points[k].chart.clone()];
        row.extend(curve.points[k].coords.iter().map(|v| v.to_string()));
        row.extend(curve.velocities[k].iter().map(|v| v.to_string()));
        row.push(defects[k].to_string());
        row.push(deviations[k].to_string());
        wr.write_record(&row).map_err(io)?;
    }
    wr.flush().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    Ok(())
}

/// Initial data and coefficients of one h-planar integration.
#[derive(Clone)]
pub struct HplanarRun {
    pub x0: ChartPoint,
    pub v0: Vec<f64>,
    pub alpha: Coefficient,
    pub beta: Coefficient,
    /// Constant values of `alpha` and `beta`, when they are constant.
    pub constants: Option<(f64, f64)>,
    pub t_end: f64,
    pub step: f64,
}

impl std::fmt::Debug for HplanarRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HplanarRun")
            .field("x0", &self.x0)
            .field("v0", &self.v0)
            .field("constants", &self.constants)
            .field("t_end", &self.t_end)
            .field("step", &self.step)
            .finish()
    }
}

/// Seeded runs with constant `α ∈ [-1, 1]`, `β ∈ [-2, 2]`, start points in `[-radius, radius]^m`
/// of the default chart and velocity components in `[-1, 1]`.
pub fn seeded_runs(model: &KahlerModel, seed: u64, count: usize, radius: f64, t_end: f64, step: f64) -> Vec<HplanarRun> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let m = model.dim();
    let chart = model.default_chart().name.clone();
    (0..count)
        .map(|_| {
            let x0 = ChartPoint::new(chart.clone(), (0..m).map(|_| rng.gen_range(-radius..radius)).collect());
            let v0 = loop {
                let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if v.iter().map(|x| x * x).sum::<f64>() > 0.05 {
                    break v;
                }
            };
            let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0));
            HplanarRun {
                x0,
                v0,
                alpha: constant(a),
                beta: constant(b),
                constants: Some((a, b)),
                t_end,
                step,
            }
        })
        .collect()
}

/// Integrate independent runs in parallel; results keep the input order.
pub fn integrate_batch(model: &KahlerModel, runs: &[HplanarRun]) -> Vec<Result<CurveSample>> {
    use rayon::prelude::*;
    runs.par_iter()
        .map(|r| integrate_hplanar(model, &r.x0, &r.v0, &r.alpha, &r.beta, r.t_end, r.step))
        .collect()
}
