//! Closed-form Kähler models in real coordinates.
//!
//! Complex coordinates `z_k = x_k + i y_k` are stored as `(x1, y1, x2, y2, ...)`
//! with the standard complex structure `J ∂x = ∂y`. The Fubini-Study metric is
//! normalised to holomorphic sectional curvature 1, so `g = 4 Id` at the origin
//! of an affine chart. Pullbacks `f_A^* g_FS` by `[w] ↦ [A w]` are computed
//! directly from the homogeneous formula, which needs no chart switching.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chart::{Chart, ChartPoint, DomainBox, JetMap, Transition};
use crate::error::{Error, Result};
use crate::geometry::{standard_j, MetricJet, TensorField};
use crate::jet::Jet;
use crate::tensor::{Slot, TensorValue};

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    n: usize,
    data: Vec<(f64, f64)>,
}

impl ComplexMatrix {
    pub fn new(n: usize, data: Vec<(f64, f64)>) -> Result<Self> {
        if data.len() != n * n || n == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {n}x{n} matrix",
                data.len()
            )));
        }
        if data.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(ComplexMatrix { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let data = (0..n * n)
            .map(|k| if k / n == k % n { (1.0, 0.0) } else { (0.0, 0.0) })
            .collect();
        ComplexMatrix { n, data }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let data = (0..n * n)
            .map(|k| if k / n == k % n { (d[k / n], 0.0) } else { (0.0, 0.0) })
            .collect();
        ComplexMatrix { n, data }
    }

    /// Parse `[[ [re, im], ... ], ...]` (rows of pairs).
    pub fn from_json_str(s: &str) -> Result<Self> {
        let rows: Vec<Vec<[f64; 2]>> = serde_json::from_str(s)
            .map_err(|e| Error::InvalidInput(format!("matrix JSON: {e}")))?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("matrix must be square".into()));
        }
        let data = rows.into_iter().flatten().map(|[a, b]| (a, b)).collect();
        ComplexMatrix::new(n, data)
    }

    pub fn to_rows(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| {
                let (a, b) = self.get(i, j);
                [a, b]
            }).collect())
            .collect()
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        self.data[i * self.n + j]
    }

    pub fn mul(&self, o: &ComplexMatrix) -> ComplexMatrix {
        let n = self.n;
        let mut data = vec![(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = (0.0, 0.0);
                for k in 0..n {
                    let (a, b) = self.get(i, k);
                    let (c, d) = o.get(k, j);
                    acc.0 += a * c - b * d;
                    acc.1 += a * d + b * c;
                }
                data[i * n + j] = acc;
            }
        }
        ComplexMatrix { n, data }
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        let n = self.n;
        let data = (0..n * n)
            .map(|k| {
                let (a, b) = self.get(k % n, k / n);
                (a, -b)
            })
            .collect();
        ComplexMatrix { n, data }
    }

    pub fn scale(&self, s: f64) -> ComplexMatrix {
        ComplexMatrix {
            n: self.n,
            data: self.data.iter().map(|&(a, b)| (a * s, b * s)).collect(),
        }
    }

    /// `|det|`, via the real `2n x 2n` representation (whose determinant is `|det|^2`).
    pub fn abs_det(&self) -> f64 {
        let n = self.n;
        let m = 2 * n;
        let real = nalgebra::DMatrix::from_fn(m, m, |r, c| {
            let (a, b) = self.get(r / 2, c / 2);
            match (r % 2, c % 2) {
                (0, 0) | (1, 1) => a,
                (1, 0) => b,
                _ => -b,
            }
        });
        real.determinant().abs().sqrt()
    }

    /// Distance from being a multiple of a unitary matrix.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.adjoint().mul(self);
        let s = p.get(0, 0).0;
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let (a, b) = p.get(i, j);
                let e = if i == j { s } else { 0.0 };
                d = d.max((a - e).abs()).max(b.abs());
            }
        }
        d / s.abs().max(f64::MIN_POSITIVE)
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("matrix must be square"));
        }
        let data = rows.into_iter().flatten().map(|[a, b]| (a, b)).collect();
        ComplexMatrix::new(n, data).map_err(serde::de::Error::custom)
    }
}

/// Serializable description of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelDescriptor {
    /// Flat `C^n`; `signs` gives one metric sign per complex coordinate.
    Flat {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signs: Option<Vec<f64>>,
    },
    /// Flat torus `C^n / Λ` for the rectangular lattice with the given real periods.
    FlatTorus { n: usize, periods: Vec<f64> },
    /// `CP(n)` with holomorphic sectional curvature 1.
    FubiniStudy { n: usize },
    /// Pullback of Fubini-Study by `[w] ↦ [A w]`.
    Pullback { n: usize, a: ComplexMatrix },
    /// Riemannian product with weights multiplying each factor metric.
    Product {
        factors: Vec<ModelDescriptor>,
        weights: Vec<f64>,
    },
}

impl ModelDescriptor {
    pub fn complex_dim(&self) -> usize {
        match self {
            ModelDescriptor::Flat { n, .. }
            | ModelDescriptor::FlatTorus { n, .. }
            | ModelDescriptor::FubiniStudy { n }
            | ModelDescriptor::Pullback { n, .. } => *n,
            ModelDescriptor::Product { factors, .. } => factors.iter().map(|f| f.complex_dim()).sum(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelDescriptor::Flat { n, signs: None } => format!("flat(n={n})"),
            ModelDescriptor::Flat { n, signs: Some(s) } => format!("flat(n={n},signs={s:?})"),
            ModelDescriptor::FlatTorus { n, .. } => format!("flat-torus(n={n})"),
            ModelDescriptor::FubiniStudy { n } => format!("fubini-study(n={n})"),
            ModelDescriptor::Pullback { n, .. } => format!("pullback(n={n})"),
            ModelDescriptor::Product { factors, .. } => {
                let parts: Vec<String> = factors.iter().map(|f| f.label()).collect();
                format!("product[{}]", parts.join(" x "))
            }
        }
    }
}

#[derive(Clone)]
enum Kind {
    Flat { signs: Vec<f64> },
    Torus { periods: Vec<f64> },
    Projective { a: ComplexMatrix },
    Product { factors: Vec<KahlerModel>, weights: Vec<f64> },
}

/// A Kähler model: atlas plus closed-form metric and complex structure.
#[derive(Clone)]
pub struct KahlerModel {
    descriptor: ModelDescriptor,
    n: usize,
    kind: Kind,
    charts: Vec<Chart>,
}

impl fmt::Debug for KahlerModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KahlerModel")
            .field("descriptor", &self.descriptor)
            .field("charts", &self.charts.len())
            .finish()
    }
}

/// Half-width of affine chart boxes on projective models.
pub const AFFINE_BOX: f64 = 5.0;

impl KahlerModel {
    /// Build and validate a stand-alone model (real dimension at least 4).
    pub fn from_descriptor(d: &ModelDescriptor) -> Result<Self> {
        let m = Self::build(d)?;
        if m.dim() < 4 {
            return Err(Error::UnsupportedDimension(format!(
                "{} has real dimension {}, at least 4 required",
                d.label(),
                m.dim()
            )));
        }
        Ok(m)
    }

    /// Build without the stand-alone dimension check; used for product factors.
    fn build(d: &ModelDescriptor) -> Result<Self> {
        match d {
            ModelDescriptor::Flat { n, signs } => {
                let signs = signs.clone().unwrap_or_else(|| vec![1.0; *n]);
                if *n == 0 || signs.len() != *n {
                    return Err(Error::InvalidInput("flat: need one sign per complex coordinate".into()));
                }
                if signs.iter().any(|s| *s == 0.0 || !s.is_finite()) {
                    return Err(Error::InvalidInput("flat: signs must be finite and nonzero".into()));
                }
                let chart = Chart::new("affine", 2 * n, DomainBox::cube(2 * n, 1e3))?;
                Ok(KahlerModel {
                    descriptor: d.clone(),
                    n: *n,
                    kind: Kind::Flat { signs },
                    charts: vec![chart],
                })
            }
            ModelDescriptor::FlatTorus { n, periods } => {
                if *n < 2 {
                    return Err(Error::UnsupportedDimension("flat torus needs n >= 2".into()));
                }
                if periods.len() != 2 * n || periods.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
                    return Err(Error::InvalidInput(
                        "flat torus: need 2n positive periods".into(),
                    ));
                }
                let half = 10.0 * periods.iter().cloned().fold(0.0, f64::max);
                let chart = Chart::new("cover", 2 * n, DomainBox::cube(2 * n, half))?;
                Ok(KahlerModel {
                    descriptor: d.clone(),
                    n: *n,
                    kind: Kind::Torus {
                        periods: periods.clone(),
                    },
                    charts: vec![chart],
                })
            }
            ModelDescriptor::FubiniStudy { n } => {
                if *n < 1 {
                    return Err(Error::UnsupportedDimension("fubini-study needs n >= 1".into()));
                }
                Self::projective(d.clone(), *n, ComplexMatrix::identity(n + 1))
            }
            ModelDescriptor::Pullback { n, a } => {
                if a.size() != n + 1 {
                    return Err(Error::ShapeMismatch(format!(
                        "pullback on CP({n}) needs a {0}x{0} matrix",
                        n + 1
                    )));
                }
                let scale = (0..=*n)
                    .map(|i| (0..=*n).map(|j| {
                        let (x, y) = a.get(i, j);
                        x * x + y * y
                    }).sum::<f64>().sqrt())
                    .product::<f64>();
                if a.abs_det() < 1e-12 * scale {
                    return Err(Error::InvalidInput("pullback matrix is singular".into()));
                }
                Self::projective(d.clone(), *n, a.clone())
            }
            ModelDescriptor::Product { factors, weights } => {
                if factors.is_empty() || factors.len() != weights.len() {
                    return Err(Error::InvalidInput("product: one weight per factor".into()));
                }
                if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err(Error::InvalidInput("product: weights must be positive".into()));
                }
                let built: Vec<KahlerModel> = factors.iter().map(Self::build).collect::<Result<_>>()?;
                let n: usize = built.iter().map(|f| f.n).sum();
                let mut lo = Vec::new();
                let mut hi = Vec::new();
                for f in &built {
                    let c = f.default_chart();
                    lo.extend_from_slice(&c.domain.lo);
                    hi.extend_from_slice(&c.domain.hi);
                }
                let chart = Chart::new("product", 2 * n, DomainBox { lo, hi })?;
                Ok(KahlerModel {
                    descriptor: d.clone(),
                    n,
                    kind: Kind::Product {
                        factors: built,
                        weights: weights.clone(),
                    },
                    charts: vec![chart],
                })
            }
        }
    }

    fn projective(descriptor: ModelDescriptor, n: usize, a: ComplexMatrix) -> Result<Self> {
        let mut charts = Vec::new();
        for k in 0..=n {
            let mut c = Chart::new(format!("affine{k}"), 2 * n, DomainBox::cube(2 * n, AFFINE_BOX))?;
            for l in 0..=n {
                if l != k {
                    c.transitions.push(Transition {
                        target: format!("affine{l}"),
                        map: affine_transition(n, k, l),
                    });
                }
            }
            charts.push(c);
        }
        Ok(KahlerModel {
            descriptor,
            n,
            kind: Kind::Projective { a },
            charts,
        })
    }

    pub fn flat(n: usize) -> Result<Self> {
        Self::from_descriptor(&ModelDescriptor::Flat { n, signs: None })
    }

    pub fn flat_with_signs(signs: Vec<f64>) -> Result<Self> {
        Self::from_descriptor(&ModelDescriptor::Flat {
            n: signs.len(),
            signs: Some(signs),
        })
    }

    pub fn flat_torus(n: usize, periods: Vec<f64>) -> Result<Self> {
        Self::from_descriptor(&ModelDescriptor::FlatTorus { n, periods })
    }

    pub fn fubini_study(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnsupportedDimension(
                "fubini-study needs n >= 2 as a stand-alone model".into(),
            ));
        }
        Self::from_descriptor(&ModelDescriptor::FubiniStudy { n })
    }

    pub fn pullback(n: usize, a: ComplexMatrix) -> Result<Self> {
        Self::from_descriptor(&ModelDescriptor::Pullback { n, a })
    }

    pub fn product(factors: Vec<ModelDescriptor>, weights: Vec<f64>) -> Result<Self> {
        Self::from_descriptor(&ModelDescriptor::Product { factors, weights })
    }

    pub fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    pub fn label(&self) -> String {
        self.descriptor.label()
    }

    /// Complex dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Real dimension.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn default_chart(&self) -> &Chart {
        &self.charts[0]
    }

    pub fn chart(&self, name: &str) -> Result<&Chart> {
        self.charts
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown chart {name}")))
    }

    fn chart_index(&self, name: &str) -> Result<usize> {
        self.charts
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown chart {name}")))
    }

    /// Real periods of a flat torus.
    pub fn periods(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Torus { periods } => Some(periods),
            _ => None,
        }
    }

    /// True when the metric's coordinate components are constant.
    pub fn is_flat(&self) -> bool {
        match &self.kind {
            Kind::Flat { .. } | Kind::Torus { .. } => true,
            Kind::Product { factors, .. } => factors.iter().all(|f| f.is_flat()),
            Kind::Projective { .. } => false,
        }
    }

    /// Metric components on coordinate jets of the named chart.
    pub fn metric_on(&self, chart: &str, x: &[Jet]) -> Result<TensorValue<Jet>> {
        let k = self.chart_index(chart)?;
        self.metric_in(k, x)
    }

    fn metric_in(&self, chart: usize, x: &[Jet]) -> Result<TensorValue<Jet>> {
        let m = self.dim();
        if x.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates for a {m}-dimensional model",
                x.len()
            )));
        }
        match &self.kind {
            Kind::Flat { signs } => Ok(diagonal_metric(signs)),
            Kind::Torus { .. } => Ok(diagonal_metric(&vec![1.0; self.n])),
            Kind::Projective { a } => projective_metric(a, chart, x),
            Kind::Product { factors, weights } => {
                let mut g = TensorValue::<Jet>::zeros(vec![Slot::Lower, Slot::Lower], m);
                let mut off = 0;
                for (f, w) in factors.iter().zip(weights) {
                    let d = f.dim();
                    let gf = f.metric_in(0, &x[off..off + d])?;
                    for i in 0..d {
                        for j in 0..d {
                            g.set(&[off + i, off + j], gf.get(&[i, j]).clone().scale(*w));
                        }
                    }
                    off += d;
                }
                Ok(g)
            }
        }
    }

    pub fn metric_field(&self, chart: &str) -> Result<TensorField> {
        let k = self.chart_index(chart)?;
        let me = self.clone();
        Ok(Arc::new(move |x: &[Jet]| me.metric_in(k, x)))
    }

    pub fn default_metric_field(&self) -> TensorField {
        let me = self.clone();
        Arc::new(move |x: &[Jet]| me.metric_in(0, x))
    }

    /// Complex structure; the standard one in every chart of every model here.
    pub fn j_field(&self) -> TensorField {
        let j = standard_j(self.dim()).map(|&v| Jet::constant(v));
        Arc::new(move |_x: &[Jet]| Ok(j.clone()))
    }

    pub fn j_value(&self) -> TensorValue<f64> {
        standard_j(self.dim())
    }

    pub fn check_in_domain(&self, p: &ChartPoint) -> Result<()> {
        let c = self.chart(&p.chart)?;
        if p.coords.len() != c.dim {
            return Err(Error::ShapeMismatch("point dimension".into()));
        }
        if !c.domain.contains(&p.coords) {
            return Err(Error::OutOfDomain(format!(
                "{:?} outside chart {}",
                p.coords, p.chart
            )));
        }
        Ok(())
    }

    pub fn metric_jet(&self, p: &ChartPoint, order: usize) -> Result<MetricJet> {
        self.check_in_domain(p)?;
        let k = self.chart_index(&p.chart)?;
        let x = Jet::seed(&p.coords, order);
        Ok(MetricJet {
            point: p.clone(),
            jet: self.metric_in(k, &x)?,
        })
    }

    pub fn metric_value(&self, p: &ChartPoint) -> Result<TensorValue<f64>> {
        Ok(self.metric_jet(p, 0)?.g())
    }

    /// Map a point into another chart.
    pub fn change_chart(&self, p: &ChartPoint, target: &str) -> Result<ChartPoint> {
        if p.chart == target {
            return Ok(p.clone());
        }
        let c = self.chart(&p.chart)?;
        let t = c.transition_to(target).ok_or_else(|| {
            Error::OutOfDomain(format!("no transition from {} to {target}", p.chart))
        })?;
        Ok(ChartPoint::new(target, t.apply(&p.coords)?))
    }

    /// The chart in which the point lies deepest inside the domain box.
    pub fn best_chart(&self, p: &ChartPoint) -> Result<ChartPoint> {
        let mut best = p.clone();
        let mut depth = self.chart(&p.chart)?.domain.depth(&p.coords);
        for c in &self.charts {
            if c.name == p.chart {
                continue;
            }
            if let Ok(q) = self.change_chart(p, &c.name) {
                let d = c.domain.depth(&q.coords);
                if d > depth + 1e-12 {
                    depth = d;
                    best = q;
                }
            }
        }
        Ok(best)
    }

    /// Reduce torus coordinates into the fundamental domain `[0, period)`.
    pub fn reduce(&self, p: &ChartPoint) -> ChartPoint {
        match &self.kind {
            Kind::Torus { periods } => ChartPoint::new(
                p.chart.clone(),
                p.coords
                    .iter()
                    .zip(periods)
                    .map(|(x, t)| x.rem_euclid(*t))
                    .collect(),
            ),
            _ => p.clone(),
        }
    }

    /// Deterministic sample points in the default chart, uniform in `[-radius, radius]^m`.
    pub fn sample_points(&self, seed: u64, count: usize, radius: f64) -> Vec<ChartPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chart = self.default_chart();
        (0..count)
            .map(|_| {
                let coords = (0..self.dim())
                    .map(|i| {
                        let r = radius.min(0.5 * (chart.domain.hi[i] - chart.domain.lo[i]));
                        rng.gen_range(-r..=r)
                    })
                    .collect();
                ChartPoint::new(chart.name.clone(), coords)
            })
            .collect()
    }

    /// Closed loops generating the lattice of a torus: straight lines along each period.
    pub fn lattice_translations(&self) -> Vec<Vec<f64>> {
        match &self.kind {
            Kind::Torus { periods } => (0..periods.len())
                .map(|k| {
                    let mut v = vec![0.0; periods.len()];
                    v[k] = periods[k];
                    v
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Homogeneous coordinates `(re, im)` of a point of a projective model.
    pub fn homogeneous_lift(&self, p: &ChartPoint) -> Result<Vec<(f64, f64)>> {
        if !matches!(self.kind, Kind::Projective { .. }) {
            return Err(Error::UnsupportedModel(format!("{} has no homogeneous coordinates", self.label())));
        }
        let k = self.chart_index(&p.chart)?;
        let x: Vec<Jet> = p.coords.iter().map(|v| Jet::constant(*v)).collect();
        Ok(affine_lift(self.n, k, &x)
            .iter()
            .map(|c| (c.re.value(), c.im.value()))
            .collect())
    }

    /// Homogeneous lift of a tangent vector at `p` (the differential of the affine lift).
    pub fn homogeneous_tangent(&self, p: &ChartPoint, v: &[f64]) -> Result<Vec<(f64, f64)>> {
        let w = self.homogeneous_lift(p)?;
        let k = self.chart_index(&p.chart)?;
        let mut out = vec![(0.0, 0.0); w.len()];
        let mut j = 0;
        for (slot, o) in out.iter_mut().enumerate() {
            if slot != k {
                *o = (v[2 * j], v[2 * j + 1]);
                j += 1;
            }
        }
        Ok(out)
    }

    /// Complex matrix of a projective model (identity for Fubini-Study).
    pub fn projective_matrix(&self) -> Option<&ComplexMatrix> {
        match &self.kind {
            Kind::Projective { a } => Some(a),
            _ => None,
        }
    }

    /// Index ranges of product factors in real coordinates.
    pub fn factor_blocks(&self) -> Vec<std::ops::Range<usize>> {
        match &self.kind {
            Kind::Product { factors, .. } => {
                let mut off = 0;
                factors
                    .iter()
                    .map(|f| {
                        let r = off..off + f.dim();
                        off += f.dim();
                        r
                    })
                    .collect()
            }
            _ => vec![0..self.dim()],
        }
    }
}

fn diagonal_metric(signs: &[f64]) -> TensorValue<Jet> {
    let m = 2 * signs.len();
    TensorValue::from_fn(vec![Slot::Lower, Slot::Lower], m, |i| {
        if i[0] == i[1] {
            Jet::constant(signs[i[0] / 2])
        } else {
            Jet::zero()
        }
    })
}

/// Complex number with jet components.
#[derive(Clone, Debug)]
pub(crate) struct CJet {
    pub re: Jet,
    pub im: Jet,
}

impl CJet {
    pub fn constant(re: f64, im: f64) -> Self {
        CJet {
            re: Jet::constant(re),
            im: Jet::constant(im),
        }
    }

    pub fn add(&self, o: &CJet) -> CJet {
        CJet {
            re: &self.re + &o.re,
            im: &self.im + &o.im,
        }
    }

    pub fn sub(&self, o: &CJet) -> CJet {
        CJet {
            re: &self.re - &o.re,
            im: &self.im - &o.im,
        }
    }

    pub fn mul(&self, o: &CJet) -> CJet {
        CJet {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }

    /// Multiply by a constant complex number.
    pub fn mul_c(&self, (a, b): (f64, f64)) -> CJet {
        CJet {
            re: self.re.clone().scale(a) - self.im.clone().scale(b),
            im: self.re.clone().scale(b) + self.im.clone().scale(a),
        }
    }

    pub fn conj(&self) -> CJet {
        CJet {
            re: self.re.clone(),
            im: -&self.im,
        }
    }

    pub fn norm_sqr(&self) -> Jet {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn div(&self, o: &CJet) -> CJet {
        let d = o.norm_sqr().recip();
        let num = self.mul(&o.conj());
        CJet {
            re: &num.re * &d,
            im: &num.im * &d,
        }
    }
}

/// Homogeneous coordinates of a point of affine chart `k`: 1 in slot `k`, `z` elsewhere.
pub(crate) fn affine_lift(n: usize, k: usize, x: &[Jet]) -> Vec<CJet> {
    let mut w = Vec::with_capacity(n + 1);
    let mut j = 0;
    for slot in 0..=n {
        if slot == k {
            w.push(CJet::constant(1.0, 0.0));
        } else {
            w.push(CJet {
                re: x[2 * j].clone(),
                im: x[2 * j + 1].clone(),
            });
            j += 1;
        }
    }
    w
}

fn affine_transition(n: usize, from: usize, to: usize) -> JetMap {
    Arc::new(move |x: &[Jet]| {
        let w = affine_lift(n, from, x);
        if w[to].norm_sqr().value() < 1e-24 {
            return Err(Error::OutOfDomain(format!(
                "point not covered by chart affine{to}"
            )));
        }
        let mut out = Vec::with_capacity(2 * n);
        for (slot, ws) in w.iter().enumerate() {
            if slot == to {
                continue;
            }
            let z = ws.div(&w[to]);
            out.push(z.re);
            out.push(z.im);
        }
        Ok(out)
    })
}

/// `g(X, Y) = 4 Re[(<u,v>|w|^2 - <u,w><w,v>) / |w|^4]` with `w = A ι(z)`,
/// `u = A dι(X)`, `<p,q> = Σ conj(p_i) q_i`.
fn projective_metric(a: &ComplexMatrix, chart: usize, x: &[Jet]) -> Result<TensorValue<Jet>> {
    let n = a.size() - 1;
    let lift = affine_lift(n, chart, x);
    let w: Vec<CJet> = (0..=n)
        .map(|i| {
            let mut acc = CJet::constant(0.0, 0.0);
            for (j, l) in lift.iter().enumerate() {
                acc = acc.add(&l.mul_c(a.get(i, j)));
            }
            acc
        })
        .collect();
    // tangent columns: images of the unit vectors in the non-constant slots
    let slots: Vec<usize> = (0..=n).filter(|&s| s != chart).collect();
    let cols: Vec<Vec<(f64, f64)>> = slots
        .iter()
        .map(|&s| (0..=n).map(|i| a.get(i, s)).collect())
        .collect();
    let w2 = w.iter().fold(Jet::zero(), |acc, wi| acc + wi.norm_sqr());
    if w2.value() < 1e-300 {
        return Err(Error::Degenerate("homogeneous lift vanishes".into()));
    }
    let inv_w4 = (&w2 * &w2).recip();
    // <c_j, w>
    let cw: Vec<CJet> = cols
        .iter()
        .map(|c| {
            let mut acc = CJet::constant(0.0, 0.0);
            for (ci, wi) in c.iter().zip(&w) {
                acc = acc.add(&wi.mul_c((ci.0, -ci.1)));
            }
            acc
        })
        .collect();
    let m = 2 * n;
    let mut g = TensorValue::<Jet>::zeros(vec![Slot::Lower, Slot::Lower], m);
    for j in 0..n {
        for k in j..n {
            let mut cc = (0.0, 0.0);
            for (p, q) in cols[j].iter().zip(&cols[k]) {
                cc.0 += p.0 * q.0 + p.1 * q.1;
                cc.1 += p.0 * q.1 - p.1 * q.0;
            }
            let first = CJet {
                re: w2.clone().scale(cc.0),
                im: w2.clone().scale(cc.1),
            };
            let p = first.sub(&cw[j].mul(&cw[k].conj()));
            let re = (&p.re * &inv_w4).scale(4.0);
            let im = (&p.im * &inv_w4).scale(4.0);
            g.set(&[2 * j, 2 * k], re.clone());
            g.set(&[2 * j + 1, 2 * k + 1], re.clone());
            g.set(&[2 * j, 2 * k + 1], -&im);
            g.set(&[2 * j + 1, 2 * k], im.clone());
            if j != k {
                g.set(&[2 * k, 2 * j], re.clone());
                g.set(&[2 * k + 1, 2 * j + 1], re);
                g.set(&[2 * k + 1, 2 * j], -&im);
                g.set(&[2 * k, 2 * j + 1], im);
            }
        }
    }
    Ok(g)
}
