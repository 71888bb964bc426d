//! Coordinate charts, points and transition maps.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;

/// A point given by its chart name and real coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: String,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(chart: impl Into<String>, coords: Vec<f64>) -> Self {
        ChartPoint {
            chart: chart.into(),
            coords,
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Axis-aligned coordinate box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn cube(dim: usize, half_width: f64) -> Self {
        DomainBox {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_margin(x, 0.0)
    }

    /// Membership in the box shrunk by `margin` times its width on every side.
    pub fn contains_with_margin(&self, x: &[f64], margin: f64) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&l, &h))| {
            let w = h - l;
            v >= l + margin * w && v <= h - margin * w
        })
    }

    /// Smallest distance to the boundary, relative to the half-width, per axis.
    pub fn depth(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&l, &h))| {
                let half = 0.5 * (h - l);
                let mid = 0.5 * (h + l);
                1.0 - (v - mid).abs() / half
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub type JetMap = Arc<dyn Fn(&[Jet]) -> Result<Vec<Jet>> + Send + Sync>;

/// Smooth coordinate change into another chart.
#[derive(Clone)]
pub struct Transition {
    pub target: String,
    pub map: JetMap,
}

impl fmt::Debug for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transition")
            .field("target", &self.target)
            .finish_non_exhaustive()
    }
}

impl Transition {
    /// Image of a point, values only.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let seeds: Vec<Jet> = x.iter().map(|&v| Jet::constant(v)).collect();
        Ok((self.map)(&seeds)?.iter().map(|j| j.value()).collect())
    }

    /// Image and Jacobian (row = target coordinate).
    pub fn apply_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let seeds = Jet::seed(x, 1);
        let out = (self.map)(&seeds)?;
        let m = x.len();
        let mut jac = Vec::with_capacity(out.len() * m);
        for o in &out {
            for k in 0..m {
                jac.push(o.derivative(&[k])?);
            }
        }
        Ok((out.iter().map(|j| j.value()).collect(), jac))
    }
}

/// A coordinate chart with a rectangular domain and transitions to other charts.
#[derive(Debug, Clone)]
pub struct Chart {
    pub name: String,
    pub dim: usize,
    pub domain: DomainBox,
    pub transitions: Vec<Transition>,
}

impl Chart {
    /// Charts have even real dimension. Stand-alone models additionally need
    /// dimension at least 4; that is checked where models are built.
    pub fn new(name: impl Into<String>, dim: usize, domain: DomainBox) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::UnsupportedDimension(format!(
                "chart dimension {dim} must be even and positive"
            )));
        }
        if domain.lo.len() != dim || domain.hi.len() != dim {
            return Err(Error::ShapeMismatch("domain box dimension".into()));
        }
        Ok(Chart {
            name: name.into(),
            dim,
            domain,
            transitions: Vec::new(),
        })
    }

    pub fn transition_to(&self, target: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.target == target)
    }
}
