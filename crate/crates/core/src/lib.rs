//! Numerical toolkit for h-projectively equivalent Kähler metrics.
//!
//! Metrics are evaluated on truncated Taylor jets ([`jet::Jet`]), so
//! Christoffel symbols, curvature and covariant derivatives come out exact up
//! to rounding. On top of that sit the h-projective equation and its
//! prolongation, the extended operator and its spectral data, and integrators
//! for h-planar curves.

pub mod chart;
pub mod curves;
pub mod error;
pub mod fd;
pub mod geometry;
pub mod hproj;
pub mod jet;
pub mod models;
pub mod prolongation;
pub mod scalar;
pub mod spectral;
pub mod tensor;

pub use chart::{Chart, ChartPoint, DomainBox};
pub use error::{Error, Result};
pub use geometry::{ScalarField, TensorField};
pub use jet::Jet;
pub use models::{ComplexMatrix, KahlerModel, ModelDescriptor};
pub use scalar::Scalar;
pub use tensor::{Slot, TensorValue};
