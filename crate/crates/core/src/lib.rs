//! Weighted (f-mean) curvature flow of closed plane curves, with checks of
//! the differential and integral Harnack inequalities along the flow.

pub mod curve;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod harnack;
pub mod oracles;
pub mod residuals;
pub mod scenario;
pub mod weights;

pub use curve::{CurveSpec, DiscreteCurve, Point};
pub use error::{Error, Result};
pub use flow::{run, FlowConfig, FlowTrace, Scheme, TimeStep};
pub use geometry::{build_geometry, GeometryStack};
pub use harnack::{verify_differential_harnack, verify_integral_harnack, HarnackReport, Variant};
pub use oracles::{radial_solution, RadialSolution};
pub use weights::{PlaneWeight, Weight, WeightField};
