//! Boundary equilibrium bifurcations in impacting hybrid systems.
//!
//! The crate simulates systems x' = F(x) on H = C^T x > 0 with an impact
//! reset on H = 0, builds the blown-up return map near a boundary
//! equilibrium, extracts saddle-node and period-doubling normal-form
//! coefficients at codimension-two points, predicts limit-cycle amplitudes
//! and continues cycles and bifurcation curves.

pub mod amplitude;
pub mod continuation;
pub mod dop853;
mod dop853_tableau;
pub mod equilibria;
pub mod error;
pub mod flow;
pub mod model;
pub mod models;
pub mod normalform;
pub mod poincare;
pub mod spec_io;

pub use error::{BebError, Result};
pub use nalgebra::Complex;
pub use model::{HybridModel, HybridSystem, Matrix, ModelAt, ParamPoint, Vector};
