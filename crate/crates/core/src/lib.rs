//! Calibrated uncertainty bounds for PDE surrogate predictors.
//!
//! The library scores surrogate rollouts by the magnitude of a discrete
//! PDE residual, evaluated with finite-difference stencil convolutions,
//! and turns those scores into distribution-free prediction bands via
//! split conformal calibration. No ground-truth solution data is needed
//! at validation time.

pub mod campaign;
pub mod conformal;
pub mod dump;
pub mod error;
pub mod grid;
pub mod ic;
pub mod residual;
pub mod sampling;
pub mod solvers;
pub mod spectral;
pub mod stencil;
pub mod surrogate;

pub use error::{Error, Result};
pub use grid::{Axis, AxisKind, FieldTensor, Grid};
