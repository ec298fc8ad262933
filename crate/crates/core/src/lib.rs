//! Robust safe control for a two-link planar manipulator with uncertain
//! link masses.
//!
//! The crate is organized bottom-up:
//!
//! * [`arm`]: dynamics linear in the lumped inertial parameters.
//! * [`proximity`]: closest point, distance rate and point Jacobian.
//! * [`safety`]: safety index, uncertainty penalty and Lie derivatives.
//! * [`adaptive`]: adaptive reference controller and parameter estimator.
//! * [`safe_control`]: robust safe control over a sampled parameter family
//!   and the single-estimate projection baseline.
//! * [`sim`]: scenarios, trials, metrics, batch runs and the live session
//!   server.

pub mod adaptive;
pub mod arm;
pub mod error;
pub mod proximity;
pub mod safe_control;
pub mod safety;
pub mod sim;

pub use error::{Error, Result};
