//! Shrinking-horizon robust nonlinear model predictive control.
//!
//! The controller plans along a reference trajectory, bounds the deviation
//! of the true plant from the linearized nominal model with interval and
//! zonotope sets, and tightens the output constraints by those sets. A
//! time-varying LQR feedback around the last valid reference provides a
//! fallback input whenever the online optimization does not return a valid
//! trajectory, so constraint satisfaction holds at every step regardless of
//! solver outcome.
//!
//! Module map:
//!
//! * [`sets`] and [`range`]: interval/zonotope algebra and scalar interval
//!   arithmetic.
//! * [`model`]: the plant contract plus the fuel thermal management
//!   benchmark ([`model::ftms`]).
//! * [`ltv`]: linearization along a reference and the finite-horizon LQR.
//! * [`error_sets`]: error-set propagation, remainder bounds and constraint
//!   tightening.
//! * [`qp`] and [`optimizer`]: the convex subproblem solver and the
//!   successive-linearization trajectory optimizer.
//! * [`controller`]: valid-reference iteration and the fallback controller.
//! * [`sim`], [`config`], [`io`]: closed-loop experiments, scenario files and
//!   CSV/JSON artifacts.

pub mod config;
pub mod controller;
pub mod error;
pub mod error_sets;
pub mod io;
pub mod ltv;
pub mod model;
pub mod optimizer;
pub mod qp;
pub mod range;
pub mod sets;
pub mod sim;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
