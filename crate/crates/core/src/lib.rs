//! Physics-informed learning of EV battery power, cumulative energy, and
//! vehicle parameters from speed and time.
//!
//! - [`autodiff`]: scalar reverse-mode tape.
//! - [`nn`]: dense networks, batched backprop, Adam, model files.
//! - [`dynamics`]: longitudinal forces and the battery-power model.
//! - [`data`]: telemetry CSV, acceleration estimates, synthetic cycles.
//! - [`pinn`]: physics-informed power network with learnable parameters.
//! - [`rknn`]: RK4 energy quadrature and the Runge-Kutta network.

pub mod autodiff;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod nn;
pub mod pinn;
pub mod report;
pub mod rknn;

pub use error::{Error, Result};
pub use exec::Execution;
