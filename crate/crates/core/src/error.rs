use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::data::DataError;
use crate::dynamics::DynamicsError;
use crate::nn::NnError;

/// Errors from training, prediction, and model persistence.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {component} loss at epoch {epoch} (parameter group {group})")]
    NonFinite {
        epoch: usize,
        component: &'static str,
        group: String,
    },
    #[error("time step {got} s does not match model step {expected} s")]
    StepMismatch { expected: f64, got: f64 },
    #[error("time {t} s outside sampled range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("model sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
