use thiserror::Error;

use crate::kernels::KernelParams;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A covariance factorization failed. Carries the hyperparameters that
    /// were being evaluated when available.
    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        params: Option<KernelParams>,
    },

    #[error("hyperparameter fit failed: {0}")]
    FitFailure(String),

    #[error("partition cell {cell} has {rows} training rows, need at least {required}")]
    PartitionInfeasible {
        cell: usize,
        rows: usize,
        required: usize,
    },

    #[error("simulator failure: {0}")]
    Simulator(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, params: Option<&KernelParams>) -> Self {
        Error::Numerical {
            message: msg.into(),
            params: params.cloned(),
        }
    }
}
