//! Trajectory-oriented Bayesian optimization of stochastic simulators.
//!
//! A common-random-number Gaussian process ([`gp`], [`crngp`]) treats the
//! simulator's random seed as a categorical input, so that individual
//! trajectories, not just their mean, can be predicted and searched for.
//! [`optimizer`] runs Thompson-sampling campaigns over `(x, seed)` pairs;
//! [`seir`] is the stochastic epidemic simulator used as a test bed.

pub mod crngp;
pub mod doe;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod optim;
pub mod optimizer;
pub mod problems;
pub mod seir;

pub use error::{Error, Result};
