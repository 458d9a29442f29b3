//! Numerical laboratory for Bayesian demand learning by a multi-market
//! monopolist facing growing demand.
//!
//! The pieces fit together as follows:
//!
//! - [`model`] / [`filter`]: the linear-Gaussian state-space model and the
//!   growth-inclusive Kalman predict/update recursion.
//! - [`steady_state`]: the long-run Riccati covariance, by fixed-point
//!   iteration (the oracle of record) and by scalar closed form.
//! - [`voi`]: the stage value of information `K* Σ* K*'` as a function of
//!   signal noise, its pro-rata variant, and the growth-regime classifiers
//!   behind its non-monotonicity.
//! - [`sim`]: a reproducible Monte Carlo simulator of the myopic pricing
//!   loop, used to validate the filter and the profit decomposition.
//! - [`nonmyopic`] / [`bellman`]: the multiplicative-noise model where
//!   pricing feeds back into learning, solved by value iteration, plus the
//!   simplified price first-order condition and its large-noise limit.

pub mod bellman;
pub mod error;
pub mod filter;
pub mod model;
pub mod nonmyopic;
pub mod quadrature;
pub mod search;
pub mod sim;
pub mod steady_state;
pub mod voi;

pub use error::{Error, Result};
pub use model::{Belief, KalmanStep, StateSpaceModel};

// Re-exported so downstream crates use the same matrix types.
pub use nalgebra;
