//! Scalar demand model with multiplicative noise: `q = theta - b beta p + h gamma`
//! with `beta ~ N(1, 1)` and `gamma ~ N(0, 1)`.
//!
//! Pricing now feeds back into learning: the prior-predictive signal variance
//! is `Σ + h^2 + b^2 p^2`, so a high price drowns the signal in slope noise.
//! The gain is growth-free here, `K = Σ / (Σ + b^2 p^2 + h^2)`, with the mean
//! scaled by `d` after the update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar model parameters for the price-dependent-learning problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonMyopicModel {
    /// Per-period growth `d >= 1`.
    pub growth: f64,
    /// State-noise loading `f >= 0`.
    pub state_noise: f64,
    /// Additive signal-noise loading `h >= 0`.
    pub signal_noise: f64,
    /// Demand-slope loading `b > 0`.
    pub slope_loading: f64,
    /// Marginal cost `c`.
    pub cost: f64,
    /// Discount factor, `0 <= delta < 1` (zero admits the one-period check).
    pub discount: f64,
}

impl NonMyopicModel {
    pub fn new(
        growth: f64,
        state_noise: f64,
        signal_noise: f64,
        slope_loading: f64,
        cost: f64,
        discount: f64,
    ) -> Result<Self> {
        if growth.is_nan() || growth < 1.0 {
            return Err(Error::Config(format!(
                "growth must be at least 1 (got {growth})"
            )));
        }
        if state_noise.is_nan() || state_noise < 0.0 || signal_noise.is_nan() || signal_noise < 0.0
        {
            return Err(Error::Config("noise loadings must be nonnegative".into()));
        }
        if slope_loading.is_nan() || slope_loading <= 0.0 {
            return Err(Error::Config(format!(
                "slope loading must be positive (got {slope_loading})"
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Config(format!(
                "discount must lie in [0, 1) (got {discount})"
            )));
        }
        if !cost.is_finite() {
            return Err(Error::Config("cost must be finite".into()));
        }
        Ok(Self {
            growth,
            state_noise,
            signal_noise,
            slope_loading,
            cost,
            discount,
        })
    }
}

/// Prior-predictive variance of the next signal: `Σ + b^2 p^2 + h^2`.
pub fn nm_signal_variance(sigma: f64, p: f64, model: &NonMyopicModel) -> f64 {
    let bp = model.slope_loading * p;
    sigma + bp * bp + model.signal_noise * model.signal_noise
}

/// Growth-free gain `K = Σ / (Σ + b^2 p^2 + h^2)`, in `[0, 1)`.
pub fn nm_gain(sigma: f64, p: f64, model: &NonMyopicModel) -> Result<f64> {
    let denom = nm_signal_variance(sigma, p, model);
    if denom <= 0.0 {
        return Err(Error::Domain("signal variance must be positive".into()));
    }
    Ok(sigma / denom)
}

/// Belief update: `mu' = d (K s + (1 - K) mu)`, `Σ' = d^2 (1 - K) Σ + f^2`.
pub fn nm_update(
    mu: f64,
    sigma: f64,
    signal: f64,
    p: f64,
    model: &NonMyopicModel,
) -> Result<(f64, f64)> {
    let k = nm_gain(sigma, p, model)?;
    let d = model.growth;
    let mu_next = d * (k * signal + (1.0 - k) * mu);
    let sigma_next = d * d * (1.0 - k) * sigma + model.state_noise * model.state_noise;
    Ok((mu_next, sigma_next))
}

/// Myopic first-order-condition price `(mu + b c) / (2 b)`.
pub fn myopic_foc_price(mu: f64, model: &NonMyopicModel) -> f64 {
    (mu + model.slope_loading * model.cost) / (2.0 * model.slope_loading)
}

/// Long-run belief variance at a fixed price: the positive root of
/// `Σ^2 - ((d^2 - 1) w + f^2) Σ - f^2 w = 0` with `w = h^2 + b^2 p^2`.
/// Matches the additive-model closed form with `g = 1` and `h^2 -> w`.
pub fn nm_sigma_star(p: f64, model: &NonMyopicModel) -> f64 {
    let d = model.growth;
    let f2 = model.state_noise * model.state_noise;
    let bp = model.slope_loading * p;
    let w = model.signal_noise * model.signal_noise + bp * bp;
    let grow = (d - 1.0) * (d + 1.0);
    let radical = (w * w * grow * grow + 2.0 * f2 * w * (d * d + 1.0) + f2 * f2).sqrt();
    0.5 * (radical + w * grow + f2)
}

/// Learning pressure on the price first-order condition:
/// `-2 b^2 p Σ / (Σ + 2 b^2 p^2 + 2 h^2)`.
pub fn euler_term(p: f64, sigma: f64, model: &NonMyopicModel) -> Result<f64> {
    let b2 = model.slope_loading * model.slope_loading;
    let h2 = model.signal_noise * model.signal_noise;
    let denom = sigma + 2.0 * b2 * p * p + 2.0 * h2;
    if denom <= 0.0 {
        return Err(Error::Domain(
            "euler term denominator must be positive".into(),
        ));
    }
    Ok(-2.0 * b2 * p * sigma / denom)
}

/// Large-noise limit of the learning pressure at the long-run variance:
/// `-2 b^2 p (d^2 - 1) / (d^2 + 1)`. Nonzero whenever `d > 1` and `p != 0`,
/// so the multiplicative noise keeps bending prices even when the additive
/// signal is nearly useless.
pub fn euler_term_limit(p: f64, model: &NonMyopicModel) -> f64 {
    let b2 = model.slope_loading * model.slope_loading;
    let d2 = model.growth * model.growth;
    -2.0 * b2 * p * (d2 - 1.0) / (d2 + 1.0)
}
