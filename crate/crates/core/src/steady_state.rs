//! Long-run Riccati covariance.
//!
//! The belief-covariance recursion
//! `Σ_{t+1} = D Σ_t D' + F F' - D Σ_t G' (G Σ_t G' + H H')^{-1} G Σ_t D'`
//! converges to a fixed point `Σ*`. The plain iteration is the oracle of
//! record for general matrices; for scalar (or diagonal) models `Σ*` is the
//! positive root of `g^2 Σ^2 - ((d^2-1) h^2 + f^2 g^2) Σ - f^2 h^2 = 0`,
//! available in closed form.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::filter::{innovation_covariance, kalman_gain, normalized_gain};
use crate::model::{symmetrized, StateSpaceModel};

/// Default sup-norm tolerance for the fixed-point iteration.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default iteration budget.
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Converged long-run covariance and gain, with convergence metadata.
#[derive(Debug, Clone)]
pub struct SteadyState {
    /// Fixed point `Σ*` of the covariance recursion.
    pub sigma: DMatrix<f64>,
    /// Gain evaluated at the fixed point, `K* = kalman_gain(Σ*)`.
    pub gain: DMatrix<f64>,
    /// Iterations used (0 for the diagonal closed-form path).
    pub iterations: usize,
    /// Sup-norm of the last Riccati step.
    pub residual: f64,
}

fn riccati_map(sigma: &DMatrix<f64>, model: &StateSpaceModel) -> Result<DMatrix<f64>> {
    let d = &model.growth;
    let f = &model.state_noise;
    let g = &model.signal_loading;
    let k = d * normalized_gain(sigma, model)?;
    Ok(symmetrized(
        &(d * sigma * d.transpose() + f * f.transpose() - k * g * sigma * d.transpose()),
    ))
}

/// Iterate the covariance recursion to its fixed point, starting from the
/// model's prior covariance.
pub fn riccati_fixed_point(
    model: &StateSpaceModel,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyState> {
    riccati_fixed_point_from(model, model.prior_cov.clone(), tol, max_iter)
}

/// Iterate from an explicit PSD starting covariance. The fixed point does not
/// depend on the start, which the property tests exercise from `0` and `10 I`.
pub fn riccati_fixed_point_from(
    model: &StateSpaceModel,
    start: DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyState> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Domain("tol must be positive".into()));
    }
    if max_iter == 0 {
        return Err(Error::Domain("max_iter must be at least 1".into()));
    }
    let mut sigma = start;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = riccati_map(&sigma, model)?;
        residual = (&next - &sigma).abs().max();
        sigma = next;
        if residual <= tol {
            let gain = kalman_gain(&sigma, model)?;
            return Ok(SteadyState {
                sigma,
                gain,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Scalar long-run variance in closed form:
/// `Σ* = (1/2g^2) ( sqrt(h^2 (h^2 (d-1)^2 (d+1)^2 + 2 f^2 g^2 (d^2+1)) + f^4 g^4)
///                   + h^2 (d-1)(d+1) + f^2 g^2 )`.
pub fn sigma_star_closed_form(d: f64, f: f64, g: f64, h: f64) -> Result<f64> {
    if g == 0.0 {
        return Err(Error::Domain("g must be nonzero".into()));
    }
    if d.is_nan() || d < 1.0 {
        return Err(Error::Domain(format!("d must be at least 1 (got {d})")));
    }
    if f.is_nan() || f <= 0.0 {
        return Err(Error::Domain(format!("f must be positive (got {f})")));
    }
    if h.is_nan() || h < 0.0 {
        return Err(Error::Domain(format!("h must be nonnegative (got {h})")));
    }
    let (h2, f2, g2) = (h * h, f * f, g * g);
    let grow = (d - 1.0) * (d + 1.0);
    let radical =
        (h2 * (h2 * grow * grow + 2.0 * f2 * g2 * (d * d + 1.0)) + f2 * f2 * g2 * g2).sqrt();
    Ok((radical + h2 * grow + f2 * g2) / (2.0 * g2))
}

/// Scalar steady-state gain `K* = d Σ* g / (g^2 Σ* + h^2)`.
pub fn gain_star(d: f64, g: f64, h: f64, sigma_star: f64) -> Result<f64> {
    let denom = g * g * sigma_star + h * h;
    if denom == 0.0 {
        return Err(Error::Domain("g^2 Sigma* + h^2 must be positive".into()));
    }
    Ok(d * sigma_star * g / denom)
}

/// Steady state with a fast path: when the model is diagonal, apply the
/// scalar closed form per market; otherwise fall back to the iteration.
pub fn steady_state(model: &StateSpaceModel, tol: f64, max_iter: usize) -> Result<SteadyState> {
    if model.is_diagonal() {
        let n = model.n();
        let mut sigma = DMatrix::zeros(n, n);
        for i in 0..n {
            sigma[(i, i)] = sigma_star_closed_form(
                model.growth[(i, i)],
                model.state_noise[(i, i)],
                model.signal_loading[(i, i)],
                model.signal_noise[(i, i)],
            )?;
        }
        let residual = (riccati_map(&sigma, model)? - &sigma).abs().max();
        let gain = kalman_gain(&sigma, model)?;
        return Ok(SteadyState {
            sigma,
            gain,
            iterations: 0,
            residual,
        });
    }
    riccati_fixed_point(model, tol, max_iter)
}

/// Innovation standard deviations `sqrt(diag(G Σ G' + H H'))` used to
/// standardize innovations in the simulator.
pub(crate) fn innovation_std(
    sigma: &DMatrix<f64>,
    model: &StateSpaceModel,
) -> nalgebra::DVector<f64> {
    innovation_covariance(sigma, model)
        .diagonal()
        .map(|v| v.max(0.0).sqrt())
}
