//! Value iteration for the price-dependent-learning model over `(mu, Σ)`.
//!
//! `V(mu, Σ) = max_p E{ (p - c)(mu - b p) + delta V(mu', Σ') }` where the
//! standardized signal innovation is integrated out by Gauss-Hermite
//! quadrature: `mu' = d (mu + (Σ / sqrt(w)) eps)`, `Σ' = d^2 (1 - K) Σ + f^2`,
//! `w = Σ + h^2 + b^2 p^2`, `K = Σ / w`, `eps ~ N(0, 1)`.
//!
//! Tables are bilinear between nodes; next states that leave the grid are
//! clamped and counted so truncation error stays observable. Sweeps are
//! synchronous (read the old table, write the new one) and parallel across
//! grid rows.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nonmyopic::{euler_term, myopic_foc_price, nm_sigma_star, NonMyopicModel};
use crate::quadrature::GaussHermite;
use crate::search::golden_max;

/// Discretization of the `(mu, Σ)` state space.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GridSpec {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || sigma.is_empty() {
            return Err(Error::Config("grids must be nonempty".into()));
        }
        if mu.windows(2).any(|w| w[1] <= w[0]) || sigma.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grids must be strictly increasing".into()));
        }
        if sigma[0] < 0.0 {
            return Err(Error::Config("sigma grid must be nonnegative".into()));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("grid nodes must be finite".into()));
        }
        Ok(Self { mu, sigma })
    }

    /// Linear mu-grid and geometric sigma-grid over the given spans.
    pub fn linear_geometric(
        mu_min: f64,
        mu_max: f64,
        n_mu: usize,
        sigma_min: f64,
        sigma_max: f64,
        n_sigma: usize,
    ) -> Result<Self> {
        if n_mu < 2 || n_sigma < 2 {
            return Err(Error::Config(
                "grids need at least two nodes per axis".into(),
            ));
        }
        if !(mu_max > mu_min && sigma_max > sigma_min && sigma_min > 0.0) {
            return Err(Error::Config(
                "grid bounds must be ordered and sigma positive".into(),
            ));
        }
        let mu = (0..n_mu)
            .map(|i| mu_min + (mu_max - mu_min) * i as f64 / (n_mu - 1) as f64)
            .collect();
        let ratio = (sigma_max / sigma_min).powf(1.0 / (n_sigma - 1) as f64);
        let sigma = (0..n_sigma)
            .map(|i| sigma_min * ratio.powi(i as i32))
            .collect();
        Self::new(mu, sigma)
    }

    /// Grid sized from the model: mu spans `[c - 2 s, (|c| + 4 s) d^growth_horizon]`
    /// and sigma runs geometrically from `f^2 / 2` (or a small floor) up to
    /// four times the long-run variance at the largest bracketed price.
    pub fn suggest(
        model: &NonMyopicModel,
        growth_horizon: usize,
        n_mu: usize,
        n_sigma: usize,
    ) -> Result<Self> {
        let s_range = nm_sigma_star(myopic_foc_price(model.cost.abs() + 1.0, model), model)
            .sqrt()
            .max(1.0);
        let mu_min = model.cost - 2.0 * s_range;
        let mu_max = (model.cost.abs() + 4.0 * s_range) * model.growth.powi(growth_horizon as i32);
        let sigma_min = (model.state_noise * model.state_noise * 0.5).max(1e-3);
        let p_max = myopic_foc_price(mu_max, model) + 3.0;
        let sigma_max = (4.0 * nm_sigma_star(p_max, model)).max(sigma_min * 8.0);
        Self::linear_geometric(mu_min, mu_max, n_mu, sigma_min, sigma_max, n_sigma)
    }
}

/// Solver knobs beyond the grid itself.
#[derive(Debug, Clone)]
pub struct BellmanOptions {
    /// Sup-norm convergence tolerance between sweeps.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Gauss-Hermite order for the innovation expectation.
    pub quadrature_order: usize,
    /// Price search bracket half-width around the myopic price.
    pub price_bracket: f64,
    /// Golden-section tolerance in price units.
    pub price_tol: f64,
}

impl Default for BellmanOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 10_000,
            quadrature_order: 9,
            price_bracket: 3.0,
            price_tol: 1e-6,
        }
    }
}

/// Converged value function and policy on the grid.
#[derive(Debug, Clone)]
pub struct ValueFunctionGrid {
    pub mu_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    /// `values[(i, j)]` at `(mu_grid[i], sigma_grid[j])`.
    pub values: DMatrix<f64>,
    pub policy: DMatrix<f64>,
    /// Sup-norm change of the final sweep.
    pub sweep_residual: f64,
    pub sweeps: usize,
    /// Next-state evaluations that fell outside the grid and were clamped.
    pub clamp_count: u64,
    /// Residual after each sweep, for contraction diagnostics.
    pub residual_history: Vec<f64>,
    pub quadrature_order: usize,
}

/// One-step state transition given a standardized innovation draw.
/// A zero predictive variance means there is no signal; the belief then
/// propagates deterministically.
pub(crate) fn next_state(
    model: &NonMyopicModel,
    mu: f64,
    sigma: f64,
    p: f64,
    eps: f64,
) -> (f64, f64) {
    let d = model.growth;
    let f2 = model.state_noise * model.state_noise;
    let bp = model.slope_loading * p;
    let w = sigma + model.signal_noise * model.signal_noise + bp * bp;
    if w <= 0.0 {
        return (d * mu, d * d * sigma + f2);
    }
    let k = sigma / w;
    let mu_next = d * (mu + sigma / w.sqrt() * eps);
    let sigma_next = d * d * (1.0 - k) * sigma + f2;
    (mu_next, sigma_next)
}

fn locate(grid: &[f64], x: f64) -> (usize, f64, bool) {
    let last = grid.len() - 1;
    if grid.len() == 1 {
        return (0, 0.0, x != grid[0]);
    }
    if x <= grid[0] {
        return (0, 0.0, x < grid[0]);
    }
    if x >= grid[last] {
        return (last - 1, 1.0, x > grid[last]);
    }
    let j = grid.partition_point(|&v| v <= x) - 1;
    (j, (x - grid[j]) / (grid[j + 1] - grid[j]), false)
}

fn bilinear(
    values: &DMatrix<f64>,
    mu_grid: &[f64],
    sigma_grid: &[f64],
    mu: f64,
    sigma: f64,
    clamps: &mut u64,
) -> f64 {
    let (i, tx, cx) = locate(mu_grid, mu);
    let (j, ty, cy) = locate(sigma_grid, sigma);
    if cx || cy {
        *clamps += 1;
    }
    let i1 = (i + 1).min(mu_grid.len() - 1);
    let j1 = (j + 1).min(sigma_grid.len() - 1);
    let v00 = values[(i, j)];
    let v10 = values[(i1, j)];
    let v01 = values[(i, j1)];
    let v11 = values[(i1, j1)];
    (1.0 - tx) * (1.0 - ty) * v00 + tx * (1.0 - ty) * v10 + (1.0 - tx) * ty * v01 + tx * ty * v11
}

impl ValueFunctionGrid {
    /// Clamped bilinear read of the value table.
    pub fn value_at(&self, mu: f64, sigma: f64) -> f64 {
        let mut c = 0u64;
        bilinear(
            &self.values,
            &self.mu_grid,
            &self.sigma_grid,
            mu,
            sigma,
            &mut c,
        )
    }

    /// Clamped bilinear read of the policy table.
    pub fn policy_at(&self, mu: f64, sigma: f64) -> f64 {
        let mut c = 0u64;
        bilinear(
            &self.policy,
            &self.mu_grid,
            &self.sigma_grid,
            mu,
            sigma,
            &mut c,
        )
    }

    /// Centered difference of `V` in sigma at `(mu, sigma)`, taken across the
    /// two neighbors of the nearest sigma node. Needs three sigma nodes and
    /// an interior query point.
    fn dv_dsigma(&self, mu: f64, sigma: f64) -> Result<f64> {
        let n = self.sigma_grid.len();
        if n < 3 {
            return Err(Error::GridEscape(
                "sigma stencil needs at least three nodes".into(),
            ));
        }
        if sigma < self.sigma_grid[0] || sigma > self.sigma_grid[n - 1] {
            return Err(Error::GridEscape(format!(
                "sigma {sigma} outside tabulated range [{}, {}]",
                self.sigma_grid[0],
                self.sigma_grid[n - 1]
            )));
        }
        let (j, ty, _) = locate(&self.sigma_grid, sigma);
        let jc = if ty > 0.5 { j + 1 } else { j }.clamp(1, n - 2);
        let lo = self.sigma_grid[jc - 1];
        let hi = self.sigma_grid[jc + 1];
        let mut c = 0u64;
        let vlo = bilinear(
            &self.values,
            &self.mu_grid,
            &self.sigma_grid,
            mu,
            lo,
            &mut c,
        );
        let vhi = bilinear(
            &self.values,
            &self.mu_grid,
            &self.sigma_grid,
            mu,
            hi,
            &mut c,
        );
        Ok((vhi - vlo) / (hi - lo))
    }
}

/// Solve the Bellman equation with default options except the stated
/// tolerance and sweep budget.
pub fn solve_bellman(
    model: &NonMyopicModel,
    grid: &GridSpec,
    tol: f64,
    max_sweeps: usize,
) -> Result<ValueFunctionGrid> {
    let opts = BellmanOptions {
        tol,
        max_sweeps,
        ..Default::default()
    };
    solve_bellman_with(model, grid, &opts)
}

pub fn solve_bellman_with(
    model: &NonMyopicModel,
    grid: &GridSpec,
    opts: &BellmanOptions,
) -> Result<ValueFunctionGrid> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::Domain("tol must be positive".into()));
    }
    if opts.max_sweeps == 0 {
        return Err(Error::Domain("max_sweeps must be at least 1".into()));
    }
    let rule = GaussHermite::new(opts.quadrature_order)?.standard_normal_rule();
    let n_mu = grid.mu.len();
    let n_sigma = grid.sigma.len();

    let mut values = DMatrix::zeros(n_mu, n_sigma);
    let mut policy = DMatrix::zeros(n_mu, n_sigma);
    let mut clamp_count = 0u64;
    let mut residual_history = Vec::new();

    for sweep in 1..=opts.max_sweeps {
        let rows: Vec<(Vec<f64>, Vec<f64>, u64)> = (0..n_mu)
            .into_par_iter()
            .map(|i| {
                let mu = grid.mu[i];
                let p_myopic = myopic_foc_price(mu, model);
                let mut row_values = Vec::with_capacity(n_sigma);
                let mut row_policy = Vec::with_capacity(n_sigma);
                let mut clamps = 0u64;
                for j in 0..n_sigma {
                    let sigma = grid.sigma[j];
                    let mut objective = |p: f64| {
                        let profit = (p - model.cost) * (mu - model.slope_loading * p);
                        let sigma_next = next_state(model, mu, sigma, p, 0.0).1;
                        let mut continuation = 0.0;
                        for &(eps, weight) in &rule {
                            let (mu_next, _) = next_state(model, mu, sigma, p, eps);
                            continuation += weight
                                * bilinear(
                                    &values,
                                    &grid.mu,
                                    &grid.sigma,
                                    mu_next,
                                    sigma_next,
                                    &mut clamps,
                                );
                        }
                        profit + model.discount * continuation
                    };
                    let (best_p, best_v) = golden_max(
                        &mut objective,
                        p_myopic - opts.price_bracket,
                        p_myopic + opts.price_bracket,
                        opts.price_tol,
                    );
                    row_values.push(best_v);
                    row_policy.push(best_p);
                }
                (row_values, row_policy, clamps)
            })
            .collect();

        let mut residual = 0.0f64;
        for (i, (row_values, row_policy, clamps)) in rows.into_iter().enumerate() {
            clamp_count += clamps;
            for j in 0..n_sigma {
                residual = residual.max((row_values[j] - values[(i, j)]).abs());
                values[(i, j)] = row_values[j];
                policy[(i, j)] = row_policy[j];
            }
        }
        residual_history.push(residual);
        if residual <= opts.tol {
            return Ok(ValueFunctionGrid {
                mu_grid: grid.mu.clone(),
                sigma_grid: grid.sigma.clone(),
                values,
                policy,
                sweep_residual: residual,
                sweeps: sweep,
                clamp_count,
                residual_history,
                quadrature_order: opts.quadrature_order,
            });
        }
    }

    Err(Error::NoConvergence {
        iterations: opts.max_sweeps,
        residual: residual_history.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Left side of the simplified price first-order condition at `(mu, Σ, p)`:
/// `(mu + b c - 2 b p) + euler_term(p, Σ) (dV/dΣ - delta d^2 E{dV/dΣ'})`.
/// Derivatives of `V` come from centered differences on the table and the
/// expectation from the same quadrature order the solver used. The query
/// point must sit inside the grid; next-period `mu'` draws are clamped to
/// the tabulated range, matching what the solver itself saw.
pub fn euler_residual(
    v: &ValueFunctionGrid,
    mu: f64,
    sigma: f64,
    p: f64,
    model: &NonMyopicModel,
) -> Result<f64> {
    let n_mu = v.mu_grid.len();
    if mu < v.mu_grid[0] || mu > v.mu_grid[n_mu - 1] {
        return Err(Error::GridEscape(format!(
            "mu {mu} outside tabulated range [{}, {}]",
            v.mu_grid[0],
            v.mu_grid[n_mu - 1]
        )));
    }
    let b = model.slope_loading;
    let marginal_profit = mu + b * model.cost - 2.0 * b * p;
    let pressure = euler_term(p, sigma, model)?;

    let dv_now = v.dv_dsigma(mu, sigma)?;
    let rule = GaussHermite::new(v.quadrature_order)?.standard_normal_rule();
    let sigma_next = next_state(model, mu, sigma, p, 0.0).1;
    let mut dv_next = 0.0;
    for &(eps, weight) in &rule {
        let (mu_next, _) = next_state(model, mu, sigma, p, eps);
        let mu_query = mu_next.clamp(v.mu_grid[0], v.mu_grid[n_mu - 1]);
        dv_next += weight * v.dv_dsigma(mu_query, sigma_next)?;
    }
    let d2 = model.growth * model.growth;
    Ok(marginal_profit + pressure * (dv_now - model.discount * d2 * dv_next))
}
