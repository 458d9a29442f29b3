//! Multi-market linear-Gaussian state-space model and belief types.
//!
//! State evolution:   `theta_{t+1} = D theta_t + F e_{t+1}`,  `e ~ N(0, I)`
//! Demand per market: `q_i = theta_i - p_i + gamma_i`,        `gamma ~ N(0, I)`
//! Signal system:     `S_t = G theta_t + H gamma_t`
//!
//! `D` scales market potentials each period (growth), `F` loads the state
//! noise, `G` and `H` shape how demand observations map into signals. All
//! of `D`, `F`, `G` must be invertible; `H` may be singular (`H = 0` is the
//! noiseless-signal case).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff below which a matrix is treated as singular.
pub const SINGULARITY_CUTOFF: f64 = 1e-14;

/// Condition-number estimate above which the innovation covariance is rejected.
pub const CONDITION_LIMIT: f64 = 1e14;

pub(crate) fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrized(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Condition-number estimate from singular values. Returns `f64::INFINITY`
/// for an exactly rank-deficient matrix.
pub(crate) fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

fn is_invertible(m: &DMatrix<f64>) -> bool {
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    smax > 0.0 && smin > smax * SINGULARITY_CUTOFF
}

/// The `(D, F, G, H, c, mu0, Sigma0)` system describing `n` interrelated markets.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    /// Per-period growth matrix `D` (n x n).
    pub growth: DMatrix<f64>,
    /// State-noise loading `F` (n x n).
    pub state_noise: DMatrix<f64>,
    /// Signal loading `G` (n x n).
    pub signal_loading: DMatrix<f64>,
    /// Signal-noise loading `H` (n x n); may be singular.
    pub signal_noise: DMatrix<f64>,
    /// Marginal-cost vector `c` (n).
    pub cost: DVector<f64>,
    /// Prior mean `mu0` (n).
    pub prior_mean: DVector<f64>,
    /// Prior covariance `Sigma0` (n x n), symmetric PSD.
    pub prior_cov: DMatrix<f64>,
}

impl StateSpaceModel {
    /// Build and validate a model. `D`, `F`, `G` must be invertible and
    /// `Sigma0` symmetric PSD; when `H` is singular, `Sigma0` must be
    /// positive definite so the first innovation covariance is invertible.
    pub fn new(
        growth: DMatrix<f64>,
        state_noise: DMatrix<f64>,
        signal_loading: DMatrix<f64>,
        signal_noise: DMatrix<f64>,
        cost: DVector<f64>,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let n = growth.nrows();
        if n == 0 {
            return Err(Error::Config("market count must be positive".into()));
        }
        for (name, m) in [
            ("D", &growth),
            ("F", &state_noise),
            ("G", &signal_loading),
            ("H", &signal_noise),
            ("Sigma0", &prior_cov),
        ] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Config(format!("{name} must be {n}x{n}")));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        for (name, v) in [("c", &cost), ("mu0", &prior_mean)] {
            if v.len() != n {
                return Err(Error::Config(format!("{name} must have length {n}")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        for (name, m) in [("D", &growth), ("F", &state_noise), ("G", &signal_loading)] {
            if !is_invertible(m) {
                return Err(Error::Config(format!("{name} must be invertible")));
            }
        }
        let asym = (&prior_cov - prior_cov.transpose()).abs().max();
        let scale = prior_cov.abs().max().max(1.0);
        if asym > 1e-12 * scale {
            return Err(Error::Config("Sigma0 must be symmetric".into()));
        }
        let lambda_min = min_eigenvalue(&prior_cov);
        if lambda_min < -1e-12 * scale {
            return Err(Error::Config("Sigma0 must be positive semidefinite".into()));
        }
        if !is_invertible(&signal_noise) && lambda_min <= 0.0 {
            return Err(Error::Config(
                "Sigma0 must be positive definite when H is singular".into(),
            ));
        }
        Ok(Self {
            growth,
            state_noise,
            signal_loading,
            signal_noise,
            cost,
            prior_mean,
            prior_cov,
        })
    }

    /// Single-market model with scalar parameters.
    pub fn scalar(d: f64, f: f64, g: f64, h: f64, c: f64, mu0: f64, sigma0: f64) -> Result<Self> {
        Self::diagonal(&[d], &[f], &[g], &[h], &[c], &[mu0], &[sigma0])
    }

    /// Diagonal model: every matrix is `diag` of the given slice (per-market
    /// parameters, no cross-market coupling).
    pub fn diagonal(
        d: &[f64],
        f: &[f64],
        g: &[f64],
        h: &[f64],
        c: &[f64],
        mu0: &[f64],
        sigma0_diag: &[f64],
    ) -> Result<Self> {
        let n = d.len();
        if [
            f.len(),
            g.len(),
            h.len(),
            c.len(),
            mu0.len(),
            sigma0_diag.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(Error::Config(
                "diagonal parameter slices must share one length".into(),
            ));
        }
        let diag = |s: &[f64]| DMatrix::from_diagonal(&DVector::from_row_slice(s));
        Self::new(
            diag(d),
            diag(f),
            diag(g),
            diag(h),
            DVector::from_row_slice(c),
            DVector::from_row_slice(mu0),
            diag(sigma0_diag),
        )
    }

    /// Number of markets.
    pub fn n(&self) -> usize {
        self.growth.nrows()
    }

    /// True when `D`, `F`, `G`, `H` are all diagonal (exact zero off-diagonals).
    pub fn is_diagonal(&self) -> bool {
        [
            &self.growth,
            &self.state_noise,
            &self.signal_loading,
            &self.signal_noise,
        ]
        .iter()
        .all(|m| {
            m.row_iter()
                .enumerate()
                .all(|(i, row)| row.iter().enumerate().all(|(j, &v)| i == j || v == 0.0))
        })
    }

    /// Initial belief `(t = 0, mu0, Sigma0)`.
    pub fn initial_belief(&self) -> Belief {
        Belief {
            t: 0,
            mean: self.prior_mean.clone(),
            cov: self.prior_cov.clone(),
        }
    }
}

/// Posterior belief about the market potentials at period `t`:
/// `mean = E{theta_t | S_0..S_{t-1}}`, `cov = Var(theta_t | S_0..S_{t-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub t: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Belief {
    /// Validating constructor: `cov` symmetric with eigenvalues `>= -1e-12`
    /// relative to its scale.
    pub fn new(t: usize, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Config(
                "belief covariance shape must match the mean".into(),
            ));
        }
        let scale = cov.abs().max().max(1.0);
        if (&cov - cov.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::Config("belief covariance must be symmetric".into()));
        }
        if min_eigenvalue(&cov) < -1e-12 * scale {
            return Err(Error::Config(
                "belief covariance must be positive semidefinite".into(),
            ));
        }
        Ok(Self { t, mean, cov })
    }
}

/// One Kalman update: the gain applied to the raw signal, the growth-free
/// weight `D^{-1} K`, and the resulting next-period belief.
#[derive(Debug, Clone)]
pub struct KalmanStep {
    pub gain: DMatrix<f64>,
    pub normalized_gain: DMatrix<f64>,
    pub next_belief: Belief,
}
