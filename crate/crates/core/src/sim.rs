//! Monte Carlo simulation of the myopic multi-market monopolist.
//!
//! Each path draws `theta_0 ~ N(mu0, Sigma0)` and then, per period: price
//! from the current belief, realize demand `q = theta - p + gamma`, observe
//! the signal `S = G theta + H gamma` (the same demand noise feeds both),
//! update the belief through the filter, and grow the state. Gains and
//! covariances do not depend on realizations, so the schedule is shared
//! across paths.
//!
//! Reproducibility: one root seed; path `i` runs on ChaCha12 stream `i`, so
//! its draws are invariant to the number of paths and to thread scheduling.
//! Partial sums are reduced in fixed chunk order, making repeated runs
//! byte-identical. Normal variates use the ziggurat sampler of `rand_distr`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{covariance_schedule, CovarianceSchedule};
use crate::model::StateSpaceModel;
use crate::steady_state::innovation_std;

/// RNG construction tag recorded in output metadata.
pub const RNG_TAG: &str = "chacha12, one stream per path";
/// Normal-sampling method tag recorded in output metadata.
pub const NORMAL_SAMPLING_TAG: &str = "ziggurat (rand_distr StandardNormal)";

const CHUNK: usize = 4096;

/// Simulation request: model, horizon, number of paths, and the root seed.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: StateSpaceModel,
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(model: StateSpaceModel, horizon: usize, paths: usize, seed: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if paths == 0 {
            return Err(Error::Config("paths must be at least 1".into()));
        }
        Ok(Self {
            model,
            horizon,
            paths,
            seed,
        })
    }
}

/// Myopic price `(mu + c) / 2`: maximizes expected current profit under the
/// belief `mu`.
pub fn myopic_price(mu: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
    (mu + c) * 0.5
}

/// Linear demand with unit slope: `theta - p + gamma`.
pub fn realize_demand(
    theta: &DVector<f64>,
    p: &DVector<f64>,
    gamma: &DVector<f64>,
) -> DVector<f64> {
    theta - p + gamma
}

/// Expected-profit decomposition on explicit arguments: the no-learning
/// baseline `(D^t mu - c)^2 / 4` per market and the information term
/// `diag(K Σ K') / 4`.
pub fn profit_decomposition(
    mu: &DVector<f64>,
    c: &DVector<f64>,
    t: usize,
    model: &StateSpaceModel,
    k: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = mu.len();
    let mut power = DMatrix::identity(n, n);
    for _ in 0..t {
        power = &power * &model.growth;
    }
    let centered = power * mu - c;
    let baseline = centered.map(|v| v * v * 0.25);
    let voi_term = (k * sigma * k.transpose()).diagonal() * 0.25;
    (baseline, voi_term)
}

/// Cross-path summary statistics, one entry per period.
///
/// `price` is the across-market mean price, `profit` the total across
/// markets; belief-error moments are per market. `decomp_resid_*` hold the
/// one-step residual `profit_i - ((D mu_{t-1} - c)_i)^2 / 4` (zero at t = 0,
/// where no previous belief exists) and `pricing_resid_*` the same against
/// the current belief, `profit_i - ((mu_t - c)_i)^2 / 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
    pub price_mean: Vec<f64>,
    pub price_var: Vec<f64>,
    pub profit_mean: Vec<f64>,
    pub profit_var: Vec<f64>,
    pub belief_err_mean: Vec<DVector<f64>>,
    pub belief_err_var: Vec<DVector<f64>>,
    /// Fourth central-ish moment accumulator (raw mean of err^4), used for
    /// standard errors of the variance estimates.
    pub belief_err_m4: Vec<DVector<f64>>,
    pub sq_belief_err_mean: Vec<DVector<f64>>,
    /// Filter-predicted covariance diagonal entering each period.
    pub sigma_pred: Vec<DVector<f64>>,
    pub pricing_resid_mean: Vec<DVector<f64>>,
    pub pricing_resid_var: Vec<DVector<f64>>,
    pub decomp_resid_mean: Vec<DVector<f64>>,
    pub decomp_resid_var: Vec<DVector<f64>>,
    /// Pooled lag-1 autocorrelation of standardized innovations, per market.
    pub innovation_lag1: DVector<f64>,
    /// Pooled correlation between innovations and the contemporaneous belief.
    pub innovation_belief_corr: DVector<f64>,
}

/// Metadata echoed at the top of every simulation output.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimMeta {
    pub seed: u64,
    pub paths: usize,
    pub horizon: usize,
    pub rng: String,
    pub normal_sampling: String,
    pub model: ModelEcho,
}

/// Row-major echo of the model matrices for metadata headers.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelEcho {
    pub n: usize,
    pub d: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub mu0: Vec<f64>,
    pub sigma0: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl ModelEcho {
    pub fn of(model: &StateSpaceModel) -> Self {
        Self {
            n: model.n(),
            d: rows(&model.growth),
            f: rows(&model.state_noise),
            g: rows(&model.signal_loading),
            h: rows(&model.signal_noise),
            c: model.cost.iter().copied().collect(),
            mu0: model.prior_mean.iter().copied().collect(),
            sigma0: rows(&model.prior_cov),
        }
    }
}

impl SimMeta {
    pub fn of(config: &SimConfig) -> Self {
        Self {
            seed: config.seed,
            paths: config.paths,
            horizon: config.horizon,
            rng: RNG_TAG.to_string(),
            normal_sampling: NORMAL_SAMPLING_TAG.to_string(),
            model: ModelEcho::of(&config.model),
        }
    }
}

#[derive(PartialEq)]
struct PeriodSums {
    price: f64,
    price_sq: f64,
    profit: f64,
    profit_sq: f64,
    err: DVector<f64>,
    err2: DVector<f64>,
    err4: DVector<f64>,
    resid0: DVector<f64>,
    resid0_sq: DVector<f64>,
    resid1: DVector<f64>,
    resid1_sq: DVector<f64>,
}

impl PeriodSums {
    fn zero(n: usize) -> Self {
        Self {
            price: 0.0,
            price_sq: 0.0,
            profit: 0.0,
            profit_sq: 0.0,
            err: DVector::zeros(n),
            err2: DVector::zeros(n),
            err4: DVector::zeros(n),
            resid0: DVector::zeros(n),
            resid0_sq: DVector::zeros(n),
            resid1: DVector::zeros(n),
            resid1_sq: DVector::zeros(n),
        }
    }

    fn add(&mut self, other: &PeriodSums) {
        self.price += other.price;
        self.price_sq += other.price_sq;
        self.profit += other.profit;
        self.profit_sq += other.profit_sq;
        self.err += &other.err;
        self.err2 += &other.err2;
        self.err4 += &other.err4;
        self.resid0 += &other.resid0;
        self.resid0_sq += &other.resid0_sq;
        self.resid1 += &other.resid1;
        self.resid1_sq += &other.resid1_sq;
    }
}

#[derive(PartialEq)]
struct ChunkSums {
    periods: Vec<PeriodSums>,
    // pooled innovation diagnostics, per market
    z_lag: DVector<f64>,
    z_lag_pairs: u64,
    z_sum: DVector<f64>,
    z_sq: DVector<f64>,
    mu_sum: DVector<f64>,
    mu_sq: DVector<f64>,
    z_mu: DVector<f64>,
    obs: u64,
}

impl ChunkSums {
    fn zero(n: usize, horizon: usize) -> Self {
        Self {
            periods: (0..horizon).map(|_| PeriodSums::zero(n)).collect(),
            z_lag: DVector::zeros(n),
            z_lag_pairs: 0,
            z_sum: DVector::zeros(n),
            z_sq: DVector::zeros(n),
            mu_sum: DVector::zeros(n),
            mu_sq: DVector::zeros(n),
            z_mu: DVector::zeros(n),
            obs: 0,
        }
    }

    fn add(&mut self, other: &ChunkSums) {
        for (a, b) in self.periods.iter_mut().zip(&other.periods) {
            a.add(b);
        }
        self.z_lag += &other.z_lag;
        self.z_lag_pairs += other.z_lag_pairs;
        self.z_sum += &other.z_sum;
        self.z_sq += &other.z_sq;
        self.mu_sum += &other.mu_sum;
        self.mu_sq += &other.mu_sq;
        self.z_mu += &other.z_mu;
        self.obs += other.obs;
    }
}

/// Square root factor for sampling from `N(0, Sigma0)`. Cholesky when the
/// prior is positive definite, eigenvalue square root otherwise.
fn sampling_factor(sigma0: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = sigma0.clone().cholesky() {
        return chol.l();
    }
    let eig = sigma0.clone().symmetric_eigen();
    let scaled = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * scaled
}

fn standard_normal_vector(rng: &mut ChaCha12Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn run_path(
    config: &SimConfig,
    schedule: &CovarianceSchedule,
    transition: &[DMatrix<f64>],
    innov_stds: &[DVector<f64>],
    factor: &DMatrix<f64>,
    path: usize,
    sums: &mut ChunkSums,
) {
    let model = &config.model;
    let n = model.n();
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(path as u64);

    let z0 = standard_normal_vector(&mut rng, n);
    let mut theta = &model.prior_mean + factor * z0;
    let mut mu = model.prior_mean.clone();
    let mut prev_mu: Option<DVector<f64>> = None;
    let mut prev_z: Option<DVector<f64>> = None;

    for t in 0..config.horizon {
        let price = myopic_price(&mu, &model.cost);
        let gamma = standard_normal_vector(&mut rng, n);
        let shock = standard_normal_vector(&mut rng, n);
        let q = realize_demand(&theta, &price, &gamma);
        let profit = (&price - &model.cost).component_mul(&q);
        let signal = &model.signal_loading * &theta + &model.signal_noise * &gamma;
        let innovation = &signal - &model.signal_loading * &mu;
        let z = DVector::from_fn(n, |i, _| {
            let s = innov_stds[t][i];
            if s > 0.0 {
                innovation[i] / s
            } else {
                0.0
            }
        });

        let sums_t = &mut sums.periods[t];
        let price_avg = price.sum() / n as f64;
        sums_t.price += price_avg;
        sums_t.price_sq += price_avg * price_avg;
        let total_profit = profit.sum();
        sums_t.profit += total_profit;
        sums_t.profit_sq += total_profit * total_profit;
        for i in 0..n {
            let e = mu[i] - theta[i];
            sums_t.err[i] += e;
            sums_t.err2[i] += e * e;
            sums_t.err4[i] += e * e * e * e;
            let base_now = mu[i] - model.cost[i];
            let r0 = profit[i] - base_now * base_now * 0.25;
            sums_t.resid0[i] += r0;
            sums_t.resid0_sq[i] += r0 * r0;
        }
        if let Some(pm) = &prev_mu {
            let grown = &model.growth * pm;
            for i in 0..n {
                let base = grown[i] - model.cost[i];
                let r1 = profit[i] - base * base * 0.25;
                sums_t.resid1[i] += r1;
                sums_t.resid1_sq[i] += r1 * r1;
            }
        }

        for i in 0..n {
            sums.z_sum[i] += z[i];
            sums.z_sq[i] += z[i] * z[i];
            sums.mu_sum[i] += mu[i];
            sums.mu_sq[i] += mu[i] * mu[i];
            sums.z_mu[i] += z[i] * mu[i];
        }
        sums.obs += 1;
        if let Some(pz) = &prev_z {
            for i in 0..n {
                sums.z_lag[i] += z[i] * pz[i];
            }
            sums.z_lag_pairs += 1;
        }

        let next_mu = &schedule.gains[t] * &signal + &transition[t] * &mu;
        theta = &model.growth * theta + &model.state_noise * shock;
        prev_mu = Some(std::mem::replace(&mut mu, next_mu));
        prev_z = Some(z);
    }
}

/// Run the simulation. Identical configs produce identical results,
/// independent of thread count.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    let model = &config.model;
    let n = model.n();
    let horizon = config.horizon;
    let schedule = covariance_schedule(model, horizon)?;
    let transition: Vec<DMatrix<f64>> = schedule
        .gains
        .iter()
        .map(|k| &model.growth - k * &model.signal_loading)
        .collect();
    let innov_stds: Vec<DVector<f64>> = schedule.sigmas[..horizon]
        .iter()
        .map(|s| innovation_std(s, model))
        .collect();
    let factor = sampling_factor(&model.prior_cov);

    let chunks = config.paths.div_ceil(CHUNK);
    let partials: Vec<ChunkSums> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut sums = ChunkSums::zero(n, horizon);
            let lo = chunk * CHUNK;
            let hi = ((chunk + 1) * CHUNK).min(config.paths);
            for path in lo..hi {
                run_path(
                    config,
                    &schedule,
                    &transition,
                    &innov_stds,
                    &factor,
                    path,
                    &mut sums,
                );
            }
            sums
        })
        .collect();
    let mut total = ChunkSums::zero(n, horizon);
    for part in &partials {
        total.add(part);
    }

    let np = config.paths as f64;
    let var = |sum: f64, sq: f64| {
        if config.paths > 1 {
            ((sq - sum * sum / np) / (np - 1.0)).max(0.0)
        } else {
            0.0
        }
    };
    let var_vec =
        |sum: &DVector<f64>, sq: &DVector<f64>| DVector::from_fn(n, |i, _| var(sum[i], sq[i]));

    let mut result = SimResult {
        horizon,
        paths: config.paths,
        seed: config.seed,
        price_mean: Vec::with_capacity(horizon),
        price_var: Vec::with_capacity(horizon),
        profit_mean: Vec::with_capacity(horizon),
        profit_var: Vec::with_capacity(horizon),
        belief_err_mean: Vec::with_capacity(horizon),
        belief_err_var: Vec::with_capacity(horizon),
        belief_err_m4: Vec::with_capacity(horizon),
        sq_belief_err_mean: Vec::with_capacity(horizon),
        sigma_pred: schedule.sigmas[..horizon]
            .iter()
            .map(|s| s.diagonal())
            .collect(),
        pricing_resid_mean: Vec::with_capacity(horizon),
        pricing_resid_var: Vec::with_capacity(horizon),
        decomp_resid_mean: Vec::with_capacity(horizon),
        decomp_resid_var: Vec::with_capacity(horizon),
        innovation_lag1: DVector::zeros(n),
        innovation_belief_corr: DVector::zeros(n),
    };

    for t in 0..horizon {
        let s = &total.periods[t];
        result.price_mean.push(s.price / np);
        result.price_var.push(var(s.price, s.price_sq));
        result.profit_mean.push(s.profit / np);
        result.profit_var.push(var(s.profit, s.profit_sq));
        result.belief_err_mean.push(&s.err / np);
        result.belief_err_var.push(var_vec(&s.err, &s.err2));
        result.belief_err_m4.push(&s.err4 / np);
        result.sq_belief_err_mean.push(&s.err2 / np);
        result.pricing_resid_mean.push(&s.resid0 / np);
        result
            .pricing_resid_var
            .push(var_vec(&s.resid0, &s.resid0_sq));
        result.decomp_resid_mean.push(&s.resid1 / np);
        result
            .decomp_resid_var
            .push(var_vec(&s.resid1, &s.resid1_sq));
    }

    let obs = total.obs as f64;
    for i in 0..n {
        result.innovation_lag1[i] = if total.z_lag_pairs > 0 {
            total.z_lag[i] / total.z_lag_pairs as f64
        } else {
            0.0
        };
        let cov = total.z_mu[i] - total.z_sum[i] * total.mu_sum[i] / obs;
        let vz = total.z_sq[i] - total.z_sum[i] * total.z_sum[i] / obs;
        let vm = total.mu_sq[i] - total.mu_sum[i] * total.mu_sum[i] / obs;
        result.innovation_belief_corr[i] = if vz > 0.0 && vm > 0.0 {
            cov / (vz * vm).sqrt()
        } else {
            0.0
        };
    }

    Ok(result)
}

impl SimResult {
    pub const CSV_HEADER: &'static str =
        "t,mean_price,mean_profit,se_profit,mean_sq_belief_err,sigma_t_predicted";

    /// Render the per-period table. Column values with per-market structure
    /// are averaged across markets (total for profit). Floats print in
    /// shortest round-trip form.
    pub fn to_csv(&self, meta: &SimMeta) -> String {
        let mut out = String::new();
        out.push_str("# ");
        out.push_str(&serde_json::to_string(meta).expect("metadata serializes"));
        out.push('\n');
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        out.push_str(&self.csv_body());
        out
    }

    /// The data rows alone, for callers that prepend their own header.
    pub fn csv_body(&self) -> String {
        let n = self.sigma_pred[0].len() as f64;
        let mut out = String::new();
        for t in 0..self.horizon {
            let se_profit = (self.profit_var[t] / self.paths as f64).sqrt();
            let sq_err = self.sq_belief_err_mean[t].sum() / n;
            let sigma = self.sigma_pred[t].sum() / n;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t, self.price_mean[t], self.profit_mean[t], se_profit, sq_err, sigma
            ));
        }
        out
    }
}
