//! Kalman-Bucy-Stratonovich predict/update recursion for the multi-market model.
//!
//! The gain here absorbs the growth matrix: `K = D Σ G' (G Σ G' + H H')^{-1}`,
//! so the mean update reads `mu' = K S + (D - K G) mu` and the covariance
//! recursion is `Σ' = D Σ D' + F F' - K G Σ D'`. The growth-free Bayesian
//! weight on the signal is `D^{-1} K`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    condition_estimate, symmetrized, Belief, KalmanStep, StateSpaceModel, CONDITION_LIMIT,
};

/// Innovation covariance `G Σ G' + H H'`, symmetrized.
pub fn innovation_covariance(sigma: &DMatrix<f64>, model: &StateSpaceModel) -> DMatrix<f64> {
    let g = &model.signal_loading;
    let h = &model.signal_noise;
    symmetrized(&(g * sigma * g.transpose() + h * h.transpose()))
}

fn invert_innovation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cond = condition_estimate(m);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::SingularInnovation { condition: cond });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::SingularInnovation { condition: cond })
}

/// One-step-ahead prior: mean `D mu` and covariance `D Σ D' + F F'`.
pub fn predict(belief: &Belief, model: &StateSpaceModel) -> (DVector<f64>, DMatrix<f64>) {
    let d = &model.growth;
    let f = &model.state_noise;
    let mean = d * &belief.mean;
    let cov = symmetrized(&(d * &belief.cov * d.transpose() + f * f.transpose()));
    (mean, cov)
}

/// Growth-inclusive gain `K = D Σ G' (G Σ G' + H H')^{-1}`.
pub fn kalman_gain(sigma: &DMatrix<f64>, model: &StateSpaceModel) -> Result<DMatrix<f64>> {
    Ok(&model.growth * normalized_gain(sigma, model)?)
}

/// Growth-free weight `D^{-1} K = Σ G' (G Σ G' + H H')^{-1}`.
pub fn normalized_gain(sigma: &DMatrix<f64>, model: &StateSpaceModel) -> Result<DMatrix<f64>> {
    let m_inv = invert_innovation(&innovation_covariance(sigma, model))?;
    Ok(sigma * model.signal_loading.transpose() * m_inv)
}

/// Update the belief with one signal vector. The returned step carries the
/// gain, the growth-free weight, and the next-period belief with a
/// symmetrized covariance.
pub fn update(
    belief: &Belief,
    signal: &DVector<f64>,
    model: &StateSpaceModel,
) -> Result<KalmanStep> {
    let d = &model.growth;
    let f = &model.state_noise;
    let g = &model.signal_loading;

    let normalized = normalized_gain(&belief.cov, model)?;
    let gain = d * &normalized;

    let mean = &gain * signal + (d - &gain * g) * &belief.mean;
    let cov = symmetrized(
        &(d * &belief.cov * d.transpose() + f * f.transpose()
            - &gain * g * &belief.cov * d.transpose()),
    );

    Ok(KalmanStep {
        next_belief: Belief {
            t: belief.t + 1,
            mean,
            cov,
        },
        gain,
        normalized_gain: normalized,
    })
}

/// Shift observed demand into an unbiased signal about the state:
/// `q + (mu + c) / 2`, which equals `theta + gamma` in the single-market model.
pub fn unbiased_signal(q: &DVector<f64>, mu: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
    q + (mu + c) * 0.5
}

/// Variance of the unbiased signal `G^{-1} S`: `Σ + G^{-1} H H' (G')^{-1}`.
pub fn signal_variance(sigma: &DMatrix<f64>, model: &StateSpaceModel) -> Result<DMatrix<f64>> {
    let g_inv = model
        .signal_loading
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("G must be invertible".into()))?;
    let h = &model.signal_noise;
    Ok(symmetrized(
        &(sigma + &g_inv * h * h.transpose() * g_inv.transpose()),
    ))
}

/// Bayesian weight on the signal, `Σ G' (G Σ G' + H H')^{-1} G`. Equals
/// `D^{-1} K G`, which is the identity the tests pin down.
pub fn bayesian_weight(sigma: &DMatrix<f64>, model: &StateSpaceModel) -> Result<DMatrix<f64>> {
    Ok(normalized_gain(sigma, model)? * &model.signal_loading)
}

/// Deterministic covariance/gain schedule of the filter. The covariance
/// recursion does not depend on signal realizations, so the whole sequence
/// is fixed by the model: `sigmas[t]` is the belief covariance entering
/// period `t` (length `periods + 1`) and `gains[t]` the gain applied to the
/// period-`t` signal (length `periods`).
#[derive(Debug, Clone)]
pub struct CovarianceSchedule {
    pub sigmas: Vec<DMatrix<f64>>,
    pub gains: Vec<DMatrix<f64>>,
    pub normalized_gains: Vec<DMatrix<f64>>,
}

pub fn covariance_schedule(model: &StateSpaceModel, periods: usize) -> Result<CovarianceSchedule> {
    let d = &model.growth;
    let f = &model.state_noise;
    let g = &model.signal_loading;
    let mut sigmas = Vec::with_capacity(periods + 1);
    let mut gains = Vec::with_capacity(periods);
    let mut normalized_gains = Vec::with_capacity(periods);
    let mut sigma = model.prior_cov.clone();
    for _ in 0..periods {
        let normalized = normalized_gain(&sigma, model)?;
        let gain = d * &normalized;
        let next = symmetrized(
            &(d * &sigma * d.transpose() + f * f.transpose() - &gain * g * &sigma * d.transpose()),
        );
        sigmas.push(sigma);
        gains.push(gain);
        normalized_gains.push(normalized);
        sigma = next;
    }
    sigmas.push(sigma);
    Ok(CovarianceSchedule {
        sigmas,
        gains,
        normalized_gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn scalar_model(d: f64, f: f64, g: f64, h: f64) -> StateSpaceModel {
        StateSpaceModel::scalar(d, f, g, h, 0.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn predict_identity_growth_no_state_noise() {
        // predict is total in the matrices, so a degenerate F = 0 is fine here.
        let m = StateSpaceModel {
            state_noise: dmatrix![0.0],
            ..scalar_model(1.0, 1.0, 1.0, 1.0)
        };
        let b = Belief::new(0, dvector![0.0], dmatrix![2.5]).unwrap();
        let (_, cov) = predict(&b, &m);
        assert_relative_eq!(cov[(0, 0)], 2.5);
    }

    #[test]
    fn predict_scalar_growth() {
        let m = scalar_model(2.0, 1.0, 1.0, 1.0);
        let b = Belief::new(0, dvector![0.0], dmatrix![1.0]).unwrap();
        let (_, cov) = predict(&b, &m);
        assert_relative_eq!(cov[(0, 0)], 5.0);
    }

    #[test]
    fn predict_diagonal_two_markets() {
        let m = StateSpaceModel::diagonal(
            &[1.1, 1.2],
            &[1.0, 1.0],
            &[1.0, 1.0],
            &[1.0, 1.0],
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
        )
        .unwrap();
        let (_, cov) = predict(&m.initial_belief(), &m);
        assert_relative_eq!(cov[(0, 0)], 2.21, max_relative = 1e-14);
        assert_relative_eq!(cov[(1, 1)], 2.44, max_relative = 1e-14);
        assert_eq!(cov[(0, 1)], 0.0);
    }

    #[test]
    fn gain_scalar_example() {
        let m = scalar_model(1.0, 1.0, 1.0, 1.0);
        let k = kalman_gain(&dmatrix![1.0], &m).unwrap();
        assert_relative_eq!(k[(0, 0)], 0.5);
    }

    #[test]
    fn gain_noiseless_signal_is_growth_over_loading() {
        let m = scalar_model(1.3, 1.0, 2.0, 0.0);
        let k = kalman_gain(&dmatrix![0.7], &m).unwrap();
        assert_relative_eq!(k[(0, 0)], 1.3 / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn gain_singular_innovation_detected() {
        let m = scalar_model(1.0, 1.0, 1.0, 0.0);
        let err = kalman_gain(&dmatrix![0.0], &m).unwrap_err();
        assert!(matches!(err, Error::SingularInnovation { .. }));
    }

    #[test]
    fn update_hand_example() {
        let m = scalar_model(1.0, 1.0, 1.0, 1.0);
        let b = Belief::new(0, dvector![0.0], dmatrix![1.0]).unwrap();
        let step = update(&b, &dvector![2.0], &m).unwrap();
        assert_relative_eq!(step.gain[(0, 0)], 0.5);
        assert_relative_eq!(step.next_belief.mean[0], 1.0);
        assert_relative_eq!(step.next_belief.cov[(0, 0)], 1.5);
        assert_eq!(step.next_belief.t, 1);
    }

    #[test]
    fn confirming_signal_scales_mean_by_growth() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 3;
            let rand_mat = |rng: &mut StdRng| {
                DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal))
                    + 2.0 * DMatrix::<f64>::identity(n, n)
            };
            let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let sigma0 = &a * a.transpose() + DMatrix::identity(n, n);
            let m = StateSpaceModel::new(
                rand_mat(&mut rng),
                rand_mat(&mut rng),
                rand_mat(&mut rng),
                rand_mat(&mut rng),
                DVector::zeros(n),
                DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
                sigma0,
            )
            .unwrap();
            let b = m.initial_belief();
            let confirming = &m.signal_loading * &b.mean;
            let step = update(&b, &confirming, &m).unwrap();
            let expected = &m.growth * &b.mean;
            assert_relative_eq!(step.next_belief.mean, expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn noiseless_scalar_update_resets_to_state_noise() {
        let m = scalar_model(1.7, 1.3, 0.8, 0.0);
        let b = Belief::new(0, dvector![0.4], dmatrix![2.0]).unwrap();
        let step = update(&b, &dvector![1.0], &m).unwrap();
        assert_relative_eq!(
            step.next_belief.cov[(0, 0)],
            1.3 * 1.3,
            max_relative = 1e-12
        );
    }

    #[test]
    fn huge_signal_noise_update_approaches_predict() {
        let m = scalar_model(1.2, 1.0, 1.0, 1e8);
        let b = Belief::new(0, dvector![0.3], dmatrix![1.0]).unwrap();
        let step = update(&b, &dvector![5.0], &m).unwrap();
        let (_, pred) = predict(&b, &m);
        assert_relative_eq!(
            step.next_belief.cov[(0, 0)],
            pred[(0, 0)],
            max_relative = 1e-9
        );
    }

    #[test]
    fn unbiased_signal_recovers_state_without_noise() {
        // q = theta - (mu + c)/2 + gamma with theta=1, mu=1, c=0, gamma=0
        let q = dvector![1.0 - 0.5];
        let s = unbiased_signal(&q, &dvector![1.0], &dvector![0.0]);
        assert_relative_eq!(s[0], 1.0);

        let s2 = unbiased_signal(&dvector![0.0], &dvector![2.0], &dvector![2.0]);
        assert_relative_eq!(s2[0], 2.0);
    }

    #[test]
    fn unbiased_signal_monte_carlo_unbiasedness() {
        let mut rng = StdRng::seed_from_u64(42);
        let theta = 1.0;
        let mu = dvector![0.3];
        let c = dvector![0.2];
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let gamma: f64 = rng.sample(StandardNormal);
            let q = dvector![theta - (mu[0] + c[0]) * 0.5 + gamma];
            sum += unbiased_signal(&q, &mu, &c)[0];
        }
        let bias = sum / n as f64 - theta;
        assert!(bias.abs() <= 3.0 / (n as f64).sqrt(), "bias {bias}");
    }

    #[test]
    fn signal_variance_examples() {
        let m = scalar_model(1.0, 1.0, 1.0, 1.0);
        assert_relative_eq!(signal_variance(&dmatrix![1.0], &m).unwrap()[(0, 0)], 2.0);

        let m2 = scalar_model(1.0, 1.0, 2.0, 1.0);
        assert_relative_eq!(signal_variance(&dmatrix![0.0], &m2).unwrap()[(0, 0)], 0.25);

        let m3 = scalar_model(1.0, 1.0, 1.0, 0.0);
        assert_relative_eq!(signal_variance(&dmatrix![0.7], &m3).unwrap()[(0, 0)], 0.7);
    }

    #[test]
    fn bayesian_weight_examples() {
        let m = scalar_model(1.0, 1.0, 1.0, 1.0);
        assert_relative_eq!(bayesian_weight(&dmatrix![1.0], &m).unwrap()[(0, 0)], 0.5);

        let m2 = scalar_model(1.4, 1.0, 0.7, 0.0);
        let w = bayesian_weight(&dmatrix![0.9], &m2).unwrap();
        assert_relative_eq!(w[(0, 0)], 1.0, max_relative = 1e-12);

        let m3 = scalar_model(1.4, 1.0, 0.7, 1.0);
        let w0 = bayesian_weight(&dmatrix![0.0], &m3).unwrap();
        assert_relative_eq!(w0[(0, 0)], 0.0);
    }
}
