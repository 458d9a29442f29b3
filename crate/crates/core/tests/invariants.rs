//! Randomized and grid-based property suites for the filter, the steady
//! state, the VoI curves, the simulator, and the value-iteration solver.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use voilab_core::bellman::{solve_bellman, solve_bellman_with, BellmanOptions, GridSpec};
use voilab_core::filter::{bayesian_weight, kalman_gain, update};
use voilab_core::model::{Belief, StateSpaceModel};
use voilab_core::nonmyopic::{euler_term, euler_term_limit, nm_sigma_star, NonMyopicModel};
use voilab_core::sim::{simulate, SimConfig};
use voilab_core::steady_state::{riccati_fixed_point_from, sigma_star_closed_form, steady_state};
use voilab_core::voi::{curvature_at_zero, growth_threshold, stage_voi_at, voi_curve};

fn random_invertible(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal))
        + 2.0 * DMatrix::identity(n, n)
}

fn random_psd(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + 0.1 * DMatrix::identity(n, n)
}

fn random_model(rng: &mut StdRng, n: usize) -> StateSpaceModel {
    StateSpaceModel::new(
        random_invertible(rng, n),
        random_invertible(rng, n),
        random_invertible(rng, n),
        DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)),
        DVector::zeros(n),
        DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
        random_psd(rng, n),
    )
    .expect("random model is valid")
}

#[test]
fn posterior_covariances_stay_symmetric_and_psd() {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut steps = 0usize;
    while steps < 1000 {
        let n = rng.random_range(1..=4);
        let model = random_model(&mut rng, n);
        let mut belief = model.initial_belief();
        for _ in 0..25 {
            let signal = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * 3.0);
            let step = update(&belief, &signal, &model).expect("update succeeds");
            belief = step.next_belief;
            let cov = &belief.cov;
            let scale = cov.abs().max().max(1.0);
            let asym = (cov - cov.transpose()).abs().max();
            assert!(asym <= 1e-12 * scale, "asymmetry {asym} at scale {scale}");
            let lambda_min = cov
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            assert!(
                lambda_min >= -1e-10 * scale,
                "negative eigenvalue {lambda_min}"
            );
            steps += 1;
        }
    }
}

#[test]
fn normalized_gain_equals_bayesian_weight() {
    // D^{-1} K G == Sigma G' (G Sigma G' + H H')^{-1} G, computed two ways.
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..200 {
        let n = rng.random_range(1..=4);
        let model = random_model(&mut rng, n);
        let sigma = random_psd(&mut rng, n);
        let k = kalman_gain(&sigma, &model).unwrap();
        let w = bayesian_weight(&sigma, &model).unwrap();
        let d_inv = model.growth.clone().try_inverse().unwrap();
        let diff = (d_inv * k * &model.signal_loading - &w).abs().max();
        let scale = w.abs().max().max(1.0);
        assert!(diff <= 1e-12 * scale, "identity violated by {diff}");
    }
}

#[test]
fn scalar_gain_strictly_decreases_in_signal_noise() {
    let sigma = nalgebra::dmatrix![1.7];
    let mut prev = f64::INFINITY;
    for i in 1..=60 {
        let h = 0.1 * i as f64;
        let model = StateSpaceModel::scalar(1.2, 1.0, 0.8, h, 0.0, 0.0, 1.0).unwrap();
        let k = kalman_gain(&sigma, &model).unwrap()[(0, 0)];
        assert!(k < prev, "gain not decreasing at h={h}");
        prev = k;
    }
}

#[test]
fn innovations_orthogonal_to_beliefs_on_long_path() {
    let model = StateSpaceModel::scalar(1.0, 1.0, 1.0, 1.0, 0.0, 2.0, 1.0).unwrap();
    let config = SimConfig::new(model, 20_000, 1, 77).unwrap();
    let result = simulate(&config).unwrap();
    let r = result.innovation_belief_corr[0].abs();
    assert!(r <= 3.0 / (20_000f64).sqrt(), "correlation {r}");
}

#[test]
fn innovations_are_serially_uncorrelated() {
    let model = StateSpaceModel::scalar(1.1, 1.0, 1.0, 1.0, 0.0, 2.0, 1.0).unwrap();
    let config = SimConfig::new(model, 10, 2_000, 31).unwrap();
    let result = simulate(&config).unwrap();
    let r = result.innovation_lag1[0].abs();
    assert!(r <= 3.0 / (20_000f64).sqrt(), "lag-1 autocorrelation {r}");
}

#[test]
fn riccati_fixed_point_is_independent_of_start() {
    // Iterating at tol 1e-13 leaves both runs within 2e-12 of each other.
    for d in [1.0, 1.2, 1.5] {
        for f in [0.5, 2.0] {
            for g in [0.5, 2.0] {
                for h in [0.5, 2.0] {
                    let model = StateSpaceModel::scalar(d, f, g, h, 0.0, 0.0, 1.0).unwrap();
                    let from_zero =
                        riccati_fixed_point_from(&model, DMatrix::zeros(1, 1), 1e-13, 1_000_000)
                            .unwrap();
                    let start = DMatrix::identity(1, 1) * 10.0 * f64::max(f * f, 1.0);
                    let from_high =
                        riccati_fixed_point_from(&model, start, 1e-13, 1_000_000).unwrap();
                    let diff = (from_zero.sigma[(0, 0)] - from_high.sigma[(0, 0)]).abs();
                    assert!(diff <= 2e-12, "d={d} f={f} g={g} h={h}: diff {diff}");
                }
            }
        }
    }
    // One coupled two-market system.
    let mut d = DMatrix::identity(2, 2) * 1.1;
    d[(0, 1)] = 0.05;
    let model = StateSpaceModel::new(
        d,
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2) * 0.8,
        DVector::zeros(2),
        DVector::zeros(2),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let a = riccati_fixed_point_from(&model, DMatrix::zeros(2, 2), 1e-13, 1_000_000).unwrap();
    let b =
        riccati_fixed_point_from(&model, DMatrix::identity(2, 2) * 10.0, 1e-13, 1_000_000).unwrap();
    assert!((a.sigma - b.sigma).abs().max() <= 2e-12);
}

#[test]
fn long_run_variance_increasing_and_convex_in_noise_under_growth() {
    for d in [1.05, 1.2, 1.5] {
        for g in [0.5, 1.0, 2.0] {
            for f in [0.5, 1.0, 2.0] {
                let values: Vec<f64> = (0..=40)
                    .map(|i| sigma_star_closed_form(d, f, g, 0.25 * i as f64).unwrap())
                    .collect();
                for w in values.windows(2) {
                    assert!(w[1] > w[0], "not increasing at d={d} g={g} f={f}");
                }
                for w in values.windows(3) {
                    assert!(
                        w[2] - 2.0 * w[1] + w[0] > 0.0,
                        "not convex at d={d} g={g} f={f}"
                    );
                }
            }
        }
    }
}

#[test]
fn long_run_variance_large_noise_asymptote() {
    // Sigma*(h) / h^2 -> (d^2 - 1) / g^2.
    for d in [1.1, 1.5] {
        for g in [0.5, 2.0] {
            let h = 1e3;
            let limit = (d * d - 1.0) / (g * g);
            let ratio = sigma_star_closed_form(d, 1.0, g, h).unwrap() / (h * h);
            assert!(
                (ratio - limit).abs() <= 0.01 * limit,
                "d={d} g={g}: ratio {ratio} vs {limit}"
            );
        }
    }
}

#[test]
fn stage_voi_unbounded_under_growth() {
    for d in [1.05, 1.2, 1.4] {
        let v10 = stage_voi_at(d, 1.0, 1.0, 10.0).unwrap();
        let v100 = stage_voi_at(d, 1.0, 1.0, 100.0).unwrap();
        assert!(v100 / v10 > 10.0, "d={d}: ratio {}", v100 / v10);
    }
}

#[test]
fn classification_ignores_state_noise_loading() {
    let grid: Vec<f64> = (0..=80).map(|i| 0.25 * i as f64).collect();
    for d in [1.0, 1.1, 1.35, 1.5] {
        for g in [0.5, 1.0, 2.0] {
            let classes: Vec<_> = [0.5, 1.0, 2.0]
                .iter()
                .map(|&f| voi_curve(d, f, g, &grid).unwrap().classification)
                .collect();
            assert!(
                classes.windows(2).all(|w| w[0] == w[1]),
                "d={d} g={g}: {classes:?}"
            );
        }
    }
}

#[test]
fn analytic_curvature_flips_exactly_at_threshold() {
    for g in [0.5, 1.0, 2.0] {
        let bound = growth_threshold(g).unwrap().d_upper;
        // Bisect the sign change of the analytic curvature.
        let mut lo = 1.0;
        let mut hi = 1.8;
        assert!(curvature_at_zero(lo, g).unwrap() < 0.0);
        assert!(curvature_at_zero(hi, g).unwrap() > 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if curvature_at_zero(mid, g).unwrap() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let flip = 0.5 * (lo + hi);
        assert!(
            (flip - bound).abs() <= 1e-4,
            "g={g}: flip {flip} vs bound {bound}"
        );
    }
}

#[test]
fn non_monotone_band_has_dip_and_unbounded_rise() {
    // Where the curvature of the curve itself is negative (growth below
    // sqrt 2) and the printed classifier agrees, the curve passes both below
    // and above its zero-noise value. The dip shrinks toward the band edge
    // and hides at small h, so the grid is log-fine near zero.
    // The curve obeys voi(d, f, g, h) = voi(d, f, 1, h/g) / g^2, so the rise
    // point scales with g; reach past h = g * 35 for the weakest growth.
    let mut grid = vec![0.0];
    let mut h = 0.002;
    while h <= 220.0 {
        grid.push(h);
        h *= 1.2;
    }
    for g in [0.5, 1.0, 2.0] {
        let upper = growth_threshold(g)
            .unwrap()
            .d_upper
            .min(std::f64::consts::SQRT_2);
        // Below d ~ 1.05 the rise above the zero-noise value migrates past
        // h = 50, so start the sweep where the grid can witness it.
        let mut d = 1.05;
        while d < upper - 0.02 {
            let curve = voi_curve(d, 1.0, g, &grid).unwrap();
            let v0 = curve.voi[0];
            assert!(curve.voi.iter().any(|&v| v < v0), "no dip at d={d} g={g}");
            assert!(curve.voi.iter().any(|&v| v > v0), "no rise at d={d} g={g}");
            d += 0.05;
        }
    }
}

#[test]
fn diagonal_steady_state_matches_per_market_closed_form() {
    let model = StateSpaceModel::diagonal(
        &[1.05, 1.4],
        &[0.5, 2.0],
        &[2.0, 0.5],
        &[1.0, 0.5],
        &[0.0, 0.0],
        &[0.0, 0.0],
        &[1.0, 1.0],
    )
    .unwrap();
    let ss = steady_state(&model, 1e-12, 1_000_000).unwrap();
    assert!(
        (ss.sigma[(0, 0)] - sigma_star_closed_form(1.05, 0.5, 2.0, 1.0).unwrap()).abs() < 1e-12
    );
    assert!((ss.sigma[(1, 1)] - sigma_star_closed_form(1.4, 2.0, 0.5, 0.5).unwrap()).abs() < 1e-12);
}

#[test]
fn euler_gap_shrinks_with_noise() {
    let model = NonMyopicModel::new(1.2, 1.0, 1.0, 1.0, 0.0, 0.5).unwrap();
    let p = 1.0;
    let limit = euler_term_limit(p, &model);
    let mut prev_gap = f64::INFINITY;
    for h in [10.0, 100.0, 1000.0, 10_000.0] {
        let m = NonMyopicModel {
            signal_noise: h,
            ..model
        };
        let term = euler_term(p, nm_sigma_star(p, &m), &m).unwrap();
        let gap = (term - limit).abs();
        assert!(gap < prev_gap, "gap not decreasing at h={h}");
        prev_gap = gap;
    }
}

#[test]
fn euler_limit_magnitude_grows_with_growth_rate() {
    let mut prev = -1.0;
    for i in 0..=10 {
        let d = 1.0 + 0.1 * i as f64;
        let model = NonMyopicModel::new(d, 1.0, 1.0, 1.0, 0.0, 0.5).unwrap();
        let magnitude = euler_term_limit(1.0, &model).abs();
        assert!(magnitude > prev || (i == 0 && magnitude == 0.0), "d={d}");
        prev = magnitude;
    }
}

#[test]
fn value_iteration_contracts_at_discount_rate() {
    let model = NonMyopicModel::new(1.2, 1.0, 1.0, 1.0, 1.0, 0.6).unwrap();
    let grid = GridSpec::linear_geometric(-3.0, 8.0, 41, 0.5, 30.0, 10).unwrap();
    let v = solve_bellman(&model, &grid, 1e-10, 400).unwrap();
    let history = &v.residual_history;
    for k in 3..history.len().saturating_sub(1) {
        if history[k] < 1e-11 {
            break;
        }
        let ratio = history[k + 1] / history[k];
        assert!(ratio <= 0.6 + 0.05, "sweep {k}: contraction ratio {ratio}");
    }
}

#[test]
fn quadrature_order_converged_for_smooth_continuation() {
    // One Bellman backup against an analytic value function: order 9 and
    // order 17 agree to near machine precision, so the expectation itself is
    // spectrally converged. (Full-table comparisons instead measure the
    // piecewise-linear interpolation kinks; see the regression test below.)
    let model = NonMyopicModel::new(1.2, 1.0, 1.0, 1.0, 1.0, 0.5).unwrap();
    let smooth =
        |mu: f64, sigma: f64| 0.25 * (mu - 1.0) * (mu - 1.0) + 0.3 * sigma + 0.1 * (mu / 3.0).sin();
    let backup = |order: usize, mu: f64, sigma: f64, p: f64| {
        let rule = voilab_core::quadrature::GaussHermite::new(order).unwrap();
        let w = sigma + model.signal_noise.powi(2) + (model.slope_loading * p).powi(2);
        let k = sigma / w;
        let sigma_next = model.growth.powi(2) * (1.0 - k) * sigma + model.state_noise.powi(2);
        rule.expect_standard_normal(|eps| {
            let mu_next = model.growth * (mu + sigma / w.sqrt() * eps);
            smooth(mu_next, sigma_next)
        })
    };
    for (mu, sigma, p) in [(0.0, 1.0, 0.5), (3.0, 4.0, 2.0), (-1.0, 9.0, 1.0)] {
        let a = backup(9, mu, sigma, p);
        let b = backup(17, mu, sigma, p);
        assert!(
            (a - b).abs() <= 1e-8 * a.abs().max(1.0),
            "({mu},{sigma},{p}): {a} vs {b}"
        );
    }
}

#[test]
fn quadrature_order_table_regression() {
    // On a grid wide enough that central-band trajectories stay inside, the
    // order-9 and order-17 fixed points differ only through interpolation
    // kinks: measured 2.6e-5 relative at this resolution, bounded at 1e-4.
    let model = NonMyopicModel::new(1.05, 0.5, 1.0, 1.0, 1.0, 0.5).unwrap();
    let grid = GridSpec::linear_geometric(-40.0, 40.0, 401, 0.1, 1.0, 8).unwrap();
    let opts9 = BellmanOptions {
        tol: 1e-11,
        max_sweeps: 600,
        quadrature_order: 9,
        ..Default::default()
    };
    let opts17 = BellmanOptions {
        tol: 1e-11,
        max_sweeps: 600,
        quadrature_order: 17,
        ..Default::default()
    };
    let v9 = solve_bellman_with(&model, &grid, &opts9).unwrap();
    let v17 = solve_bellman_with(&model, &grid, &opts17).unwrap();
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 150..251 {
        for j in 0..grid.sigma.len() {
            diff = diff.max((v9.values[(i, j)] - v17.values[(i, j)]).abs());
            scale = scale.max(v17.values[(i, j)].abs());
        }
    }
    assert!(
        diff <= 1e-4 * scale,
        "central-band diff {diff} at scale {scale}"
    );
}

#[test]
fn experimentation_discount_shrinks_but_survives_large_noise() {
    // Optimal prices keep deviating from myopic pricing as the additive
    // noise grows, in line with the nonvanishing limit of the price
    // first-order-condition pressure term.
    let base = NonMyopicModel::new(1.2, 1.0, 1.0, 1.0, 1.0, 0.6).unwrap();
    let grid = GridSpec::linear_geometric(-3.0, 10.0, 81, 0.5, 60.0, 24).unwrap();
    let mut deviations = Vec::new();
    for h in [1.0, 10.0] {
        let model = NonMyopicModel {
            signal_noise: h,
            ..base
        };
        let v = solve_bellman(&model, &grid, 1e-9, 600).unwrap();
        let (i, j) = (40, 16);
        let myopic = voilab_core::nonmyopic::myopic_foc_price(grid.mu[i], &model);
        deviations.push((v.policy[(i, j)] - myopic).abs());
    }
    assert!(
        deviations[1] < deviations[0],
        "deviation should shrink with noise: {deviations:?}"
    );
    assert!(
        deviations[1] > 1e-4,
        "deviation should survive large noise: {deviations:?}"
    );
}

#[test]
fn belief_covariance_matches_filter_invariant_after_updates() {
    // A short deterministic cross-check that the posterior from `update`
    // agrees with the schedule the simulator shares across paths.
    let model = StateSpaceModel::scalar(1.1, 1.0, 1.0, 1.0, 0.0, 2.0, 1.0).unwrap();
    let schedule = voilab_core::filter::covariance_schedule(&model, 6).unwrap();
    let mut belief = model.initial_belief();
    for t in 0..6 {
        assert!((schedule.sigmas[t][(0, 0)] - belief.cov[(0, 0)]).abs() < 1e-14);
        let step = update(&belief, &nalgebra::dvector![0.4], &model).unwrap();
        assert!((schedule.gains[t][(0, 0)] - step.gain[(0, 0)]).abs() < 1e-14);
        belief = step.next_belief;
    }
}

#[test]
fn belief_constructor_accepts_filter_output() {
    let model = StateSpaceModel::scalar(1.2, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
    let step = update(&model.initial_belief(), &nalgebra::dvector![1.0], &model).unwrap();
    let b = step.next_belief;
    assert!(Belief::new(b.t, b.mean.clone(), b.cov.clone()).is_ok());
}
