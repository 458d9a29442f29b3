//! One run function per subcommand: validate, compute, then write.
//! Nothing touches the filesystem until the computation has finished, so
//! failed runs leave no partial files behind.

use serde_json::json;

use voilab_core::bellman::{solve_bellman_with, BellmanOptions, GridSpec};
use voilab_core::filter::covariance_schedule;
use voilab_core::model::StateSpaceModel;
use voilab_core::nonmyopic::{
    euler_term, euler_term_limit, myopic_foc_price, nm_sigma_star, NonMyopicModel,
};
use voilab_core::sim::{simulate, SimConfig, SimResult, NORMAL_SAMPLING_TAG, RNG_TAG};
use voilab_core::steady_state::{gain_star, riccati_fixed_point, sigma_star_closed_form};
use voilab_core::voi::{voi_curve, Classification};

use crate::config::{
    BellmanParams, Diag, EulerLimitParams, FilterParams, Format, RegionParams, SimulateParams,
    SteadyParams, VoiSweepParams,
};
use crate::output::{deliver, metadata, plot_data, Table};
use crate::CliError;

fn diagonal_model(
    d: &Diag,
    f: &Diag,
    g: &Diag,
    h: &Diag,
    c: &Diag,
    mu0: &Diag,
    sigma0: &Diag,
) -> Result<StateSpaceModel, CliError> {
    let n = [d, f, g, h, c, mu0, sigma0]
        .iter()
        .map(|v| v.0.len())
        .max()
        .unwrap_or(1);
    let model = StateSpaceModel::diagonal(
        &d.broadcast(n, "d")?,
        &f.broadcast(n, "f")?,
        &g.broadcast(n, "g")?,
        &h.broadcast(n, "h")?,
        &c.broadcast(n, "c")?,
        &mu0.broadcast(n, "mu0")?,
        &sigma0.broadcast(n, "sigma0")?,
    )?;
    Ok(model)
}

fn render(table: &Table, format: Format, meta: &serde_json::Value) -> String {
    match format {
        Format::Csv => table.to_csv(meta),
        Format::Json => table.to_json(meta),
    }
}

pub fn run_filter(params: &FilterParams) -> Result<(), CliError> {
    if params.horizon == 0 {
        return Err(CliError::Config("horizon must be at least 1".into()));
    }
    let model = diagonal_model(
        &params.d,
        &params.f,
        &params.g,
        &params.h,
        &params.c,
        &params.mu0,
        &params.sigma0,
    )?;
    let n = model.n();
    let schedule = covariance_schedule(&model, params.horizon)?;

    let mut columns = vec!["t".to_string()];
    for label in ["sigma", "gain", "weight"] {
        for i in 1..=n {
            columns.push(format!("{label}_{i}"));
        }
    }
    let mut rows = Vec::with_capacity(params.horizon);
    for t in 0..params.horizon {
        let mut row = vec![t as f64];
        row.extend((0..n).map(|i| schedule.sigmas[t][(i, i)]));
        row.extend((0..n).map(|i| schedule.gains[t][(i, i)]));
        row.extend(
            (0..n).map(|i| schedule.normalized_gains[t][(i, i)] * model.signal_loading[(i, i)]),
        );
        rows.push(row);
    }
    let table = Table { columns, rows };
    let meta = metadata("filter", params, None, None);
    deliver(
        params.output.as_deref(),
        &render(&table, params.format, &meta),
    )
}

pub fn run_steady(params: &SteadyParams) -> Result<(), CliError> {
    let n = [&params.d, &params.f, &params.g, &params.h]
        .iter()
        .map(|v| v.0.len())
        .max()
        .unwrap();
    let d = params.d.broadcast(n, "d")?;
    let f = params.f.broadcast(n, "f")?;
    let g = params.g.broadcast(n, "g")?;
    let h = params.h.broadcast(n, "h")?;
    // Start the iteration from F F', which stays valid when H is singular.
    let sigma0: Vec<f64> = f.iter().map(|v| v * v).collect();
    let model = StateSpaceModel::diagonal(&d, &f, &g, &h, &vec![0.0; n], &vec![0.0; n], &sigma0)?;
    let steady = riccati_fixed_point(&model, params.tol, params.max_iter)?;

    let closed_form: Result<Vec<f64>, _> = (0..n)
        .map(|i| sigma_star_closed_form(d[i], f[i], g[i], h[i]))
        .collect();
    let meta = metadata("steady", params, None, None);
    let content = match params.format {
        Format::Json => {
            let rows = |m: &voilab_core::nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
                (0..n)
                    .map(|i| (0..n).map(|j| m[(i, j)]).collect())
                    .collect()
            };
            let mut doc = json!({
                "metadata": meta,
                "sigma_star": rows(&steady.sigma),
                "k_star": rows(&steady.gain),
                "iterations": steady.iterations,
                "residual": steady.residual,
            });
            if let Ok(cf) = &closed_form {
                doc["closed_form_diag"] = json!(cf);
            }
            format!("{doc:#}\n")
        }
        Format::Csv => {
            let table = Table {
                columns: vec!["market".into(), "sigma_star".into(), "k_star".into()],
                rows: (0..n)
                    .map(|i| vec![(i + 1) as f64, steady.sigma[(i, i)], steady.gain[(i, i)]])
                    .collect(),
            };
            table.to_csv(&meta)
        }
    };
    deliver(params.output.as_deref(), &content)
}

pub fn run_voi_sweep(params: &VoiSweepParams) -> Result<(), CliError> {
    if params.h.0.is_empty() {
        return Err(CliError::Config(
            "h sweep must contain at least one value".into(),
        ));
    }
    let curve = voi_curve(params.d, params.f, params.g, &params.h.0)?;
    let class = match curve.classification {
        Classification::MaxAtZero => "MaxAtZero",
        Classification::MinAtZero => "MinAtZero",
        Classification::Degenerate => "Degenerate",
    };
    let mut extra = json!({ "classification": class });
    if let Some((h, v)) = curve.interior_min {
        extra["interior_min_h"] = json!(h);
        extra["interior_min_voi"] = json!(v);
    }
    let meta = metadata("voi-sweep", params, None, Some(extra));

    let mut rows = Vec::with_capacity(curve.h_grid.len());
    for (idx, &h) in curve.h_grid.iter().enumerate() {
        let sigma = sigma_star_closed_form(params.d, params.f, params.g, h)?;
        let gain = gain_star(params.d, params.g, h, sigma)?;
        rows.push(vec![h, sigma, gain, curve.voi[idx], curve.pro_rata[idx]]);
    }
    let table = Table {
        columns: vec![
            "h".into(),
            "sigma_star".into(),
            "k_star".into(),
            "voi".into(),
            "pro_rata".into(),
        ],
        rows,
    };
    deliver(
        params.output.as_deref(),
        &render(&table, params.format, &meta),
    )?;
    if let Some(path) = &params.plot_data {
        deliver(Some(path), &plot_data(&curve, &meta))?;
    }
    Ok(())
}

pub fn run_region(params: &RegionParams) -> Result<(), CliError> {
    let region = voilab_core::voi::growth_threshold(params.g)?;
    let meta = metadata("region", params, None, None);
    let content = match params.format {
        Format::Json => {
            let doc = json!({
                "metadata": meta,
                "g": region.g,
                "d_lower": region.d_lower,
                "d_upper": region.d_upper,
            });
            format!("{doc:#}\n")
        }
        Format::Csv => Table {
            columns: vec!["g".into(), "d_lower".into(), "d_upper".into()],
            rows: vec![vec![region.g, region.d_lower, region.d_upper]],
        }
        .to_csv(&meta),
    };
    deliver(params.output.as_deref(), &content)
}

pub fn run_simulate(params: &SimulateParams) -> Result<(), CliError> {
    let model = diagonal_model(
        &params.d,
        &params.f,
        &params.g,
        &params.h,
        &params.c,
        &params.mu0,
        &params.sigma0,
    )?;
    let config = SimConfig::new(model, params.horizon, params.paths, params.seed)?;
    let result = simulate(&config)?;
    let meta = metadata(
        "simulate",
        params,
        Some(params.seed),
        Some(json!({
            "rng": RNG_TAG,
            "normal_sampling": NORMAL_SAMPLING_TAG,
            "model": voilab_core::sim::ModelEcho::of(&config.model),
        })),
    );
    let content = match params.format {
        Format::Csv => format!("# {meta}\n{}\n{}", SimResult::CSV_HEADER, result.csv_body()),
        Format::Json => {
            let columns: Vec<&str> = SimResult::CSV_HEADER.split(',').collect();
            let rows: Vec<serde_json::Value> = result
                .csv_body()
                .lines()
                .map(|line| {
                    let mut object = serde_json::Map::new();
                    for (name, value) in columns.iter().zip(line.split(',')) {
                        object.insert(
                            name.to_string(),
                            json!(value.parse::<f64>().unwrap_or(f64::NAN)),
                        );
                    }
                    serde_json::Value::Object(object)
                })
                .collect();
            format!("{:#}\n", json!({ "metadata": meta, "rows": rows }))
        }
    };
    deliver(params.output.as_deref(), &content)
}

pub fn run_bellman(params: &BellmanParams) -> Result<(), CliError> {
    let model = NonMyopicModel::new(
        params.d,
        params.f,
        params.h,
        params.b,
        params.c,
        params.delta,
    )?;
    let sigma_max = match params.sigma_max {
        Some(v) => v,
        None => {
            let p_max = myopic_foc_price(params.mu_max, &model) + 3.0;
            (4.0 * nm_sigma_star(p_max, &model)).max(params.sigma_min * 8.0)
        }
    };
    let grid = GridSpec::linear_geometric(
        params.mu_min,
        params.mu_max,
        params.n_mu,
        params.sigma_min,
        sigma_max,
        params.n_sigma,
    )?;
    let opts = BellmanOptions {
        tol: params.tol,
        max_sweeps: params.max_sweeps,
        quadrature_order: params.quad_order,
        ..Default::default()
    };
    let solution = solve_bellman_with(&model, &grid, &opts)?;
    let meta = metadata(
        "bellman",
        params,
        None,
        Some(json!({
            "mu_grid": solution.mu_grid,
            "sigma_grid": solution.sigma_grid,
            "quadrature_order": solution.quadrature_order,
            "sweeps": solution.sweeps,
            "residual": solution.sweep_residual,
            "clamp_count": solution.clamp_count,
        })),
    );
    let mut rows = Vec::with_capacity(solution.mu_grid.len() * solution.sigma_grid.len());
    for (i, &mu) in solution.mu_grid.iter().enumerate() {
        for (j, &sigma) in solution.sigma_grid.iter().enumerate() {
            rows.push(vec![
                mu,
                sigma,
                solution.values[(i, j)],
                solution.policy[(i, j)],
            ]);
        }
    }
    let table = Table {
        columns: vec![
            "mu".into(),
            "sigma".into(),
            "value".into(),
            "policy_price".into(),
        ],
        rows,
    };
    deliver(
        params.output.as_deref(),
        &render(&table, params.format, &meta),
    )
}

pub fn run_euler_limit(params: &EulerLimitParams) -> Result<(), CliError> {
    if params.h.0.iter().any(|&h| h <= 0.0) {
        return Err(CliError::Config("h sweep values must be positive".into()));
    }
    let base = NonMyopicModel::new(params.d, params.f, 1.0, params.b, 0.0, 0.5)?;
    let limit = euler_term_limit(params.p, &base);
    let mut rows = Vec::with_capacity(params.h.0.len());
    for &h in &params.h.0 {
        let model = NonMyopicModel {
            signal_noise: h,
            ..base
        };
        let sigma = nm_sigma_star(params.p, &model);
        let term = euler_term(params.p, sigma, &model)?;
        let rel_gap = if limit != 0.0 {
            (term - limit).abs() / limit.abs()
        } else {
            term.abs()
        };
        rows.push(vec![h, sigma, term, limit, rel_gap]);
    }
    let table = Table {
        columns: vec![
            "h".into(),
            "sigma_star".into(),
            "euler_term".into(),
            "limit".into(),
            "rel_gap".into(),
        ],
        rows,
    };
    let meta = metadata("euler-limit", params, None, Some(json!({ "limit": limit })));
    deliver(
        params.output.as_deref(),
        &render(&table, params.format, &meta),
    )
}
