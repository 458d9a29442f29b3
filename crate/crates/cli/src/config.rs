//! Run configuration: per-subcommand parameter sections loaded from a TOML
//! file and overridden by `key=value` arguments. Overrides win. Unknown keys
//! are rejected so typos fail loudly instead of silently using defaults.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CliError;

/// Per-market parameter: a scalar broadcast to every market, a comma list,
/// or an explicit array. `d = 1.1`, `d = "1.1,1.2"`, and `d = [1.1, 1.2]`
/// are all accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct Diag(pub Vec<f64>);

impl Diag {
    pub fn scalar(v: f64) -> Self {
        Diag(vec![v])
    }

    /// Broadcast to `n` entries; a single value repeats, anything else must
    /// already have length `n`.
    pub fn broadcast(&self, n: usize, name: &str) -> Result<Vec<f64>, CliError> {
        match self.0.len() {
            1 => Ok(vec![self.0[0]; n]),
            len if len == n => Ok(self.0.clone()),
            len => Err(CliError::Config(format!(
                "{name} has {len} entries but the model has {n} markets"
            ))),
        }
    }
}

/// A sweep over values: a `start:step:stop` range, a comma list, an array,
/// or a single value.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep(pub Vec<f64>);

fn parse_number_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad number {part:?}: {e}"))
        })
        .collect()
}

fn parse_range(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("range {text:?} must be start:step:stop"));
    }
    let start: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|e| format!("bad start: {e}"))?;
    let step: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|e| format!("bad step: {e}"))?;
    let stop: f64 = parts[2]
        .trim()
        .parse()
        .map_err(|e| format!("bad stop: {e}"))?;
    if step.is_nan() || step <= 0.0 {
        return Err(format!("range step must be positive (got {step})"));
    }
    if stop < start {
        return Err(format!("range stop {stop} below start {start}"));
    }
    let mut values = Vec::new();
    let mut k = 0u64;
    loop {
        let v = start + step * k as f64;
        if v > stop + 1e-9 * step {
            break;
        }
        values.push(v);
        k += 1;
    }
    Ok(values)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FlexibleValues {
    Number(f64),
    Text(String),
    List(Vec<f64>),
}

impl<'de> Deserialize<'de> for Diag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = match FlexibleValues::deserialize(deserializer)? {
            FlexibleValues::Number(v) => vec![v],
            FlexibleValues::Text(text) => {
                parse_number_list(&text).map_err(serde::de::Error::custom)?
            }
            FlexibleValues::List(list) => list,
        };
        if values.is_empty() {
            return Err(serde::de::Error::custom("parameter list must be nonempty"));
        }
        Ok(Diag(values))
    }
}

impl Serialize for Diag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.len() == 1 {
            self.0[0].serialize(serializer)
        } else {
            self.0.serialize(serializer)
        }
    }
}

impl<'de> Deserialize<'de> for Sweep {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = match FlexibleValues::deserialize(deserializer)? {
            FlexibleValues::Number(v) => vec![v],
            FlexibleValues::Text(text) => {
                if text.contains(':') {
                    parse_range(&text).map_err(serde::de::Error::custom)?
                } else {
                    parse_number_list(&text).map_err(serde::de::Error::custom)?
                }
            }
            FlexibleValues::List(list) => list,
        };
        if values.is_empty() {
            return Err(serde::de::Error::custom(
                "sweep must contain at least one value",
            ));
        }
        Ok(Sweep(values))
    }
}

impl Serialize for Sweep {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

/// Output file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

const SECTIONS: &[&str] = &[
    "filter",
    "steady",
    "voi-sweep",
    "region",
    "simulate",
    "bellman",
    "euler-limit",
];

/// Load the section for `command` from an optional TOML file, apply
/// `key=value` overrides, and deserialize into the parameter struct.
pub fn resolve<T: DeserializeOwned>(
    command: &str,
    config_path: Option<&Path>,
    overrides: &[String],
) -> Result<T, CliError> {
    let mut section = toml::Table::new();
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))?;
        for key in table.keys() {
            if !SECTIONS.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown section [{key}] in {} (expected one of {})",
                    path.display(),
                    SECTIONS.join(", ")
                )));
            }
        }
        if let Some(value) = table.get(command) {
            section = value
                .as_table()
                .cloned()
                .ok_or_else(|| CliError::Config(format!("[{command}] must be a table")))?;
        }
    }
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {item:?} must be key=value")))?;
        section.insert(key.trim().to_string(), parse_override_value(value.trim()));
    }
    toml::Value::Table(section)
        .try_into()
        .map_err(|e| CliError::Config(format!("invalid parameters for {command}: {e}")))
}

fn parse_override_value(text: &str) -> toml::Value {
    if let Ok(i) = text.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = text.parse::<f64>() {
        return toml::Value::Float(f);
    }
    match text {
        "true" => toml::Value::Boolean(true),
        "false" => toml::Value::Boolean(false),
        _ => toml::Value::String(text.to_string()),
    }
}

// ---- per-subcommand parameter sections ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    pub d: Diag,
    pub f: Diag,
    pub g: Diag,
    pub h: Diag,
    pub c: Diag,
    pub mu0: Diag,
    pub sigma0: Diag,
    pub horizon: usize,
    pub output: Option<String>,
    pub format: Format,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            d: Diag::scalar(1.1),
            f: Diag::scalar(1.0),
            g: Diag::scalar(1.0),
            h: Diag::scalar(1.0),
            c: Diag::scalar(0.0),
            mu0: Diag::scalar(0.0),
            sigma0: Diag::scalar(1.0),
            horizon: 20,
            output: None,
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadyParams {
    pub d: Diag,
    pub f: Diag,
    pub g: Diag,
    pub h: Diag,
    pub tol: f64,
    pub max_iter: usize,
    pub output: Option<String>,
    pub format: Format,
}

impl Default for SteadyParams {
    fn default() -> Self {
        Self {
            d: Diag::scalar(1.1),
            f: Diag::scalar(1.0),
            g: Diag::scalar(1.0),
            h: Diag::scalar(1.0),
            tol: voilab_core::steady_state::DEFAULT_TOL,
            max_iter: voilab_core::steady_state::DEFAULT_MAX_ITER,
            output: None,
            format: Format::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VoiSweepParams {
    pub d: f64,
    pub f: f64,
    pub g: f64,
    pub h: Sweep,
    pub output: Option<String>,
    pub plot_data: Option<String>,
    pub format: Format,
}

impl Default for VoiSweepParams {
    fn default() -> Self {
        Self {
            d: 1.1,
            f: 1.0,
            g: 1.0,
            h: Sweep(parse_range("0:0.25:50").expect("default range parses")),
            output: None,
            plot_data: None,
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionParams {
    pub g: f64,
    pub output: Option<String>,
    pub format: Format,
}

impl Default for RegionParams {
    fn default() -> Self {
        Self {
            g: 1.0,
            output: None,
            format: Format::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateParams {
    pub d: Diag,
    pub f: Diag,
    pub g: Diag,
    pub h: Diag,
    pub c: Diag,
    pub mu0: Diag,
    pub sigma0: Diag,
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
    pub output: Option<String>,
    pub format: Format,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            d: Diag::scalar(1.1),
            f: Diag::scalar(1.0),
            g: Diag::scalar(1.0),
            h: Diag::scalar(1.0),
            c: Diag::scalar(0.0),
            mu0: Diag::scalar(2.0),
            sigma0: Diag::scalar(1.0),
            horizon: 20,
            paths: 1000,
            seed: 0,
            output: None,
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BellmanParams {
    pub d: f64,
    pub f: f64,
    pub h: f64,
    pub b: f64,
    pub c: f64,
    pub delta: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub n_mu: usize,
    pub sigma_min: f64,
    /// Defaults to four times the long-run variance at the largest
    /// bracketed price when absent.
    pub sigma_max: Option<f64>,
    pub n_sigma: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub quad_order: usize,
    pub output: Option<String>,
    pub format: Format,
}

impl Default for BellmanParams {
    fn default() -> Self {
        Self {
            d: 1.2,
            f: 1.0,
            h: 1.0,
            b: 1.0,
            c: 1.0,
            delta: 0.6,
            mu_min: -4.0,
            mu_max: 20.0,
            n_mu: 200,
            sigma_min: 0.5,
            sigma_max: None,
            n_sigma: 100,
            tol: 1e-8,
            max_sweeps: 2_000,
            quad_order: 9,
            output: None,
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EulerLimitParams {
    pub d: f64,
    pub f: f64,
    pub b: f64,
    pub p: f64,
    pub h: Sweep,
    pub output: Option<String>,
    pub format: Format,
}

impl Default for EulerLimitParams {
    fn default() -> Self {
        Self {
            d: 1.2,
            f: 1.0,
            b: 1.0,
            p: 1.0,
            h: Sweep(vec![10.0, 100.0, 1_000.0, 10_000.0]),
            output: None,
            format: Format::Csv,
        }
    }
}
