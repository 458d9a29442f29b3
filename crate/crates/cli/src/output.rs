//! Output writers. Every file starts with a metadata header: a `# {json}`
//! comment line for CSV and plot files, a `metadata` object for JSON files.
//! Floats print in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use voilab_core::voi::{Classification, VoiCurve};

use crate::CliError;

pub const TOOL: &str = "voilab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Metadata header carried by every output file.
pub fn metadata<T: Serialize>(
    command: &str,
    config: &T,
    seed: Option<u64>,
    extra: Option<serde_json::Value>,
) -> serde_json::Value {
    let mut meta = json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "config": config,
    });
    if let Some(seed) = seed {
        meta["seed"] = json!(seed);
    }
    if let Some(extra) = extra {
        for (key, value) in extra.as_object().cloned().unwrap_or_default() {
            meta[key] = value;
        }
    }
    meta
}

/// A rectangular numeric result with named columns.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self, meta: &serde_json::Value) -> String {
        let mut out = format!("# {meta}\n");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, meta: &serde_json::Value) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut object = serde_json::Map::new();
                for (name, value) in self.columns.iter().zip(row) {
                    object.insert(name.clone(), json!(value));
                }
                serde_json::Value::Object(object)
            })
            .collect();
        let doc = json!({ "metadata": meta, "rows": rows });
        format!("{doc:#}\n")
    }
}

/// Environment variable that redirects relative output paths into a
/// directory. The only environment knob the tool reads.
pub const OUTPUT_DIR_VAR: &str = "VOILAB_OUTPUT_DIR";

/// Route a rendered document to a file or stdout. Relative paths resolve
/// under `VOILAB_OUTPUT_DIR` when that variable is set.
pub fn deliver(path: Option<&str>, content: &str) -> Result<(), CliError> {
    match path {
        Some(path) => {
            let mut target = Path::new(path).to_path_buf();
            if target.is_relative() {
                if let Ok(dir) = std::env::var(OUTPUT_DIR_VAR) {
                    if !dir.is_empty() {
                        target = Path::new(&dir).join(target);
                    }
                }
            }
            std::fs::write(&target, content)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", target.display())))
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Two-column `h voi` series with a commented header naming the
/// classification and the interior minimum, for direct use by plotting tools.
pub fn plot_data(curve: &VoiCurve, meta: &serde_json::Value) -> String {
    let class = match curve.classification {
        Classification::MaxAtZero => "MaxAtZero",
        Classification::MinAtZero => "MinAtZero",
        Classification::Degenerate => "Degenerate",
    };
    let mut out = format!("# {meta}\n");
    match curve.interior_min {
        Some((h, v)) => {
            let _ = writeln!(
                out,
                "# classification={class} interior_min_h={h} interior_min_voi={v}"
            );
        }
        None => {
            let _ = writeln!(out, "# classification={class} interior_min=none");
        }
    }
    for (h, v) in curve.h_grid.iter().zip(&curve.voi) {
        let _ = writeln!(out, "{h} {v}");
    }
    out
}
