//! Table and manifest emission with provenance headers.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::CliResult;

pub const CLI_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `# key=value` lines placed on top of every CSV table.
pub fn provenance_header(cfg: &ExperimentConfig, command: &str) -> String {
    format!(
        "# command={command}\n# experiment={}\n# config_sha256={}\n# seed={}\n# versions=kacld {}; kacld-cli {CLI_VERSION}\n",
        cfg.experiment,
        cfg.hash,
        cfg.seed,
        kacld::VERSION
    )
}

pub fn provenance_json(cfg: &ExperimentConfig, command: &str) -> Value {
    json!({
        "command": command,
        "experiment": cfg.experiment,
        "config_sha256": cfg.hash,
        "seed": cfg.seed,
        "versions": { "kacld": kacld::VERSION, "kacld-cli": CLI_VERSION },
    })
}

/// Long-format CSV: a header row and one row per record. Floats use Rust's
/// shortest round-trip formatting so reruns are byte-identical.
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self, header: &str) -> String {
        let mut s = String::from(header);
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }

    pub fn write(&self, path: &Path, header: &str) -> CliResult<()> {
        std::fs::write(path, self.render(header))?;
        Ok(())
    }
}

pub fn f(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

pub fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// JSON has no infinity; infinite values are written as strings.
pub fn jnum(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}
