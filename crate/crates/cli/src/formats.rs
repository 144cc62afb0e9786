//! Deterministic file IO: CSV with fixed 17-significant-digit floats and the
//! schema-versioned JSON report envelope.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

/// 17 significant digits: round-trips every f64 exactly and keeps output
/// byte-identical across runs.
pub fn fmt_float(v: f64) -> String {
    if v == f64::INFINITY {
        return "inf".into();
    }
    if v == f64::NEG_INFINITY {
        return "-inf".into();
    }
    format!("{v:.16e}")
}

pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<(), crate::CliError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    fs::write(path, out).map_err(|e| crate::CliError::config(format!("cannot write {path:?}: {e}")))
}

/// Parse a two-or-more-column numeric CSV; a non-numeric first row is
/// treated as a header and skipped.
pub fn read_csv_columns(path: &Path, want: usize) -> Result<Vec<Vec<f64>>, crate::CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| crate::CliError::config(format!("cannot read {path:?}: {e}")))?;
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); want];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if parts.len() < want {
            return Err(crate::CliError::config(format!(
                "{path:?}:{}: expected {want} columns, found {}",
                lineno + 1,
                parts.len()
            )));
        }
        let parsed: Result<Vec<f64>, _> = parts[..want].iter().map(|s| s.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                for (c, v) in vals.into_iter().enumerate() {
                    cols[c].push(v);
                }
            }
            Err(_) if lineno == 0 => continue, // header row
            Err(e) => {
                return Err(crate::CliError::config(format!(
                    "{path:?}:{}: {e}",
                    lineno + 1
                )))
            }
        }
    }
    if cols[0].is_empty() {
        return Err(crate::CliError::config(format!(
            "{path:?}: no data rows"
        )));
    }
    Ok(cols)
}

/// Schema-versioned run report printed to stdout.
#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub inputs: Value,
    pub outputs: Vec<String>,
    pub results: Value,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str, inputs: Value) -> Self {
        Report {
            schema_version: 1,
            command: command.to_string(),
            inputs,
            outputs: Vec::new(),
            results: json!({}),
            warnings: Vec::new(),
        }
    }

    pub fn print(&self) {
        println!("{}", serde_json::to_string_pretty(self).expect("report json"));
    }
}
