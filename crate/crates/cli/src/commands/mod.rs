pub mod datasets;
pub mod flow;
pub mod sweep;
pub mod train;
pub mod verify;

use std::path::Path;

use crate::error::{CliError, CliResult};

pub const OK: i32 = 0;
pub const CHECK_FAILED: i32 = 1;
pub const DIVERGED: i32 = 3;

/// Header and numeric rows of a CSV written by this tool. Empty or `NaN`
/// cells parse as `NaN`.
pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|s| s.trim().parse::<f64>().unwrap_or(f64::NAN)).collect());
    }
    Ok((headers, rows))
}

pub fn column(headers: &[String], name: &str) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Config(format!("column '{name}' missing")))
}

/// Points of a particle CSV for plotting; 1D batches sit on `y = 0`.
pub fn read_points(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let (_, rows) = read_table(path)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.first().copied().unwrap_or(f64::NAN), r.get(1).copied().unwrap_or(0.0)))
        .collect())
}

pub fn step_name(step: usize) -> String {
    format!("step_{step:06}")
}
