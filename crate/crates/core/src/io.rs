//! Plain CSV and JSON output. Floats are written in Rust's shortest
//! round-trip exponent form so that files are byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::grid::Grid;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

pub fn csv_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

const AXES: [&str; 2] = ["x", "y"];

/// One row per node: coordinates followed by the given columns.
pub fn node_csv(grid: &Grid, columns: &[(&str, &[f64])]) -> String {
    let mut header: Vec<&str> = AXES[..grid.dim()].to_vec();
    header.extend(columns.iter().map(|(name, _)| *name));
    let rows: Vec<Vec<f64>> = (0..grid.node_count())
        .map(|k| {
            let mut row = grid.point(k);
            row.extend(columns.iter().map(|(_, v)| v[k]));
            row
        })
        .collect();
    csv_table(&header, &rows)
}

/// One row per cell: centroid followed by the given columns.
pub fn cell_csv(grid: &Grid, columns: &[(&str, &[f64])]) -> String {
    let mut header: Vec<&str> = AXES[..grid.dim()].to_vec();
    header.extend(columns.iter().map(|(name, _)| *name));
    let rows: Vec<Vec<f64>> = grid
        .cells()
        .iter()
        .enumerate()
        .map(|(t, c)| {
            let mut row = c.centroid[..grid.dim()].to_vec();
            row.extend(columns.iter().map(|(_, v)| v[t]));
            row
        })
        .collect();
    csv_table(&header, &rows)
}

/// Parses a CSV written by this module into its header and numeric rows.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or("empty file")?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|e| format!("line {}: {e}", i + 2))?;
        if row.len() != header.len() {
            return Err(format!("line {}: expected {} columns, got {}", i + 2, header.len(), row.len()));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Extracts the named column of a parsed CSV.
pub fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Option<Vec<f64>> {
    let idx = header.iter().position(|h| h == name)?;
    Some(rows.iter().map(|r| r[idx]).collect())
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    write_text(path, &text)
}

/// Formats a float list as `a,b,c`.
pub fn join_floats(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", fmt_f64(*v));
    }
    out
}
