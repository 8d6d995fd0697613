//! Trace CSV: one row per iteration, fixed column set.

use std::path::Path;

use ifista::solvers::TraceRow;

use crate::error::CliError;

pub const COLUMNS: [&str; 10] = [
    "k",
    "t_k",
    "gamma_k",
    "delta_k",
    "b_norm",
    "F_gap",
    "energy",
    "bound_rhs",
    "cert_excess",
    "x_dist_to_ref",
];

/// One parsed trace row; empty cells become `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub k: usize,
    pub t_k: f64,
    pub gamma_k: f64,
    pub delta_k: f64,
    pub b_norm: f64,
    pub f_gap: Option<f64>,
    pub energy: Option<f64>,
    pub bound_rhs: Option<f64>,
    pub cert_excess: f64,
    pub x_dist_to_ref: Option<f64>,
}

impl From<&TraceRow> for CsvRow {
    fn from(r: &TraceRow) -> Self {
        CsvRow {
            k: r.k,
            t_k: r.t_k,
            gamma_k: r.gamma_k,
            delta_k: r.delta_k,
            b_norm: r.b_norm,
            f_gap: r.f_gap,
            energy: r.energy,
            bound_rhs: r.bound_rhs,
            cert_excess: r.cert_excess,
            x_dist_to_ref: r.x_dist_to_ref,
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write(path: &Path, rows: &[CsvRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.t_k.to_string(),
            r.gamma_k.to_string(),
            r.delta_k.to_string(),
            r.b_norm.to_string(),
            cell(r.f_gap),
            cell(r.energy),
            cell(r.bound_rhs),
            r.cert_excess.to_string(),
            cell(r.x_dist_to_ref),
        ])?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Rejects any header other than [`COLUMNS`] in order, naming the first mismatch.
pub fn check_header(header: &csv::StringRecord) -> Result<(), CliError> {
    let got: Vec<&str> = header.iter().collect();
    if let Some(missing) = COLUMNS.iter().find(|c| !got.contains(c)) {
        return Err(CliError::Config(format!("trace is missing column `{missing}`")));
    }
    if let Some(extra) = got.iter().find(|c| !COLUMNS.contains(c)) {
        return Err(CliError::Config(format!("trace has unexpected column `{extra}`")));
    }
    if got != COLUMNS {
        return Err(CliError::Config(format!(
            "trace columns must be exactly {} in that order",
            COLUMNS.join(",")
        )));
    }
    Ok(())
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64, CliError> {
    field
        .parse()
        .map_err(|_| CliError::Config(format!("trace line {line}, column `{column}`: not a number: {field:?}")))
}

fn parse_opt(field: &str, line: usize, column: &str) -> Result<Option<f64>, CliError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, line, column).map(Some)
    }
}

pub fn read(path: &Path) -> Result<Vec<CsvRow>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    check_header(reader.headers()?)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let rec = record?;
        let line = i + 2;
        let f = |j: usize| rec.get(j).unwrap_or("");
        let k = f(0)
            .parse()
            .map_err(|_| CliError::Config(format!("trace line {line}, column `k`: not an index: {:?}", f(0))))?;
        rows.push(CsvRow {
            k,
            t_k: parse_f64(f(1), line, COLUMNS[1])?,
            gamma_k: parse_f64(f(2), line, COLUMNS[2])?,
            delta_k: parse_f64(f(3), line, COLUMNS[3])?,
            b_norm: parse_f64(f(4), line, COLUMNS[4])?,
            f_gap: parse_opt(f(5), line, COLUMNS[5])?,
            energy: parse_opt(f(6), line, COLUMNS[6])?,
            bound_rhs: parse_opt(f(7), line, COLUMNS[7])?,
            cert_excess: parse_f64(f(8), line, COLUMNS[8])?,
            x_dist_to_ref: parse_opt(f(9), line, COLUMNS[9])?,
        });
    }
    Ok(rows)
}
