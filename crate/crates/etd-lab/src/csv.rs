//! Run-record CSV emission and parsing.
//!
//! Format: header `algo,seed,step,rmse_v,rmse_f,weight_norm,emphasis_norm`,
//! one row per evaluation, `\n` line endings. Floats are written in
//! scientific notation with 17 significant digits, which round-trips f64
//! exactly; non-finite values are written as `inf`, `-inf`, `nan`. Rows are
//! sorted by `(algo, seed, step)` before writing so equal runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "algo,seed,step,rmse_v,rmse_f,weight_norm,emphasis_norm";

/// One evaluation point within a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub step: u64,
    pub rmse_v: f64,
    pub rmse_f: f64,
    pub weight_norm: f64,
    pub emphasis_norm: f64,
}

/// The evaluation trace of a single seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algo: String,
    pub seed: u64,
    pub rows: Vec<EvalRow>,
}

/// 17 significant digits: enough to reproduce any f64 bit pattern on parse.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Csv {
        line,
        reason: format!("bad float {field:?}"),
    })
}

/// Render records to CSV text, globally sorted by `(algo, seed, step)` so
/// the bytes are canonical regardless of how rows were grouped.
pub fn render_csv(records: &[RunRecord]) -> String {
    let mut triples: Vec<(&str, u64, &EvalRow)> = records
        .iter()
        .flat_map(|rec| rec.rows.iter().map(move |row| (rec.algo.as_str(), rec.seed, row)))
        .collect();
    triples.sort_by(|a, b| (a.0, a.1, a.2.step).cmp(&(b.0, b.1, b.2.step)));
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (algo, seed, row) in triples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            algo,
            seed,
            row.step,
            format_f64(row.rmse_v),
            format_f64(row.rmse_f),
            format_f64(row.weight_norm),
            format_f64(row.emphasis_norm),
        );
    }
    out
}

/// Write records to `path`.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(records)).map_err(|e| Error::io(path, e))
}

/// Parse CSV text back into records, grouping consecutive rows with the same
/// `(algo, seed)`.
pub fn parse_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Csv {
                line: 1,
                reason: format!("unexpected header {header:?}"),
            })
        }
        None => {
            return Err(Error::Csv {
                line: 1,
                reason: "empty file".into(),
            })
        }
    }

    let mut records: Vec<RunRecord> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Csv {
                line,
                reason: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let algo = fields[0].to_string();
        let seed: u64 = fields[1].parse().map_err(|_| Error::Csv {
            line,
            reason: format!("bad seed {:?}", fields[1]),
        })?;
        let row = EvalRow {
            step: fields[2].parse().map_err(|_| Error::Csv {
                line,
                reason: format!("bad step {:?}", fields[2]),
            })?,
            rmse_v: parse_f64(fields[3], line)?,
            rmse_f: parse_f64(fields[4], line)?,
            weight_norm: parse_f64(fields[5], line)?,
            emphasis_norm: parse_f64(fields[6], line)?,
        };
        match records.last_mut() {
            Some(rec) if rec.algo == algo && rec.seed == seed => rec.rows.push(row),
            _ => records.push(RunRecord {
                algo,
                seed,
                rows: vec![row],
            }),
        }
    }
    Ok(records)
}

/// Read and parse a CSV file.
pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}
