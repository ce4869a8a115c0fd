//! CSV and file plumbing. Floats are written with 17 significant digits so
//! every value reads back bit-exactly.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use jepa_score_core::eval::{CellResult, Histogram, OracleCellResult};
use jepa_score_core::jepa::LossRecord;

use crate::error::{CliError, Result};

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Builds a CSV document from a header and rows of already formatted cells.
fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| CliError::format("<csv>", e.to_string());
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| CliError::format("<csv>", e.to_string()))
}

fn names(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| (*c).to_owned()).collect()
}

pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let rows = history.iter().map(|r| {
        vec![
            r.step.to_string(),
            fmt_f64(r.loss),
            fmt_f64(r.invariance),
            fmt_f64(r.diversity),
        ]
    });
    write_atomic(
        path,
        &csv_bytes(&names(&["step", "loss", "invariance", "diversity"]), rows)?,
    )
}

pub fn scores_csv(scores: &[f64]) -> Result<Vec<u8>> {
    let rows = scores.iter().enumerate().map(|(i, s)| vec![i.to_string(), fmt_f64(*s)]);
    csv_bytes(&names(&["index", "score"]), rows)
}

pub fn write_scores_csv(path: &Path, scores: &[f64]) -> Result<()> {
    write_atomic(path, &scores_csv(scores)?)
}

pub fn write_grid_csv(path: &Path, cells: &[CellResult]) -> Result<()> {
    let rows = cells.iter().map(|c| {
        vec![
            c.dim.to_string(),
            c.n_samples.to_string(),
            fmt_f64(c.pearson),
            fmt_f64(c.final_loss),
            fmt_f64(c.moment_gap),
            c.seed.to_string(),
        ]
    });
    let header = names(&["dim", "n_samples", "pearson", "final_loss", "moment_gap", "seed"]);
    write_atomic(path, &csv_bytes(&header, rows)?)
}

pub fn write_oracle_csv(path: &Path, cells: &[OracleCellResult]) -> Result<()> {
    let rows = cells
        .iter()
        .map(|c| vec![c.dim.to_string(), fmt_f64(c.pearson), c.seed.to_string()]);
    write_atomic(path, &csv_bytes(&names(&["dim", "pearson", "seed"]), rows)?)
}

pub fn write_histogram_csv(path: &Path, h: &Histogram) -> Result<()> {
    let rows = h
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| vec![fmt_f64(h.edges[i]), fmt_f64(h.edges[i + 1]), c.to_string()]);
    write_atomic(path, &csv_bytes(&names(&["bin_left", "bin_right", "count"]), rows)?)
}

/// `chain,x_0,...,x_{D-1}`.
pub fn write_points_csv(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    let dim = points.first().map_or(0, Vec::len);
    let mut header = vec!["chain".to_owned()];
    header.extend((0..dim).map(|j| format!("x_{j}")));
    let rows = points.iter().enumerate().map(|(i, p)| {
        let mut row = vec![i.to_string()];
        row.extend(p.iter().map(|v| fmt_f64(*v)));
        row
    });
    write_atomic(path, &csv_bytes(&header, rows)?)
}

/// Rows of comma-separated numbers, no header. All rows must have the same length.
pub fn read_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::format(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::format(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::format(path, format!("row {i}: {e}")))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CliError::format(
                    path,
                    format!("row {i}: expected {} values, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// A single JSON document plus trailing newline.
pub fn json_line<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string(value).map_err(|e| CliError::format("<json>", e.to_string()))?;
    let _ = writeln!(s);
    Ok(s)
}
