//! File formats: tick CSV, vol-matrix CSV, report CSV, and JSON sidecars.
//!
//! Tick files have columns `day,s,t,y` (day index, tick index, time fraction,
//! log price). Vol-matrix files carry the intraday grid times as the header
//! row and one day per data row. Report tables are flat
//! `method,metric,omega,D,value,p_adj` rows. All JSON goes through serde.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::BacktestReport;
use crate::simulate::TickDay;

#[derive(Debug, Serialize, Deserialize)]
struct TickRow {
    day: u64,
    s: u64,
    t: f64,
    y: f64,
}

/// Writes a panel of tick days as one flat CSV.
pub fn write_ticks_csv<P: AsRef<Path>>(path: P, days: &[TickDay]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for day in days {
        let m = day.y.len() - 1;
        for (s, &y) in day.y.iter().enumerate() {
            w.serialize(TickRow {
                day: day.day as u64,
                s: s as u64,
                t: s as f64 / m as f64,
                y,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a tick CSV back into per-day price vectors, ordered by day. Every
/// day must contain the contiguous tick range 0..=m for one common m.
pub fn read_ticks_csv<P: AsRef<Path>>(path: P) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut days: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut last_day: Option<u64> = None;
    for record in r.deserialize() {
        let row: TickRow = record?;
        if !row.y.is_finite() {
            return Err(Error::Parse(format!("non-finite price in day {}", row.day)));
        }
        match last_day {
            Some(d) if d == row.day => {}
            Some(d) if row.day > d => {
                last_day = Some(row.day);
                days.push((row.day, Vec::new()));
            }
            None => {
                last_day = Some(row.day);
                days.push((row.day, Vec::new()));
            }
            _ => {
                return Err(Error::Parse(format!(
                    "tick file not sorted by day at day {}",
                    row.day
                )));
            }
        }
        let current = &mut days.last_mut().expect("pushed above").1;
        if row.s as usize != current.len() {
            return Err(Error::Parse(format!(
                "day {} has non-contiguous tick index {} (expected {})",
                row.day,
                row.s,
                current.len()
            )));
        }
        current.push(row.y);
    }
    if days.is_empty() {
        return Err(Error::Parse("tick file contains no rows".into()));
    }
    let m = days[0].1.len();
    if m < 2 {
        return Err(Error::Parse("days must contain at least 2 ticks".into()));
    }
    for (d, y) in &days {
        if y.len() != m {
            return Err(Error::Parse(format!(
                "day {d} has {} ticks, expected {m}",
                y.len()
            )));
        }
    }
    Ok(days.into_iter().map(|(_, y)| y).collect())
}

/// Writes a day × intraday matrix with grid times as the header.
pub fn write_volmatrix_csv<P: AsRef<Path>>(
    path: P,
    matrix: &DMatrix<f64>,
    grid: &[f64],
) -> Result<()> {
    if grid.len() != matrix.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "grid has {} entries for a {}-column matrix",
            grid.len(),
            matrix.ncols()
        )));
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(grid.iter().map(|t| t.to_string()))?;
    for i in 0..matrix.nrows() {
        w.write_record((0..matrix.ncols()).map(|j| matrix[(i, j)].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a vol-matrix CSV; returns the matrix and the header grid.
pub fn read_volmatrix_csv<P: AsRef<Path>>(path: P) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let grid: Vec<f64> = r
        .headers()?
        .iter()
        .map(|h| {
            h.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad grid time '{h}' in header")))
        })
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        return Err(Error::Parse("vol matrix has no columns".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in r.records() {
        let record = record?;
        if record.len() != grid.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                rows.len() + 1,
                record.len(),
                grid.len()
            )));
        }
        let row: Vec<f64> = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad value '{f}' in vol matrix")))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("vol matrix has no rows".into()));
    }
    let matrix = DMatrix::from_fn(rows.len(), grid.len(), |i, j| rows[i][j]);
    Ok((matrix, grid))
}

/// Serializes any value as pretty JSON.
pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<P: AsRef<Path>, T: DeserializeOwned>(path: P) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Flat report table: one `method,metric,omega,D,value,p_adj` row per loss
/// cell, with `D` the in-sample day count and an empty `p_adj` where no DM
/// comparison exists (SIP rows).
pub fn write_report_csv<P: AsRef<Path>>(path: P, report: &BacktestReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["method", "metric", "omega", "D", "value", "p_adj"])?;
    for cell in &report.losses {
        w.write_record([
            cell.method.to_string(),
            cell.metric.to_string(),
            cell.omega.to_string(),
            report.window.to_string(),
            cell.value.to_string(),
            cell.p_adj.map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
