use std::io::Write;

use serde::{Deserialize, Serialize};

use super::fit::FitResult;
use crate::io::{self, IoError, LogFormat, Row};

/// One fitted bin as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub factor: String,
    pub bin: String,
    pub bin_low: Option<f64>,
    pub bin_high: Option<f64>,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: u64,
}

impl Row for CurveRow {
    const HEADER: &'static [&'static str] =
        &["factor", "bin", "bin_low", "bin_high", "estimate", "se", "ci_low", "ci_high", "count"];
}

pub fn curve_rows(fit: &FitResult) -> Vec<CurveRow> {
    fit.curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(|p| CurveRow {
                factor: c.factor.clone(),
                bin: p.label.clone(),
                bin_low: p.bin_low,
                bin_high: p.bin_high,
                estimate: p.estimate,
                se: p.se,
                ci_low: p.ci_low,
                ci_high: p.ci_high,
                count: p.count,
            })
        })
        .collect()
}

pub fn write_curves<W: Write>(writer: W, fit: &FitResult) -> Result<(), IoError> {
    io::write_rows(writer, LogFormat::Csv, curve_rows(fit))
}

pub fn write_summary<W: Write>(mut writer: W, fit: &FitResult) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut writer, &fit.summary())?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_curves<R: std::io::BufRead>(reader: R) -> Result<Vec<CurveRow>, IoError> {
    Ok(io::read_validated::<_, CurveRow, _, _>(reader, LogFormat::Csv, Ok)?.items)
}
