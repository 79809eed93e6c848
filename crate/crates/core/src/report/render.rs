//! CSV tables to SVG figures. The table kind is recognised from its header.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use thiserror::Error;

use super::svg::{Chart, Point, Series};
use super::{DurationRow, HourRow, ProfileRow};
use crate::impact::effects::EffectRow;
use crate::impact::recovery::RecoveryRow;
use crate::io::Row;
use crate::model::export::CurveRow;
use crate::synth::TruthRow;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}: unrecognised table header")]
    UnknownTable(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderSummary {
    pub written: Vec<PathBuf>,
    /// CSV files whose header matched no known table.
    pub skipped: Vec<PathBuf>,
}

fn parse<T: Row + DeserializeOwned>(data: &str) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_reader(data.as_bytes()).deserialize().collect()
}

/// Keeps first-appearance order of group keys.
fn grouped<T, K: Ord + Clone>(rows: Vec<T>, key: impl Fn(&T) -> K) -> Vec<(K, Vec<T>)> {
    let mut order: Vec<K> = Vec::new();
    let mut map: BTreeMap<K, Vec<T>> = BTreeMap::new();
    for r in rows {
        let k = key(&r);
        if !map.contains_key(&k) {
            order.push(k.clone());
        }
        map.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let v = map.remove(&k).unwrap_or_default();
            (k, v)
        })
        .collect()
}

fn categorical(title: String, y_label: &str, name: &str, rows: &[(String, f64, Option<(f64, f64)>)]) -> Chart {
    Chart {
        title,
        x_label: "bin".into(),
        y_label: y_label.into(),
        series: vec![Series {
            name: name.into(),
            points: rows.iter().enumerate().map(|(i, r)| Point { x: i as f64, y: r.1, band: r.2 }).collect(),
            dashed: false,
        }],
        x_categories: Some(rows.iter().map(|r| r.0.clone()).collect()),
    }
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// Charts for one table, each with a file-name suffix (empty for a single chart).
pub fn charts_for_table(name: &str, data: &str) -> Result<Option<Vec<(String, Chart)>>, csv::Error> {
    let header: Vec<String> = {
        let mut rdr = csv::Reader::from_reader(data.as_bytes());
        rdr.headers()?.iter().map(str::to_string).collect()
    };
    let is = |h: &[&str]| header.len() == h.len() && header.iter().zip(h).all(|(a, b)| a == b);

    let charts = if is(CurveRow::HEADER) {
        grouped(parse::<CurveRow>(data)?, |r| r.factor.clone())
            .into_iter()
            .map(|(factor, rows)| {
                let pts: Vec<_> =
                    rows.iter().map(|r| (r.bin.clone(), r.estimate, Some((r.ci_low, r.ci_high)))).collect();
                (slug(&factor), categorical(format!("{name}: {factor}"), "effect", "estimate", &pts))
            })
            .collect()
    } else if is(TruthRow::HEADER) {
        grouped(parse::<TruthRow>(data)?, |r| r.factor.clone())
            .into_iter()
            .map(|(factor, rows)| {
                let pts: Vec<_> = rows.iter().map(|r| (r.bin.clone(), r.true_value, None)).collect();
                (slug(&factor), categorical(format!("{name}: {factor}"), "effect", "truth", &pts))
            })
            .collect()
    } else if is(EffectRow::HEADER) {
        grouped(parse::<EffectRow>(data)?, |r| r.analysis.clone())
            .into_iter()
            .map(|(analysis, rows)| {
                let pts: Vec<_> = rows.iter().map(|r| (r.bin.clone(), r.mean, Some((r.ci_low, r.ci_high)))).collect();
                (slug(&analysis), categorical(format!("{name}: {analysis}"), "mean", "mean", &pts))
            })
            .collect()
    } else if is(HourRow::HEADER) {
        let series = grouped(parse::<HourRow>(data)?, |r| r.tercile.clone())
            .into_iter()
            .map(|(tercile, rows)| Series {
                name: tercile,
                points: rows
                    .iter()
                    .map(|r| Point { x: f64::from(r.hour), y: r.mean, band: Some((r.ci_low, r.ci_high)) })
                    .collect(),
                dashed: false,
            })
            .collect();
        let chart = Chart {
            title: name.into(),
            x_label: "local hour".into(),
            y_label: "mean".into(),
            series,
            x_categories: None,
        };
        vec![(String::new(), chart)]
    } else if is(RecoveryRow::HEADER) {
        let series = grouped(parse::<RecoveryRow>(data)?, |r| r.pattern.clone())
            .into_iter()
            .map(|(pattern, rows)| Series {
                dashed: pattern == "SS",
                name: pattern,
                points: rows
                    .iter()
                    .map(|r| Point { x: r.day as f64, y: r.mean, band: Some((r.ci_low, r.ci_high)) })
                    .collect(),
            })
            .collect();
        let chart = Chart {
            title: name.into(),
            x_label: "days after pattern".into(),
            y_label: "mean".into(),
            series,
            x_categories: None,
        };
        vec![(String::new(), chart)]
    } else if is(ProfileRow::HEADER) {
        let series = grouped(parse::<ProfileRow>(data)?, |r| r.series.clone())
            .into_iter()
            .map(|(s, rows)| Series {
                name: s,
                points: rows.iter().map(|r| Point { x: r.x, y: r.mean, band: Some((r.ci_low, r.ci_high)) }).collect(),
                dashed: false,
            })
            .collect();
        let chart =
            Chart { title: name.into(), x_label: "x".into(), y_label: "mean".into(), series, x_categories: None };
        vec![(String::new(), chart)]
    } else if is(DurationRow::HEADER) {
        let rows: Vec<DurationRow> = parse(data)?;
        let decades: Vec<String> = {
            let set: std::collections::BTreeSet<&str> =
                rows.iter().filter(|r| r.age_decade != "all").map(|r| r.age_decade.as_str()).collect();
            set.into_iter().map(str::to_string).collect()
        };
        let series = grouped(rows.iter().filter(|r| r.age_decade != "all").collect::<Vec<_>>(), |r| r.gender.clone())
            .into_iter()
            .map(|(g, rows)| Series {
                name: g,
                points: rows
                    .iter()
                    .map(|r| Point {
                        x: decades.iter().position(|d| *d == r.age_decade).unwrap_or(0) as f64,
                        y: r.mean_h,
                        band: Some((r.ci_low, r.ci_high)),
                    })
                    .collect(),
                dashed: false,
            })
            .collect();
        let chart = Chart {
            title: name.into(),
            x_label: "age".into(),
            y_label: "time in bed (h)".into(),
            series,
            x_categories: Some(decades),
        };
        vec![(String::new(), chart)]
    } else {
        return Ok(None);
    };
    Ok(Some(charts))
}

/// Render one CSV file into `out_dir`; returns the written paths.
pub fn render_csv(path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, RenderError> {
    let data = fs::read_to_string(path).map_err(|source| RenderError::Io { path: path.into(), source })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table").to_string();
    let charts = charts_for_table(&stem, &data)
        .map_err(|source| RenderError::Csv { path: path.into(), source })?
        .ok_or_else(|| RenderError::UnknownTable(path.into()))?;
    fs::create_dir_all(out_dir).map_err(|source| RenderError::Io { path: out_dir.into(), source })?;
    let mut written = Vec::new();
    for (suffix, chart) in charts {
        let file = if suffix.is_empty() { format!("{stem}.svg") } else { format!("{stem}_{suffix}.svg") };
        let out = out_dir.join(file);
        fs::write(&out, chart.render()).map_err(|source| RenderError::Io { path: out.clone(), source })?;
        written.push(out);
    }
    Ok(written)
}

/// Render every recognised `*.csv` in `in_dir`, in file-name order.
pub fn render_dir(in_dir: &Path, out_dir: &Path) -> Result<RenderSummary, RenderError> {
    let entries = fs::read_dir(in_dir).map_err(|source| RenderError::Io { path: in_dir.into(), source })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
        .collect();
    files.sort();
    let mut summary = RenderSummary::default();
    for f in files {
        match render_csv(&f, out_dir) {
            Ok(w) => summary.written.extend(w),
            Err(RenderError::UnknownTable(p)) => summary.skipped.push(p),
            Err(e) => return Err(e),
        }
    }
    Ok(summary)
}
