//! Cohort descriptives, chronotype-stratified latency curves and figure
//! rendering.

mod render;
pub mod svg;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::Measurement;
use crate::io::Row;
use crate::sleep::{ChronotypeProfile, Gender, SleepRecord, Tercile};
use crate::stats::{median, MeanCi, RunningStats};

pub use render::{charts_for_table, render_csv, render_dir, RenderError, RenderSummary};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReportError {
    #[error("no sleep records")]
    NoRecords,
}

/// Ten-year age band, e.g. `30-39`.
pub fn age_decade(age: u32) -> String {
    let lo = age / 10 * 10;
    format!("{lo}-{}", lo + 9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationRow {
    pub age_decade: String,
    pub gender: String,
    pub n: u64,
    pub mean_h: f64,
    pub sd_h: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Row for DurationRow {
    const HEADER: &'static [&'static str] = &["age_decade", "gender", "n", "mean_h", "sd_h", "ci_low", "ci_high"];
}

impl DurationRow {
    fn new(age_decade: &str, gender: &str, s: MeanCi) -> Self {
        DurationRow {
            age_decade: age_decade.to_string(),
            gender: gender.to_string(),
            n: s.n,
            mean_h: s.mean,
            sd_h: s.sd,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
        }
    }
}

fn gender_name(g: Gender) -> &'static str {
    match g {
        Gender::Female => "female",
        Gender::Male => "male",
        Gender::Other => "other",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortStats {
    pub records: usize,
    pub users: usize,
    pub median_time_in_bed_h: f64,
    pub overall: MeanCi,
    /// Present only when records carry both age and gender.
    pub by_age_gender: Option<Vec<DurationRow>>,
    pub by_gender: Option<Vec<DurationRow>>,
}

impl CohortStats {
    /// Female minus male mean time in bed, in hours.
    pub fn gender_gap_h(&self) -> Option<f64> {
        let rows = self.by_gender.as_ref()?;
        let mean = |g: &str| rows.iter().find(|r| r.gender == g).map(|r| r.mean_h);
        Some(mean("female")? - mean("male")?)
    }

    pub fn table(&self) -> Vec<DurationRow> {
        let mut out = vec![DurationRow::new("all", "all", self.overall)];
        out.extend(self.by_gender.iter().flatten().cloned());
        out.extend(self.by_age_gender.iter().flatten().cloned());
        out
    }
}

/// Time-in-bed summaries over validated records.
pub fn cohort_stats(records: &[SleepRecord]) -> Result<CohortStats, ReportError> {
    if records.is_empty() {
        return Err(ReportError::NoRecords);
    }
    let durations: Vec<f64> = records.iter().map(|r| r.duration_h()).collect();
    let overall: RunningStats = durations.iter().copied().collect();
    let users: std::collections::BTreeSet<&str> = records.iter().map(|r| r.user_id.as_str()).collect();

    let mut cells: BTreeMap<(u32, Gender), RunningStats> = BTreeMap::new();
    let mut genders: BTreeMap<Gender, RunningStats> = BTreeMap::new();
    for (r, d) in records.iter().zip(&durations) {
        if let Some(g) = r.gender {
            genders.entry(g).or_default().push(*d);
            if let Some(a) = r.age {
                cells.entry((a / 10, g)).or_default().push(*d);
            }
        }
    }
    let by_age_gender = (!cells.is_empty()).then(|| {
        cells
            .iter()
            .filter_map(|((decade, g), s)| {
                Some(DurationRow::new(&age_decade(decade * 10), gender_name(*g), s.summary()?))
            })
            .collect()
    });
    let by_gender = (!genders.is_empty()).then(|| {
        genders.iter().filter_map(|(g, s)| Some(DurationRow::new("all", gender_name(*g), s.summary()?))).collect()
    });
    Ok(CohortStats {
        records: records.len(),
        users: users.len(),
        median_time_in_bed_h: median(&durations).expect("non-empty"),
        overall: overall.summary().expect("non-empty"),
        by_age_gender,
        by_gender,
    })
}

/// Default minimum observations for an hour to count towards the slowest hour.
pub const DEFAULT_HOUR_MIN_COUNT: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TercileCurve {
    pub tercile: Tercile,
    pub users: usize,
    /// Index = local clock hour.
    pub hours: Vec<Option<MeanCi>>,
    pub slowest_hour: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRow {
    pub tercile: String,
    pub hour: u32,
    pub n: u64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Row for HourRow {
    const HEADER: &'static [&'static str] = &["tercile", "hour", "n", "mean", "ci_low", "ci_high"];
}

/// Hour-of-day mean latency for each chronotype third.
pub fn chronotype_curves<T: Measurement>(
    obs: &[T],
    profiles: &[ChronotypeProfile],
    min_count: u64,
) -> Vec<TercileCurve> {
    let tercile_of: BTreeMap<&str, Tercile> =
        profiles.iter().filter_map(|p| Some((p.user_id.as_str(), p.tercile?))).collect();
    let mut acc = [[RunningStats::new(); 24]; 3];
    for o in obs {
        let Some(t) = tercile_of.get(o.user_id()) else { continue };
        let hour = (o.local_time().floor() as usize).min(23);
        acc[*t as usize][hour].push(o.value());
    }
    Tercile::ALL
        .iter()
        .map(|&t| {
            let hours: Vec<Option<MeanCi>> = acc[t as usize].iter().map(|s| s.summary()).collect();
            let slowest_hour = hours
                .iter()
                .enumerate()
                .filter_map(|(h, s)| s.filter(|s| s.n >= min_count).map(|s| (h as u32, s.mean)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(h, _)| h);
            TercileCurve { tercile: t, users: tercile_of.values().filter(|&&x| x == t).count(), hours, slowest_hour }
        })
        .collect()
}

pub fn hour_rows(curves: &[TercileCurve]) -> Vec<HourRow> {
    curves
        .iter()
        .flat_map(|c| {
            c.hours.iter().enumerate().filter_map(move |(h, s)| {
                let s = (*s)?;
                Some(HourRow {
                    tercile: c.tercile.as_str().to_string(),
                    hour: h as u32,
                    n: s.n,
                    mean: s.mean,
                    ci_low: s.ci_low,
                    ci_high: s.ci_high,
                })
            })
        })
        .collect()
}

/// A mean with interval at one x position of a named series, used for hourly
/// profiles and learning curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub series: String,
    pub x: f64,
    pub n: u64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Row for ProfileRow {
    const HEADER: &'static [&'static str] = &["series", "x", "n", "mean", "ci_low", "ci_high"];
}

impl ProfileRow {
    pub fn new(series: &str, x: f64, s: MeanCi) -> Self {
        ProfileRow { series: series.to_string(), x, n: s.n, mean: s.mean, ci_low: s.ci_low, ci_high: s.ci_high }
    }
}

pub fn hourly_rows(series: &str, hours: &[Option<MeanCi>]) -> Vec<ProfileRow> {
    hours.iter().enumerate().filter_map(|(h, s)| Some(ProfileRow::new(series, h as f64, (*s)?))).collect()
}
