//! Multi-night recovery: performance on the seven days following two
//! consecutive tracked nights, by sufficient/insufficient pattern.

use std::collections::BTreeMap;

use chrono::Days;
use serde::{Deserialize, Serialize};

use super::mwu::{mann_whitney_u, MannWhitney};
use crate::events::Measurement;
use crate::io::Row;
use crate::sleep::{NightClass, UserSleep};
use crate::stats::{MeanCi, RunningStats};

pub const DAYS: usize = 7;
/// Only the first hours after waking count towards a day's mean.
pub const DAY_WINDOW_H: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Pattern {
    SS,
    SI,
    II,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [Pattern::SS, Pattern::SI, Pattern::II];

    /// Label of two consecutive nights; `None` for insufficient then sufficient.
    pub fn of(first: NightClass, second: NightClass) -> Option<Pattern> {
        use NightClass::*;
        match (first, second) {
            (Sufficient, Sufficient) => Some(Pattern::SS),
            (Sufficient, Insufficient) => Some(Pattern::SI),
            (Insufficient, Insufficient) => Some(Pattern::II),
            (Insufficient, Sufficient) => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::SS => "SS",
            Pattern::SI => "SI",
            Pattern::II => "II",
        }
    }

    fn idx(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Observations,
    Users,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecoveryOptions {
    pub weighting: Weighting,
    /// Keep only users contributing all three patterns.
    pub same_users: bool,
}

/// One user's contribution.
#[derive(Debug, Clone, Default)]
struct UserPatterns {
    day: [[RunningStats; DAYS]; 3],
    day1_values: [Vec<f64>; 3],
    patterns: [usize; 3],
    followup_insufficient: [usize; 3],
}

/// Per-user pattern statistics, merged into a cohort report.
#[derive(Debug, Clone, Default)]
pub struct RecoveryAccumulator {
    users: BTreeMap<String, UserPatterns>,
    /// Consecutive-night pairs seen, including insufficient-then-sufficient.
    pub night_pairs: usize,
    pub unlabeled_pairs: usize,
}

/// A labelled pair of consecutive tracked nights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NightPattern {
    pub pattern: Pattern,
    /// Index of the pattern's second night.
    pub end_night: usize,
}

/// Label every pair of nights whose wake dates are consecutive calendar days.
pub fn night_patterns(sleep: &UserSleep) -> (Vec<NightPattern>, usize) {
    let mut out = Vec::new();
    let mut unlabeled = 0;
    for (i, w) in sleep.nights.windows(2).enumerate() {
        if w[0].wake_date.checked_add_days(Days::new(1)) != Some(w[1].wake_date) {
            continue;
        }
        match Pattern::of(NightClass::from_duration(w[0].duration_h), NightClass::from_duration(w[1].duration_h)) {
            Some(pattern) => out.push(NightPattern { pattern, end_night: i + 1 }),
            None => unlabeled += 1,
        }
    }
    (out, unlabeled)
}

impl RecoveryAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one user's observations (any order) and sleep.
    pub fn add_user<T: Measurement>(&mut self, obs: &[T], sleep: &UserSleep) {
        let (patterns, unlabeled) = night_patterns(sleep);
        self.night_pairs += patterns.len() + unlabeled;
        self.unlabeled_pairs += unlabeled;
        if patterns.is_empty() {
            return;
        }
        // Per-night statistics of in-window observations.
        let mut per_night: Vec<RunningStats> = vec![RunningStats::new(); sleep.nights.len()];
        let mut per_night_values: Vec<Vec<f64>> = vec![Vec::new(); sleep.nights.len()];
        let day1_nights: std::collections::BTreeSet<usize> = patterns.iter().map(|p| p.end_night).collect();
        for o in obs {
            let Some(c) = o.context() else { continue };
            if c.time_since_wake_h > DAY_WINDOW_H || c.night_index >= per_night.len() {
                continue;
            }
            per_night[c.night_index].push(o.value());
            if day1_nights.contains(&c.night_index) {
                per_night_values[c.night_index].push(o.value());
            }
        }
        let by_date: BTreeMap<chrono::NaiveDate, usize> =
            sleep.nights.iter().enumerate().map(|(i, n)| (n.wake_date, i)).collect();
        let entry = self.users.entry(sleep.user_id.clone()).or_default();
        for p in patterns {
            let l = p.pattern.idx();
            entry.patterns[l] += 1;
            let end_date = sleep.nights[p.end_night].wake_date;
            for d in 0..DAYS {
                let Some(date) = end_date.checked_add_days(Days::new(d as u64)) else { continue };
                if let Some(&night) = by_date.get(&date) {
                    entry.day[l][d].merge(&per_night[night]);
                }
            }
            entry.day1_values[l].extend_from_slice(&per_night_values[p.end_night]);
            entry.followup_insufficient[l] += (1..=DAYS as u64)
                .filter_map(|d| end_date.checked_add_days(Days::new(d)))
                .filter_map(|date| by_date.get(&date))
                .filter(|&&i| sleep.nights[i].duration_h < crate::sleep::INSUFFICIENT_BELOW_H)
                .count();
        }
    }

    /// Users are keyed by id; a user added twice is combined.
    pub fn merge(&mut self, other: RecoveryAccumulator) {
        self.night_pairs += other.night_pairs;
        self.unlabeled_pairs += other.unlabeled_pairs;
        for (u, p) in other.users {
            let e = self.users.entry(u).or_default();
            for l in 0..3 {
                for d in 0..DAYS {
                    e.day[l][d].merge(&p.day[l][d]);
                }
                e.day1_values[l].extend(p.day1_values[l].iter().copied());
                e.patterns[l] += p.patterns[l];
                e.followup_insufficient[l] += p.followup_insufficient[l];
            }
        }
    }

    pub fn finish(&self, opts: &RecoveryOptions) -> RecoveryReport {
        let users: Vec<&UserPatterns> =
            self.users.values().filter(|u| !opts.same_users || u.patterns.iter().all(|&c| c > 0)).collect();
        let mut labels = Vec::new();
        let mut day1_values: [Vec<f64>; 3] = Default::default();
        for pattern in Pattern::ALL {
            let l = pattern.idx();
            let contributing: Vec<&&UserPatterns> = users.iter().filter(|u| u.patterns[l] > 0).collect();
            if contributing.is_empty() {
                continue;
            }
            let days = (0..DAYS)
                .map(|d| {
                    let mut pooled = RunningStats::new();
                    let mut user_means = RunningStats::new();
                    let mut n_users = 0;
                    for u in &contributing {
                        let s = &u.day[l][d];
                        if let Some(m) = s.mean() {
                            pooled.merge(s);
                            user_means.push(m);
                            n_users += 1;
                        }
                    }
                    let summary = match opts.weighting {
                        Weighting::Observations => pooled.summary(),
                        Weighting::Users => user_means.summary(),
                    };
                    DayStat { day: d + 1, n_obs: pooled.count(), n_users, summary, variance: pooled.variance() }
                })
                .collect();
            for u in &contributing {
                day1_values[l].extend_from_slice(&u.day1_values[l]);
            }
            let patterns: usize = contributing.iter().map(|u| u.patterns[l]).sum();
            let followup: usize = contributing.iter().map(|u| u.followup_insufficient[l]).sum();
            labels.push(LabelCurve {
                pattern,
                patterns,
                users: contributing.len(),
                days,
                recovery_day: None,
                followup_insufficient: followup as f64 / patterns as f64,
                day1_relative: None,
                day1_test: None,
            });
        }

        let baseline = labels
            .iter()
            .find(|c| c.pattern == Pattern::SS)
            .and_then(|ss| ss.days.iter().filter_map(|d| d.summary.map(|s| s.mean)).reduce(f64::max));
        let ss_day1 = labels.iter().find(|c| c.pattern == Pattern::SS).and_then(|c| c.days[0].summary.map(|s| s.mean));
        for c in &mut labels {
            c.recovery_day = match (c.pattern, baseline) {
                (Pattern::SS, _) => Some(1),
                (_, Some(b)) => c.days.iter().find(|d| d.summary.is_some_and(|s| s.mean < b)).map(|d| d.day),
                (_, None) => None,
            };
            if c.pattern != Pattern::SS {
                if let (Some(ss), Some(mine)) = (ss_day1, c.days[0].summary) {
                    c.day1_relative = Some((mine.mean - ss) / ss);
                }
                c.day1_test = mann_whitney_u(&day1_values[c.pattern.idx()], &day1_values[Pattern::SS.idx()]).ok();
            }
        }
        RecoveryReport { weighting: opts.weighting, same_users: opts.same_users, users: users.len(), baseline, labels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayStat {
    pub day: usize,
    pub n_obs: u64,
    pub n_users: usize,
    /// `None` when the day has no observations.
    pub summary: Option<MeanCi>,
    /// Sample variance of the pooled observations.
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelCurve {
    pub pattern: Pattern,
    pub patterns: usize,
    pub users: usize,
    pub days: Vec<DayStat>,
    pub recovery_day: Option<usize>,
    /// Mean insufficient nights among the seven following the pattern.
    pub followup_insufficient: f64,
    /// Day-1 mean relative to the SS day-1 mean.
    pub day1_relative: Option<f64>,
    /// Day-1 observations against SS day-1 observations.
    pub day1_test: Option<MannWhitney>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub weighting: Weighting,
    pub same_users: bool,
    pub users: usize,
    /// Slowest SS daily mean over days 1-7.
    pub baseline: Option<f64>,
    pub labels: Vec<LabelCurve>,
}

impl RecoveryReport {
    pub fn label(&self, p: Pattern) -> Option<&LabelCurve> {
        self.labels.iter().find(|c| c.pattern == p)
    }
}

/// One pattern-day mean as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub pattern: String,
    pub day: usize,
    pub n_obs: u64,
    pub n_users: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Row for RecoveryRow {
    const HEADER: &'static [&'static str] = &["pattern", "day", "n_obs", "n_users", "mean", "ci_low", "ci_high"];
}

impl RecoveryReport {
    pub fn rows(&self) -> Vec<RecoveryRow> {
        self.labels
            .iter()
            .flat_map(|c| {
                c.days.iter().filter_map(move |d| {
                    let s = d.summary?;
                    Some(RecoveryRow {
                        pattern: c.pattern.as_str().to_string(),
                        day: d.day,
                        n_obs: d.n_obs,
                        n_users: d.n_users,
                        mean: s.mean,
                        ci_low: s.ci_low,
                        ci_high: s.ci_high,
                    })
                })
            })
            .collect()
    }
}

/// Recovery report over a cohort given per-user observation slices.
pub fn recovery_analysis<T: Measurement>(users: &[(&[T], &UserSleep)], opts: &RecoveryOptions) -> RecoveryReport {
    let mut acc = RecoveryAccumulator::new();
    for (obs, sleep) in users {
        acc.add_user(obs, sleep);
    }
    acc.finish(opts)
}
