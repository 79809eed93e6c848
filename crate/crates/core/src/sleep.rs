//! Time-in-bed records, chronotype, and per-observation sleep context.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError, LogFormat, Parsed, Row};
use crate::stats::{circular_diff_hours, circular_mean_hours, wrap_hours};
use crate::time::{is_weekend, local_date, local_hour, MS_PER_HOUR};

pub const MIN_DURATION_H: f64 = 4.0;
pub const MAX_DURATION_H: f64 = 12.0;
/// Nights shorter than this are insufficient.
pub const INSUFFICIENT_BELOW_H: f64 = 6.0;
/// Observations further than this from the last wake are left unlinked.
pub const STALE_AFTER_H: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepRecord {
    pub user_id: String,
    pub bed_start_utc: i64,
    pub bed_end_utc: i64,
    pub tz_offset_min: i32,
    #[serde(default)]
    pub age: Option<u32>,
    #[serde(default)]
    pub gender: Option<Gender>,
    #[serde(default)]
    pub bmi: Option<f64>,
}

impl Row for SleepRecord {
    const HEADER: &'static [&'static str] =
        &["user_id", "bed_start_utc", "bed_end_utc", "tz_offset_min", "age", "gender", "bmi"];
}

impl SleepRecord {
    pub fn duration_h(&self) -> f64 {
        (self.bed_end_utc - self.bed_start_utc) as f64 / MS_PER_HOUR
    }

    /// Local calendar date of waking.
    pub fn wake_date(&self) -> NaiveDate {
        local_date(self.bed_end_utc, self.tz_offset_min)
    }

    /// Waking on a local Saturday or Sunday.
    pub fn is_free_day(&self) -> bool {
        is_weekend(self.wake_date())
    }

    pub fn night_class(&self) -> NightClass {
        NightClass::from_duration(self.duration_h())
    }
}

pub fn parse_sleep<R: BufRead>(reader: R, format: LogFormat) -> Result<Parsed<SleepRecord>, IoError> {
    io::read_validated::<_, SleepRecord, _, _>(reader, format, |r: SleepRecord| {
        if r.user_id.is_empty() {
            Err("empty user_id".to_string())
        } else {
            Ok(r)
        }
    })
}

pub fn write_sleep<W: Write>(writer: W, format: LogFormat, records: &[SleepRecord]) -> Result<(), IoError> {
    io::write_rows(writer, format, records.iter().cloned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    EndNotAfterStart,
    TooShort,
    TooLong,
}

#[derive(Debug, Clone, Default)]
pub struct SleepValidation {
    pub kept: Vec<SleepRecord>,
    pub rejected: Vec<(SleepRecord, RejectReason)>,
}

impl SleepValidation {
    pub fn count(&self, reason: RejectReason) -> usize {
        self.rejected.iter().filter(|(_, r)| *r == reason).count()
    }
}

/// Keep records with `4 <= duration_h <= 12`; everything else is rejected
/// with a reason.
pub fn validate_sleep(records: Vec<SleepRecord>) -> SleepValidation {
    let mut out = SleepValidation::default();
    for r in records {
        let reason = if r.bed_end_utc <= r.bed_start_utc {
            Some(RejectReason::EndNotAfterStart)
        } else if r.duration_h() < MIN_DURATION_H {
            Some(RejectReason::TooShort)
        } else if r.duration_h() > MAX_DURATION_H {
            Some(RejectReason::TooLong)
        } else {
            None
        };
        match reason {
            Some(reason) => out.rejected.push((r, reason)),
            None => out.kept.push(r),
        }
    }
    out
}

/// Local clock hour halfway between bed start and bed end.
pub fn midsleep_local(record: &SleepRecord) -> f64 {
    let mid = record.bed_start_utc + (record.bed_end_utc - record.bed_start_utc) / 2;
    local_hour(mid, record.tz_offset_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NightClass {
    Sufficient,
    Insufficient,
}

impl NightClass {
    pub fn from_duration(duration_h: f64) -> Self {
        if duration_h < INSUFFICIENT_BELOW_H {
            NightClass::Insufficient
        } else {
            NightClass::Sufficient
        }
    }
}

/// The preceding night as seen from one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepContext {
    pub time_since_wake_h: f64,
    pub prev_duration_h: f64,
    /// Night's midsleep minus the user's habitual midsleep, signed hours.
    pub midpoint_dev_h: f64,
    pub night_class: NightClass,
    /// Index of the night in the user's time-ordered validated records.
    pub night_index: usize,
    /// The night ended on a local Saturday or Sunday.
    pub wake_free_day: bool,
}

/// Reference for the midpoint deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MidsleepBaseline {
    /// Mean over all of the user's validated nights.
    #[default]
    AllNights,
    /// Mean over up to this many preceding nights.
    Rolling(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Night {
    pub record: SleepRecord,
    pub duration_h: f64,
    pub midsleep_h: f64,
    pub wake_date: NaiveDate,
    pub free_day: bool,
    pub baseline_midsleep_h: f64,
}

/// One user's validated nights, ordered by wake time.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSleep {
    pub user_id: String,
    pub nights: Vec<Night>,
}

impl UserSleep {
    pub fn new(user_id: impl Into<String>, mut records: Vec<SleepRecord>, baseline: MidsleepBaseline) -> Self {
        records.sort_by_key(|r| (r.bed_end_utc, r.bed_start_utc));
        let mids: Vec<f64> = records.iter().map(midsleep_local).collect();
        let overall = circular_mean_hours(mids.iter().copied()).unwrap_or(0.0);
        let nights = records
            .into_iter()
            .enumerate()
            .map(|(i, record)| {
                let baseline_midsleep_h = match baseline {
                    MidsleepBaseline::AllNights => overall,
                    MidsleepBaseline::Rolling(window) => {
                        let lo = i.saturating_sub(window);
                        circular_mean_hours(mids[lo..i].iter().copied()).unwrap_or(overall)
                    }
                };
                Night {
                    duration_h: record.duration_h(),
                    midsleep_h: mids[i],
                    wake_date: record.wake_date(),
                    free_day: record.is_free_day(),
                    baseline_midsleep_h,
                    record,
                }
            })
            .collect();
        UserSleep { user_id: user_id.into(), nights }
    }

    /// Context from the most recent night ending at or before `ts_utc`;
    /// `None` before the first night or once it is over 24 h stale.
    pub fn context_at(&self, ts_utc: i64) -> Option<SleepContext> {
        let idx = self.nights.partition_point(|n| n.record.bed_end_utc <= ts_utc);
        let night_index = idx.checked_sub(1)?;
        let night = &self.nights[night_index];
        let time_since_wake_h = (ts_utc - night.record.bed_end_utc) as f64 / MS_PER_HOUR;
        if time_since_wake_h > STALE_AFTER_H {
            return None;
        }
        Some(SleepContext {
            time_since_wake_h,
            prev_duration_h: night.duration_h,
            midpoint_dev_h: circular_diff_hours(night.midsleep_h, night.baseline_midsleep_h),
            night_class: NightClass::from_duration(night.duration_h),
            night_index,
            wake_free_day: night.free_day,
        })
    }
}

pub fn link_sleep_context(ts_utc: i64, user: &UserSleep) -> Option<SleepContext> {
    user.context_at(ts_utc)
}

/// Group validated records by user.
pub fn group_by_user(records: Vec<SleepRecord>, baseline: MidsleepBaseline) -> BTreeMap<String, UserSleep> {
    let mut by_user: BTreeMap<String, Vec<SleepRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(r.user_id.clone()).or_default().push(r);
    }
    by_user
        .into_iter()
        .map(|(u, recs)| {
            let us = UserSleep::new(u.clone(), recs, baseline);
            (u, us)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tercile {
    Early,
    Medium,
    Late,
}

impl Tercile {
    pub const ALL: [Tercile; 3] = [Tercile::Early, Tercile::Medium, Tercile::Late];

    pub fn as_str(self) -> &'static str {
        match self {
            Tercile::Early => "early",
            Tercile::Medium => "medium",
            Tercile::Late => "late",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChronotypeProfile {
    pub user_id: String,
    pub sd_w: f64,
    pub sd_f: f64,
    pub msf: f64,
    pub msf_sc: f64,
    pub free_nights: usize,
    pub work_nights: usize,
    pub tercile: Option<Tercile>,
}

impl Row for ChronotypeProfile {
    const HEADER: &'static [&'static str] =
        &["user_id", "sd_w", "sd_f", "msf", "msf_sc", "free_nights", "work_nights", "tercile"];
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChronotypeError {
    #[error("user `{user}` has {free} free-day and {work} workday nights; need at least one of each")]
    InsufficientRecords { user: String, free: usize, work: usize },
}

/// Midsleep on free days corrected for oversleep.
pub fn corrected_midsleep(msf: f64, sd_w: f64, sd_f: f64) -> f64 {
    wrap_hours(msf - 0.5 * (sd_f - (5.0 * sd_w + 2.0 * sd_f) / 7.0))
}

/// Chronotype of one user from validated records.
pub fn chronotype(user_id: &str, records: &[SleepRecord]) -> Result<ChronotypeProfile, ChronotypeError> {
    let (free, work): (Vec<&SleepRecord>, Vec<&SleepRecord>) = records.iter().partition(|r| r.is_free_day());
    if free.is_empty() || work.is_empty() {
        return Err(ChronotypeError::InsufficientRecords {
            user: user_id.to_string(),
            free: free.len(),
            work: work.len(),
        });
    }
    let mean_dur = |rs: &[&SleepRecord]| rs.iter().map(|r| r.duration_h()).sum::<f64>() / rs.len() as f64;
    let sd_w = mean_dur(&work);
    let sd_f = mean_dur(&free);
    let msf = circular_mean_hours(free.iter().map(|r| midsleep_local(r))).unwrap_or_else(|| midsleep_local(free[0]));
    Ok(ChronotypeProfile {
        user_id: user_id.to_string(),
        sd_w,
        sd_f,
        msf,
        msf_sc: corrected_midsleep(msf, sd_w, sd_f),
        free_nights: free.len(),
        work_nights: work.len(),
        tercile: None,
    })
}

/// Clock hours ordered so that evening precedes early morning.
fn chrono_order_key(h: f64) -> f64 {
    if h >= 12.0 {
        h - 24.0
    } else {
        h
    }
}

/// Split users into early/medium/late thirds by MSF_SC; group sizes differ
/// by at most one.
pub fn assign_terciles(profiles: &mut [ChronotypeProfile]) {
    let n = profiles.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        chrono_order_key(profiles[a].msf_sc)
            .total_cmp(&chrono_order_key(profiles[b].msf_sc))
            .then_with(|| profiles[a].user_id.cmp(&profiles[b].user_id))
    });
    let base = n / 3;
    let extra = n % 3;
    let sizes = [base + usize::from(extra > 0), base + usize::from(extra > 1), base];
    let mut pos = 0;
    for (tercile, size) in Tercile::ALL.into_iter().zip(sizes) {
        for &i in &order[pos..pos + size] {
            profiles[i].tercile = Some(tercile);
        }
        pos += size;
    }
}

/// Chronotype for every user with enough nights, terciles assigned.
pub fn cohort_chronotypes(users: &BTreeMap<String, UserSleep>) -> (Vec<ChronotypeProfile>, Vec<ChronotypeError>) {
    let mut profiles = Vec::new();
    let mut skipped = Vec::new();
    for (u, us) in users {
        let recs: Vec<SleepRecord> = us.nights.iter().map(|n| n.record.clone()).collect();
        match chronotype(u, &recs) {
            Ok(p) => profiles.push(p),
            Err(e) => skipped.push(e),
        }
    }
    assign_terciles(&mut profiles);
    (profiles, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::local_midnight_utc;
    use proptest::prelude::*;

    const H: i64 = 3_600_000;

    /// A record for the night ending on `wake`, given local clock bed/wake hours.
    fn night(user: &str, wake: NaiveDate, bed_h: f64, wake_h: f64) -> SleepRecord {
        let midnight = local_midnight_utc(wake, 0);
        let start = if bed_h > wake_h { bed_h - 24.0 } else { bed_h };
        SleepRecord {
            user_id: user.into(),
            bed_start_utc: midnight + (start * H as f64) as i64,
            bed_end_utc: midnight + (wake_h * H as f64) as i64,
            tz_offset_min: 0,
            age: None,
            gender: None,
            bmi: None,
        }
    }

    fn date(d: u32) -> NaiveDate {
        // 2016-03-07 is a Monday.
        NaiveDate::from_ymd_opt(2016, 3, d).unwrap()
    }

    #[test]
    fn validation_examples() {
        let recs = vec![
            night("u", date(7), 23.0, 2.5),
            night("u", date(8), 23.0, 7.0),
            night("u", date(9), 20.0, 8.0),
            night("u", date(10), 20.0, 8.5),
        ];
        let v = validate_sleep(recs);
        assert_eq!(v.kept.len(), 2);
        assert_eq!(v.count(RejectReason::TooShort), 1);
        assert_eq!(v.count(RejectReason::TooLong), 1);
        assert_eq!(v.kept[1].duration_h(), 12.0);

        let mut bad = night("u", date(7), 23.0, 7.0);
        bad.bed_end_utc = bad.bed_start_utc;
        let v = validate_sleep(vec![bad]);
        assert_eq!(v.rejected[0].1, RejectReason::EndNotAfterStart);
    }

    #[test]
    fn midsleep_examples() {
        assert!((midsleep_local(&night("u", date(8), 23.0, 7.0)) - 3.0).abs() < 1e-9);
        assert!((midsleep_local(&night("u", date(8), 0.0, 8.0)) - 4.0).abs() < 1e-9);
        assert!((midsleep_local(&night("u", date(8), 20.0, 6.0)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn corrected_midsleep_examples() {
        assert_eq!(corrected_midsleep(4.0, 8.0, 8.0), 4.0);
        let v = corrected_midsleep(5.0, 7.0, 9.0);
        assert!((v - (5.0 - 0.5 * (9.0 - 53.0 / 7.0))).abs() < 1e-12);
        assert!((v - 4.2857).abs() < 1e-4);
    }

    #[test]
    fn chronotype_from_records() {
        // Workdays 23:00-06:00 (7 h, mid 02:30); weekends 00:30-09:30 (9 h, mid 05:00).
        let mut recs = Vec::new();
        for d in 7..=20 {
            let dt = date(d);
            recs.push(if is_weekend(dt) { night("u", dt, 0.5, 9.5) } else { night("u", dt, 23.0, 6.0) });
        }
        let p = chronotype("u", &recs).unwrap();
        assert!((p.sd_w - 7.0).abs() < 1e-9);
        assert!((p.sd_f - 9.0).abs() < 1e-9);
        assert!((p.msf - 5.0).abs() < 1e-9);
        assert!((p.msf_sc - 4.2857142857).abs() < 1e-6);
        assert_eq!(p.free_nights, 4);

        let only_work: Vec<_> = recs.into_iter().filter(|r| !r.is_free_day()).collect();
        assert!(matches!(chronotype("u", &only_work), Err(ChronotypeError::InsufficientRecords { free: 0, .. })));
    }

    #[test]
    fn context_examples() {
        let us = UserSleep::new(
            "u",
            vec![night("u", date(8), 23.0, 7.0), night("u", date(9), 1.0, 6.5)],
            MidsleepBaseline::AllNights,
        );
        let wake = us.nights[0].record.bed_end_utc;
        let ctx = us.context_at(wake + 5 * H / 2).unwrap();
        assert!((ctx.time_since_wake_h - 2.5).abs() < 1e-12);
        assert_eq!(ctx.night_index, 0);
        assert_eq!(ctx.night_class, NightClass::Sufficient);

        let second = us.context_at(us.nights[1].record.bed_end_utc + H).unwrap();
        assert_eq!(second.night_class, NightClass::Insufficient);
        assert!((second.prev_duration_h - 5.5).abs() < 1e-12);
        // Mean midsleep is 03:22:30; night 2 midsleep is 03:45.
        assert!((second.midpoint_dev_h - 0.375).abs() < 1e-6);

        assert!(us.context_at(us.nights[1].record.bed_end_utc + 30 * H).is_none());
        assert!(us.context_at(wake - 1).is_none());
        assert!(us.context_at(wake).is_some());
    }

    #[test]
    fn rolling_baseline_uses_previous_nights() {
        let recs = vec![night("u", date(8), 23.0, 7.0), night("u", date(9), 23.0, 7.0), night("u", date(10), 1.0, 9.0)];
        let us = UserSleep::new("u", recs, MidsleepBaseline::Rolling(2));
        let ctx = us.context_at(us.nights[2].record.bed_end_utc + H).unwrap();
        assert!((ctx.midpoint_dev_h - 2.0).abs() < 1e-6);
    }

    #[test]
    fn tercile_sizes_and_order() {
        let mut ps: Vec<ChronotypeProfile> = [23.5, 2.0, 4.0, 5.0, 3.0, 6.5, 4.5]
            .iter()
            .enumerate()
            .map(|(i, &m)| ChronotypeProfile {
                user_id: format!("u{i}"),
                sd_w: 7.0,
                sd_f: 7.0,
                msf: m,
                msf_sc: m,
                free_nights: 1,
                work_nights: 1,
                tercile: None,
            })
            .collect();
        assign_terciles(&mut ps);
        let t = |id: usize| ps[id].tercile.unwrap();
        assert_eq!(t(0), Tercile::Early);
        assert_eq!(t(5), Tercile::Late);
        let counts: Vec<usize> =
            Tercile::ALL.iter().map(|x| ps.iter().filter(|p| p.tercile == Some(*x)).count()).collect();
        assert_eq!(counts, vec![3, 2, 2]);
    }

    proptest! {
        #[test]
        fn oversleep_correction_is_non_positive(msf in 0.0f64..24.0, sd_w in 4.0f64..12.0, extra in 0.0f64..4.0) {
            let sd_f = sd_w + extra;
            let sc = corrected_midsleep(msf, sd_w, sd_f);
            let shift = circular_diff_hours(sc, msf);
            prop_assert!(shift <= 1e-12);
            if extra == 0.0 { prop_assert!(shift.abs() < 1e-12); }
        }

        #[test]
        fn terciles_balanced(vals in prop::collection::vec(0.0f64..24.0, 0..40)) {
            let mut ps: Vec<ChronotypeProfile> = vals.iter().enumerate().map(|(i, &m)| ChronotypeProfile {
                user_id: format!("u{i}"), sd_w: 7.0, sd_f: 7.0, msf: m, msf_sc: m,
                free_nights: 1, work_nights: 1, tercile: None }).collect();
            assign_terciles(&mut ps);
            let counts: Vec<usize> = Tercile::ALL.iter().map(|x| ps.iter().filter(|p| p.tercile == Some(*x)).count()).collect();
            let max = *counts.iter().max().unwrap();
            let min = *counts.iter().min().unwrap();
            prop_assert!(max - min <= 1);
            prop_assert_eq!(counts.iter().sum::<usize>(), vals.len());
        }

        #[test]
        fn same_episode_contexts_move_with_time(a in 0i64..(20 * H), b in 0i64..(20 * H)) {
            let us = UserSleep::new("u", vec![night("u", date(8), 23.0, 7.0), night("u", date(9), 23.0, 7.0)], MidsleepBaseline::AllNights);
            let wake = us.nights[0].record.bed_end_utc;
            let ca = us.context_at(wake + a).unwrap();
            let cb = us.context_at(wake + b).unwrap();
            prop_assume!(ca.night_index == cb.night_index);
            let diff = (b - a) as f64 / H as f64;
            prop_assert!((cb.time_since_wake_h - ca.time_since_wake_h - diff).abs() < 1e-9);
        }
    }
}
