//! Per-user traits and true sleep schedules.

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use super::config::SynthConfig;
use crate::io::Row;
use crate::sleep::{Gender, SleepRecord, Tercile};
use crate::time::{is_weekend, local_midnight_utc, MS_PER_HOUR};

/// Minimum time awake between two nights.
const MIN_WAKE_H: f64 = 4.0;

/// Configured chronotype of every user: stratified normal quantiles in random
/// order, so the cohort median equals the configured mean.
pub fn draw_chronotypes<R: Rng + ?Sized>(config: &SynthConfig, rng: &mut R) -> Vec<(f64, Tercile)> {
    let n = config.users;
    let mut values: Vec<f64> = match StatNormal::new(config.msf_sc_mean_h, config.msf_sc_sd_h.max(1e-12)) {
        Ok(d) if config.msf_sc_sd_h > 0.0 => (0..n).map(|i| d.inverse_cdf((i as f64 + 0.5) / n as f64)).collect(),
        _ => vec![config.msf_sc_mean_h; n],
    };
    values.shuffle(rng);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let (base, extra) = (n / 3, n % 3);
    let sizes = [base + usize::from(extra > 0), base + usize::from(extra > 1), base];
    let mut terciles = vec![Tercile::Medium; n];
    let mut pos = 0;
    for (t, size) in Tercile::ALL.into_iter().zip(sizes) {
        for &i in &order[pos..pos + size] {
            terciles[i] = t;
        }
        pos += size;
    }
    values.into_iter().zip(terciles).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub tz_offset_min: i32,
    pub msf_sc_h: f64,
    pub tercile: Tercile,
    pub social_jetlag_h: f64,
    pub mean_duration_h: f64,
    pub p_insufficient: f64,
    pub sessions_per_day: f64,
    pub age: u32,
    pub gender: Gender,
    pub bmi: f64,
}

impl Row for UserProfile {
    const HEADER: &'static [&'static str] = &[
        "user_id",
        "tz_offset_min",
        "msf_sc_h",
        "tercile",
        "social_jetlag_h",
        "mean_duration_h",
        "p_insufficient",
        "sessions_per_day",
        "age",
        "gender",
        "bmi",
    ];
}

pub fn user_id(index: usize) -> String {
    format!("u{index:05}")
}

pub fn draw_profile<R: Rng + ?Sized>(
    config: &SynthConfig,
    index: usize,
    chronotype: (f64, Tercile),
    rng: &mut R,
) -> UserProfile {
    let z = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
    let tz_offset_min = config.tz_offsets_min[rng.random_range(0..config.tz_offsets_min.len())];
    let female = rng.random::<f64>() < config.female_prob;
    let gender = if female { Gender::Female } else { Gender::Male };
    let age = rng.random_range(18..=75);
    let bmi = (25.0 + 4.0 * z(rng)).clamp(15.0, 50.0);
    let social_jetlag_h = config.social_jetlag_mean_h + config.social_jetlag_sd_h * z(rng);
    let mut mean_duration_h = config.duration_mean_h + config.user_duration_sd_h * z(rng);
    if female {
        mean_duration_h += config.female_gap_h;
    }
    let (a, b) = config.insufficient_beta;
    let p_insufficient = Beta::new(a, b).expect("validated").sample(rng);
    let sessions_per_day = config.sessions_per_day * (config.activity_sd * z(rng)).exp();
    UserProfile {
        user_id: user_id(index),
        tz_offset_min,
        msf_sc_h: chronotype.0,
        tercile: chronotype.1,
        social_jetlag_h,
        mean_duration_h,
        p_insufficient,
        sessions_per_day,
        age,
        gender,
        bmi,
    }
}

/// One night as it happened, tracked or not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueNight {
    pub wake_date: NaiveDate,
    pub start_utc: i64,
    pub end_utc: i64,
    pub tracked: bool,
}

impl TrueNight {
    pub fn duration_h(&self) -> f64 {
        (self.end_utc - self.start_utc) as f64 / MS_PER_HOUR
    }
}

fn draw_duration<R: Rng + ?Sized>(
    config: &SynthConfig,
    profile: &UserProfile,
    free: bool,
    after_short: bool,
    rng: &mut R,
) -> f64 {
    if rng.random::<f64>() < config.uniform_night_prob {
        return rng.random_range(4.0..=12.0);
    }
    let p =
        if after_short { profile.p_insufficient * config.repeat_insufficient_factor } else { profile.p_insufficient };
    if rng.random::<f64>() < p {
        return rng.random_range(4.0..6.0);
    }
    let mean = profile.mean_duration_h + if free { config.weekend_oversleep_h } else { 0.0 };
    let normal = Normal::new(mean, config.night_duration_sd_h).expect("validated");
    for _ in 0..64 {
        let d = normal.sample(rng);
        if (6.0..=12.0).contains(&d) {
            return d;
        }
    }
    mean.clamp(6.0, 12.0)
}

/// True nights for one user. Free-day midsleep is placed so that the
/// corrected midsleep of the tracked nights equals the configured value up
/// to jitter.
pub fn sleep_schedule<R: Rng + ?Sized>(config: &SynthConfig, profile: &UserProfile, rng: &mut R) -> Vec<TrueNight> {
    struct Draft {
        wake_date: NaiveDate,
        free: bool,
        duration_h: f64,
        tracked: bool,
        late_shift_h: f64,
        jitter_h: f64,
    }
    let mut after_short = false;
    let drafts: Vec<Draft> = (0..config.nights)
        .map(|i| {
            let wake_date = config.start_date.checked_add_days(Days::new(i as u64)).expect("date in range");
            let free = is_weekend(wake_date);
            let duration_h = draw_duration(config, profile, free, after_short, rng);
            after_short = duration_h < crate::sleep::INSUFFICIENT_BELOW_H;
            let tracked = rng.random::<f64>() < config.tracking_prob;
            let late = !free && rng.random::<f64>() < config.late_shift_prob;
            let late_shift_h = if late { rng.random_range(config.late_shift_h.0..=config.late_shift_h.1) } else { 0.0 };
            let z: f64 = StandardNormal.sample(rng);
            Draft { wake_date, free, duration_h, tracked, late_shift_h, jitter_h: config.midsleep_jitter_sd_h * z }
        })
        .collect();
    let work: Vec<f64> = drafts.iter().filter(|d| d.tracked && !d.free).map(|d| d.duration_h).collect();
    let sd_w = if work.is_empty() { profile.mean_duration_h } else { work.iter().sum::<f64>() / work.len() as f64 };

    let mut out: Vec<TrueNight> = Vec::with_capacity(drafts.len());
    for d in drafts {
        let mid = if d.free {
            profile.msf_sc_h + 5.0 / 14.0 * (d.duration_h - sd_w)
        } else {
            profile.msf_sc_h - profile.social_jetlag_h + d.late_shift_h
        } + d.jitter_h;
        let midnight = local_midnight_utc(d.wake_date, profile.tz_offset_min);
        let dur_ms = (d.duration_h * MS_PER_HOUR).round() as i64;
        let mut start = midnight + ((mid - d.duration_h / 2.0) * MS_PER_HOUR).round() as i64;
        if let Some(prev) = out.last() {
            let earliest = prev.end_utc + (MIN_WAKE_H * MS_PER_HOUR) as i64;
            start = start.max(earliest);
        }
        out.push(TrueNight { wake_date: d.wake_date, start_utc: start, end_utc: start + dur_ms, tracked: d.tracked });
    }
    out
}

pub fn sleep_records(config: &SynthConfig, profile: &UserProfile, nights: &[TrueNight]) -> Vec<SleepRecord> {
    nights
        .iter()
        .filter(|n| n.tracked)
        .map(|n| SleepRecord {
            user_id: profile.user_id.clone(),
            bed_start_utc: n.start_utc,
            bed_end_utc: n.end_utc,
            tz_offset_min: profile.tz_offset_min,
            age: config.demographics.then_some(profile.age),
            gender: config.demographics.then_some(profile.gender),
            bmi: config.demographics.then_some((profile.bmi * 10.0).round() / 10.0),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sleep::{chronotype, validate_sleep};
    use crate::stats::median;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chronotypes_have_exact_median_and_balanced_thirds() {
        let config = SynthConfig::sized(301, 10, 1);
        let c = draw_chronotypes(&config, &mut ChaCha8Rng::seed_from_u64(1));
        let v: Vec<f64> = c.iter().map(|x| x.0).collect();
        assert!((median(&v).unwrap() - 4.70).abs() < 1e-9);
        let early = c.iter().filter(|x| x.1 == Tercile::Early).count();
        let late = c.iter().filter(|x| x.1 == Tercile::Late).count();
        assert_eq!((early, late), (101, 100));
        let max_early = c.iter().filter(|x| x.1 == Tercile::Early).map(|x| x.0).fold(f64::MIN, f64::max);
        let min_med = c.iter().filter(|x| x.1 == Tercile::Medium).map(|x| x.0).fold(f64::MAX, f64::min);
        assert!(max_early <= min_med);
    }

    #[test]
    fn schedule_is_valid_ordered_and_recovers_chronotype() {
        let config = SynthConfig { tracking_prob: 1.0, ..SynthConfig::sized(1, 70, 3) };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let profile = draw_profile(&config, 0, (5.1, Tercile::Medium), &mut rng);
        let nights = sleep_schedule(&config, &profile, &mut rng);
        for w in nights.windows(2) {
            assert!(w[1].start_utc >= w[0].end_utc);
        }
        let records = sleep_records(&config, &profile, &nights);
        let v = validate_sleep(records.clone());
        assert_eq!(v.kept.len(), 70);
        let p = chronotype("u00000", &records).unwrap();
        assert!((p.msf_sc - 5.1).abs() < 0.25, "msf_sc {}", p.msf_sc);
    }
}
