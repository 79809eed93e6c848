use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::sleep::MidsleepBaseline;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigError {
    #[error("`{name}` = {value} is not a probability")]
    Probability { name: &'static str, value: f64 },
    #[error("`{name}` = {value} must be non-negative and finite")]
    Negative { name: &'static str, value: f64 },
    #[error("`{0}` must be positive")]
    Empty(&'static str),
    #[error("sufficient-night durations put only {mass:.3} of their mass inside [6, 12] h")]
    DurationMass { mass: f64 },
    #[error("late-shift range [{0}, {1}] is empty or negative")]
    LateShift(f64, f64),
    #[error("insufficient-night Beta parameters must be positive")]
    Beta,
    #[error("tercile nadirs need smooth time-of-day curves")]
    TercileNadirsNeedSmooth,
    #[error("time-zone list is empty")]
    NoTimeZones,
}

/// Population and behaviour parameters of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    pub nights: usize,
    pub seed: u64,
    /// Local wake date of each user's first night.
    pub start_date: NaiveDate,
    /// Offsets in minutes; each user gets one at random.
    pub tz_offsets_min: Vec<i32>,

    pub msf_sc_mean_h: f64,
    pub msf_sc_sd_h: f64,
    /// How much earlier workday midsleep sits than the corrected free-day midsleep.
    pub social_jetlag_mean_h: f64,
    pub social_jetlag_sd_h: f64,
    pub midsleep_jitter_sd_h: f64,
    /// Workday nights shifted later by a uniform amount in `late_shift_h`.
    pub late_shift_prob: f64,
    pub late_shift_h: (f64, f64),

    pub duration_mean_h: f64,
    pub user_duration_sd_h: f64,
    pub night_duration_sd_h: f64,
    pub weekend_oversleep_h: f64,
    /// Added to every sufficient night of female users.
    pub female_gap_h: f64,
    /// Per-user insufficient-night probability ~ Beta(a, b).
    pub insufficient_beta: (f64, f64),
    /// Nights drawn uniformly from [4, 12] h instead.
    pub uniform_night_prob: f64,
    /// Multiplies the insufficient-night probability right after an
    /// insufficient night; below 1 models rebound sleep.
    pub repeat_insufficient_factor: f64,
    pub tracking_prob: f64,

    pub sessions_per_day: f64,
    /// Log-scale spread of per-user activity around `sessions_per_day`.
    pub activity_sd: f64,
    pub click_prob: f64,
    pub typo_prob: f64,
    pub capital_prob: f64,
    pub drop_prob: f64,
    pub mobile_session_prob: f64,
    pub vocab_size: usize,
    pub zipf_exponent: f64,

    pub demographics: bool,
    pub female_prob: f64,
    /// Slowest hour of the early, medium and late thirds of users.
    pub tercile_nadirs_h: Option<[f64; 3]>,
    pub midsleep_baseline: BaselineConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaselineConfig {
    #[default]
    AllNights,
    Rolling(usize),
}

impl From<BaselineConfig> for MidsleepBaseline {
    fn from(b: BaselineConfig) -> Self {
        match b {
            BaselineConfig::AllNights => MidsleepBaseline::AllNights,
            BaselineConfig::Rolling(n) => MidsleepBaseline::Rolling(n),
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 100,
            nights: 60,
            seed: 1,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            tz_offsets_min: vec![-480, -420, -360, -300, 0, 60, 120, 330, 480, 600],
            msf_sc_mean_h: 4.70,
            msf_sc_sd_h: 1.0,
            social_jetlag_mean_h: 0.6,
            social_jetlag_sd_h: 0.3,
            midsleep_jitter_sd_h: 0.25,
            late_shift_prob: 0.08,
            late_shift_h: (1.0, 2.5),
            duration_mean_h: 7.3,
            user_duration_sd_h: 0.5,
            night_duration_sd_h: 0.7,
            weekend_oversleep_h: 0.5,
            female_gap_h: 0.25,
            insufficient_beta: (1.5, 8.5),
            uniform_night_prob: 0.05,
            repeat_insufficient_factor: 1.0,
            tracking_prob: 0.9,
            sessions_per_day: 24.0,
            activity_sd: 0.3,
            click_prob: 0.8,
            typo_prob: 0.03,
            capital_prob: 0.05,
            drop_prob: 0.01,
            mobile_session_prob: 0.05,
            vocab_size: 400,
            zipf_exponent: 1.0,
            demographics: true,
            female_prob: 0.5,
            tercile_nadirs_h: None,
            midsleep_baseline: BaselineConfig::AllNights,
        }
    }
}

impl SynthConfig {
    pub fn sized(users: usize, nights: usize, seed: u64) -> Self {
        SynthConfig { users, nights, seed, ..SynthConfig::default() }
    }

    /// Lower-case keys only, so every key label is well populated.
    pub fn exact(users: usize, nights: usize, seed: u64) -> Self {
        SynthConfig { capital_prob: 0.0, ..SynthConfig::sized(users, nights, seed) }
    }

    /// Early, medium and late thirds slowest at 04:30, 05:30 and 06:30.
    pub fn chronotype_thirds(users: usize, nights: usize, seed: u64) -> Self {
        SynthConfig { tercile_nadirs_h: Some([4.5, 5.5, 6.5]), ..SynthConfig::sized(users, nights, seed) }
    }

    /// Similar schedules across users, so clock time and time awake move together.
    pub fn correlated(users: usize, nights: usize, seed: u64) -> Self {
        SynthConfig {
            msf_sc_sd_h: 0.3,
            social_jetlag_sd_h: 0.1,
            midsleep_jitter_sd_h: 0.2,
            late_shift_prob: 0.02,
            ..SynthConfig::exact(users, nights, seed)
        }
    }

    /// Homogeneous sleep habits and a near-absent insufficient tail, for
    /// between-gender duration comparisons.
    pub fn gender_gap(users: usize, nights: usize, seed: u64) -> Self {
        SynthConfig {
            user_duration_sd_h: 0.2,
            insufficient_beta: (0.2, 40.0),
            uniform_night_prob: 0.0,
            sessions_per_day: 0.0,
            ..SynthConfig::sized(users, nights, seed)
        }
    }

    /// Homogeneous insufficient-sleep risk with rebound after short nights and
    /// no late-shifted nights, for the multi-night recovery analysis.
    pub fn recovery(users: usize, nights: usize, seed: u64) -> Self {
        SynthConfig {
            insufficient_beta: (60.0, 140.0),
            repeat_insufficient_factor: 0.1,
            user_duration_sd_h: 0.2,
            uniform_night_prob: 0.0,
            late_shift_prob: 0.0,
            ..SynthConfig::sized(users, nights, seed)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.users == 0 {
            return Err(ConfigError::Empty("users"));
        }
        if self.nights == 0 {
            return Err(ConfigError::Empty("nights"));
        }
        if self.vocab_size == 0 {
            return Err(ConfigError::Empty("vocab_size"));
        }
        if self.tz_offsets_min.is_empty() {
            return Err(ConfigError::NoTimeZones);
        }
        for (name, value) in [
            ("late_shift_prob", self.late_shift_prob),
            ("uniform_night_prob", self.uniform_night_prob),
            ("tracking_prob", self.tracking_prob),
            ("click_prob", self.click_prob),
            ("typo_prob", self.typo_prob),
            ("capital_prob", self.capital_prob),
            ("drop_prob", self.drop_prob),
            ("mobile_session_prob", self.mobile_session_prob),
            ("female_prob", self.female_prob),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Probability { name, value });
            }
        }
        for (name, value) in [
            ("msf_sc_sd_h", self.msf_sc_sd_h),
            ("social_jetlag_sd_h", self.social_jetlag_sd_h),
            ("midsleep_jitter_sd_h", self.midsleep_jitter_sd_h),
            ("user_duration_sd_h", self.user_duration_sd_h),
            ("night_duration_sd_h", self.night_duration_sd_h),
            ("weekend_oversleep_h", self.weekend_oversleep_h),
            ("female_gap_h", self.female_gap_h),
            ("sessions_per_day", self.sessions_per_day),
            ("activity_sd", self.activity_sd),
            ("repeat_insufficient_factor", self.repeat_insufficient_factor),
            ("zipf_exponent", self.zipf_exponent),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ConfigError::Negative { name, value });
            }
        }
        if !self.msf_sc_mean_h.is_finite() || !self.social_jetlag_mean_h.is_finite() {
            return Err(ConfigError::Negative { name: "msf_sc_mean_h", value: self.msf_sc_mean_h });
        }
        let (lo, hi) = self.late_shift_h;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(ConfigError::LateShift(lo, hi));
        }
        let (a, b) = self.insufficient_beta;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(ConfigError::Beta);
        }
        let mass = self.sufficient_mass();
        if mass < 0.5 {
            return Err(ConfigError::DurationMass { mass });
        }
        Ok(())
    }

    /// Probability that a workday sufficient-night draw lands in [6, 12] h.
    pub fn sufficient_mass(&self) -> f64 {
        let sd = (self.user_duration_sd_h.powi(2) + self.night_duration_sd_h.powi(2)).sqrt();
        if sd == 0.0 {
            return if (6.0..=12.0).contains(&self.duration_mean_h) { 1.0 } else { 0.0 };
        }
        match Normal::new(self.duration_mean_h, sd) {
            Ok(n) => n.cdf(12.0) - n.cdf(6.0),
            Err(_) => 0.0,
        }
    }
}
