//! Raw event and sleep log generation.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, SynthConfig};
use super::schedule::{draw_chronotypes, draw_profile, sleep_records, sleep_schedule, TrueNight, UserProfile};
use super::truth::{
    BinKey, BinnedCurves, ClickTally, CurveModel, GaugedTruth, GroundTruth, KeystrokeTally, NoiseModel, SmoothCurves,
};
use super::vocab::{class_entropy_level, Query, Vocabulary};
use crate::events::{write_events, Device, EventPayload, KeyLabel, RawEvent, MAX_CLICK_MS, MAX_KEYSTROKE_MS};
use crate::impact::recovery::{night_patterns, DAYS};
use crate::impact::Pattern;
use crate::io::{self, IoError, LogFormat};
use crate::sleep::{write_sleep, SleepContext, SleepRecord, UserSleep};
use crate::time::{local_hour, MS_PER_HOUR};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    File(#[from] std::io::Error),
}

/// Sessions start at least this long after the previous one ended.
const SESSION_GAP_MS: i64 = MAX_KEYSTROKE_MS + 500;
const LOWER: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

/// Everything generated for one user.
#[derive(Debug, Clone)]
pub struct UserData {
    pub profile: UserProfile,
    /// Time-ordered, desktop and mobile.
    pub events: Vec<RawEvent>,
    /// Tracked nights only.
    pub sleep: Vec<SleepRecord>,
    pub keystroke_tally: KeystrokeTally,
    pub click_tally: ClickTally,
}

/// Cohort-level state shared by all users.
#[derive(Debug, Clone)]
pub struct CohortPlan {
    pub config: SynthConfig,
    pub truth: GroundTruth,
    pub vocab: Vocabulary,
    chronotypes: Vec<(f64, crate::sleep::Tercile)>,
    key_curves: BinnedCurves,
    click_curves: BinnedCurves,
}

impl CohortPlan {
    pub fn new(config: &SynthConfig, truth: &GroundTruth) -> Result<Self, SynthError> {
        config.validate()?;
        if config.tercile_nadirs_h.is_some() && truth.curves.is_binned() {
            return Err(ConfigError::TercileNadirsNeedSmooth.into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let vocab = Vocabulary::generate(config.vocab_size, config.zipf_exponent, &mut rng);
        let chronotypes = draw_chronotypes(config, &mut rng);
        Ok(CohortPlan {
            config: config.clone(),
            truth: truth.clone(),
            vocab,
            chronotypes,
            key_curves: truth.keystroke_bins(),
            click_curves: truth.click_bins(),
        })
    }

    pub fn users(&self) -> usize {
        self.config.users
    }

    /// Generate user `index`; independent of every other user.
    pub fn user(&self, index: usize) -> UserData {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index as u64 + 1);
        let profile = draw_profile(&self.config, index, self.chronotypes[index], &mut rng);
        let nights = sleep_schedule(&self.config, &profile, &mut rng);
        let sleep = sleep_records(&self.config, &profile, &nights);
        let visible = UserSleep::new(profile.user_id.clone(), sleep.clone(), self.config.midsleep_baseline.into());
        let mut gen = UserGenerator {
            plan: self,
            profile: &profile,
            visible: &visible,
            key_penalty: recovery_penalties(&visible, &self.truth.keystroke_couplings),
            click_penalty: recovery_penalties(&visible, &self.truth.click_couplings),
            nadir_h: self.nadir_for(&profile),
            events: Vec::new(),
            keystroke_tally: KeystrokeTally::default(),
            click_tally: ClickTally::default(),
            rng,
        };
        gen.run(&nights);
        let UserGenerator { events, keystroke_tally, click_tally, .. } = gen;
        UserData { profile, events, sleep, keystroke_tally, click_tally }
    }

    fn nadir_for(&self, profile: &UserProfile) -> Option<f64> {
        let idx = match profile.tercile {
            crate::sleep::Tercile::Early => 0,
            crate::sleep::Tercile::Medium => 1,
            crate::sleep::Tercile::Late => 2,
        };
        self.config.tercile_nadirs_h.map(|n| n[idx])
    }

    pub fn generate(&self) -> Cohort {
        let users: Vec<UserData> = (0..self.users()).into_par_iter().map(|i| self.user(i)).collect();
        let mut keystroke_tally = KeystrokeTally::default();
        let mut click_tally = ClickTally::default();
        for u in &users {
            keystroke_tally.merge(&u.keystroke_tally);
            click_tally.merge(&u.click_tally);
        }
        Cohort {
            keystroke_truth: self.truth.export_keystroke(&keystroke_tally),
            click_truth: self.truth.export_click(&click_tally).scaled(1e-3),
            users,
        }
    }
}

/// Generated logs with their ground truth.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub users: Vec<UserData>,
    /// Milliseconds.
    pub keystroke_truth: GaugedTruth,
    /// Seconds, matching the click model's response.
    pub click_truth: GaugedTruth,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CohortSummary {
    pub users: usize,
    pub events: usize,
    pub sleep_records: usize,
    pub keystroke_observations: u64,
    pub click_observations: u64,
}

impl Cohort {
    pub fn events(&self) -> Vec<RawEvent> {
        self.users.iter().flat_map(|u| u.events.iter().cloned()).collect()
    }

    pub fn sleep(&self) -> Vec<SleepRecord> {
        self.users.iter().flat_map(|u| u.sleep.iter().cloned()).collect()
    }

    pub fn profiles(&self) -> Vec<UserProfile> {
        self.users.iter().map(|u| u.profile.clone()).collect()
    }

    pub fn summary(&self) -> CohortSummary {
        CohortSummary {
            users: self.users.len(),
            events: self.users.iter().map(|u| u.events.len()).sum(),
            sleep_records: self.users.iter().map(|u| u.sleep.len()).sum(),
            keystroke_observations: self.keystroke_truth.n,
            click_observations: self.click_truth.n,
        }
    }

    /// Write `events`, `sleep`, `users.csv`, `truth_keystroke.csv` and
    /// `truth_click.csv` into `dir`.
    pub fn write(&self, dir: &Path, format: LogFormat) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        let ext = format.extension();
        let events = BufWriter::new(File::create(dir.join(format!("events.{ext}")))?);
        let mut all = Vec::new();
        for u in &self.users {
            all.extend_from_slice(&u.events);
        }
        write_events(events, format, &all)?;
        drop(all);
        write_sleep(BufWriter::new(File::create(dir.join(format!("sleep.{ext}")))?), format, &self.sleep())?;
        io::write_rows(BufWriter::new(File::create(dir.join("users.csv"))?), LogFormat::Csv, self.profiles())?;
        super::truth::write_truth(
            BufWriter::new(File::create(dir.join("truth_keystroke.csv"))?),
            &self.keystroke_truth,
        )?;
        super::truth::write_truth(BufWriter::new(File::create(dir.join("truth_click.csv"))?), &self.click_truth)?;
        Ok(())
    }
}

/// Generate a cohort from `config` and `truth`.
pub fn generate_cohort(config: &SynthConfig, truth: &GroundTruth) -> Result<Cohort, SynthError> {
    Ok(CohortPlan::new(config, truth)?.generate())
}

/// Cohort whose latencies follow smooth curves instead of bins.
pub fn generate_smooth_variant(config: &SynthConfig) -> Result<Cohort, SynthError> {
    generate_cohort(config, &GroundTruth::smooth())
}

/// Recovery penalty fraction for every visible night index.
fn recovery_penalties(visible: &UserSleep, c: &super::truth::Couplings) -> Vec<f64> {
    let mut out = vec![0.0; visible.nights.len()];
    if c.si_day1 == 0.0 && c.ii_day1 == 0.0 {
        return out;
    }
    let (patterns, _) = night_patterns(visible);
    for p in patterns {
        let end: NaiveDate = visible.nights[p.end_night].wake_date;
        for (j, slot) in out.iter_mut().enumerate().skip(p.end_night) {
            let days = (visible.nights[j].wake_date - end).num_days();
            if days >= DAYS as i64 {
                break;
            }
            let day = days as usize + 1;
            let pen = match p.pattern {
                Pattern::SI => c.si_penalty(day),
                Pattern::II => c.ii_penalty(day),
                Pattern::SS => 0.0,
            };
            *slot = f64::max(*slot, pen);
        }
    }
    out
}

/// Everything the latency of one event depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Features {
    t: f64,
    ctx: Option<SleepContext>,
}

/// Bin identity of a moment; latencies are only emitted when it does not
/// change between the two ends of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cell {
    t: Option<usize>,
    w: Option<usize>,
    d: Option<usize>,
    night: Option<usize>,
}

struct UserGenerator<'a> {
    plan: &'a CohortPlan,
    profile: &'a UserProfile,
    visible: &'a UserSleep,
    key_penalty: Vec<f64>,
    click_penalty: Vec<f64>,
    nadir_h: Option<f64>,
    events: Vec<RawEvent>,
    keystroke_tally: KeystrokeTally,
    click_tally: ClickTally,
    rng: ChaCha8Rng,
}

enum Curves<'a> {
    Binned(&'a BinnedCurves),
    Smooth(&'a SmoothCurves),
}

impl<'a> UserGenerator<'a> {
    fn features(&self, ts: i64) -> Features {
        Features { t: local_hour(ts, self.profile.tz_offset_min), ctx: self.visible.context_at(ts) }
    }

    fn cell(&self, f: &Features, curves: &BinnedCurves) -> Cell {
        Cell {
            t: curves.t_edges.locate(f.t),
            w: f.ctx.and_then(|c| curves.w_edges.locate(c.time_since_wake_h)),
            d: f.ctx.and_then(|c| curves.d_edges.locate(c.prev_duration_h)),
            night: f.ctx.map(|c| c.night_index),
        }
    }

    fn curve_sum(&self, model: &CurveModel, f: &Features) -> f64 {
        let curves = match model {
            CurveModel::Binned(b) => Curves::Binned(b),
            CurveModel::Smooth(s) => Curves::Smooth(s),
        };
        match curves {
            Curves::Binned(b) => {
                let mut v = b.t[b.t_edges.locate(f.t).unwrap_or(0)];
                if let Some(c) = f.ctx {
                    let wi = b.w_edges.locate(c.time_since_wake_h).unwrap_or(b.w.len() - 1);
                    let di = b.d_edges.locate(c.prev_duration_h).unwrap_or(b.d.len() - 1);
                    v += b.w[wi] + b.d[di];
                }
                v
            }
            Curves::Smooth(s) => {
                let mut v = s.circadian(f.t, self.nadir_h.unwrap_or(s.nadir_h));
                if let Some(c) = f.ctx {
                    v += s.wake(c.time_since_wake_h) + s.duration(c.prev_duration_h);
                }
                v
            }
        }
    }

    fn coupling(&self, f: &Features, c: &super::truth::Couplings, recovery: &[f64]) -> f64 {
        let Some(ctx) = f.ctx else { return 0.0 };
        let late = if ctx.midpoint_dev_h >= c.late_threshold_h { c.late_penalty } else { 0.0 };
        late + recovery.get(ctx.night_index).copied().unwrap_or(0.0)
    }

    fn noisy(&mut self, mean: f64, noise: NoiseModel) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        match noise {
            NoiseModel::Gaussian { sd } => mean + sd * z,
            NoiseModel::LogNormal { sigma } => mean * (sigma * z - sigma * sigma / 2.0).exp(),
        }
    }

    /// Keystroke latency starting at `ts`, or `None` when the cell changes
    /// before the key lands.
    fn keystroke_latency(&mut self, ts: i64, label: KeyLabel) -> Option<(i64, Features)> {
        let truth = &self.plan.truth;
        let f = self.features(ts);
        let mean = truth.alpha_ms
            + truth.keys.get(label)
            + self.curve_sum(&truth.curves, &f)
            + truth.alpha_ms * self.coupling(&f, &truth.keystroke_couplings, &self.key_penalty);
        let latency = self.noisy(mean, truth.noise).round().clamp(1.0, MAX_KEYSTROKE_MS as f64) as i64;
        let end = self.features(ts + latency);
        if truth.curves.is_binned() && !self.same_cell(&f, &end, &self.plan.key_curves) {
            return None;
        }
        Some((latency, end))
    }

    fn click_latency(&mut self, ts: i64, position: u32, query: &Query) -> Option<(i64, Features)> {
        let truth = &self.plan.truth;
        let f = self.features(ts);
        let pos = truth.click_offsets.position[(position.clamp(1, 10) - 1) as usize];
        let ent = truth.click_offsets.entropy[class_entropy_level(query.class)];
        let mean = truth.click_alpha_ms
            + pos
            + ent
            + self.curve_sum(&truth.click_curves, &f)
            + truth.click_alpha_ms * self.coupling(&f, &truth.click_couplings, &self.click_penalty);
        let latency = self.noisy(mean, truth.click_noise).round().clamp(1.0, MAX_CLICK_MS as f64) as i64;
        let end = self.features(ts + latency);
        if truth.click_curves.is_binned() && !self.same_cell(&f, &end, &self.plan.click_curves) {
            return None;
        }
        Some((latency, end))
    }

    fn same_cell(&self, a: &Features, b: &Features, curves: &BinnedCurves) -> bool {
        self.cell(a, curves) == self.cell(b, curves) && a.ctx.is_some() == b.ctx.is_some()
    }

    fn fitted_bins(&self, f: &Features, curves: &BinnedCurves) -> Option<BinKey> {
        let c = self.cell(f, curves);
        Some(BinKey { t: c.t?, w: c.w?, d: c.d? })
    }

    fn emit(&mut self, ts: i64, device: Device, payload: EventPayload) {
        self.events.push(RawEvent {
            user_id: self.profile.user_id.clone(),
            ts_utc: ts,
            device,
            tz_offset_min: self.profile.tz_offset_min,
            payload,
        });
    }

    fn run(&mut self, nights: &[TrueNight]) {
        let mut last_end = i64::MIN;
        for (i, night) in nights.iter().enumerate() {
            let wake_end = nights.get(i + 1).map_or(night.end_utc + (16.0 * MS_PER_HOUR) as i64, |n| n.start_utc);
            let span = wake_end - night.end_utc;
            if span <= 0 || self.profile.sessions_per_day <= 0.0 {
                continue;
            }
            let lambda = self.profile.sessions_per_day * span as f64 / (24.0 * MS_PER_HOUR);
            let count = Poisson::new(lambda).map(|p| p.sample(&mut self.rng) as usize).unwrap_or(0);
            let mut starts: Vec<i64> = (0..count).map(|_| self.rng.random_range(night.end_utc..wake_end)).collect();
            starts.sort_unstable();
            for start in starts {
                if start < last_end.saturating_add(SESSION_GAP_MS) {
                    continue;
                }
                last_end = self.session(start, wake_end);
            }
        }
    }

    /// One search session; returns the time of its last event.
    fn session(&mut self, start: i64, limit: i64) -> i64 {
        let cfg = &self.plan.config;
        let device = if self.rng.random::<f64>() < cfg.mobile_session_prob { Device::Mobile } else { Device::Desktop };
        let query = self.plan.vocab.sample(&mut self.rng).clone();
        let mut target: Vec<char> = query.text.chars().collect();
        if self.rng.random::<f64>() < cfg.capital_prob {
            target[0] = target[0].to_ascii_uppercase();
        }
        let (typo_prob, drop_prob) = (cfg.typo_prob, cfg.drop_prob);

        let mut t = start;
        let mut typed = String::new();
        typed.push(target[0]);
        // Whether the previous request reached the log.
        let mut prev_logged = self.rng.random::<f64>() >= drop_prob;
        if prev_logged {
            self.emit(t, device, EventPayload::KeystrokeRequest { partial_query: typed.clone() });
        }
        let mut complete = true;
        'typing: for &c in &target[1..] {
            let mut steps = Vec::with_capacity(3);
            if self.rng.random::<f64>() < typo_prob {
                let wrong = loop {
                    let w = LOWER[self.rng.random_range(0..LOWER.len())] as char;
                    if w != c {
                        break w;
                    }
                };
                steps.push(KeyLabel::Insert(wrong));
                steps.push(KeyLabel::Delete);
            }
            steps.push(KeyLabel::Insert(c));
            for label in steps {
                let Some((latency, end)) = self.keystroke_latency(t, label) else {
                    complete = false;
                    break 'typing;
                };
                t += latency;
                if t >= limit {
                    complete = false;
                    break 'typing;
                }
                match label {
                    KeyLabel::Insert(ch) => typed.push(ch),
                    KeyLabel::Delete => {
                        typed.pop();
                    }
                }
                // Never two drops in a row: the requests around a dropped
                // typo and its correction would look like a single key.
                let logged = self.rng.random::<f64>() >= drop_prob || !prev_logged;
                if logged {
                    self.emit(t, device, EventPayload::KeystrokeRequest { partial_query: typed.clone() });
                    if prev_logged && device == Device::Desktop {
                        if let Some(bins) = self.fitted_bins(&end, &self.plan.key_curves) {
                            self.keystroke_tally.add(label, bins, &self.plan.key_curves);
                        }
                    }
                }
                prev_logged = logged;
            }
        }
        if !complete {
            return t;
        }
        let shown = t + self.rng.random_range(150..=400);
        self.emit(shown, device, EventPayload::Impression { query: typed.clone() });
        if self.rng.random::<f64>() >= cfg.click_prob {
            return shown;
        }
        let (url, position) = query.click(&mut self.rng);
        let Some((latency, end)) = self.click_latency(shown, position, &query) else { return shown };
        let clicked = shown + latency;
        if clicked >= limit {
            return shown;
        }
        self.emit(clicked, device, EventPayload::Click { query: typed, url: query.urls[url].clone(), position });
        if device == Device::Desktop {
            if let Some(bins) = self.fitted_bins(&end, &self.plan.click_curves) {
                let pos_level = (position.clamp(1, 10) - 1) as usize;
                self.click_tally.add(pos_level, class_entropy_level(query.class), bins, &self.plan.click_curves);
            }
        }
        clicked
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{extract_keystrokes, parse_events, KeystrokeOptions};
    use crate::pipeline::{extract_all, prepare_sleep};
    use crate::sleep::{validate_sleep, MidsleepBaseline};

    fn small() -> SynthConfig {
        SynthConfig::sized(6, 14, 11)
    }

    #[test]
    fn flat_noise_free_latencies_equal_alpha() {
        let cohort = generate_cohort(&small(), &GroundTruth::flat(225.0)).unwrap();
        let (sleep, _) = prepare_sleep(cohort.sleep(), MidsleepBaseline::AllNights);
        let out = extract_all(cohort.events(), &sleep, &KeystrokeOptions::default()).unwrap();
        assert!(out.keystrokes.len() > 1000);
        assert!(out.keystrokes.iter().all(|o| o.latency_ms == 225.0));
    }

    #[test]
    fn deterministic_and_parallel_invariant() {
        let plan = CohortPlan::new(&small(), &GroundTruth::default()).unwrap();
        let a = plan.generate();
        let b: Vec<UserData> = (0..plan.users()).rev().map(|i| plan.user(i)).collect();
        for (x, y) in a.users.iter().zip(b.iter().rev()) {
            assert_eq!(x.events, y.events);
            assert_eq!(x.sleep, y.sleep);
        }
        let mut buf1 = Vec::new();
        let mut buf2 = Vec::new();
        write_events(&mut buf1, LogFormat::Jsonl, &a.events()).unwrap();
        write_events(&mut buf2, LogFormat::Jsonl, &plan.generate().events()).unwrap();
        assert_eq!(buf1, buf2);
    }

    #[test]
    fn tally_matches_pipeline_observations() {
        let cohort = generate_cohort(&small(), &GroundTruth::default()).unwrap();
        let (sleep, rejected) = prepare_sleep(cohort.sleep(), MidsleepBaseline::AllNights);
        assert_eq!(rejected, 0);
        let out = extract_all(cohort.events(), &sleep, &KeystrokeOptions::default()).unwrap();
        let fitted =
            out.keystrokes.iter().filter(|o| o.context.is_some_and(|c| c.time_since_wake_h < 16.0)).count() as u64;
        assert_eq!(fitted, cohort.keystroke_truth.n);
        let clicks = out.clicks.iter().filter(|o| o.context.is_some_and(|c| c.time_since_wake_h < 16.0)).count();
        assert_eq!(clicks as u64, cohort.click_truth.n);
    }

    #[test]
    fn logs_round_trip_and_sleep_validates() {
        let cohort = generate_cohort(&small(), &GroundTruth::default()).unwrap();
        let mut buf = Vec::new();
        write_events(&mut buf, LogFormat::Csv, &cohort.events()).unwrap();
        let parsed = parse_events(buf.as_slice(), LogFormat::Csv).unwrap();
        assert_eq!(parsed.malformed, 0);
        assert_eq!(parsed.items, cohort.events());
        assert!(validate_sleep(cohort.sleep()).rejected.is_empty());
        let first = &cohort.users[0].events;
        let desktop: Vec<RawEvent> = first.iter().filter(|e| e.device == Device::Desktop).cloned().collect();
        assert!(!extract_keystrokes(&desktop, &KeystrokeOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn gauge_holds() {
        let cohort = generate_cohort(&small(), &GroundTruth::default()).unwrap();
        for truth in [&cohort.keystroke_truth, &cohort.click_truth] {
            for (name, levels) in &truth.factors {
                let s: f64 = levels.iter().map(|l| l.value * l.count as f64).sum();
                assert!(s.abs() / (truth.n as f64) < 1e-10, "{name}: {s}");
            }
        }
    }
}
