use serde::{Deserialize, Serialize};

use super::mwu::{mann_whitney_u, MannWhitney};
use super::ImpactError;
use crate::events::Measurement;
use crate::io::Row;
use crate::sleep::SleepContext;
use crate::stats::{MeanCi, RunningStats};

/// Half-open interval `[lo, hi)` with optional closed ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn new(label: &str, lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        Interval { label: label.to_string(), lo, hi, lo_closed, hi_closed }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }
}

pub fn duration_bins() -> Vec<Interval> {
    vec![
        Interval::new("<6", f64::NEG_INFINITY, 6.0, false, false),
        Interval::new("6-7", 6.0, 7.0, true, false),
        Interval::new("7-8", 7.0, 8.0, true, false),
        Interval::new("8-9", 8.0, 9.0, true, false),
        Interval::new(">=9", 9.0, f64::INFINITY, true, false),
    ]
}

pub fn duration_reference() -> Interval {
    Interval::new("7-9", 7.0, 9.0, true, false)
}

pub fn deviation_bins() -> Vec<Interval> {
    vec![
        Interval::new("<=-1", f64::NEG_INFINITY, -1.0, false, true),
        Interval::new("(-1,0]", -1.0, 0.0, false, true),
        Interval::new("(0,1)", 0.0, 1.0, false, false),
        Interval::new(">=1", 1.0, f64::INFINITY, true, false),
    ]
}

pub fn deviation_reference() -> Interval {
    Interval::new("(-1,1)", -1.0, 1.0, false, false)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinEffect {
    pub bin: String,
    pub summary: MeanCi,
    /// `(bin mean - reference mean) / reference mean`.
    pub relative_effect: f64,
    pub test: MannWhitney,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectTable {
    pub analysis: String,
    pub reference_bin: String,
    pub reference: MeanCi,
    /// Bins with no observations are absent.
    pub bins: Vec<BinEffect>,
}

impl EffectTable {
    pub fn bin(&self, label: &str) -> Option<&BinEffect> {
        self.bins.iter().find(|b| b.bin == label)
    }
}

/// Flat table layout; the reference interval comes first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub analysis: String,
    pub bin: String,
    pub n: u64,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub relative_effect: f64,
    pub u: Option<f64>,
    pub p_value: Option<f64>,
}

impl Row for EffectRow {
    const HEADER: &'static [&'static str] =
        &["analysis", "bin", "n", "mean", "sd", "ci_low", "ci_high", "relative_effect", "u", "p_value"];
}

impl EffectTable {
    pub fn rows(&self) -> Vec<EffectRow> {
        let row = |bin: String, s: &MeanCi, rel: f64, test: Option<&MannWhitney>| EffectRow {
            analysis: self.analysis.clone(),
            bin,
            n: s.n,
            mean: s.mean,
            sd: s.sd,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            relative_effect: rel,
            u: test.map(|t| t.u),
            p_value: test.map(|t| t.p_value),
        };
        let mut out = vec![row(format!("ref {}", self.reference_bin), &self.reference, 0.0, None)];
        out.extend(self.bins.iter().map(|b| row(b.bin.clone(), &b.summary, b.relative_effect, Some(&b.test))));
        out
    }
}

/// Compare each bin of `key(context)` against a pooled reference interval.
pub fn binned_effect<T, K, F>(
    analysis: &str,
    obs: &[T],
    key: K,
    keep: F,
    bins: &[Interval],
    reference: &Interval,
) -> Result<EffectTable, ImpactError>
where
    T: Measurement,
    K: Fn(&SleepContext) -> f64,
    F: Fn(&SleepContext) -> bool,
{
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); bins.len()];
    let mut reference_values = Vec::new();
    for o in obs {
        let Some(ctx) = o.context() else { continue };
        if !keep(ctx) {
            continue;
        }
        let k = key(ctx);
        if let Some(b) = bins.iter().position(|b| b.contains(k)) {
            values[b].push(o.value());
        }
        if reference.contains(k) {
            reference_values.push(o.value());
        }
    }
    if reference_values.is_empty() {
        return Err(ImpactError::EmptyReference(reference.label.clone()));
    }
    let ref_stats: RunningStats = reference_values.iter().copied().collect();
    let reference_summary = ref_stats.summary().expect("non-empty");
    let bins = bins
        .iter()
        .zip(values)
        .filter(|(_, v)| !v.is_empty())
        .map(|(b, v)| {
            let s: RunningStats = v.iter().copied().collect();
            let summary = s.summary().expect("non-empty");
            Ok(BinEffect {
                bin: b.label.clone(),
                relative_effect: (summary.mean - reference_summary.mean) / reference_summary.mean,
                summary,
                test: mann_whitney_u(&v, &reference_values)?,
            })
        })
        .collect::<Result<Vec<_>, ImpactError>>()?;
    Ok(EffectTable {
        analysis: analysis.to_string(),
        reference_bin: reference.label.clone(),
        reference: reference_summary,
        bins,
    })
}

/// Latency by previous-night duration, against the 7-9 h reference.
pub fn duration_effect<T: Measurement>(obs: &[T]) -> Result<EffectTable, ImpactError> {
    binned_effect("duration", obs, |c| c.prev_duration_h, |_| true, &duration_bins(), &duration_reference())
}

/// Latency by deviation of the night's midsleep from the user's usual one,
/// for nights of 7-8 h.
pub fn timing_effect<T: Measurement>(obs: &[T], weekday_only: bool) -> Result<EffectTable, ImpactError> {
    binned_effect(
        if weekday_only { "timing_weekday" } else { "timing" },
        obs,
        |c| c.midpoint_dev_h,
        |c| (7.0..=8.0).contains(&c.prev_duration_h) && !(weekday_only && c.wake_free_day),
        &deviation_bins(),
        &deviation_reference(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{KeyLabel, KeystrokeObservation};
    use crate::sleep::NightClass;

    fn obs(v: f64, dur: f64, dev: f64, free: bool) -> KeystrokeObservation {
        KeystrokeObservation {
            user_id: "u".into(),
            ts_utc: 1,
            tz_offset_min: 0,
            local_time: 12.0,
            latency_ms: v,
            key_label: KeyLabel::Delete,
            context: Some(SleepContext {
                time_since_wake_h: 3.0,
                prev_duration_h: dur,
                midpoint_dev_h: dev,
                night_class: NightClass::from_duration(dur),
                night_index: 0,
                wake_free_day: free,
            }),
        }
    }

    #[test]
    fn duration_bins_and_reference() {
        let mut o = Vec::new();
        for i in 0..50 {
            o.push(obs(200.0 + (i % 5) as f64, 7.5, 0.0, false));
            o.push(obs(210.0 + (i % 5) as f64, 5.0, 0.0, false));
        }
        let t = duration_effect(&o).unwrap();
        assert_eq!(t.bins.len(), 2);
        assert!(t.bin("8-9").is_none());
        let short = t.bin("<6").unwrap();
        assert!((short.relative_effect - 10.0 / 202.0).abs() < 1e-12);
        assert!(short.test.p_value < 1e-6);
        assert!(matches!(duration_effect(&o[1..2]), Err(ImpactError::EmptyReference(_))));
    }

    #[test]
    fn timing_restricts_duration_and_weekdays() {
        let o = vec![
            obs(100.0, 7.5, 0.5, false),
            obs(300.0, 7.5, 1.5, true),
            obs(100.0, 7.5, -0.5, false),
            obs(900.0, 9.5, 1.5, false),
        ];
        let t = timing_effect(&o, false).unwrap();
        assert_eq!(t.reference.n, 2);
        assert_eq!(t.bin(">=1").unwrap().summary.n, 1);
        assert!((t.bin(">=1").unwrap().relative_effect - 2.0).abs() < 1e-12);
        let w = timing_effect(&o, true).unwrap();
        assert!(w.bin(">=1").is_none());
    }

    #[test]
    fn intervals() {
        let b = deviation_bins();
        assert!(b[0].contains(-1.0) && !b[1].contains(-1.0));
        assert!(b[1].contains(0.0) && !b[2].contains(0.0));
        assert!(b[3].contains(1.0) && !b[2].contains(1.0));
    }
}
