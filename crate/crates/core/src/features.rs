//! Confound controls and within-user normalisation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::events::{ClickObservation, EventPayload, KeyLabel, KeystrokeObservation, Measurement, RawEvent};
use crate::io::{self, IoError, LogFormat, Row};
use crate::model::FactorValue;
use crate::stats::{MeanCi, RunningStats};

/// Shannon entropy in bits of a count vector, summed in the given order.
pub fn entropy_bits<I: IntoIterator<Item = u64>>(counts: I) -> f64 {
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Clicked-URL tallies per query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntropyCounter {
    counts: BTreeMap<String, BTreeMap<String, u64>>,
}

impl EntropyCounter {
    pub fn add(&mut self, query: &str, url: &str) {
        *self.counts.entry(query.to_string()).or_default().entry(url.to_string()).or_default() += 1;
    }

    pub fn add_events(&mut self, events: &[RawEvent]) {
        for e in events {
            if let EventPayload::Click { query, url, .. } = &e.payload {
                self.add(query, url);
            }
        }
    }

    pub fn merge(&mut self, other: EntropyCounter) {
        for (q, urls) in other.counts {
            let slot = self.counts.entry(q).or_default();
            for (u, c) in urls {
                *slot.entry(u).or_default() += c;
            }
        }
    }

    pub fn finish(&self) -> QueryEntropyTable {
        let entries = self
            .counts
            .iter()
            .map(|(q, urls)| {
                let clicks = urls.values().sum();
                (
                    q.clone(),
                    QueryEntropy {
                        clicks,
                        distinct_urls: urls.len(),
                        entropy_bits: entropy_bits(urls.values().copied()),
                    },
                )
            })
            .collect();
        QueryEntropyTable { entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryEntropy {
    pub clicks: u64,
    pub distinct_urls: usize,
    pub entropy_bits: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryEntropyTable {
    entries: BTreeMap<String, QueryEntropy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub query: String,
    pub clicks: u64,
    pub entropy_bits: f64,
}

impl Row for EntropyRow {
    const HEADER: &'static [&'static str] = &["query", "clicks", "entropy_bits"];
}

impl QueryEntropyTable {
    pub fn get(&self, query: &str) -> Option<&QueryEntropy> {
        self.entries.get(query)
    }

    pub fn entropy(&self, query: &str) -> Option<f64> {
        self.entries.get(query).map(|e| e.entropy_bits)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &QueryEntropy)> {
        self.entries.iter().map(|(q, e)| (q.as_str(), e))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IoError> {
        io::write_rows(
            writer,
            LogFormat::Csv,
            self.entries.iter().map(|(q, e)| EntropyRow {
                query: q.clone(),
                clicks: e.clicks,
                entropy_bits: e.entropy_bits,
            }),
        )
    }

    /// Rebuild from an exported table. Distinct-URL counts are not stored
    /// and read back as zero.
    pub fn from_rows(rows: Vec<EntropyRow>) -> Self {
        let entries = rows
            .into_iter()
            .map(|r| (r.query, QueryEntropy { clicks: r.clicks, distinct_urls: 0, entropy_bits: r.entropy_bits }))
            .collect();
        QueryEntropyTable { entries }
    }
}

/// Entropy table over a click corpus: shards are counted in parallel and
/// merged in order.
pub fn click_entropy(events: &[RawEvent]) -> QueryEntropyTable {
    let parts: Vec<EntropyCounter> = events
        .par_chunks(4096)
        .map(|chunk| {
            let mut c = EntropyCounter::default();
            c.add_events(chunk);
            c
        })
        .collect();
    let mut all = EntropyCounter::default();
    for p in parts {
        all.merge(p);
    }
    all.finish()
}

pub const OTHER: &str = "OTHER";
pub const UNSEEN: &str = "UNSEEN";

/// Categorical coding of the control factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCoding {
    /// Upper edges of the finite entropy bins: `{0}`, `(0,e1]`, `(e1,e2]`, ..., `(last,inf)`.
    pub entropy_edges: Vec<f64>,
    /// Positions at or above this are pooled.
    pub position_cap: u32,
    pub key_min_count: u64,
    pub key_vocab: BTreeSet<KeyLabel>,
}

impl Default for FeatureCoding {
    fn default() -> Self {
        FeatureCoding { entropy_edges: vec![1.0, 2.0], position_cap: 10, key_min_count: 50, key_vocab: BTreeSet::new() }
    }
}

impl FeatureCoding {
    /// Keep key labels seen at least `key_min_count` times.
    pub fn with_key_counts(mut self, counts: &BTreeMap<KeyLabel, u64>) -> Self {
        self.key_vocab = counts.iter().filter(|(_, &c)| c >= self.key_min_count).map(|(k, _)| *k).collect();
        self
    }

    pub fn key_levels(&self) -> Vec<String> {
        self.key_vocab.iter().map(|k| k.to_string()).chain([OTHER.to_string()]).collect()
    }

    pub fn key_level(&self, label: KeyLabel) -> u32 {
        match self.key_vocab.iter().position(|k| *k == label) {
            Some(i) => i as u32,
            None => self.key_vocab.len() as u32,
        }
    }

    pub fn position_levels(&self) -> Vec<String> {
        (1..self.position_cap).map(|p| p.to_string()).chain([format!("{}+", self.position_cap)]).collect()
    }

    pub fn position_level(&self, position: u32) -> u32 {
        position.clamp(1, self.position_cap) - 1
    }

    pub fn entropy_levels(&self) -> Vec<String> {
        let mut out = vec!["0".to_string()];
        let mut lo = 0.0;
        for &e in &self.entropy_edges {
            out.push(format!("({lo},{e}]"));
            lo = e;
        }
        out.push(format!("({lo},inf)"));
        out.push(UNSEEN.to_string());
        out
    }

    pub fn entropy_level(&self, h: Option<f64>) -> u32 {
        let n_finite = self.entropy_edges.len() as u32 + 2;
        match h {
            None => n_finite,
            Some(h) if h <= 0.0 => 0,
            Some(h) => match self.entropy_edges.iter().position(|&e| h <= e) {
                Some(i) => i as u32 + 1,
                None => n_finite - 1,
            },
        }
    }

    /// `[k, t, w, d]` for the keystroke model.
    pub fn encode_keystroke(&self, o: &KeystrokeObservation) -> [FactorValue; 4] {
        let (w, d) = sleep_values(o.context.as_ref());
        [FactorValue::Level(self.key_level(o.key_label)), FactorValue::Num(o.local_time), w, d]
    }

    /// `[pos, ent, t, w, d]` for the click model.
    pub fn encode_click(&self, o: &ClickObservation, table: &QueryEntropyTable) -> [FactorValue; 5] {
        let (w, d) = sleep_values(o.context.as_ref());
        [
            FactorValue::Level(self.position_level(o.position)),
            FactorValue::Level(self.entropy_level(table.entropy(&o.query))),
            FactorValue::Num(o.local_time),
            w,
            d,
        ]
    }
}

fn sleep_values(ctx: Option<&crate::sleep::SleepContext>) -> (FactorValue, FactorValue) {
    match ctx {
        Some(c) => (FactorValue::Num(c.time_since_wake_h), FactorValue::Num(c.prev_duration_h)),
        None => (FactorValue::Missing, FactorValue::Missing),
    }
}

pub fn key_label_counts<'a, I: IntoIterator<Item = &'a KeystrokeObservation>>(obs: I) -> BTreeMap<KeyLabel, u64> {
    let mut m = BTreeMap::new();
    for o in obs {
        *m.entry(o.key_label).or_default() += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZExclusion {
    TooFewObservations,
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UserMoments {
    pub count: u64,
    pub mean: f64,
    pub sd: f64,
}

/// Per-user mean and population standard deviation, or why the user is left out.
pub fn user_moments<T: Measurement>(obs: &[T], min_count: usize) -> BTreeMap<String, Result<UserMoments, ZExclusion>> {
    let mut acc: BTreeMap<&str, RunningStats> = BTreeMap::new();
    for o in obs {
        acc.entry(o.user_id()).or_default().push(o.value());
    }
    acc.into_iter()
        .map(|(u, s)| {
            let r = if (s.count() as usize) < min_count {
                Err(ZExclusion::TooFewObservations)
            } else {
                let var = s.variance_pop().unwrap_or(0.0);
                if var > 0.0 {
                    Ok(UserMoments { count: s.count(), mean: s.mean().unwrap_or(0.0), sd: var.sqrt() })
                } else {
                    Err(ZExclusion::ZeroVariance)
                }
            };
            (u.to_string(), r)
        })
        .collect()
}

pub const DEFAULT_Z_MIN_COUNT: usize = 30;

/// Replace each value by its within-user z-score. Users below `min_count`
/// observations or with zero variance are dropped and listed.
pub fn within_user_zscore<T: Measurement + Clone>(
    obs: &[T],
    min_count: usize,
) -> (Vec<T>, BTreeMap<String, ZExclusion>) {
    let moments = user_moments(obs, min_count);
    let excluded = moments.iter().filter_map(|(u, r)| r.err().map(|e| (u.clone(), e))).collect();
    let out = obs
        .iter()
        .filter_map(|o| {
            let m = moments.get(o.user_id())?.ok()?;
            let mut z = o.clone();
            z.set_value((o.value() - m.mean) / m.sd);
            Some(z)
        })
        .collect();
    (out, excluded)
}

/// Mean value per local clock hour.
pub fn hourly_profile<T: Measurement>(obs: &[T]) -> Vec<Option<MeanCi>> {
    let mut acc = vec![RunningStats::new(); 24];
    for o in obs {
        acc[(o.local_time().floor() as usize).min(23)].push(o.value());
    }
    acc.iter().map(|s| s.summary()).collect()
}

/// Learning-effect diagnostic: mean click latency by how many times the user
/// had already issued the same query (1 = first time). Indices above `cap`
/// are pooled into `cap`.
pub fn learning_curve(clicks: &[ClickObservation], cap: usize) -> Vec<(usize, MeanCi)> {
    let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
    let mut acc = vec![RunningStats::new(); cap.max(1)];
    let mut order: Vec<&ClickObservation> = clicks.iter().collect();
    order.sort_by(|a, b| a.user_id.cmp(&b.user_id).then(a.ts_utc.cmp(&b.ts_utc)));
    for o in order {
        let k = seen.entry((o.user_id.as_str(), o.query.as_str())).or_default();
        *k += 1;
        acc[(*k).min(cap.max(1)) - 1].push(o.latency_s);
    }
    acc.iter().enumerate().filter_map(|(i, s)| s.summary().map(|m| (i + 1, m))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Device;
    use proptest::prelude::*;

    fn clicks(pairs: &[(&str, &str, usize)]) -> Vec<RawEvent> {
        let mut out = Vec::new();
        for &(q, u, n) in pairs {
            for _ in 0..n {
                out.push(RawEvent {
                    user_id: "u".into(),
                    ts_utc: 1,
                    device: Device::Desktop,
                    tz_offset_min: 0,
                    payload: EventPayload::Click { query: q.into(), url: u.into(), position: 1 },
                });
            }
        }
        out
    }

    #[test]
    fn entropy_examples() {
        let t = click_entropy(&clicks(&[
            ("nav", "a", 10),
            ("pair", "a", 5),
            ("pair", "b", 5),
            ("tri", "a", 2),
            ("tri", "b", 1),
            ("tri", "c", 1),
        ]));
        assert_eq!(t.entropy("nav"), Some(0.0));
        assert!((t.entropy("pair").unwrap() - 1.0).abs() < 1e-12);
        assert!((t.entropy("tri").unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(t.get("tri").unwrap().clicks, 4);
        assert_eq!(t.entropy("missing"), None);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("query,clicks,entropy_bits\nnav,10,0.0\n"));
    }

    #[test]
    fn coding_examples() {
        let c = FeatureCoding::default();
        assert_eq!(c.position_levels()[c.position_level(12) as usize], "10+");
        assert_eq!(c.position_levels()[c.position_level(3) as usize], "3");
        assert_eq!(c.entropy_levels()[c.entropy_level(Some(1.7)) as usize], "(1,2]");
        assert_eq!(c.entropy_levels()[c.entropy_level(Some(0.0)) as usize], "0");
        assert_eq!(c.entropy_levels()[c.entropy_level(Some(1.0)) as usize], "(0,1]");
        assert_eq!(c.entropy_levels()[c.entropy_level(Some(3.2)) as usize], "(2,inf)");
        assert_eq!(c.entropy_levels()[c.entropy_level(None) as usize], "UNSEEN");

        let counts: BTreeMap<KeyLabel, u64> =
            [(KeyLabel::Insert('a'), 120), (KeyLabel::Insert('q'), 3), (KeyLabel::Delete, 50)].into();
        let c = c.with_key_counts(&counts);
        let levels = c.key_levels();
        assert_eq!(levels[c.key_level(KeyLabel::Insert('q')) as usize], OTHER);
        assert_eq!(levels[c.key_level(KeyLabel::Delete) as usize], "DEL");
        assert_eq!(levels[c.key_level(KeyLabel::Insert('a')) as usize], "+a");
    }

    fn ks(user: &str, v: f64) -> KeystrokeObservation {
        KeystrokeObservation {
            user_id: user.into(),
            ts_utc: 1,
            tz_offset_min: 0,
            local_time: 10.0,
            latency_ms: v,
            key_label: KeyLabel::Delete,
            context: None,
        }
    }

    #[test]
    fn zscore_examples() {
        let obs = vec![
            ks("flat", 200.0),
            ks("flat", 200.0),
            ks("flat", 200.0),
            ks("two", 100.0),
            ks("two", 300.0),
            ks("few", 1.0),
        ];
        let (z, excl) = within_user_zscore(&obs, 2);
        assert_eq!(excl["flat"], ZExclusion::ZeroVariance);
        assert_eq!(excl["few"], ZExclusion::TooFewObservations);
        assert_eq!(z.len(), 2);
        assert!((z[1].latency_ms - 1.0).abs() < 1e-12);
        assert!((z[0].latency_ms + 1.0).abs() < 1e-12);
    }

    #[test]
    fn learning_curve_counts_repeats() {
        let mk = |ts: i64, q: &str, v: f64| ClickObservation {
            user_id: "u".into(),
            ts_utc: ts,
            tz_offset_min: 0,
            local_time: 1.0,
            latency_s: v,
            position: 1,
            query: q.into(),
            context: None,
        };
        let lc = learning_curve(&[mk(1, "a", 4.0), mk(2, "a", 2.0), mk(3, "b", 6.0), mk(4, "a", 1.0)], 2);
        assert_eq!(lc[0].0, 1);
        assert_eq!(lc[0].1.mean, 5.0);
        assert_eq!(lc[1].1.mean, 1.5);
    }

    proptest! {
        #[test]
        fn entropy_permutation_and_scale_invariant(counts in prop::collection::vec(1u64..50, 1..12), k in 1u64..5, rot in 0usize..12) {
            let h = entropy_bits(counts.iter().copied());
            let mut r = counts.clone();
            let n = r.len();
            r.rotate_left(rot % n);
            prop_assert!((entropy_bits(r.iter().copied()) - h).abs() < 1e-12);
            prop_assert!((entropy_bits(counts.iter().map(|c| c * k)) - h).abs() < 1e-12);
            prop_assert!(h >= 0.0 && h <= (n as f64).log2() + 1e-12);
            prop_assert_eq!(h == 0.0, n == 1);
        }

        #[test]
        fn zscores_are_standardised(vals in prop::collection::vec(0.0f64..1000.0, 30..80), shift in -100.0f64..100.0) {
            let obs: Vec<_> = vals.iter().map(|&v| ks("u", v)).collect();
            let (z, excl) = within_user_zscore(&obs, 30);
            prop_assume!(excl.is_empty());
            let s: RunningStats = z.iter().map(|o| o.latency_ms).collect();
            prop_assert!(s.mean().unwrap().abs() < 1e-9);
            prop_assert!((s.variance_pop().unwrap() - 1.0).abs() < 1e-9);
            let shifted: Vec<_> = vals.iter().map(|&v| ks("u", v + shift)).collect();
            let (z2, _) = within_user_zscore(&shifted, 30);
            for (a, b) in z.iter().zip(&z2) {
                prop_assert!((a.latency_ms - b.latency_ms).abs() < 1e-6);
            }
        }

        #[test]
        fn every_value_gets_one_level(h in prop::option::of(0.0f64..10.0), pos in 1u32..50) {
            let c = FeatureCoding::default();
            prop_assert!((c.entropy_level(h) as usize) < c.entropy_levels().len());
            prop_assert!((c.position_level(pos) as usize) < c.position_levels().len());
        }
    }
}
