//! Raw interaction logs and latency extraction.
//!
//! Keystroke latency is the gap between two consecutive partial-query requests
//! that differ by one inserted or deleted character, kept when the gap is at
//! most two seconds. Click latency is the gap between an impression and the
//! first click on a result for the same query, kept up to two minutes.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError, LogFormat, Parsed, Row};
use crate::sleep::{NightClass, SleepContext};
use crate::time::local_hour;

/// Inclusive upper bound on keystroke latency.
pub const MAX_KEYSTROKE_MS: i64 = 2_000;
/// Inclusive upper bound on click latency; anything longer is dropped.
pub const MAX_CLICK_MS: i64 = 120_000;
const MAX_TZ_OFFSET_MIN: i32 = 14 * 60;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("events for user `{user}` are not sorted by ts_utc (index {index})")]
    Unsorted { user: String, index: usize },
    #[error("event stream mixes users `{first}` and `{other}`")]
    MixedUsers { first: String, other: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    KeystrokeRequest,
    Impression,
    Click,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    Desktop,
    Mobile,
}

/// Kind-specific payload; the variant fixes which optional fields exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPayload {
    KeystrokeRequest { partial_query: String },
    Impression { query: String },
    Click { query: String, url: String, position: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEvent {
    pub user_id: String,
    pub ts_utc: i64,
    pub device: Device,
    pub tz_offset_min: i32,
    pub payload: EventPayload,
}

impl RawEvent {
    pub fn kind(&self) -> EventKind {
        match self.payload {
            EventPayload::KeystrokeRequest { .. } => EventKind::KeystrokeRequest,
            EventPayload::Impression { .. } => EventKind::Impression,
            EventPayload::Click { .. } => EventKind::Click,
        }
    }

    pub fn local_time(&self) -> f64 {
        local_hour(self.ts_utc, self.tz_offset_min)
    }
}

/// Flat wire form of [`RawEvent`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRow {
    pub user_id: String,
    pub ts_utc: i64,
    pub kind: EventKind,
    #[serde(default)]
    pub partial_query: Option<String>,
    #[serde(default)]
    pub query: Option<String>,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub position: Option<i64>,
    pub device: Device,
    pub tz_offset_min: i32,
}

impl Row for EventRow {
    const HEADER: &'static [&'static str] =
        &["user_id", "ts_utc", "kind", "partial_query", "query", "url", "position", "device", "tz_offset_min"];
}

impl TryFrom<EventRow> for RawEvent {
    type Error = String;

    fn try_from(r: EventRow) -> Result<Self, String> {
        if r.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        if r.ts_utc <= 0 {
            return Err(format!("ts_utc must be positive, got {}", r.ts_utc));
        }
        if r.tz_offset_min.abs() > MAX_TZ_OFFSET_MIN {
            return Err(format!("tz_offset_min {} out of range", r.tz_offset_min));
        }
        let payload = match r.kind {
            EventKind::KeystrokeRequest => match (r.partial_query, r.query, r.url, r.position) {
                (Some(partial_query), None, None, None) => EventPayload::KeystrokeRequest { partial_query },
                _ => return Err("keystroke_request needs exactly partial_query".into()),
            },
            EventKind::Impression => match (r.partial_query, r.query, r.url, r.position) {
                (None, Some(query), None, None) => EventPayload::Impression { query },
                _ => return Err("impression needs exactly query".into()),
            },
            EventKind::Click => match (r.partial_query, r.query, r.url, r.position) {
                (None, Some(query), Some(url), Some(pos)) => {
                    let position = u32::try_from(pos)
                        .ok()
                        .filter(|p| *p >= 1)
                        .ok_or_else(|| format!("position must be >= 1, got {pos}"))?;
                    EventPayload::Click { query, url, position }
                }
                _ => return Err("click needs exactly query, url and position".into()),
            },
        };
        Ok(RawEvent { user_id: r.user_id, ts_utc: r.ts_utc, device: r.device, tz_offset_min: r.tz_offset_min, payload })
    }
}

impl From<&RawEvent> for EventRow {
    fn from(e: &RawEvent) -> Self {
        let mut row = EventRow {
            user_id: e.user_id.clone(),
            ts_utc: e.ts_utc,
            kind: e.kind(),
            partial_query: None,
            query: None,
            url: None,
            position: None,
            device: e.device,
            tz_offset_min: e.tz_offset_min,
        };
        match &e.payload {
            EventPayload::KeystrokeRequest { partial_query } => row.partial_query = Some(partial_query.clone()),
            EventPayload::Impression { query } => row.query = Some(query.clone()),
            EventPayload::Click { query, url, position } => {
                row.query = Some(query.clone());
                row.url = Some(url.clone());
                row.position = Some(i64::from(*position));
            }
        }
        row
    }
}

/// Parse a line-delimited event log. Malformed lines are counted, not fatal.
pub fn parse_events<R: BufRead>(reader: R, format: LogFormat) -> Result<Parsed<RawEvent>, IngestError> {
    Ok(io::read_validated::<_, EventRow, _, _>(reader, format, RawEvent::try_from)?)
}

pub fn write_events<W: Write>(writer: W, format: LogFormat, events: &[RawEvent]) -> Result<(), IoError> {
    io::write_rows(writer, format, events.iter().map(EventRow::from))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DeviceFilterStats {
    pub kept: usize,
    pub dropped_mobile: usize,
}

/// Keep desktop events only.
pub fn filter_device(events: Vec<RawEvent>) -> (Vec<RawEvent>, DeviceFilterStats) {
    let total = events.len();
    let kept: Vec<RawEvent> = events.into_iter().filter(|e| e.device == Device::Desktop).collect();
    let stats = DeviceFilterStats { kept: kept.len(), dropped_mobile: total - kept.len() };
    (kept, stats)
}

/// The single edit that turned one partial query into the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyLabel {
    Insert(char),
    Delete,
}

impl fmt::Display for KeyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyLabel::Insert(c) => write!(f, "+{c}"),
            KeyLabel::Delete => f.write_str("DEL"),
        }
    }
}

impl FromStr for KeyLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "DEL" {
            return Ok(KeyLabel::Delete);
        }
        let mut chars = s.chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some('+'), Some(c), None) => Ok(KeyLabel::Insert(c)),
            _ => Err(format!("invalid key label `{s}`")),
        }
    }
}

impl Serialize for KeyLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KeyLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Classify `next` as a one-character insertion into, or deletion from,
/// `prev`. Substitutions and larger edits yield `None`. With `suffix_only`
/// only appends and trailing backspaces qualify.
pub fn classify_edit(prev: &str, next: &str, suffix_only: bool) -> Option<KeyLabel> {
    let p: Vec<char> = prev.chars().collect();
    let q: Vec<char> = next.chars().collect();
    let (short, long, inserted) = if q.len() == p.len() + 1 {
        (&p, &q, true)
    } else if p.len() == q.len() + 1 {
        (&q, &p, false)
    } else {
        return None;
    };
    let split = short.iter().zip(long.iter()).take_while(|(a, b)| a == b).count();
    if short[split..] != long[split + 1..] {
        return None;
    }
    if suffix_only && split != short.len() {
        return None;
    }
    Some(if inserted { KeyLabel::Insert(long[split]) } else { KeyLabel::Delete })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KeystrokeOptions {
    /// Only accept edits at the end of the partial query.
    pub suffix_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeystrokeObservation {
    pub user_id: String,
    /// Timestamp of the second request of the pair.
    pub ts_utc: i64,
    pub tz_offset_min: i32,
    pub local_time: f64,
    pub latency_ms: f64,
    pub key_label: KeyLabel,
    pub context: Option<SleepContext>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickObservation {
    pub user_id: String,
    pub ts_utc: i64,
    pub tz_offset_min: i32,
    pub local_time: f64,
    pub latency_s: f64,
    pub position: u32,
    pub query: String,
    pub context: Option<SleepContext>,
}

fn check_stream(events: &[RawEvent]) -> Result<(), IngestError> {
    let Some(first) = events.first() else { return Ok(()) };
    for (i, w) in events.windows(2).enumerate() {
        if w[1].user_id != first.user_id {
            return Err(IngestError::MixedUsers { first: first.user_id.clone(), other: w[1].user_id.clone() });
        }
        if w[1].ts_utc < w[0].ts_utc {
            return Err(IngestError::Unsorted { user: first.user_id.clone(), index: i + 1 });
        }
    }
    Ok(())
}

/// Keystroke latencies for one user's time-ordered events.
pub fn extract_keystrokes(
    events: &[RawEvent],
    opts: &KeystrokeOptions,
) -> Result<Vec<KeystrokeObservation>, IngestError> {
    check_stream(events)?;
    let mut out = Vec::new();
    let mut prev: Option<(&str, i64)> = None;
    for e in events {
        let EventPayload::KeystrokeRequest { partial_query } = &e.payload else { continue };
        if let Some((q1, t1)) = prev {
            let dt = e.ts_utc - t1;
            if dt > 0 && dt <= MAX_KEYSTROKE_MS {
                if let Some(label) = classify_edit(q1, partial_query, opts.suffix_only) {
                    out.push(KeystrokeObservation {
                        user_id: e.user_id.clone(),
                        ts_utc: e.ts_utc,
                        tz_offset_min: e.tz_offset_min,
                        local_time: e.local_time(),
                        latency_ms: dt as f64,
                        key_label: label,
                        context: None,
                    });
                }
            }
        }
        prev = Some((partial_query.as_str(), e.ts_utc));
    }
    Ok(out)
}

/// First-click latencies for one user's time-ordered events.
pub fn extract_clicks(events: &[RawEvent]) -> Result<Vec<ClickObservation>, IngestError> {
    check_stream(events)?;
    let mut out = Vec::new();
    let mut pending: Option<(&str, i64)> = None;
    for e in events {
        match &e.payload {
            EventPayload::Impression { query } => pending = Some((query.as_str(), e.ts_utc)),
            EventPayload::Click { query, position, .. } => {
                let Some((q, t0)) = pending else { continue };
                if q != query {
                    continue;
                }
                pending = None;
                let dt = e.ts_utc - t0;
                if dt > 0 && dt <= MAX_CLICK_MS {
                    out.push(ClickObservation {
                        user_id: e.user_id.clone(),
                        ts_utc: e.ts_utc,
                        tz_offset_min: e.tz_offset_min,
                        local_time: e.local_time(),
                        latency_s: dt as f64 / 1000.0,
                        position: *position,
                        query: query.clone(),
                        context: None,
                    });
                }
            }
            EventPayload::KeystrokeRequest { .. } => {}
        }
    }
    Ok(out)
}

/// Common view over keystroke and click observations.
pub trait Measurement {
    fn user_id(&self) -> &str;
    fn ts_utc(&self) -> i64;
    fn local_time(&self) -> f64;
    fn value(&self) -> f64;
    fn set_value(&mut self, v: f64);
    fn context(&self) -> Option<&SleepContext>;
    fn set_context(&mut self, ctx: Option<SleepContext>);
}

macro_rules! impl_measurement {
    ($ty:ty, $field:ident) => {
        impl Measurement for $ty {
            fn user_id(&self) -> &str {
                &self.user_id
            }
            fn ts_utc(&self) -> i64 {
                self.ts_utc
            }
            fn local_time(&self) -> f64 {
                self.local_time
            }
            fn value(&self) -> f64 {
                self.$field
            }
            fn set_value(&mut self, v: f64) {
                self.$field = v;
            }
            fn context(&self) -> Option<&SleepContext> {
                self.context.as_ref()
            }
            fn set_context(&mut self, ctx: Option<SleepContext>) {
                self.context = ctx;
            }
        }
    };
}

impl_measurement!(KeystrokeObservation, latency_ms);
impl_measurement!(ClickObservation, latency_s);

/// Sleep-context columns shared by the observation tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContextColumns {
    pub time_since_wake_h: Option<f64>,
    pub prev_duration_h: Option<f64>,
    pub midpoint_dev_h: Option<f64>,
    pub night_class: Option<NightClass>,
    pub night_index: Option<usize>,
    pub wake_free_day: Option<bool>,
}

impl ContextColumns {
    fn from_context(ctx: Option<&SleepContext>) -> Self {
        match ctx {
            None => Self::default(),
            Some(c) => Self {
                time_since_wake_h: Some(c.time_since_wake_h),
                prev_duration_h: Some(c.prev_duration_h),
                midpoint_dev_h: Some(c.midpoint_dev_h),
                night_class: Some(c.night_class),
                night_index: Some(c.night_index),
                wake_free_day: Some(c.wake_free_day),
            },
        }
    }

    fn into_context(self) -> Result<Option<SleepContext>, String> {
        match (
            self.time_since_wake_h,
            self.prev_duration_h,
            self.midpoint_dev_h,
            self.night_class,
            self.night_index,
            self.wake_free_day,
        ) {
            (None, None, None, None, None, None) => Ok(None),
            (Some(w), Some(d), Some(m), Some(c), Some(i), Some(f)) => Ok(Some(SleepContext {
                time_since_wake_h: w,
                prev_duration_h: d,
                midpoint_dev_h: m,
                night_class: c,
                night_index: i,
                wake_free_day: f,
            })),
            _ => Err("partially filled sleep context".into()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeystrokeRow {
    pub user_id: String,
    pub ts_utc: i64,
    pub tz_offset_min: i32,
    pub local_time: f64,
    pub latency_ms: f64,
    pub key_label: KeyLabel,
    pub time_since_wake_h: Option<f64>,
    pub prev_duration_h: Option<f64>,
    pub midpoint_dev_h: Option<f64>,
    pub night_class: Option<NightClass>,
    pub night_index: Option<usize>,
    pub wake_free_day: Option<bool>,
}

impl Row for KeystrokeRow {
    const HEADER: &'static [&'static str] = &[
        "user_id",
        "ts_utc",
        "tz_offset_min",
        "local_time",
        "latency_ms",
        "key_label",
        "time_since_wake_h",
        "prev_duration_h",
        "midpoint_dev_h",
        "night_class",
        "night_index",
        "wake_free_day",
    ];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClickRow {
    pub user_id: String,
    pub ts_utc: i64,
    pub tz_offset_min: i32,
    pub local_time: f64,
    pub latency_s: f64,
    pub position: u32,
    pub query: String,
    pub time_since_wake_h: Option<f64>,
    pub prev_duration_h: Option<f64>,
    pub midpoint_dev_h: Option<f64>,
    pub night_class: Option<NightClass>,
    pub night_index: Option<usize>,
    pub wake_free_day: Option<bool>,
}

impl Row for ClickRow {
    const HEADER: &'static [&'static str] = &[
        "user_id",
        "ts_utc",
        "tz_offset_min",
        "local_time",
        "latency_s",
        "position",
        "query",
        "time_since_wake_h",
        "prev_duration_h",
        "midpoint_dev_h",
        "night_class",
        "night_index",
        "wake_free_day",
    ];
}

impl From<&KeystrokeObservation> for KeystrokeRow {
    fn from(o: &KeystrokeObservation) -> Self {
        let c = ContextColumns::from_context(o.context.as_ref());
        KeystrokeRow {
            user_id: o.user_id.clone(),
            ts_utc: o.ts_utc,
            tz_offset_min: o.tz_offset_min,
            local_time: o.local_time,
            latency_ms: o.latency_ms,
            key_label: o.key_label,
            time_since_wake_h: c.time_since_wake_h,
            prev_duration_h: c.prev_duration_h,
            midpoint_dev_h: c.midpoint_dev_h,
            night_class: c.night_class,
            night_index: c.night_index,
            wake_free_day: c.wake_free_day,
        }
    }
}

impl TryFrom<KeystrokeRow> for KeystrokeObservation {
    type Error = String;

    fn try_from(r: KeystrokeRow) -> Result<Self, String> {
        if !(r.latency_ms > 0.0) {
            return Err(format!("latency_ms must be positive, got {}", r.latency_ms));
        }
        let context = ContextColumns {
            time_since_wake_h: r.time_since_wake_h,
            prev_duration_h: r.prev_duration_h,
            midpoint_dev_h: r.midpoint_dev_h,
            night_class: r.night_class,
            night_index: r.night_index,
            wake_free_day: r.wake_free_day,
        }
        .into_context()?;
        Ok(KeystrokeObservation {
            user_id: r.user_id,
            ts_utc: r.ts_utc,
            tz_offset_min: r.tz_offset_min,
            local_time: r.local_time,
            latency_ms: r.latency_ms,
            key_label: r.key_label,
            context,
        })
    }
}

impl From<&ClickObservation> for ClickRow {
    fn from(o: &ClickObservation) -> Self {
        let c = ContextColumns::from_context(o.context.as_ref());
        ClickRow {
            user_id: o.user_id.clone(),
            ts_utc: o.ts_utc,
            tz_offset_min: o.tz_offset_min,
            local_time: o.local_time,
            latency_s: o.latency_s,
            position: o.position,
            query: o.query.clone(),
            time_since_wake_h: c.time_since_wake_h,
            prev_duration_h: c.prev_duration_h,
            midpoint_dev_h: c.midpoint_dev_h,
            night_class: c.night_class,
            night_index: c.night_index,
            wake_free_day: c.wake_free_day,
        }
    }
}

impl TryFrom<ClickRow> for ClickObservation {
    type Error = String;

    fn try_from(r: ClickRow) -> Result<Self, String> {
        if !(r.latency_s > 0.0) {
            return Err(format!("latency_s must be positive, got {}", r.latency_s));
        }
        let context = ContextColumns {
            time_since_wake_h: r.time_since_wake_h,
            prev_duration_h: r.prev_duration_h,
            midpoint_dev_h: r.midpoint_dev_h,
            night_class: r.night_class,
            night_index: r.night_index,
            wake_free_day: r.wake_free_day,
        }
        .into_context()?;
        Ok(ClickObservation {
            user_id: r.user_id,
            ts_utc: r.ts_utc,
            tz_offset_min: r.tz_offset_min,
            local_time: r.local_time,
            latency_s: r.latency_s,
            position: r.position,
            query: r.query,
            context,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ks(user: &str, q: &str, ts: i64) -> RawEvent {
        RawEvent {
            user_id: user.into(),
            ts_utc: ts,
            device: Device::Desktop,
            tz_offset_min: 0,
            payload: EventPayload::KeystrokeRequest { partial_query: q.into() },
        }
    }

    fn imp(q: &str, ts: i64) -> RawEvent {
        RawEvent {
            user_id: "u".into(),
            ts_utc: ts,
            device: Device::Desktop,
            tz_offset_min: 0,
            payload: EventPayload::Impression { query: q.into() },
        }
    }

    fn click(q: &str, ts: i64, position: u32) -> RawEvent {
        RawEvent {
            user_id: "u".into(),
            ts_utc: ts,
            device: Device::Desktop,
            tz_offset_min: 0,
            payload: EventPayload::Click { query: q.into(), url: format!("https://x/{position}"), position },
        }
    }

    const VALID: &str = r#"{"user_id":"u1","ts_utc":1000,"kind":"keystroke_request","partial_query":"fa","device":"desktop","tz_offset_min":-300}
{"user_id":"u1","ts_utc":2000,"kind":"impression","query":"facebook","device":"desktop","tz_offset_min":-300}
{"user_id":"u1","ts_utc":5000,"kind":"click","query":"facebook","url":"https://facebook.com","position":1,"device":"mobile","tz_offset_min":-300}
"#;

    #[test]
    fn parse_valid_file() {
        let p = parse_events(VALID.as_bytes(), LogFormat::Jsonl).unwrap();
        assert_eq!(p.items.len(), 3);
        assert_eq!(p.malformed, 0);
        assert_eq!(p.items[2].kind(), EventKind::Click);
    }

    #[test]
    fn parse_counts_corrupt_line() {
        let mut lines: Vec<&str> = VALID.lines().collect();
        lines[1] = r#"{"user_id":"u1","ts_utc":2000,"kind":"impression","device":"desktop","tz_offset_min":0}"#;
        let text = lines.join("\n");
        let p = parse_events(text.as_bytes(), LogFormat::Jsonl).unwrap();
        assert_eq!(p.items.len(), 2);
        assert_eq!(p.malformed, 1);
    }

    #[test]
    fn parse_empty_file() {
        let p = parse_events(&b""[..], LogFormat::Jsonl).unwrap();
        assert!(p.items.is_empty());
        assert_eq!(p.malformed, 0);
        let p = parse_events(&b""[..], LogFormat::Csv).unwrap();
        assert!(p.items.is_empty());
    }

    #[test]
    fn invariant_violations_are_malformed() {
        let bad = [
            r#"{"user_id":"u","ts_utc":0,"kind":"impression","query":"a","device":"desktop","tz_offset_min":0}"#,
            r#"{"user_id":"u","ts_utc":5,"kind":"click","query":"a","url":"b","position":0,"device":"desktop","tz_offset_min":0}"#,
            r#"{"user_id":"u","ts_utc":5,"kind":"impression","query":"a","device":"desktop","tz_offset_min":900}"#,
            r#"{"user_id":"u","ts_utc":5,"kind":"impression","query":"a","url":"b","device":"desktop","tz_offset_min":0}"#,
            r#"{"user_id":"u","ts_utc":5,"kind":"swipe","device":"desktop","tz_offset_min":0}"#,
        ];
        let p = parse_events(bad.join("\n").as_bytes(), LogFormat::Jsonl).unwrap();
        assert_eq!(p.items.len(), 0);
        assert_eq!(p.malformed, 5);
    }

    #[test]
    fn csv_round_trip() {
        let events = parse_events(VALID.as_bytes(), LogFormat::Jsonl).unwrap().items;
        let mut buf = Vec::new();
        write_events(&mut buf, LogFormat::Csv, &events).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("user_id,ts_utc,kind,partial_query,query,url,position,device,tz_offset_min\n"));
        let back = parse_events(&buf[..], LogFormat::Csv).unwrap();
        assert_eq!(back.malformed, 0);
        assert_eq!(back.items, events);
    }

    #[test]
    fn device_filter() {
        let mut evs = vec![ks("u", "a", 1), ks("u", "ab", 2), ks("u", "abc", 3)];
        evs[1].device = Device::Mobile;
        let (kept, st) = filter_device(evs.clone());
        assert_eq!(kept.len(), 2);
        assert_eq!(st.dropped_mobile, 1);

        let all_mobile: Vec<_> = evs
            .iter()
            .cloned()
            .map(|mut e| {
                e.device = Device::Mobile;
                e
            })
            .collect();
        assert!(filter_device(all_mobile).0.is_empty());

        let desktop = vec![ks("u", "a", 1), ks("u", "ab", 2)];
        assert_eq!(filter_device(desktop.clone()).0, desktop);
    }

    #[test]
    fn keystroke_examples() {
        let obs = extract_keystrokes(&[ks("u", "faceb", 1000), ks("u", "facebo", 1210)], &Default::default()).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].latency_ms, 210.0);
        assert_eq!(obs[0].key_label.to_string(), "+o");

        let slow = extract_keystrokes(&[ks("u", "faceb", 1000), ks("u", "facebo", 3500)], &Default::default()).unwrap();
        assert!(slow.is_empty());

        let far = extract_keystrokes(&[ks("u", "cat", 1000), ks("u", "dog", 1100)], &Default::default()).unwrap();
        assert!(far.is_empty());
    }

    #[test]
    fn keystroke_thresholds_and_duplicates() {
        let at_limit = extract_keystrokes(&[ks("u", "a", 1000), ks("u", "ab", 3000)], &Default::default()).unwrap();
        assert_eq!(at_limit.len(), 1);
        let dup = extract_keystrokes(&[ks("u", "a", 1000), ks("u", "ab", 1000)], &Default::default()).unwrap();
        assert!(dup.is_empty());
    }

    #[test]
    fn edit_classifier() {
        assert_eq!(classify_edit("face", "faces", false), Some(KeyLabel::Insert('s')));
        assert_eq!(classify_edit("face", "fac", false), Some(KeyLabel::Delete));
        assert_eq!(classify_edit("fce", "face", false), Some(KeyLabel::Insert('a')));
        assert_eq!(classify_edit("fce", "face", true), None);
        assert_eq!(classify_edit("face", "fce", true), None);
        assert_eq!(classify_edit("face", "fact", false), None);
        assert_eq!(classify_edit("", "F", false), Some(KeyLabel::Insert('F')));
        assert_eq!(classify_edit("ab", "ab ", false), Some(KeyLabel::Insert(' ')));
        assert_eq!(classify_edit("é", "éa", false), Some(KeyLabel::Insert('a')));
    }

    #[test]
    fn key_label_text_round_trip() {
        for l in [KeyLabel::Insert('a'), KeyLabel::Insert('A'), KeyLabel::Insert(' '), KeyLabel::Delete] {
            assert_eq!(l.to_string().parse::<KeyLabel>().unwrap(), l);
        }
        assert!("+ab".parse::<KeyLabel>().is_err());
    }

    #[test]
    fn unsorted_is_contract_violation() {
        let err = extract_keystrokes(&[ks("u", "ab", 2000), ks("u", "a", 1000)], &Default::default()).unwrap_err();
        assert!(matches!(err, IngestError::Unsorted { index: 1, .. }));
        assert!(matches!(extract_clicks(&[imp("q", 10), imp("q", 5)]), Err(IngestError::Unsorted { .. })));
        let err = extract_keystrokes(&[ks("u", "a", 1), ks("v", "ab", 2)], &Default::default()).unwrap_err();
        assert!(matches!(err, IngestError::MixedUsers { .. }));
    }

    #[test]
    fn click_examples() {
        let obs = extract_clicks(&[imp("q", 1000), click("q", 5000, 2), click("q", 10_000, 1)]).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].latency_s, 4.0);
        assert_eq!(obs[0].position, 2);

        let none = extract_clicks(&[imp("q", 1000), imp("r", 3000), click("q", 4000, 1)]).unwrap();
        assert!(none.is_empty());

        let slow = extract_clicks(&[imp("q", 1000), click("q", 131_000, 1)]).unwrap();
        assert!(slow.is_empty());
        let limit = extract_clicks(&[imp("q", 1000), click("q", 121_000, 1)]).unwrap();
        assert_eq!(limit.len(), 1);
    }

    fn stream_strategy() -> impl Strategy<Value = Vec<RawEvent>> {
        prop::collection::vec((0i64..3000, 0u8..6, "[ab]{0,4}", 1u32..12), 0..60).prop_map(|steps| {
            let mut ts = 1i64;
            steps
                .into_iter()
                .map(|(dt, kind, q, pos)| {
                    ts += dt * 50;
                    match kind {
                        0..=2 => ks("u", &q, ts),
                        3 => imp(&q, ts),
                        _ => click(&q, ts, pos),
                    }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn latency_bounds_hold(events in stream_strategy()) {
            for o in extract_keystrokes(&events, &Default::default()).unwrap() {
                prop_assert!(o.latency_ms > 0.0 && o.latency_ms <= 2000.0);
            }
            for o in extract_clicks(&events).unwrap() {
                prop_assert!(o.latency_s > 0.0 && o.latency_s <= 120.0);
            }
        }

        #[test]
        fn substitutions_never_observed(a in "[a-z]{1,8}", idx in 0usize..8, c in "[a-z]") {
            let idx = idx % a.len();
            let mut chars: Vec<char> = a.chars().collect();
            let c = c.chars().next().unwrap();
            prop_assume!(chars[idx] != c);
            chars[idx] = c;
            let b: String = chars.into_iter().collect();
            let obs = extract_keystrokes(&[ks("u", &a, 1000), ks("u", &b, 1200)], &Default::default()).unwrap();
            prop_assert!(obs.is_empty());
        }

        #[test]
        fn sessions_split_by_gap(a in stream_strategy(), b in stream_strategy()) {
            let a: Vec<RawEvent> = a.into_iter().filter(|e| e.kind() == EventKind::KeystrokeRequest).collect();
            let b: Vec<RawEvent> = b.into_iter().filter(|e| e.kind() == EventKind::KeystrokeRequest).collect();
            let offset = a.last().map_or(0, |e| e.ts_utc) + 2001;
            let b: Vec<RawEvent> = b.into_iter().map(|mut e| { e.ts_utc += offset; e }).collect();
            let joined: Vec<RawEvent> = a.iter().chain(b.iter()).cloned().collect();
            let opts = KeystrokeOptions::default();
            let mut expect = extract_keystrokes(&a, &opts).unwrap();
            expect.extend(extract_keystrokes(&b, &opts).unwrap());
            prop_assert_eq!(extract_keystrokes(&joined, &opts).unwrap(), expect);
        }
    }
}
