//! Whole-dataset wiring: group events by user, extract latencies, link sleep.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::events::{
    extract_clicks, extract_keystrokes, filter_device, ClickObservation, IngestError, KeystrokeObservation,
    KeystrokeOptions, Measurement, RawEvent,
};
use crate::sleep::{group_by_user, validate_sleep, MidsleepBaseline, SleepRecord, UserSleep};

/// Split events by user, each stream stably sorted by timestamp.
pub fn group_events(events: Vec<RawEvent>) -> BTreeMap<String, Vec<RawEvent>> {
    let mut by_user: BTreeMap<String, Vec<RawEvent>> = BTreeMap::new();
    for e in events {
        by_user.entry(e.user_id.clone()).or_default().push(e);
    }
    for v in by_user.values_mut() {
        v.sort_by_key(|e| e.ts_utc);
    }
    by_user
}

/// Attach the sleep context of each observation.
pub fn link<T: Measurement>(obs: &mut [T], sleep: Option<&UserSleep>) {
    for o in obs {
        let ctx = sleep.and_then(|s| s.context_at(o.ts_utc()));
        o.set_context(ctx);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserObservations {
    pub user_id: String,
    pub keystrokes: Vec<KeystrokeObservation>,
    pub clicks: Vec<ClickObservation>,
}

/// Extract and link one user's time-ordered desktop events.
pub fn process_user(
    events: &[RawEvent],
    sleep: Option<&UserSleep>,
    opts: &KeystrokeOptions,
) -> Result<UserObservations, IngestError> {
    let mut keystrokes = extract_keystrokes(events, opts)?;
    let mut clicks = extract_clicks(events)?;
    link(&mut keystrokes, sleep);
    link(&mut clicks, sleep);
    Ok(UserObservations { user_id: events.first().map(|e| e.user_id.clone()).unwrap_or_default(), keystrokes, clicks })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExtractStats {
    pub users: usize,
    pub events: usize,
    pub dropped_mobile: usize,
    pub keystrokes: usize,
    pub clicks: usize,
    pub keystrokes_linked: usize,
    pub clicks_linked: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Extracted {
    pub keystrokes: Vec<KeystrokeObservation>,
    pub clicks: Vec<ClickObservation>,
    pub stats: ExtractStats,
}

/// Device filter, per-user extraction in parallel, and sleep linkage.
/// Output is ordered by user id, then time.
pub fn extract_all(
    events: Vec<RawEvent>,
    sleep: &BTreeMap<String, UserSleep>,
    opts: &KeystrokeOptions,
) -> Result<Extracted, IngestError> {
    let total = events.len();
    let (events, dev) = filter_device(events);
    let grouped: Vec<(String, Vec<RawEvent>)> = group_events(events).into_iter().collect();
    let per_user: Vec<UserObservations> =
        grouped.par_iter().map(|(u, ev)| process_user(ev, sleep.get(u), opts)).collect::<Result<_, _>>()?;
    let mut out = Extracted::default();
    out.stats.users = per_user.len();
    out.stats.events = total;
    out.stats.dropped_mobile = dev.dropped_mobile;
    for u in per_user {
        out.keystrokes.extend(u.keystrokes);
        out.clicks.extend(u.clicks);
    }
    out.stats.keystrokes = out.keystrokes.len();
    out.stats.clicks = out.clicks.len();
    out.stats.keystrokes_linked = out.keystrokes.iter().filter(|o| o.context.is_some()).count();
    out.stats.clicks_linked = out.clicks.iter().filter(|o| o.context.is_some()).count();
    Ok(out)
}

/// Validate sleep records and index them by user.
pub fn prepare_sleep(records: Vec<SleepRecord>, baseline: MidsleepBaseline) -> (BTreeMap<String, UserSleep>, usize) {
    let v = validate_sleep(records);
    let rejected = v.rejected.len();
    (group_by_user(v.kept, baseline), rejected)
}

/// Consecutive runs of observations sharing a user id.
pub fn by_user<T: Measurement>(obs: &[T]) -> Vec<(&str, &[T])> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=obs.len() {
        if i == obs.len() || obs[i].user_id() != obs[start].user_id() {
            if i > start {
                out.push((obs[start].user_id(), &obs[start..i]));
            }
            start = i;
        }
    }
    out
}
