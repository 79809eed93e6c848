//! Local clock conversions. Offsets are applied as given; no DST inference.

use chrono::{DateTime, Datelike, NaiveDate, Weekday};

pub const MS_PER_HOUR: f64 = 3_600_000.0;
pub const MS_PER_DAY: i64 = 86_400_000;

/// Milliseconds since epoch shifted into the local wall clock.
#[inline]
pub fn local_ms(ts_utc: i64, tz_offset_min: i32) -> i64 {
    ts_utc + i64::from(tz_offset_min) * 60_000
}

/// Fractional local clock hour in `[0, 24)`.
#[inline]
pub fn local_hour(ts_utc: i64, tz_offset_min: i32) -> f64 {
    local_ms(ts_utc, tz_offset_min).rem_euclid(MS_PER_DAY) as f64 / MS_PER_HOUR
}

/// Calendar date of the local wall clock.
pub fn local_date(ts_utc: i64, tz_offset_min: i32) -> NaiveDate {
    DateTime::from_timestamp_millis(local_ms(ts_utc, tz_offset_min)).map(|dt| dt.date_naive()).unwrap_or(NaiveDate::MIN)
}

pub fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// UTC milliseconds of local midnight starting `date`.
pub fn local_midnight_utc(date: NaiveDate, tz_offset_min: i32) -> i64 {
    let days = date.signed_duration_since(NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch")).num_days();
    days * MS_PER_DAY - i64::from(tz_offset_min) * 60_000
}
