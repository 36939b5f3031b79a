//! Clocks and timestamp formatting.
//!
//! Everything that waits (rate limiting, retry backoff) goes through [`Clock`]
//! so tests can run against simulated time.

use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, SecondsFormat, TimeZone, Utc};

use crate::error::{Error, Result};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Simulated clock: `sleep` advances time instantly and is recorded.
#[derive(Debug)]
pub struct SimClock {
    state: Mutex<SimState>,
}

#[derive(Debug)]
struct SimState {
    now: DateTime<Utc>,
    sleeps: Vec<Duration>,
}

impl SimClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self {
            state: Mutex::new(SimState {
                now: start,
                sleeps: Vec::new(),
            }),
        }
    }

    pub fn advance(&self, duration: Duration) {
        let mut state = self.state.lock().unwrap();
        state.now += chrono::Duration::from_std(duration).expect("duration in range");
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().unwrap().sleeps.clone()
    }
}

impl Clock for SimClock {
    fn now(&self) -> DateTime<Utc> {
        self.state.lock().unwrap().now
    }

    fn sleep(&self, duration: Duration) {
        let mut state = self.state.lock().unwrap();
        state.now += chrono::Duration::from_std(duration).expect("duration in range");
        state.sleeps.push(duration);
    }
}

/// RFC 3339 with whole seconds and a `Z` suffix, e.g. `2024-06-01T12:00:00Z`.
pub fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_ts(text: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(text.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::parse(format!("timestamp {text:?}"), e))
}

/// Accepts either a full RFC 3339 instant or a bare `YYYY-MM-DD` date
/// (interpreted as midnight UTC).
pub fn parse_instant_or_date(text: &str) -> Result<DateTime<Utc>> {
    if let Ok(ts) = parse_ts(text) {
        return Ok(ts);
    }
    let date =
        NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d").map_err(|e| Error::parse(format!("date {text:?}"), e))?;
    Ok(Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight")))
}

/// Serde adapter that writes timestamps through [`format_ts`].
pub mod ts_format {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_ts(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_ts(&text).map_err(serde::de::Error::custom)
    }
}
