use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, FixedOffset, Months, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// An RFC3339 instant with a mandatory offset.
///
/// The offset the author wrote is kept so canonical encoding reproduces it;
/// equality compares instants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<FixedOffset>);

impl Timestamp {
    pub fn parse(s: &str) -> Result<Self, TimeError> {
        DateTime::parse_from_rfc3339(s)
            .map(Timestamp)
            .map_err(|e| TimeError::BadTimestamp(format!("{s}: {e}")))
    }

    pub fn from_utc(t: DateTime<Utc>) -> Self {
        Timestamp(t.fixed_offset())
    }

    pub fn utc(&self) -> DateTime<Utc> {
        self.0.with_timezone(&Utc)
    }

    pub fn fixed(&self) -> DateTime<FixedOffset> {
        self.0
    }

    pub fn render(&self) -> String {
        self.0.to_rfc3339_opts(SecondsFormat::AutoSi, true)
    }
}

/// Canonical text form of a UTC instant (used by the store and results).
pub fn render_utc(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_utc(s: &str) -> Result<DateTime<Utc>, TimeError> {
    Timestamp::parse(s).map(|t| t.utc())
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for Timestamp {
    type Err = TimeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("invalid RFC3339 timestamp {0}")]
    BadTimestamp(String),
    #[error("invalid ISO-8601 duration `{0}`")]
    BadDuration(String),
    #[error("time arithmetic overflow")]
    Overflow,
}

/// ISO-8601 duration such as `P7D`, `PT1H30M` or `P1Y2M`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct IsoDuration {
    pub years: u32,
    pub months: u32,
    pub weeks: u32,
    pub days: u32,
    pub hours: u32,
    pub minutes: u32,
    pub seconds: u32,
}

impl IsoDuration {
    pub fn parse(s: &str) -> Result<Self, TimeError> {
        let bad = || TimeError::BadDuration(s.to_string());
        let rest = s.strip_prefix('P').ok_or_else(bad)?;
        if rest.is_empty() {
            return Err(bad());
        }
        let mut d = IsoDuration::default();
        let mut in_time = false;
        let mut num = String::new();
        let mut saw_component = false;
        let mut saw_time_component = false;
        for c in rest.chars() {
            match c {
                '0'..='9' => num.push(c),
                'T' if !in_time && num.is_empty() => in_time = true,
                _ => {
                    if num.is_empty() {
                        return Err(bad());
                    }
                    let n: u32 = num.parse().map_err(|_| bad())?;
                    num.clear();
                    let slot = match (in_time, c) {
                        (false, 'Y') => &mut d.years,
                        (false, 'M') => &mut d.months,
                        (false, 'W') => &mut d.weeks,
                        (false, 'D') => &mut d.days,
                        (true, 'H') => &mut d.hours,
                        (true, 'M') => &mut d.minutes,
                        (true, 'S') => &mut d.seconds,
                        _ => return Err(bad()),
                    };
                    *slot = n;
                    saw_component = true;
                    if in_time {
                        saw_time_component = true;
                    }
                }
            }
        }
        if !num.is_empty() || !saw_component || (in_time && !saw_time_component) {
            return Err(bad());
        }
        Ok(d)
    }

    pub fn is_zero(&self) -> bool {
        *self == IsoDuration::default()
    }

    /// Calendar-aware addition: years and months move the calendar date,
    /// the remaining components are exact.
    pub fn add_to(&self, t: DateTime<Utc>) -> Result<DateTime<Utc>, TimeError> {
        let months = self.years as u64 * 12 + self.months as u64;
        let months = u32::try_from(months).map_err(|_| TimeError::Overflow)?;
        let t = t
            .checked_add_months(Months::new(months))
            .ok_or(TimeError::Overflow)?;
        let secs = (self.weeks as i64 * 7 + self.days as i64) * 86_400
            + self.hours as i64 * 3_600
            + self.minutes as i64 * 60
            + self.seconds as i64;
        t.checked_add_signed(Duration::seconds(secs))
            .ok_or(TimeError::Overflow)
    }
}

impl fmt::Display for IsoDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("PT0S");
        }
        f.write_str("P")?;
        for (n, unit) in [
            (self.years, 'Y'),
            (self.months, 'M'),
            (self.weeks, 'W'),
            (self.days, 'D'),
        ] {
            if n > 0 {
                write!(f, "{n}{unit}")?;
            }
        }
        if self.hours + self.minutes + self.seconds > 0 {
            f.write_str("T")?;
            for (n, unit) in [(self.hours, 'H'), (self.minutes, 'M'), (self.seconds, 'S')] {
                if n > 0 {
                    write!(f, "{n}{unit}")?;
                }
            }
        }
        Ok(())
    }
}

impl Serialize for IsoDuration {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IsoDuration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        IsoDuration::parse(&s).map_err(serde::de::Error::custom)
    }
}
