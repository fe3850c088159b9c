//! Hour-resolution UTC timestamps on the proleptic Gregorian calendar.
//!
//! Weather map archives are keyed by observation hour, so the unit here
//! is hours since 1970-01-01T00. The textual form is `YYYY-MM-DDTHH`,
//! which is also the serde representation.

use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    hours: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TimeError {
    /// Year outside 1..=9999, month outside 1..=12, or day invalid for the month.
    InvalidDate { year: i32, month: u32, day: u32 },
    InvalidHour(u32),
    /// Input does not match `YYYY-MM-DDTHH`.
    Parse(String),
}

impl fmt::Display for TimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeError::InvalidDate { year, month, day } => {
                write!(f, "invalid calendar date {year:04}-{month:02}-{day:02}")
            }
            TimeError::InvalidHour(h) => write!(f, "invalid hour {h}, expected 0..=23"),
            TimeError::Parse(s) => write!(f, "cannot parse {s:?} as YYYY-MM-DDTHH"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TimeError {}

pub fn is_leap_year(year: i32) -> bool {
    year % 4 == 0 && (year % 100 != 0 || year % 400 == 0)
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if is_leap_year(year) {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

/// Days since 1970-01-01 for a civil date (Gregorian, valid for all i32 years).
fn days_from_civil(year: i32, month: u32, day: u32) -> i64 {
    let y = i64::from(year) - i64::from(month <= 2);
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = (y - era * 400) as u64;
    let mp = if month > 2 { month - 3 } else { month + 9 } as u64;
    let doy = (153 * mp + 2) / 5 + u64::from(day) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe as i64 - 719468
}

/// Inverse of [`days_from_civil`].
fn civil_from_days(days: i64) -> (i32, u32, u32) {
    let z = days + 719468;
    let era = if z >= 0 { z } else { z - 146096 } / 146097;
    let doe = (z - era * 146097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let month = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    ((y + i64::from(month <= 2)) as i32, month, day)
}

impl Timestamp {
    /// Builds a timestamp from calendar fields, validating the date.
    /// Years are restricted to 1..=9999 so the text form round-trips.
    pub fn from_ymdh(year: i32, month: u32, day: u32, hour: u32) -> Result<Self, TimeError> {
        if !(1..=9999).contains(&year)
            || !(1..=12).contains(&month)
            || day < 1
            || day > days_in_month(year, month)
        {
            return Err(TimeError::InvalidDate { year, month, day });
        }
        if hour > 23 {
            return Err(TimeError::InvalidHour(hour));
        }
        Ok(Timestamp {
            hours: days_from_civil(year, month, day) * 24 + i64::from(hour),
        })
    }

    pub fn from_epoch_hours(hours: i64) -> Self {
        Timestamp { hours }
    }

    pub fn epoch_hours(&self) -> i64 {
        self.hours
    }

    fn civil(&self) -> (i32, u32, u32, u32) {
        let days = self.hours.div_euclid(24);
        let hour = self.hours.rem_euclid(24) as u32;
        let (y, m, d) = civil_from_days(days);
        (y, m, d, hour)
    }

    pub fn year(&self) -> i32 {
        self.civil().0
    }

    /// Month in 1..=12.
    pub fn month(&self) -> u32 {
        self.civil().1
    }

    pub fn day(&self) -> u32 {
        self.civil().2
    }

    pub fn hour(&self) -> u32 {
        self.civil().3
    }

    pub fn add_hours(&self, h: i64) -> Self {
        Timestamp { hours: self.hours + h }
    }

    pub fn add_days(&self, d: i64) -> Self {
        self.add_hours(d * 24)
    }

    /// Signed distance `self - other` in hours.
    pub fn hours_since(&self, other: Timestamp) -> i64 {
        self.hours - other.hours
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (y, m, d, h) = self.civil();
        write!(f, "{y:04}-{m:02}-{d:02}T{h:02}")
    }
}

impl fmt::Debug for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Timestamp({self})")
    }
}

impl FromStr for Timestamp {
    type Err = TimeError;

    /// Strict `YYYY-MM-DDTHH` with fixed widths and zero padding.
    fn from_str(s: &str) -> Result<Self, TimeError> {
        let b = s.as_bytes();
        if b.len() != 13 || b[4] != b'-' || b[7] != b'-' || b[10] != b'T' {
            return Err(TimeError::Parse(s.to_string()));
        }
        let digits = |r: core::ops::Range<usize>| -> Result<u32, TimeError> {
            let mut v: u32 = 0;
            for &c in &b[r] {
                if !c.is_ascii_digit() {
                    return Err(TimeError::Parse(s.to_string()));
                }
                v = v * 10 + u32::from(c - b'0');
            }
            Ok(v)
        };
        let year = digits(0..4)? as i32;
        let month = digits(5..7)?;
        let day = digits(8..10)?;
        let hour = digits(11..13)?;
        Timestamp::from_ymdh(year, month, day, hour)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{self}"))
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_is_zero() {
        let t = Timestamp::from_ymdh(1970, 1, 1, 0).unwrap();
        assert_eq!(t.epoch_hours(), 0);
        assert_eq!(t.to_string(), "1970-01-01T00");
    }

    #[test]
    fn next_day_is_24_hours() {
        let t = Timestamp::from_ymdh(1970, 1, 2, 0).unwrap();
        assert_eq!(t.epoch_hours(), 24);
    }

    #[test]
    fn leap_day_2024_is_valid() {
        let t = Timestamp::from_ymdh(2024, 2, 29, 12).unwrap();
        assert_eq!(t.to_string(), "2024-02-29T12");
        assert_eq!(t.month(), 2);
        assert_eq!(t.day(), 29);
    }

    #[test]
    fn leap_day_2023_is_rejected() {
        assert_eq!(
            Timestamp::from_ymdh(2023, 2, 29, 0),
            Err(TimeError::InvalidDate { year: 2023, month: 2, day: 29 })
        );
    }

    #[test]
    fn century_leap_rules() {
        assert!(is_leap_year(2000));
        assert!(!is_leap_year(1900));
        assert!(is_leap_year(2024));
        assert!(!is_leap_year(2022));
    }

    #[test]
    fn invalid_fields_are_rejected() {
        assert!(Timestamp::from_ymdh(2022, 13, 1, 0).is_err());
        assert!(Timestamp::from_ymdh(2022, 0, 1, 0).is_err());
        assert!(Timestamp::from_ymdh(2022, 6, 31, 0).is_err());
        assert_eq!(Timestamp::from_ymdh(2022, 6, 30, 24), Err(TimeError::InvalidHour(24)));
    }

    #[test]
    fn parse_round_trip_known_value() {
        let t: Timestamp = "2022-12-19T00".parse().unwrap();
        assert_eq!((t.year(), t.month(), t.day(), t.hour()), (2022, 12, 19, 0));
        assert_eq!(t.to_string(), "2022-12-19T00");
    }

    #[test]
    fn parse_rejects_malformed_inputs() {
        for bad in ["2022-12-19", "2022/12/19T00", "2022-12-19T0", "22-12-19T00", "2022-12-19t00", ""] {
            assert!(bad.parse::<Timestamp>().is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn ordering_follows_time() {
        let a: Timestamp = "2021-06-01T00".parse().unwrap();
        let b: Timestamp = "2021-06-01T12".parse().unwrap();
        let c: Timestamp = "2022-01-01T00".parse().unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn day_arithmetic_crosses_month_boundary() {
        let t: Timestamp = "2022-02-28T06".parse().unwrap();
        assert_eq!(t.add_days(1).to_string(), "2022-03-01T06");
        assert_eq!(t.add_days(1).hours_since(t), 24);
    }

    #[test]
    fn serde_uses_text_form() {
        let t: Timestamp = "2022-12-19T00".parse().unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, "\"2022-12-19T00\"");
        let back: Timestamp = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn civil_round_trip_sweep() {
        // Every 7th hour across several decades, including leap boundaries.
        let mut h = Timestamp::from_ymdh(1999, 1, 1, 0).unwrap().epoch_hours();
        let end = Timestamp::from_ymdh(2031, 1, 1, 0).unwrap().epoch_hours();
        while h < end {
            let t = Timestamp::from_epoch_hours(h);
            let (y, m, d, hh) = (t.year(), t.month(), t.day(), t.hour());
            let back = Timestamp::from_ymdh(y, m, d, hh).unwrap();
            assert_eq!(back.epoch_hours(), h);
            h += 7;
        }
    }
}
