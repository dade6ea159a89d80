//! Second-precision UTC instants and their calendar rendering.
//!
//! Calendar conversion uses the proleptic Gregorian days-from-civil algorithm,
//! so no timezone database or platform clock is involved.

use alloc::string::String;
use core::fmt::{self, Write};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// Seconds since 1970-01-01T00:00:00Z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

/// Broken-down calendar fields of an instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DateTimeParts {
    pub year: i64,
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    pub minute: u32,
    pub second: u32,
}

const SECS_PER_DAY: i64 = 86_400;

fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = i64::from(m);
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + i64::from(d) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn days_in_month(year: i64, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 => 29,
        2 => 28,
        _ => 0,
    }
}

impl Timestamp {
    pub fn from_ymd_hms(year: i64, month: u32, day: u32, hour: u32, minute: u32, second: u32) -> Option<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return None;
        }
        if hour > 23 || minute > 59 || second > 59 {
            return None;
        }
        let days = days_from_civil(year, month, day);
        let secs = i64::from(hour) * 3600 + i64::from(minute) * 60 + i64::from(second);
        Some(Timestamp(days * SECS_PER_DAY + secs))
    }

    pub fn seconds(self) -> i64 {
        self.0
    }

    /// Shifts the instant by a UTC offset, yielding wall-clock time at that offset.
    pub fn with_offset_minutes(self, minutes: i32) -> Self {
        Timestamp(self.0 + i64::from(minutes) * 60)
    }

    pub fn parts(self) -> DateTimeParts {
        let days = self.0.div_euclid(SECS_PER_DAY);
        let rem = self.0.rem_euclid(SECS_PER_DAY);
        let (year, month, day) = civil_from_days(days);
        DateTimeParts {
            year,
            month,
            day,
            hour: (rem / 3600) as u32,
            minute: ((rem % 3600) / 60) as u32,
            second: (rem % 60) as u32,
        }
    }

    /// Renders with a small strftime subset: `%Y %m %d %H %M %S %%`.
    /// Unknown directives are copied through verbatim.
    pub fn format_into<W: Write>(self, pattern: &str, out: &mut W) -> fmt::Result {
        let p = self.parts();
        let mut chars = pattern.chars();
        while let Some(c) = chars.next() {
            if c != '%' {
                out.write_char(c)?;
                continue;
            }
            match chars.next() {
                Some('Y') => write!(out, "{:04}", p.year)?,
                Some('m') => write!(out, "{:02}", p.month)?,
                Some('d') => write!(out, "{:02}", p.day)?,
                Some('H') => write!(out, "{:02}", p.hour)?,
                Some('M') => write!(out, "{:02}", p.minute)?,
                Some('S') => write!(out, "{:02}", p.second)?,
                Some('%') => out.write_char('%')?,
                Some(other) => {
                    out.write_char('%')?;
                    out.write_char(other)?;
                }
                None => out.write_char('%')?,
            }
        }
        Ok(())
    }

    pub fn format(self, pattern: &str) -> String {
        let mut s = String::new();
        let _ = self.format_into(pattern, &mut s);
        s
    }

    /// `YYYY-MM-DDTHH:MM:SSZ`
    pub fn to_rfc3339(self) -> String {
        self.format("%Y-%m-%dT%H:%M:%SZ")
    }

    /// Parses exactly the `YYYY-MM-DDTHH:MM:SSZ` form produced by [`Timestamp::to_rfc3339`].
    pub fn parse_rfc3339(s: &str) -> Option<Self> {
        let b = s.as_bytes();
        if b.len() != 20 || b[4] != b'-' || b[7] != b'-' || b[10] != b'T' || b[13] != b':' || b[16] != b':' || b[19] != b'Z'
        {
            return None;
        }
        let num = |r: core::ops::Range<usize>| -> Option<u32> {
            let mut v = 0u32;
            for &d in &b[r] {
                if !d.is_ascii_digit() {
                    return None;
                }
                v = v * 10 + u32::from(d - b'0');
            }
            Some(v)
        };
        Timestamp::from_ymd_hms(
            i64::from(num(0..4)?),
            num(5..7)?,
            num(8..10)?,
            num(11..13)?,
            num(14..16)?,
            num(17..19)?,
        )
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.format_into("%Y-%m-%dT%H:%M:%SZ", f)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TsVisitor;
        impl Visitor<'_> for TsVisitor {
            type Value = Timestamp;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a UTC timestamp formatted as YYYY-MM-DDTHH:MM:SSZ")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Timestamp, E> {
                Timestamp::parse_rfc3339(v).ok_or_else(|| E::custom("invalid timestamp"))
            }
        }
        deserializer.deserialize_str(TsVisitor)
    }
}
