//! Calendar arithmetic on monthly and quarterly grids.
//!
//! Dates are integer month counts from year 0, so index arithmetic on a
//! series maps bijectively to calendar periods. Quarterly series anchor on
//! the first month of the quarter.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Sampling frequency of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frequency {
    Monthly,
    Quarterly,
}

impl Frequency {
    /// Months covered by one period.
    pub fn months_per_period(self) -> i32 {
        match self {
            Frequency::Monthly => 1,
            Frequency::Quarterly => 3,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Monthly => write!(f, "monthly"),
            Frequency::Quarterly => write!(f, "quarterly"),
        }
    }
}

/// Measurement units carried by a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    Percent,
    Ratio,
    Level,
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Units::Percent => write!(f, "percent"),
            Units::Ratio => write!(f, "ratio"),
            Units::Level => write!(f, "level"),
        }
    }
}

/// A calendar month, stored as `year * 12 + (month - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month(pub i32);

impl Month {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month must be in 1..=12");
        Month(year * 12 + month as i32 - 1)
    }

    /// Parse `YYYYMM` (French library style).
    pub fn from_yyyymm(v: i64) -> Option<Self> {
        let year = (v / 100) as i32;
        let month = (v % 100) as u32;
        if (1..=12).contains(&month) {
            Some(Month::new(year, month))
        } else {
            None
        }
    }

    /// Parse `YYYY-MM-DD` or `YYYY-MM` (FRED style); the day is ignored.
    pub fn from_iso(s: &str) -> Option<Self> {
        let mut parts = s.trim().splitn(3, '-');
        let year: i32 = parts.next()?.parse().ok()?;
        let month: u32 = parts.next()?.parse().ok()?;
        if (1..=12).contains(&month) {
            Some(Month::new(year, month))
        } else {
            None
        }
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    pub fn month(self) -> u32 {
        (self.0.rem_euclid(12) + 1) as u32
    }

    pub fn plus(self, months: i32) -> Self {
        Month(self.0 + months)
    }

    /// Signed number of months from `other` to `self`.
    pub fn months_since(self, other: Month) -> i32 {
        self.0 - other.0
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

/// Closed date range used by descriptive-statistics windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: Month,
    pub end: Month,
}

impl DateRange {
    pub fn new(start: Month, end: Month) -> Self {
        DateRange { start, end }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_roundtrip() {
        let m = Month::new(1964, 1);
        assert_eq!(m.year(), 1964);
        assert_eq!(m.month(), 1);
        assert_eq!(m.to_string(), "1964-01");
    }

    #[test]
    fn month_arithmetic_is_bijective() {
        let start = Month::new(1964, 1);
        let end = Month::new(2018, 8);
        assert_eq!(end.months_since(start), 655);
        assert_eq!(start.plus(655), end);
    }

    #[test]
    fn yyyymm_parsing() {
        assert_eq!(Month::from_yyyymm(196401), Some(Month::new(1964, 1)));
        assert_eq!(Month::from_yyyymm(201808), Some(Month::new(2018, 8)));
        assert_eq!(Month::from_yyyymm(201813), None);
    }

    #[test]
    fn iso_parsing() {
        assert_eq!(Month::from_iso("1972-01-01"), Some(Month::new(1972, 1)));
        assert_eq!(Month::from_iso("2011-12"), Some(Month::new(2011, 12)));
        assert_eq!(Month::from_iso("2011-13-01"), None);
    }
}
