use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A calendar month, the time unit of every panel in this crate.
///
/// Ordered, hashable, and convertible to a flat index so that gap checks and
/// lag arithmetic are plain integer operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Month {
    year: i32,
    month: u8,
}

impl Month {
    pub fn new(year: i32, month: u8) -> Option<Month> {
        (1..=12).contains(&month).then_some(Month { year, month })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    /// Months since 0000-01; strictly increasing with calendar order.
    pub fn index(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_index(idx: i64) -> Month {
        Month {
            year: idx.div_euclid(12) as i32,
            month: (idx.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn plus(&self, months: i64) -> Month {
        Month::from_index(self.index() + months)
    }

    /// Signed number of months from `other` to `self`.
    pub fn diff(&self, other: &Month) -> i64 {
        self.index() - other.index()
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::domain(format!("invalid month {s:?}, expected YYYY-MM")))?;
        let year: i32 = y
            .parse()
            .map_err(|_| Error::domain(format!("invalid year in month {s:?}")))?;
        let month: u8 = m
            .parse()
            .map_err(|_| Error::domain(format!("invalid month number in {s:?}")))?;
        Month::new(year, month)
            .ok_or_else(|| Error::domain(format!("month {s:?} out of range 01..12")))
    }
}

impl TryFrom<String> for Month {
    type Error = Error;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Month> for String {
    fn from(m: Month) -> String {
        m.to_string()
    }
}

/// Inclusive month range, yields every month from start to end.
pub fn month_range(start: Month, end: Month) -> impl Iterator<Item = Month> {
    (start.index()..=end.index()).map(Month::from_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        let m: Month = "1995-03".parse().unwrap();
        assert_eq!(m.year(), 1995);
        assert_eq!(m.month(), 3);
        assert_eq!(m.to_string(), "1995-03");
    }

    #[test]
    fn invalid_month_rejected() {
        assert!("2020-13".parse::<Month>().is_err());
        assert!("2020-00".parse::<Month>().is_err());
        assert!("garbage".parse::<Month>().is_err());
    }

    #[test]
    fn arithmetic_crosses_year_boundaries() {
        let m: Month = "1999-11".parse().unwrap();
        assert_eq!(m.plus(3).to_string(), "2000-02");
        assert_eq!(m.plus(-12).to_string(), "1998-11");
        assert_eq!(m.plus(3).diff(&m), 3);
    }

    #[test]
    fn range_is_inclusive_and_gap_free() {
        let a: Month = "1995-11".parse().unwrap();
        let b: Month = "1996-02".parse().unwrap();
        let months: Vec<String> = month_range(a, b).map(|m| m.to_string()).collect();
        assert_eq!(months, vec!["1995-11", "1995-12", "1996-01", "1996-02"]);
    }
}
