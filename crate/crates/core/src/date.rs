//! Whole-day calendar arithmetic.
//!
//! Records carry no time of day, so every date is stored as a signed day
//! number counted from 1970-01-01.

use std::fmt;
use std::ops::{Add, Sub};

use chrono::{Datelike, NaiveDate};

const EPOCH_FROM_CE: i32 = 719_163;

/// Days in a year for washout arithmetic.
pub const YEAR_DAYS: i32 = 365;
/// Days in a month wherever a month-granular window is needed.
pub const MONTH_DAYS: i32 = 30;
/// "Thirteen months" for the first-prescription rule.
pub const THIRTEEN_MONTHS_DAYS: i32 = 395;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Day(pub i32);

impl Day {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Day> {
        NaiveDate::from_ymd_opt(year, month, day).map(Day::from)
    }

    /// Parses a strict ISO-8601 calendar date (`YYYY-MM-DD`).
    pub fn parse(s: &str) -> Option<Day> {
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .ok()
            .map(Day::from)
    }

    pub fn to_naive(self) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt(self.0 + EPOCH_FROM_CE)
            .expect("day number within chrono range")
    }

    pub fn year(self) -> i32 {
        self.to_naive().year()
    }

    pub fn days_since(self, earlier: Day) -> i32 {
        self.0 - earlier.0
    }
}

impl From<NaiveDate> for Day {
    fn from(d: NaiveDate) -> Self {
        Day(d.num_days_from_ce() - EPOCH_FROM_CE)
    }
}

impl Add<i32> for Day {
    type Output = Day;
    fn add(self, rhs: i32) -> Day {
        Day(self.0 + rhs)
    }
}

impl Sub<i32> for Day {
    type Output = Day;
    fn sub(self, rhs: i32) -> Day {
        Day(self.0 - rhs)
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_naive().format("%Y-%m-%d"))
    }
}

/// Closed day interval `[start, end]`. Empty when `start > end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: Day,
    pub end: Day,
}

impl Window {
    pub fn new(start: Day, end: Day) -> Self {
        Window { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    pub fn contains(&self, d: Day) -> bool {
        self.start <= d && d <= self.end
    }

    /// True when `self` lies entirely within `outer`.
    pub fn within(&self, outer: &Window) -> bool {
        !self.is_empty() && outer.start <= self.start && self.end <= outer.end
    }

    pub fn clip_start(self, min_start: Day) -> Window {
        Window {
            start: self.start.max(min_start),
            end: self.end,
        }
    }
}
