//! Day-of-year conversion for phenology comparisons.

use chrono::{Datelike, NaiveDate};

use crate::error::{AnalysisError, Result};

/// Ordinal day, 1 for January 1st, 366 on December 31st of leap years.
pub fn day_of_year(date: NaiveDate) -> u32 {
    date.ordinal()
}

pub fn day_of_year_ymd(year: i32, month: u32, day: u32) -> Result<u32> {
    NaiveDate::from_ymd_opt(year, month, day)
        .map(day_of_year)
        .ok_or_else(|| AnalysisError::Domain(format!("invalid date {year:04}-{month:02}-{day:02}")))
}
