//! Calendar periods and station time series.
//!
//! A [`StationSeries`] is one station's concentration record on a gapless
//! monthly (or yearly) axis: missing observations are explicit `None`
//! entries, never skipped positions, so position `i` always means
//! "`start` plus `i` periods".

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::real::Real;

/// Errors from constructing or combining series.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    /// A series must contain at least one period.
    #[error("series must contain at least one value slot")]
    Empty,
    /// Text that does not parse as a calendar period or enum label.
    #[error("invalid {kind}: {text:?}")]
    BadToken {
        /// What was being parsed ("year-month", "granularity", …).
        kind: &'static str,
        /// The offending input.
        text: String,
    },
}

/// A calendar month, ordered chronologically.
///
/// Serialized everywhere (CSV, JSON, `Display`) as `YYYY-MM`. Yearly series
/// reuse the type with `month = 1` marking the year's start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u8,
}

impl YearMonth {
    /// Build a year-month. Panics if `month` is outside `1..=12`; parse
    /// untrusted text through [`FromStr`] instead.
    pub fn new(year: i32, month: u8) -> Self {
        assert!((1..=12).contains(&month), "month must lie in 1..=12");
        YearMonth { year, month }
    }

    /// Calendar year.
    pub fn year(self) -> i32 {
        self.year
    }

    /// Month of year, `1..=12`.
    pub fn month(self) -> u8 {
        self.month
    }

    /// The month `offset` steps after `self` (negative offsets step back).
    pub fn offset(self, offset: i64) -> YearMonth {
        let total = self.year as i64 * 12 + (self.month as i64 - 1) + offset;
        YearMonth {
            year: total.div_euclid(12) as i32,
            month: (total.rem_euclid(12) + 1) as u8,
        }
    }

    /// Signed number of months from `earlier` to `self`.
    pub fn months_since(self, earlier: YearMonth) -> i64 {
        (self.year as i64 * 12 + self.month as i64) - (earlier.year as i64 * 12 + earlier.month as i64)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SeriesError::BadToken {
            kind: "year-month",
            text: s.to_string(),
        };
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(YearMonth { year, month })
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(|e: SeriesError| D::Error::custom(e))
    }
}

/// Time resolution of a series axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One slot per calendar month.
    Monthly,
    /// One slot per calendar year.
    Yearly,
}

impl Granularity {
    /// Canonical lowercase label used in CSV columns.
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Monthly => "monthly",
            Granularity::Yearly => "yearly",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monthly" => Ok(Granularity::Monthly),
            "yearly" => Ok(Granularity::Yearly),
            _ => Err(SeriesError::BadToken {
                kind: "granularity",
                text: s.to_string(),
            }),
        }
    }
}

/// Processing stage the values of a series have been through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// As observed by the samplers.
    Raw,
    /// Passed through monthly calibration.
    Calibrated,
    /// Calibrated, then gap-filled.
    CalibratedImputed,
}

impl Provenance {
    /// Canonical snake_case label used in CSV columns.
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Raw => "raw",
            Provenance::Calibrated => "calibrated",
            Provenance::CalibratedImputed => "calibrated_imputed",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Provenance::Raw),
            "calibrated" => Ok(Provenance::Calibrated),
            "calibrated_imputed" => Ok(Provenance::CalibratedImputed),
            _ => Err(SeriesError::BadToken {
                kind: "provenance",
                text: s.to_string(),
            }),
        }
    }
}

/// One station's time-indexed concentration series (µg/m³).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSeries<T> {
    /// Station identifier, unique within a dataset.
    pub station_id: String,
    /// Axis resolution; positions advance by one month or one year.
    pub granularity: Granularity,
    /// Calendar period of position 0.
    pub start: YearMonth,
    /// Observations; `None` marks a missing period (positions are never skipped).
    pub values: Vec<Option<T>>,
    /// Processing stage of the values.
    pub provenance: Provenance,
}

impl<T: Real> StationSeries<T> {
    /// Build a series, rejecting an empty value vector.
    pub fn new(
        station_id: impl Into<String>,
        granularity: Granularity,
        start: YearMonth,
        values: Vec<Option<T>>,
        provenance: Provenance,
    ) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        Ok(StationSeries {
            station_id: station_id.into(),
            granularity,
            start,
            values,
            provenance,
        })
    }

    /// Number of slots on the axis (present or missing).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the axis has no slots (unreachable via [`StationSeries::new`]).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of non-missing observations.
    pub fn n_present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Calendar period of slot `i`.
    pub fn period_at(&self, i: usize) -> YearMonth {
        match self.granularity {
            Granularity::Monthly => self.start.offset(i as i64),
            Granularity::Yearly => YearMonth::new(self.start.year() + i as i32, self.start.month()),
        }
    }

    /// Slot index of calendar period `ym`, if it lies on the axis.
    pub fn position_of(&self, ym: YearMonth) -> Option<usize> {
        let idx = match self.granularity {
            Granularity::Monthly => ym.months_since(self.start),
            Granularity::Yearly => {
                if ym.month() != self.start.month() {
                    return None;
                }
                (ym.year() - self.start.year()) as i64
            }
        };
        if idx >= 0 && (idx as usize) < self.values.len() {
            Some(idx as usize)
        } else {
            None
        }
    }

    /// Iterate `(slot index, value)` over the non-missing observations.
    pub fn iter_present(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|x| (i, x)))
    }
}
