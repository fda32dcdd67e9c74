//! Numerical and categorical time series: loading, validation and derivation.
//!
//! Numerical series are stored densely on a daily grid. Missing days between
//! two observations are filled by linear interpolation when loading, so every
//! numerical series has consecutive day indices.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Days, NaiveDate};
use thiserror::Error;

use crate::scalar::Scalar;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum TimeSeriesError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("no data rows")]
    Empty,
    #[error("series needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount { line: u64, expected: usize, found: usize },
    #[error("line {line}: unparseable date `{value}`")]
    BadDate { line: u64, value: String },
    #[error("line {line}: unparseable number `{value}`")]
    BadNumber { line: u64, value: String },
    #[error("line {line}: non-finite value `{value}`")]
    NonFinite { line: u64, value: String },
    #[error("duplicate date {date} with conflicting values {first} and {second}")]
    ConflictingDuplicate {
        date: NaiveDate,
        first: String,
        second: String,
    },
    #[error("line {line}: rank out of range [1,{r_max}]")]
    RankOutOfRange { line: u64, r_max: String },
    #[error("line {line}: empty category")]
    EmptyCategory { line: u64 },
    #[error("date ranges of `{a}` and `{b}` do not overlap on at least 2 days")]
    DisjointRanges { a: String, b: String },
    #[error("moving average window must be at least 1, got {0}")]
    InvalidWindow(usize),
    #[error("timeline end {end} precedes start {start}")]
    InvalidTimeline { start: NaiveDate, end: NaiveDate },
    #[error("duplicate series id `{0}`")]
    DuplicateId(String),
    #[error("{0}")]
    Write(String),
}

impl TimeSeriesError {
    /// Source line of the error, when it points at one.
    pub fn line(&self) -> Option<u64> {
        match self {
            Self::Csv { line, .. }
            | Self::ColumnCount { line, .. }
            | Self::BadDate { line, .. }
            | Self::BadNumber { line, .. }
            | Self::NonFinite { line, .. }
            | Self::RankOutOfRange { line, .. }
            | Self::EmptyCategory { line } => Some(*line),
            _ => None,
        }
    }
}

type Result<T> = std::result::Result<T, TimeSeriesError>;

/// A calendar day together with its offset from the owning series' first date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimePoint {
    pub date: NaiveDate,
    pub index: i64,
}

impl TimePoint {
    pub fn new(origin: NaiveDate, date: NaiveDate) -> Self {
        Self {
            date,
            index: (date - origin).num_days(),
        }
    }

    pub fn at_offset(origin: NaiveDate, index: i64) -> Self {
        Self {
            date: shift(origin, index),
            index,
        }
    }
}

pub(crate) fn shift(date: NaiveDate, days: i64) -> NaiveDate {
    if days >= 0 {
        date.checked_add_days(Days::new(days as u64))
    } else {
        date.checked_sub_days(Days::new(days.unsigned_abs()))
    }
    .expect("date within chrono range")
}

pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), DATE_FORMAT).ok()
}

/// The common daily axis of a story.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timeline {
    start: NaiveDate,
    end: NaiveDate,
}

impl Timeline {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(TimeSeriesError::InvalidTimeline { start, end });
        }
        Ok(Self { start, end })
    }

    /// Smallest timeline covering every `(start, end)` range.
    pub fn covering<I>(ranges: I) -> Option<Self>
    where
        I: IntoIterator<Item = (NaiveDate, NaiveDate)>,
    {
        ranges.into_iter().fold(None, |acc, (s, e)| {
            Some(match acc {
                None => Self { start: s, end: e },
                Some(t) => Self {
                    start: t.start.min(s),
                    end: t.end.max(e),
                },
            })
        })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    /// Number of days on the grid, both ends included.
    pub fn len(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        (date >= self.start && date <= self.end).then(|| (date - self.start).num_days() as usize)
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        shift(self.start, index as i64)
    }

    pub fn grid(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.len()).map(|i| self.date_at(i))
    }
}

/// A dense daily numerical series.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericalTimeSeries<T> {
    id: String,
    label: String,
    region: Option<String>,
    units: Option<String>,
    start: NaiveDate,
    values: Vec<T>,
}

impl<T: Scalar> NumericalTimeSeries<T> {
    /// Builds a series from a contiguous run of daily values.
    pub fn from_dense(id: impl Into<String>, start: NaiveDate, values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(TimeSeriesError::TooShort(values.len()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(TimeSeriesError::NonFinite {
                line: 0,
                value: v.to_string(),
            });
        }
        let id = id.into();
        Ok(Self {
            label: id.clone(),
            id,
            region: None,
            units: None,
            start,
            values,
        })
    }

    /// Builds a series from dated observations in any order.
    ///
    /// Equal duplicates collapse, conflicting duplicates are rejected and
    /// interior gaps are linearly interpolated.
    pub fn from_observations(id: impl Into<String>, mut obs: Vec<(NaiveDate, T)>) -> Result<Self> {
        if obs.is_empty() {
            return Err(TimeSeriesError::Empty);
        }
        obs.sort_by_key(|(d, _)| *d);
        let mut known: Vec<(NaiveDate, T)> = Vec::with_capacity(obs.len());
        for (date, value) in obs {
            match known.last() {
                Some(&(d, v)) if d == date => {
                    if v != value {
                        return Err(TimeSeriesError::ConflictingDuplicate {
                            date,
                            first: v.to_string(),
                            second: value.to_string(),
                        });
                    }
                }
                _ => known.push((date, value)),
            }
        }
        let start = known[0].0;
        let mut values = Vec::new();
        for pair in known.windows(2) {
            let (d0, v0) = pair[0];
            let (d1, v1) = pair[1];
            let span = (d1 - d0).num_days();
            values.push(v0);
            for step in 1..span {
                let frac = T::lit(step as f64) / T::lit(span as f64);
                values.push(v0 + (v1 - v0) * frac);
            }
        }
        values.push(known[known.len() - 1].1);
        Self::from_dense(id, start, values)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_region(mut self, region: impl Into<String>) -> Self {
        self.region = Some(region.into());
        self
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = Some(units.into());
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn region(&self) -> Option<&str> {
        self.region.as_deref()
    }

    pub fn units(&self) -> Option<&str> {
        self.units.as_deref()
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.date(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, index: usize) -> T {
        self.values[index]
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        shift(self.start, index as i64)
    }

    pub fn point(&self, index: usize) -> TimePoint {
        TimePoint {
            date: self.date(index),
            index: index as i64,
        }
    }

    pub fn points(&self) -> impl Iterator<Item = (TimePoint, T)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (self.point(i), v))
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start).num_days();
        (offset >= 0 && (offset as usize) < self.values.len()).then_some(offset as usize)
    }

    pub fn value_at(&self, date: NaiveDate) -> Option<T> {
        self.index_of(date).map(|i| self.values[i])
    }

    /// `(min, max)` over all values.
    pub fn value_range(&self) -> (T, T) {
        self.values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// One dated categorical event.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalEvent<T> {
    pub point: TimePoint,
    pub category: String,
    pub rank: Option<T>,
    pub description: Option<String>,
}

/// Sparse sequence of labelled events; days without an event carry the null
/// category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalTimeSeries<T> {
    id: String,
    label: String,
    events: Vec<CategoricalEvent<T>>,
}

/// Unvalidated event row used to build a [`CategoricalTimeSeries`].
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord<T> {
    pub date: NaiveDate,
    pub category: String,
    pub rank: Option<T>,
    pub description: Option<String>,
}

impl<T: Scalar> CategoricalTimeSeries<T> {
    /// Sorts records by date (stable) and validates ranks against `r_max`.
    pub fn new(id: impl Into<String>, mut records: Vec<EventRecord<T>>, r_max: T) -> Result<Self> {
        if records.is_empty() {
            return Err(TimeSeriesError::Empty);
        }
        for (i, r) in records.iter().enumerate() {
            let line = i as u64 + 2;
            if r.category.trim().is_empty() {
                return Err(TimeSeriesError::EmptyCategory { line });
            }
            if let Some(rank) = r.rank {
                if !(rank >= T::one() && rank <= r_max) {
                    return Err(TimeSeriesError::RankOutOfRange {
                        line,
                        r_max: r_max.to_string(),
                    });
                }
            }
        }
        records.sort_by_key(|r| r.date);
        let origin = records[0].date;
        let events = records
            .into_iter()
            .map(|r| CategoricalEvent {
                point: TimePoint::new(origin, r.date),
                category: r.category,
                rank: r.rank,
                description: r.description,
            })
            .collect();
        let id = id.into();
        Ok(Self {
            label: id.clone(),
            id,
            events,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn events(&self) -> &[CategoricalEvent<T>] {
        &self.events
    }

    pub fn start(&self) -> NaiveDate {
        self.events[0].point.date
    }

    pub fn end(&self) -> NaiveDate {
        self.events[self.events.len() - 1].point.date
    }

    /// Category on `date`, `None` being the null category.
    pub fn category_on(&self, date: NaiveDate) -> Option<&str> {
        self.events
            .iter()
            .find(|e| e.point.date == date)
            .map(|e| e.category.as_str())
    }
}

/// Either kind of series.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeSeries<T> {
    Numerical(NumericalTimeSeries<T>),
    Categorical(CategoricalTimeSeries<T>),
}

impl<T: Scalar> TimeSeries<T> {
    pub fn id(&self) -> &str {
        match self {
            Self::Numerical(s) => s.id(),
            Self::Categorical(s) => s.id(),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Self::Numerical(s) => s.label(),
            Self::Categorical(s) => s.label(),
        }
    }

    pub fn start(&self) -> NaiveDate {
        match self {
            Self::Numerical(s) => s.start(),
            Self::Categorical(s) => s.start(),
        }
    }

    pub fn end(&self) -> NaiveDate {
        match self {
            Self::Numerical(s) => s.end(),
            Self::Categorical(s) => s.end(),
        }
    }

    pub fn as_numerical(&self) -> Option<&NumericalTimeSeries<T>> {
        match self {
            Self::Numerical(s) => Some(s),
            Self::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&CategoricalTimeSeries<T>> {
        match self {
            Self::Categorical(s) => Some(s),
            Self::Numerical(_) => None,
        }
    }
}

impl<T> From<NumericalTimeSeries<T>> for TimeSeries<T> {
    fn from(s: NumericalTimeSeries<T>) -> Self {
        Self::Numerical(s)
    }
}

impl<T> From<CategoricalTimeSeries<T>> for TimeSeries<T> {
    fn from(s: CategoricalTimeSeries<T>) -> Self {
        Self::Categorical(s)
    }
}

/// The data a story is compiled against, keyed by series id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesSet<T> {
    series: BTreeMap<String, TimeSeries<T>>,
}

impl<T: Scalar> SeriesSet<T> {
    pub fn new() -> Self {
        Self {
            series: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, series: impl Into<TimeSeries<T>>) -> Result<()> {
        let series = series.into();
        let id = series.id().to_string();
        if self.series.contains_key(&id) {
            return Err(TimeSeriesError::DuplicateId(id));
        }
        self.series.insert(id, series);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&TimeSeries<T>> {
        self.series.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TimeSeries<T>> {
        self.series.values()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Timeline spanning every series, `None` for an empty set.
    pub fn timeline(&self) -> Option<Timeline> {
        Timeline::covering(self.iter().map(|s| (s.start(), s.end())))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| TimeSeriesError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(TimeSeriesError::Header {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> TimeSeriesError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    TimeSeriesError::Csv {
        line,
        message: e.to_string(),
    }
}

fn parse_number<T: Scalar>(raw: &str, line: u64) -> Result<T> {
    let v: T = raw.parse().map_err(|_| TimeSeriesError::BadNumber {
        line,
        value: raw.to_string(),
    })?;
    if !v.is_finite() {
        return Err(TimeSeriesError::NonFinite {
            line,
            value: raw.to_string(),
        });
    }
    Ok(v)
}

/// Reads a `date,value` CSV.
pub fn read_nts<T: Scalar, R: Read>(reader: R, id: &str) -> Result<NumericalTimeSeries<T>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &["date", "value"])?;
    let mut obs = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(TimeSeriesError::ColumnCount {
                line,
                expected: 2,
                found: record.len(),
            });
        }
        let date = parse_date(&record[0]).ok_or_else(|| TimeSeriesError::BadDate {
            line,
            value: record[0].to_string(),
        })?;
        obs.push((date, parse_number(&record[1], line)?));
    }
    NumericalTimeSeries::from_observations(id, obs)
}

pub fn load_nts<T: Scalar>(path: impl AsRef<Path>, id: &str) -> Result<NumericalTimeSeries<T>> {
    read_nts(open(path.as_ref())?, id)
}

/// Writes a series as `date,value` CSV, one row per grid day.
pub fn write_nts<T: Scalar, W: Write>(series: &NumericalTimeSeries<T>, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let write_err = |e: csv::Error| TimeSeriesError::Write(e.to_string());
    wtr.write_record(["date", "value"]).map_err(write_err)?;
    for (p, v) in series.points() {
        wtr.write_record([p.date.format(DATE_FORMAT).to_string(), v.to_string()])
            .map_err(write_err)?;
    }
    wtr.flush().map_err(|e| TimeSeriesError::Write(e.to_string()))
}

/// Reads a `date,category,rank,description` CSV.
pub fn read_cts<T: Scalar, R: Read>(reader: R, id: &str, r_max: T) -> Result<CategoricalTimeSeries<T>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &["date", "category", "rank", "description"])?;
    let mut records = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if !(2..=4).contains(&record.len()) {
            return Err(TimeSeriesError::ColumnCount {
                line,
                expected: 4,
                found: record.len(),
            });
        }
        let date = parse_date(&record[0]).ok_or_else(|| TimeSeriesError::BadDate {
            line,
            value: record[0].to_string(),
        })?;
        let category = record[1].to_string();
        if category.is_empty() {
            return Err(TimeSeriesError::EmptyCategory { line });
        }
        let rank = match record.get(2) {
            Some(r) if !r.is_empty() => {
                let rank: T = parse_number(r, line)?;
                if rank < T::one() || rank > r_max {
                    return Err(TimeSeriesError::RankOutOfRange {
                        line,
                        r_max: r_max.to_string(),
                    });
                }
                Some(rank)
            }
            _ => None,
        };
        let description = record.get(3).filter(|d| !d.is_empty()).map(str::to_string);
        records.push(EventRecord {
            date,
            category,
            rank,
            description,
        });
    }
    CategoricalTimeSeries::new(id, records, r_max)
}

pub fn load_cts<T: Scalar>(path: impl AsRef<Path>, id: &str, r_max: T) -> Result<CategoricalTimeSeries<T>> {
    read_cts(open(path.as_ref())?, id, r_max)
}

pub fn write_cts<T: Scalar, W: Write>(series: &CategoricalTimeSeries<T>, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let write_err = |e: csv::Error| TimeSeriesError::Write(e.to_string());
    wtr.write_record(["date", "category", "rank", "description"])
        .map_err(write_err)?;
    for e in series.events() {
        wtr.write_record([
            e.point.date.format(DATE_FORMAT).to_string(),
            e.category.clone(),
            e.rank.map(|r| r.to_string()).unwrap_or_default(),
            e.description.clone().unwrap_or_default(),
        ])
        .map_err(write_err)?;
    }
    wtr.flush().map_err(|e| TimeSeriesError::Write(e.to_string()))
}

/// Pointwise `a - b` over the overlap of both date ranges.
pub fn derive_difference<T: Scalar>(
    a: &NumericalTimeSeries<T>,
    b: &NumericalTimeSeries<T>,
    id: &str,
) -> Result<NumericalTimeSeries<T>> {
    let start = a.start().max(b.start());
    let end = a.end().min(b.end());
    if end <= start {
        return Err(TimeSeriesError::DisjointRanges {
            a: a.id().to_string(),
            b: b.id().to_string(),
        });
    }
    let (ia, ib) = (a.index_of(start).unwrap(), b.index_of(start).unwrap());
    let n = (end - start).num_days() as usize + 1;
    let values = (0..n).map(|i| a.value(ia + i) - b.value(ib + i)).collect();
    NumericalTimeSeries::from_dense(id, start, values)
}

/// Trailing `k`-day mean; the window shrinks over the first `k - 1` days.
pub fn derive_moving_average<T: Scalar>(
    s: &NumericalTimeSeries<T>,
    k: usize,
    id: &str,
) -> Result<NumericalTimeSeries<T>> {
    if k == 0 {
        return Err(TimeSeriesError::InvalidWindow(k));
    }
    let values = s.values();
    let averaged = (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(k);
            let window = &values[lo..=i];
            window.iter().copied().sum::<T>() / T::from_usize_lossy(window.len())
        })
        .collect();
    let mut out = NumericalTimeSeries::from_dense(id, s.start(), averaged)?;
    out.label = s.label.clone();
    out.region = s.region.clone();
    out.units = s.units.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn nts(csv: &str) -> Result<NumericalTimeSeries<f64>> {
        read_nts(csv.as_bytes(), "TS1")
    }

    #[test]
    fn parses_two_points() {
        let s = nts("date,value\n2020-03-01,0\n2020-03-02,3").unwrap();
        assert_eq!(s.values(), &[0.0, 3.0]);
        assert_eq!(s.start(), d("2020-03-01"));
        assert_eq!(s.id(), "TS1");
    }

    #[test]
    fn sorts_out_of_order_rows() {
        let s = nts("date,value\n2020-03-02,3\n2020-03-01,0\n").unwrap();
        assert_eq!(s.values(), &[0.0, 3.0]);
    }

    #[test]
    fn accepts_crlf() {
        let s = nts("date,value\r\n2020-03-01,1\r\n2020-03-02,2\r\n").unwrap();
        assert_eq!(s.values(), &[1.0, 2.0]);
    }

    #[test]
    fn fills_gaps_linearly() {
        let s = nts("date,value\n2020-03-01,1\n2020-03-04,4").unwrap();
        // interpolation oracle: v(t) = 1 + (4 - 1) * t / 3
        let oracle: Vec<f64> = (0..4).map(|t| 1.0 + 3.0 * t as f64 / 3.0).collect();
        assert_eq!(s.values(), oracle.as_slice());
        assert_eq!(s.values(), &[1.0, 2.0, 3.0, 4.0]);
        let idx: Vec<i64> = s.points().map(|(p, _)| p.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicate_dates() {
        let s = nts("date,value\n2020-03-01,1\n2020-03-01,1\n2020-03-02,2").unwrap();
        assert_eq!(s.len(), 2);
        let err = nts("date,value\n2020-03-01,1\n2020-03-01,5\n2020-03-02,2").unwrap_err();
        assert!(matches!(err, TimeSeriesError::ConflictingDuplicate { .. }));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(nts("date,value\n"), Err(TimeSeriesError::Empty)));
        assert!(matches!(nts(""), Err(TimeSeriesError::Header { .. })));
        assert!(matches!(
            nts("date,value\n2020-03-01,1,9\n2020-03-02,1"),
            Err(TimeSeriesError::ColumnCount { line: 2, .. })
        ));
        assert!(matches!(
            nts("date,value\n03/01/2020,1\n2020-03-02,1"),
            Err(TimeSeriesError::BadDate { line: 2, .. })
        ));
        assert!(matches!(
            nts("date,value\n2020-03-01,abc\n2020-03-02,1"),
            Err(TimeSeriesError::BadNumber { line: 2, .. })
        ));
        assert!(matches!(
            nts("date,value\n2020-03-01,1\n"),
            Err(TimeSeriesError::TooShort(1))
        ));
    }

    #[test]
    fn load_reports_missing_file() {
        let err = load_nts::<f64>("/nonexistent/x.csv", "TS1").unwrap_err();
        assert!(matches!(err, TimeSeriesError::Io { .. }));
    }

    #[test]
    fn cts_parsing() {
        let s: CategoricalTimeSeries<f64> = read_cts(
            "date,category,rank,description\n2020-03-23,lockdown,10,First national lockdown\n".as_bytes(),
            "EV",
            10.0,
        )
        .unwrap();
        assert_eq!(s.events().len(), 1);
        assert_eq!(s.events()[0].rank, Some(10.0));
        assert_eq!(s.events()[0].description.as_deref(), Some("First national lockdown"));
    }

    #[test]
    fn cts_same_day_keeps_input_order() {
        let s: CategoricalTimeSeries<f64> = read_cts(
            "date,category,rank,description\n2020-04-01,b,,\n2020-03-01,x,,\n2020-04-01,a,,\n".as_bytes(),
            "EV",
            10.0,
        )
        .unwrap();
        let cats: Vec<&str> = s.events().iter().map(|e| e.category.as_str()).collect();
        assert_eq!(cats, vec!["x", "b", "a"]);
        assert_eq!(s.events()[1].point.index, 31);
        assert_eq!(s.category_on(d("2020-03-02")), None);
    }

    #[test]
    fn cts_errors() {
        let err = read_cts::<f64, _>(
            "date,category,rank,description\n2020-03-23,lockdown,11,\n".as_bytes(),
            "EV",
            10.0,
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "line 2: rank out of range [1,10]");
        let err = read_cts::<f64, _>(
            "date,category,rank,description\n2020-03-23,,1,\n".as_bytes(),
            "EV",
            10.0,
        )
        .unwrap_err();
        assert!(matches!(err, TimeSeriesError::EmptyCategory { line: 2 }));
        let err = read_cts::<f64, _>(
            "date,category,rank,description\n2020-13-23,x,1,\n".as_bytes(),
            "EV",
            10.0,
        )
        .unwrap_err();
        assert!(matches!(err, TimeSeriesError::BadDate { .. }));
    }

    #[test]
    fn difference() {
        let a = NumericalTimeSeries::from_dense("A", d("2020-01-01"), vec![5.0, 7.0]).unwrap();
        let b = NumericalTimeSeries::from_dense("B", d("2020-01-01"), vec![2.0, 3.0]).unwrap();
        let diff = derive_difference(&a, &b, "D").unwrap();
        assert_eq!(diff.values(), &[3.0, 4.0]);
        assert_eq!(diff.id(), "D");
        let zero = derive_difference(&a, &a, "Z").unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert_eq!(zero.len(), a.len());
    }

    #[test]
    fn difference_uses_intersection() {
        let a = NumericalTimeSeries::from_dense("A", d("2020-01-01"), vec![1.0; 10]).unwrap();
        let b = NumericalTimeSeries::from_dense("B", d("2020-01-05"), vec![0.0; 11]).unwrap();
        let diff = derive_difference(&a, &b, "D").unwrap();
        // days 5..=10 of January
        assert_eq!(diff.start(), d("2020-01-05"));
        assert_eq!(diff.end(), d("2020-01-10"));
        assert_eq!(diff.len(), 6);

        let c = NumericalTimeSeries::from_dense("C", d("2021-01-01"), vec![0.0; 3]).unwrap();
        assert!(matches!(
            derive_difference(&a, &c, "D"),
            Err(TimeSeriesError::DisjointRanges { .. })
        ));
    }

    #[test]
    fn moving_average() {
        let s = NumericalTimeSeries::from_dense("S", d("2020-01-01"), vec![0.0, 0.0, 9.0]).unwrap();
        assert_eq!(derive_moving_average(&s, 3, "M").unwrap().values(), &[0.0, 0.0, 3.0]);
        assert_eq!(derive_moving_average(&s, 1, "M").unwrap().values(), s.values());
        assert!(matches!(
            derive_moving_average(&s, 0, "M"),
            Err(TimeSeriesError::InvalidWindow(0))
        ));
        let c = NumericalTimeSeries::from_dense("C", d("2020-01-01"), vec![2.5f64; 20]).unwrap();
        for k in 1..25 {
            let m = derive_moving_average(&c, k, "M").unwrap();
            assert!(m.values().iter().all(|&v| (v - 2.5).abs() < 1e-12));
        }
    }

    #[test]
    fn timeline_covering() {
        let t = Timeline::covering([(d("2020-03-05"), d("2020-03-10")), (d("2020-03-01"), d("2020-03-07"))]).unwrap();
        assert_eq!(t.start(), d("2020-03-01"));
        assert_eq!(t.end(), d("2020-03-10"));
        assert_eq!(t.len(), 10);
        assert_eq!(t.index_of(d("2020-03-10")), Some(9));
        assert_eq!(t.index_of(d("2020-03-11")), None);
        assert_eq!(t.grid().count(), 10);
        assert!(Timeline::new(d("2020-03-02"), d("2020-03-01")).is_err());
    }

    #[test]
    fn works_in_f32() {
        let s: NumericalTimeSeries<f32> =
            read_nts("date,value\n2020-03-01,0.1\n2020-03-03,0.3".as_bytes(), "F").unwrap();
        assert_eq!(s.len(), 3);
        assert!((s.value(1) - 0.2).abs() < 1e-6);
    }
}
