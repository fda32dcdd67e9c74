//! Cursor-driven feature detection over time series.
//!
//! Rows of a feature-action table are executed in order against a
//! [`DetectionBuffer`] per series. Each successful detection moves the
//! buffer's cursor forward to the instance's anchor, so a table reads as a
//! walk along the data: "first case", then "a rise within 28 days", then
//! "the next peak", and so on.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::fat::{FeatureActionRow, ParamMap, ParamValue};
use crate::scalar::Scalar;
use crate::timeseries::{CategoricalTimeSeries, NumericalTimeSeries, TimePoint, TimeSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("parameter {name} must be numeric, got `{value}`")]
    NonNumeric { name: String, value: String },
    #[error("WINDOW must be an integer of at least 2, got `{0}`")]
    Window(String),
    #[error("UPTO must be a non-negative integer, got `{0}`")]
    Upto(String),
    #[error("MATCH must be NEXT or ALL, got `{0}`")]
    MatchMode(String),
    #[error("feature {0} needs a numerical series")]
    NeedsNumerical(FeatureKind),
    #[error("feature {0} needs a categorical series")]
    NeedsCategorical(FeatureKind),
    #[error("peak detection needs at least 3 points, got {0}")]
    TooShort(usize),
    #[error("slope span needs t0 < t1 inside the series, got {0}..{1}")]
    InvalidSpan(usize, usize),
}

type Result<T> = std::result::Result<T, DetectError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKind {
    First,
    Current,
    Search,
    Last,
    Min,
    Max,
    Value,
    Stdev,
    Peak,
    Valley,
    Rise,
    Fall,
    Slope,
    Event,
}

const COMPARATORS: [&str; 5] = ["GT", "GTE", "LT", "LTE", "EQ"];
const SLOPE_COMPARATORS: [&str; 5] = ["SLOPE_GT", "SLOPE_GTE", "SLOPE_LT", "SLOPE_LTE", "SLOPE_EQ"];

impl FeatureKind {
    pub const ALL: [FeatureKind; 14] = [
        Self::First,
        Self::Current,
        Self::Search,
        Self::Last,
        Self::Min,
        Self::Max,
        Self::Value,
        Self::Stdev,
        Self::Peak,
        Self::Valley,
        Self::Rise,
        Self::Fall,
        Self::Slope,
        Self::Event,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::First => "FIRST",
            Self::Current => "CURRENT",
            Self::Search => "SEARCH",
            Self::Last => "LAST",
            Self::Min => "MIN",
            Self::Max => "MAX",
            Self::Value => "VALUE",
            Self::Stdev => "STDEV",
            Self::Peak => "PEAK",
            Self::Valley => "VALLEY",
            Self::Rise => "RISE",
            Self::Fall => "FALL",
            Self::Slope => "SLOPE",
            Self::Event => "EVENT",
        }
    }

    /// Parameters this feature reads.
    pub fn params(self) -> &'static [&'static str] {
        match self {
            Self::First | Self::Last | Self::Current => &[],
            Self::Search => &["UPTO"],
            Self::Min => &["MATCH"],
            Self::Max => &["MATCH", "HEIGHT_WEIGHT"],
            Self::Value => &["MATCH", "GT", "GTE", "LT", "LTE", "EQ"],
            Self::Stdev | Self::Slope => &["MATCH", "WINDOW", "GT", "GTE", "LT", "LTE", "EQ"],
            Self::Peak | Self::Valley => &["MATCH", "HEIGHT_WEIGHT", "GT", "GTE", "LT", "LTE", "EQ"],
            Self::Rise | Self::Fall => &["MATCH", "SLOPE_GT", "SLOPE_GTE", "SLOPE_LT", "SLOPE_LTE", "SLOPE_EQ"],
            Self::Event => &["MATCH", "LABEL"],
        }
    }

    fn default_window(self) -> usize {
        match self {
            Self::Stdev => 14,
            _ => 7,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DetectError::UnknownFeature(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    /// The earliest match after the cursor; moves the cursor.
    #[default]
    NextMatch,
    /// Every match in range; the cursor stays put.
    AllMatches,
}

impl MatchMode {
    /// Reads the row's `MATCH` parameter; `NEXT` when absent.
    pub fn for_row(row: &FeatureActionRow) -> Result<Self> {
        match row.feature_params.get("MATCH") {
            None => Ok(Self::NextMatch),
            Some(v) => match v.to_string().to_ascii_uppercase().as_str() {
                "ALL" => Ok(Self::AllMatches),
                "NEXT" => Ok(Self::NextMatch),
                other => Err(DetectError::MatchMode(other.to_string())),
            },
        }
    }
}

/// A measured attribute of a detected feature.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue<T> {
    Real(T),
    Text(String),
    Date(NaiveDate),
    Flag(bool),
}

impl<T: Scalar> fmt::Display for AttrValue<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Real(x) => write!(f, "{x}"),
            Self::Text(s) => f.write_str(s),
            Self::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Self::Flag(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureInstance<T> {
    pub series_id: String,
    pub kind: FeatureKind,
    pub start: TimePoint,
    pub end: TimePoint,
    /// Representative point, e.g. a peak apex or the end of a rising run.
    pub anchor: TimePoint,
    pub rank: T,
    pub attributes: BTreeMap<String, AttrValue<T>>,
}

impl<T: Scalar> FeatureInstance<T> {
    fn point(series_id: &str, kind: FeatureKind, at: TimePoint, rank: T) -> Self {
        Self {
            series_id: series_id.to_string(),
            kind,
            start: at,
            end: at,
            anchor: at,
            rank,
            attributes: BTreeMap::from([("DATE".to_string(), AttrValue::Date(at.date))]),
        }
    }

    fn with(mut self, name: &str, value: AttrValue<T>) -> Self {
        self.attributes.insert(name.to_string(), value);
        self
    }

    pub fn is_extended(&self) -> bool {
        self.end.date > self.start.date
    }

    /// Extent in days.
    pub fn extent_days(&self) -> i64 {
        (self.end.date - self.start.date).num_days()
    }
}

/// Per-series state shared by detection and action registration.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionBuffer<T> {
    pub cursor: TimePoint,
    /// Cursor before the most recent detection, `CURRENT` excluded.
    pub previous: Option<TimePoint>,
    pub search_end: Option<TimePoint>,
    pub last_instance: Option<FeatureInstance<T>>,
    pub context: BTreeMap<String, String>,
    /// The point under the cursor is still available to the next search.
    fresh: bool,
    /// The last non-`CURRENT` detection found nothing.
    last_failed: bool,
    /// Next categorical event to consider.
    event_cursor: usize,
}

impl<T: Scalar> DetectionBuffer<T> {
    pub fn new(series: &TimeSeries<T>, context: BTreeMap<String, String>) -> Self {
        let cursor = match series {
            TimeSeries::Numerical(s) => s.point(0),
            TimeSeries::Categorical(s) => s.events()[0].point,
        };
        Self {
            cursor,
            previous: None,
            search_end: None,
            last_instance: None,
            context,
            fresh: true,
            last_failed: false,
            event_cursor: 0,
        }
    }

    /// Whether the latest non-`CURRENT` row found nothing.
    pub fn last_failed(&self) -> bool {
        self.last_failed
    }

    fn advance(&mut self, inst: &FeatureInstance<T>, keep_fresh: bool) {
        self.previous = Some(self.cursor);
        if inst.anchor.index > self.cursor.index {
            self.cursor = inst.anchor;
            self.fresh = keep_fresh;
        } else if !keep_fresh {
            self.fresh = false;
        }
        self.search_end = None;
        self.last_instance = Some(inst.clone());
        self.last_failed = false;
    }
}

/// Value/time scaling used to express slopes in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeScale<T> {
    /// The series' full value range maps onto `[0, value_span]`.
    pub value_span: T,
    /// Length of one time unit in days.
    pub day_unit: T,
}

impl<T: Scalar> Default for SlopeScale<T> {
    fn default() -> Self {
        Self {
            value_span: T::lit(100.0),
            day_unit: T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectSettings<T> {
    pub slope: SlopeScale<T>,
}

impl<T: Scalar> Default for DetectSettings<T> {
    fn default() -> Self {
        Self {
            slope: SlopeScale::default(),
        }
    }
}

/// A peak region: the apex and the minima bounding it on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSegment<T> {
    pub left: TimePoint,
    pub apex: TimePoint,
    pub right: TimePoint,
    pub height: T,
}

/// Index triples `(left, apex, right)` of the peak regions of `values`.
///
/// Strict local maxima are visited in decreasing height (earlier first on
/// ties). From each surviving apex the walk descends left and right while
/// values do not increase, then settles on the first point where the lowest
/// value of the descent was reached, so neighbouring peaks that share a flat
/// valley floor split it instead of overlapping. Maxima that fall inside a
/// region leave the pool.
pub fn peak_regions<T: Scalar>(values: &[T]) -> Vec<(usize, usize, usize)> {
    let n = values.len();
    if n < 2 {
        return Vec::new();
    }
    let mut maxima: Vec<usize> = (0..n)
        .filter(|&i| {
            let above_left = i == 0 || values[i] > values[i - 1];
            let above_right = i == n - 1 || values[i] > values[i + 1];
            above_left && above_right
        })
        .collect();
    // stable: equal heights keep ascending date order
    maxima.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite values"));

    let mut pool = vec![false; n];
    for &m in &maxima {
        pool[m] = true;
    }
    let mut regions = Vec::new();
    for &apex in &maxima {
        if !pool[apex] {
            continue;
        }
        let left = descend(values, apex, -1);
        let right = descend(values, apex, 1);
        for (i, slot) in pool.iter_mut().enumerate().take(right + 1).skip(left) {
            if i != apex {
                *slot = false;
            }
        }
        pool[apex] = false;
        regions.push((left, apex, right));
    }
    regions.sort_by_key(|&(_, apex, _)| apex);
    regions
}

fn descend<T: Scalar>(values: &[T], apex: usize, step: isize) -> usize {
    let n = values.len() as isize;
    let mut pos = apex as isize;
    let mut floor = apex as isize;
    while pos + step >= 0 && pos + step < n && values[(pos + step) as usize] <= values[pos as usize] {
        pos += step;
        if values[pos as usize] < values[floor as usize] {
            floor = pos;
        }
    }
    floor as usize
}

/// All peak regions of a numerical series, sorted by apex date.
pub fn detect_all_peaks<T: Scalar>(s: &NumericalTimeSeries<T>) -> Result<Vec<PeakSegment<T>>> {
    if s.len() < 3 {
        return Err(DetectError::TooShort(s.len()));
    }
    Ok(to_segments(s, s.values(), peak_regions(s.values())))
}

/// Valley regions: peaks of the negated series, reported with the original
/// values as heights.
pub fn detect_all_valleys<T: Scalar>(s: &NumericalTimeSeries<T>) -> Result<Vec<PeakSegment<T>>> {
    if s.len() < 3 {
        return Err(DetectError::TooShort(s.len()));
    }
    let negated: Vec<T> = s.values().iter().map(|&v| -v).collect();
    Ok(to_segments(s, s.values(), peak_regions(&negated)))
}

fn to_segments<T: Scalar>(
    s: &NumericalTimeSeries<T>,
    values: &[T],
    regions: Vec<(usize, usize, usize)>,
) -> Vec<PeakSegment<T>> {
    regions
        .into_iter()
        .map(|(l, a, r)| PeakSegment {
            left: s.point(l),
            apex: s.point(a),
            right: s.point(r),
            height: values[a],
        })
        .collect()
}

/// Whether every value of the series is equal, making normalized slopes
/// undefined.
pub fn has_flat_range<T: Scalar>(s: &NumericalTimeSeries<T>) -> bool {
    let (lo, hi) = s.value_range();
    hi <= lo
}

fn slope_to_degrees<T: Scalar>(per_day: T, s: &NumericalTimeSeries<T>, scale: &SlopeScale<T>) -> T {
    let (lo, hi) = s.value_range();
    let range = hi - lo;
    if range <= T::zero() {
        return T::zero();
    }
    (per_day * scale.value_span / range * scale.day_unit)
        .atan()
        .to_degrees()
}

/// End-to-end slope between two indices, in degrees.
///
/// Values are normalized so the series' full range spans
/// `scale.value_span`, and time is measured in units of `scale.day_unit`
/// days. A series with zero range has slope 0.
pub fn compute_slope_deg<T: Scalar>(
    s: &NumericalTimeSeries<T>,
    t0: usize,
    t1: usize,
    scale: &SlopeScale<T>,
) -> Result<T> {
    if t0 >= t1 || t1 >= s.len() {
        return Err(DetectError::InvalidSpan(t0, t1));
    }
    let per_day = (s.value(t1) - s.value(t0)) / T::from_usize_lossy(t1 - t0);
    Ok(slope_to_degrees(per_day, s, scale))
}

/// Least-squares slope of `values` against their position, per step.
fn regression_slope<T: Scalar>(values: &[T]) -> T {
    let n = T::from_usize_lossy(values.len());
    let mean_x = (n - T::one()) / T::lit(2.0);
    let mean_y = values.iter().copied().sum::<T>() / n;
    let (num, den) = values
        .iter()
        .enumerate()
        .fold((T::zero(), T::zero()), |(num, den), (i, &y)| {
            let dx = T::from_usize_lossy(i) - mean_x;
            (num + dx * (y - mean_y), den + dx * dx)
        });
    num / den
}

fn sample_stdev<T: Scalar>(values: &[T]) -> T {
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
    (ss / (n - T::one())).sqrt()
}

/// Optional bounds read from `GT`/`GTE`/`LT`/`LTE`/`EQ`-style parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Comparators<T> {
    gt: Option<T>,
    gte: Option<T>,
    lt: Option<T>,
    lte: Option<T>,
    eq: Option<T>,
}

impl<T: Scalar> Comparators<T> {
    fn read(params: &ParamMap, names: &[&str; 5]) -> Result<Self> {
        let get = |name: &str| -> Result<Option<T>> {
            match params.get(name) {
                None => Ok(None),
                Some(v) => v
                    .as_f64()
                    .map(|x| Some(T::lit(x)))
                    .ok_or_else(|| DetectError::NonNumeric {
                        name: name.to_string(),
                        value: v.to_string(),
                    }),
            }
        };
        Ok(Self {
            gt: get(names[0])?,
            gte: get(names[1])?,
            lt: get(names[2])?,
            lte: get(names[3])?,
            eq: get(names[4])?,
        })
    }

    fn accepts(&self, x: T) -> bool {
        self.gt.is_none_or(|b| x > b)
            && self.gte.is_none_or(|b| x >= b)
            && self.lt.is_none_or(|b| x < b)
            && self.lte.is_none_or(|b| x <= b)
            && self.eq.is_none_or(|b| x == b)
    }
}

fn window_param(params: &ParamMap, kind: FeatureKind) -> Result<usize> {
    match params.get("WINDOW") {
        None => Ok(kind.default_window()),
        Some(ParamValue::Integer(w)) if *w >= 2 => Ok(*w as usize),
        Some(v) => Err(DetectError::Window(v.to_string())),
    }
}

fn flag(params: &ParamMap, name: &str) -> bool {
    params.get(name).and_then(ParamValue::as_bool).unwrap_or(false)
}

/// Runs one table row against a series, updating the buffer.
///
/// Under [`MatchMode::NextMatch`] at most one instance is returned and the
/// cursor moves to its anchor; a miss leaves the cursor where it was.
/// `CURRENT` yields nothing after a miss, so rows decorating a feature that
/// was not found stay silent too.
pub fn detect<T: Scalar>(
    row: &FeatureActionRow,
    series: &TimeSeries<T>,
    buffer: &mut DetectionBuffer<T>,
    mode: MatchMode,
    settings: &DetectSettings<T>,
) -> Result<Vec<FeatureInstance<T>>> {
    let kind: FeatureKind = row.feature.parse()?;
    let rank = T::lit(row.rank);
    match series {
        TimeSeries::Numerical(s) => detect_numerical(kind, row, s, buffer, mode, rank, settings),
        TimeSeries::Categorical(s) => detect_categorical(kind, row, s, buffer, mode, rank),
    }
}

fn current_instance<T: Scalar>(kind_series: &str, buffer: &DetectionBuffer<T>, rank: T) -> FeatureInstance<T> {
    let mut inst = FeatureInstance::point(kind_series, FeatureKind::Current, buffer.cursor, rank);
    if let Some(last) = &buffer.last_instance {
        if last.anchor == buffer.cursor {
            for (k, v) in &last.attributes {
                inst.attributes.insert(k.clone(), v.clone());
            }
        }
    }
    inst
}

fn finish<T: Scalar>(
    found: Vec<FeatureInstance<T>>,
    buffer: &mut DetectionBuffer<T>,
    mode: MatchMode,
    keep_fresh: bool,
) -> Vec<FeatureInstance<T>> {
    match mode {
        MatchMode::NextMatch => match found.into_iter().next() {
            Some(inst) => {
                buffer.advance(&inst, keep_fresh);
                vec![inst]
            }
            None => {
                buffer.last_failed = true;
                Vec::new()
            }
        },
        MatchMode::AllMatches => {
            buffer.last_failed = found.is_empty();
            found
        }
    }
}

fn detect_numerical<T: Scalar>(
    kind: FeatureKind,
    row: &FeatureActionRow,
    s: &NumericalTimeSeries<T>,
    buffer: &mut DetectionBuffer<T>,
    mode: MatchMode,
    rank: T,
    settings: &DetectSettings<T>,
) -> Result<Vec<FeatureInstance<T>>> {
    let params = &row.feature_params;
    let id = s.id();
    let n = s.len();
    let last = n - 1;
    let cursor = (buffer.cursor.index.max(0) as usize).min(last);
    // first index a new match may anchor at
    let lo = if buffer.fresh { cursor } else { (cursor + 1).min(n) };
    let hi = buffer
        .search_end
        .map(|e| (e.index.max(0) as usize).min(last))
        .unwrap_or(last);
    let value_point = |i: usize, kind: FeatureKind| {
        FeatureInstance::point(id, kind, s.point(i), rank).with("VALUE", AttrValue::Real(s.value(i)))
    };

    let found = match kind {
        FeatureKind::First => {
            let inst = value_point(0, kind);
            return Ok(finish(vec![inst], buffer, MatchMode::NextMatch, true));
        }
        FeatureKind::Last => {
            let inst = value_point(last, kind);
            return Ok(finish(vec![inst], buffer, MatchMode::NextMatch, false));
        }
        FeatureKind::Current => {
            if buffer.last_failed {
                return Ok(Vec::new());
            }
            let inst = current_instance(id, buffer, rank)
                .with("VALUE", AttrValue::Real(s.value(cursor)))
                .with("DATE", AttrValue::Date(s.date(cursor)));
            return Ok(vec![inst]);
        }
        FeatureKind::Search => {
            let end = match params.get("UPTO") {
                None => last,
                Some(ParamValue::Integer(d)) if *d >= 0 => (cursor + *d as usize).min(last),
                Some(v) => return Err(DetectError::Upto(v.to_string())),
            };
            buffer.search_end = Some(s.point(end));
            return Ok(Vec::new());
        }
        FeatureKind::Event => return Err(DetectError::NeedsCategorical(kind)),
        FeatureKind::Min | FeatureKind::Max => {
            let best = (lo..=hi)
                .filter(|&i| i < n)
                .fold(None, |best: Option<usize>, i| match best {
                    None => Some(i),
                    Some(b) => {
                        let better = if kind == FeatureKind::Max {
                            s.value(i) > s.value(b)
                        } else {
                            s.value(i) < s.value(b)
                        };
                        Some(if better { i } else { b })
                    }
                });
            let extremum = best.map(|i| {
                let inst = value_point(i, kind).with("HEIGHT", AttrValue::Real(s.value(i)));
                weight_by_height(inst, row, s)
            });
            if mode == MatchMode::AllMatches {
                let target = best.map(|b| s.value(b));
                (lo..=hi)
                    .filter(|&i| i < n && Some(s.value(i)) == target)
                    .map(|i| weight_by_height(value_point(i, kind).with("HEIGHT", AttrValue::Real(s.value(i))), row, s))
                    .collect()
            } else {
                extremum.into_iter().collect()
            }
        }
        FeatureKind::Value => {
            let cmp = Comparators::read(params, &COMPARATORS)?;
            (lo..=hi)
                .filter(|&i| i < n && cmp.accepts(s.value(i)))
                .map(|i| value_point(i, kind))
                .collect()
        }
        FeatureKind::Stdev | FeatureKind::Slope => {
            let cmp = Comparators::read(params, &COMPARATORS)?;
            let w = window_param(params, kind)?;
            let mut out = Vec::new();
            let mut start = cursor;
            while start + w - 1 <= hi && start + w - 1 < n {
                let end = start + w - 1;
                if end >= lo {
                    let window = &s.values()[start..=end];
                    let (name, measure) = if kind == FeatureKind::Stdev {
                        ("STDEV", sample_stdev(window))
                    } else {
                        (
                            "SLOPE_DEG",
                            slope_to_degrees(regression_slope(window), s, &settings.slope),
                        )
                    };
                    if cmp.accepts(measure) {
                        let mut inst =
                            span_instance(id, kind, s, start, end, end, rank).with(name, AttrValue::Real(measure));
                        if kind == FeatureKind::Slope && has_flat_range(s) {
                            inst = inst.with("FLAT_RANGE", AttrValue::Flag(true));
                        }
                        out.push(inst);
                        if mode == MatchMode::NextMatch {
                            break;
                        }
                    }
                }
                start += 1;
            }
            out
        }
        FeatureKind::Peak | FeatureKind::Valley => {
            let cmp = Comparators::read(params, &COMPARATORS)?;
            let segments = if kind == FeatureKind::Peak {
                detect_all_peaks(s)?
            } else {
                detect_all_valleys(s)?
            };
            segments
                .into_iter()
                .filter(|p| {
                    let a = p.apex.index as usize;
                    a >= lo && a <= hi && cmp.accepts(p.height)
                })
                .map(|p| {
                    let inst = FeatureInstance {
                        series_id: id.to_string(),
                        kind,
                        start: p.left,
                        end: p.right,
                        anchor: p.apex,
                        rank,
                        attributes: BTreeMap::new(),
                    }
                    .with("DATE", AttrValue::Date(p.apex.date))
                    .with("HEIGHT", AttrValue::Real(p.height))
                    .with("VALUE", AttrValue::Real(p.height))
                    .with("START", AttrValue::Date(p.left.date))
                    .with("END", AttrValue::Date(p.right.date));
                    if kind == FeatureKind::Peak {
                        weight_by_height(inst, row, s)
                    } else {
                        inst
                    }
                })
                .collect()
        }
        FeatureKind::Rise | FeatureKind::Fall => {
            let cmp = Comparators::read(params, &SLOPE_COMPARATORS)?;
            let rising = kind == FeatureKind::Rise;
            let follows = |a: T, b: T| if rising { b >= a } else { b <= a };
            let mut out = Vec::new();
            let mut start = cursor;
            while start < hi {
                let mut end = start;
                while end < hi && follows(s.value(end), s.value(end + 1)) {
                    end += 1;
                }
                if end == start {
                    start += 1;
                    continue;
                }
                let moved = if rising {
                    s.value(end) > s.value(start)
                } else {
                    s.value(end) < s.value(start)
                };
                if moved && end >= lo {
                    let deg = compute_slope_deg(s, start, end, &settings.slope)?;
                    if cmp.accepts(deg) {
                        out.push(
                            span_instance(id, kind, s, start, end, end, rank)
                                .with("SLOPE_DEG", AttrValue::Real(deg))
                                .with("CHANGE", AttrValue::Real(s.value(end) - s.value(start))),
                        );
                        if mode == MatchMode::NextMatch {
                            break;
                        }
                    }
                }
                start = end;
            }
            out
        }
    };
    Ok(finish(found, buffer, mode, false))
}

fn span_instance<T: Scalar>(
    id: &str,
    kind: FeatureKind,
    s: &NumericalTimeSeries<T>,
    start: usize,
    end: usize,
    anchor: usize,
    rank: T,
) -> FeatureInstance<T> {
    FeatureInstance {
        series_id: id.to_string(),
        kind,
        start: s.point(start),
        end: s.point(end),
        anchor: s.point(anchor),
        rank,
        attributes: BTreeMap::new(),
    }
    .with("DATE", AttrValue::Date(s.date(anchor)))
    .with("VALUE", AttrValue::Real(s.value(anchor)))
    .with("START", AttrValue::Date(s.date(start)))
    .with("END", AttrValue::Date(s.date(end)))
}

/// Applies `HEIGHT_WEIGHT:TRUE`: rank scaled by height over the series
/// maximum, floored at 1.
fn weight_by_height<T: Scalar>(
    mut inst: FeatureInstance<T>,
    row: &FeatureActionRow,
    s: &NumericalTimeSeries<T>,
) -> FeatureInstance<T> {
    if !flag(&row.feature_params, "HEIGHT_WEIGHT") {
        return inst;
    }
    let (_, max) = s.value_range();
    if let Some(AttrValue::Real(h)) = inst.attributes.get("HEIGHT") {
        if max > T::zero() {
            inst.rank = (inst.rank * *h / max).max(T::one());
        }
    }
    inst
}

fn detect_categorical<T: Scalar>(
    kind: FeatureKind,
    row: &FeatureActionRow,
    s: &CategoricalTimeSeries<T>,
    buffer: &mut DetectionBuffer<T>,
    mode: MatchMode,
    rank: T,
) -> Result<Vec<FeatureInstance<T>>> {
    let id = s.id();
    let events = s.events();
    let event_instance = |i: usize| {
        let e = &events[i];
        let mut inst =
            FeatureInstance::point(id, kind, e.point, rank).with("LABEL", AttrValue::Text(e.category.clone()));
        if let Some(r) = e.rank {
            inst = inst.with("EVENT_RANK", AttrValue::Real(r));
        }
        if let Some(d) = &e.description {
            inst = inst.with("DESCRIPTION", AttrValue::Text(d.clone()));
        }
        inst
    };
    match kind {
        FeatureKind::First => {
            let found = vec![event_instance(0)];
            Ok(finish(found, buffer, MatchMode::NextMatch, true))
        }
        FeatureKind::Last => {
            let found = vec![event_instance(events.len() - 1)];
            buffer.event_cursor = events.len();
            Ok(finish(found, buffer, MatchMode::NextMatch, false))
        }
        FeatureKind::Current => {
            if buffer.last_failed {
                return Ok(Vec::new());
            }
            Ok(vec![current_instance(id, buffer, rank)])
        }
        FeatureKind::Search => {
            let days = match row.feature_params.get("UPTO") {
                None => None,
                Some(ParamValue::Integer(d)) if *d >= 0 => Some(*d),
                Some(v) => return Err(DetectError::Upto(v.to_string())),
            };
            let end = match days {
                Some(d) => TimePoint::at_offset(s.start(), buffer.cursor.index + d),
                None => events[events.len() - 1].point,
            };
            buffer.search_end = Some(end);
            Ok(Vec::new())
        }
        FeatureKind::Event => {
            let label = row.feature_params.get("LABEL").map(|v| v.to_string());
            let limit = buffer.search_end.map(|e| e.date);
            let matches: Vec<usize> = (buffer.event_cursor..events.len())
                .filter(|&i| limit.is_none_or(|l| events[i].point.date <= l))
                .filter(|&i| {
                    label
                        .as_deref()
                        .is_none_or(|l| events[i].category.eq_ignore_ascii_case(l))
                })
                .collect();
            if mode == MatchMode::NextMatch {
                if let Some(&i) = matches.first() {
                    buffer.event_cursor = i + 1;
                }
            }
            let found = matches.into_iter().map(event_instance).collect();
            Ok(finish(found, buffer, mode, false))
        }
        other => Err(DetectError::NeedsNumerical(other)),
    }
}
