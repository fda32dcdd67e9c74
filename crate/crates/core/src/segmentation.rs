//! Timeline segmentation and per-section action selection.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::importance::ImportanceCurve;
use crate::scalar::Scalar;
use crate::story::{ActionEvent, Advance};
use crate::timeseries::Timeline;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmentError {
    #[error("number of sections must be at least 1, got {0}")]
    Sections(usize),
    #[error("minimum gap must be at least 1 day, got {0}")]
    MinGap(usize),
    #[error("cannot place {wanted} boundaries at least {min_gap} days apart on a {len}-day timeline")]
    Infeasible { wanted: usize, min_gap: usize, len: usize },
    #[error("TOP_N needs n >= 1, got {0}")]
    TopN(usize),
    #[error("rank threshold exceeds r_max ({r}, r_max {r_max})")]
    RankAboveMax { r: f64, r_max: f64 },
    #[error("rank threshold must be positive, got {0}")]
    RankNotPositive(f64),
    #[error("unknown selection policy `{0}` (expected ALL, TOP_N:n or RANK_GTE:r)")]
    UnknownPolicy(String),
}

type Result<T> = std::result::Result<T, SegmentError>;

/// Which registered actions survive within a section.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SelectionPolicy {
    #[default]
    All,
    TopN(usize),
    RankGte(f64),
}

impl SelectionPolicy {
    pub fn validate(&self, r_max: f64) -> Result<()> {
        match *self {
            Self::All => Ok(()),
            Self::TopN(0) => Err(SegmentError::TopN(0)),
            Self::TopN(_) => Ok(()),
            Self::RankGte(r) if !(r > 0.0) => Err(SegmentError::RankNotPositive(r)),
            Self::RankGte(r) if r > r_max => Err(SegmentError::RankAboveMax { r, r_max }),
            Self::RankGte(_) => Ok(()),
        }
    }
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::All => f.write_str("ALL"),
            Self::TopN(n) => write!(f, "TOP_N:{n}"),
            Self::RankGte(r) => write!(f, "RANK_GTE:{r}"),
        }
    }
}

impl FromStr for SelectionPolicy {
    type Err = SegmentError;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || SegmentError::UnknownPolicy(s.to_string());
        let upper = s.trim().to_ascii_uppercase();
        let (name, arg) = match upper.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (upper.as_str(), None),
        };
        match (name, arg) {
            ("ALL", None) => Ok(Self::All),
            ("TOP_N", Some(a)) => a.parse().map(Self::TopN).map_err(|_| unknown()),
            ("RANK_GTE", Some(a)) => a
                .parse::<f64>()
                .ok()
                .filter(|r| r.is_finite())
                .map(Self::RankGte)
                .ok_or_else(unknown),
            _ => Err(unknown()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub k: usize,
    /// Day indices closing each section but the last; a boundary day
    /// belongs to the section on its left.
    pub boundaries: Vec<usize>,
    pub selection: SelectionPolicy,
}

impl SegmentPlan {
    pub fn with_selection(mut self, selection: SelectionPolicy) -> Self {
        self.selection = selection;
        self
    }

    /// Section holding a grid day.
    pub fn section_of(&self, day: usize) -> usize {
        self.boundaries.partition_point(|&b| b < day)
    }

    /// Inclusive day ranges of the sections, tiling `[0, len - 1]`.
    pub fn ranges(&self, len: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.boundaries.len() + 1);
        let mut start = 0;
        for &b in &self.boundaries {
            out.push((start, b));
            start = b + 1;
        }
        out.push((start, len.saturating_sub(1)));
        out
    }
}

/// `max(1, len / (2k))`.
pub fn default_min_gap(len: usize, k: usize) -> usize {
    (len / (2 * k.max(1))).max(1)
}

/// Cuts the curve's timeline into `k` sections.
///
/// Interior strict local maxima are accepted in decreasing value (earlier
/// first on ties) when at least `min_gap` days from every boundary already
/// accepted. If the curve runs out of usable maxima, the longest remaining
/// section is bisected, keeping the same separation.
pub fn segment<T: Scalar>(curve: &ImportanceCurve<T>, k: usize, min_gap: usize) -> Result<SegmentPlan> {
    if k < 1 {
        return Err(SegmentError::Sections(k));
    }
    if min_gap < 1 {
        return Err(SegmentError::MinGap(min_gap));
    }
    let s = &curve.samples;
    let len = s.len();
    let wanted = k - 1;
    let mut accepted: Vec<usize> = Vec::with_capacity(wanted);

    let mut maxima: Vec<usize> = (1..len.saturating_sub(1))
        .filter(|&i| s[i] > s[i - 1] && s[i] > s[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite samples"));
    for m in maxima {
        if accepted.len() == wanted {
            break;
        }
        if accepted.iter().all(|&b| b.abs_diff(m) >= min_gap) {
            accepted.push(m);
        }
    }

    while accepted.len() < wanted {
        accepted.sort_unstable();
        match bisect_longest(&accepted, len, min_gap) {
            Some(b) => accepted.push(b),
            None => return Err(SegmentError::Infeasible { wanted, min_gap, len }),
        }
    }
    accepted.sort_unstable();
    Ok(SegmentPlan {
        k,
        boundaries: accepted,
        selection: SelectionPolicy::All,
    })
}

/// A new boundary near the middle of the longest section that can take one.
fn bisect_longest(sorted: &[usize], len: usize, min_gap: usize) -> Option<usize> {
    if len < 3 {
        return None;
    }
    let last = len - 1;
    // (left end, right end, left is a boundary, right is a boundary)
    let mut gaps = Vec::with_capacity(sorted.len() + 1);
    let mut prev = (0, false);
    for &b in sorted {
        gaps.push((prev.0, b, prev.1, true));
        prev = (b, true);
    }
    gaps.push((prev.0, last, prev.1, false));
    // longest first, earlier on ties
    gaps.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));

    gaps.into_iter().find_map(|(a, b, a_fixed, b_fixed)| {
        let lo = if a_fixed { a + min_gap } else { a.max(1) };
        let hi = if b_fixed {
            b.checked_sub(min_gap)?
        } else {
            b.min(last - 1)
        };
        (lo <= hi).then(|| ((a + b) / 2).clamp(lo, hi))
    })
}

/// One play unit of a story.
#[derive(Debug, Clone, PartialEq)]
pub struct Section<T> {
    pub index: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub events: Vec<ActionEvent<T>>,
    pub advance: Advance<T>,
}

impl<T> Section<T> {
    pub fn from_range(index: usize, timeline: &Timeline, range: (usize, usize)) -> Self {
        Self {
            index,
            start: timeline.date_at(range.0),
            end: timeline.date_at(range.1),
            events: Vec::new(),
            advance: Advance::Play,
        }
    }
}

/// Positions of the events kept by `policy`, in input order.
///
/// `items` yields `(rank, structural)` per event. Structural events are always
/// kept and do not count towards `TOP_N`.
pub fn select_indices<T: Scalar>(items: &[(T, bool)], policy: SelectionPolicy) -> Vec<usize> {
    match policy {
        SelectionPolicy::All => (0..items.len()).collect(),
        SelectionPolicy::RankGte(r) => {
            let r = T::lit(r);
            (0..items.len()).filter(|&i| items[i].1 || items[i].0 >= r).collect()
        }
        SelectionPolicy::TopN(n) => {
            let mut ranked: Vec<usize> = (0..items.len()).filter(|&i| !items[i].1).collect();
            // stable: equal ranks keep date order
            ranked.sort_by(|&a, &b| items[b].0.partial_cmp(&items[a].0).expect("finite ranks"));
            ranked.truncate(n);
            let mut keep: Vec<usize> = (0..items.len()).filter(|&i| items[i].1).chain(ranked).collect();
            keep.sort_unstable();
            keep
        }
    }
}

/// Filters date-sorted events of one section.
pub fn select_actions<T: Scalar>(events: &[ActionEvent<T>], policy: SelectionPolicy) -> Vec<ActionEvent<T>> {
    let items: Vec<(T, bool)> = events.iter().map(|e| (e.rank, e.action.is_structural())).collect();
    select_indices(&items, policy)
        .into_iter()
        .map(|i| events[i].clone())
        .collect()
}
