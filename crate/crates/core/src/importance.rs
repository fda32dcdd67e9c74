//! Gaussian importance curves.
//!
//! Every ranked feature becomes a Gaussian bump on the story timeline whose
//! height is the rank. Bumps are mixed into one curve per series, and the
//! per-series curves into an overall curve that drives segmentation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::detect::{FeatureInstance, FeatureKind};
use crate::scalar::Scalar;
use crate::timeseries::Timeline;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImportanceError {
    #[error("anchor {0} lies outside the timeline")]
    OutsideTimeline(NaiveDate),
    #[error("rank must be positive, got {0}")]
    Rank(String),
    #[error("curves do not share one timeline")]
    TimelineMismatch,
    #[error("no curves to mix")]
    NoCurves,
    #[error("unknown mix policy `{0}` (expected max, mean or sum)")]
    UnknownPolicy(String),
}

type Result<T> = std::result::Result<T, ImportanceError>;

/// Where a component came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSource {
    pub series_id: String,
    pub kind: Option<FeatureKind>,
    pub anchor: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent<T> {
    /// Day index on the timeline grid.
    pub center: T,
    /// Width in days.
    pub sigma: T,
    pub amplitude: T,
    pub source: ComponentSource,
}

impl<T: Scalar> GaussianComponent<T> {
    pub fn new(center: T, sigma: T, amplitude: T, source: ComponentSource) -> Self {
        Self {
            center,
            sigma,
            amplitude,
            source,
        }
    }

    pub fn value_at(&self, t: T) -> T {
        let d = t - self.center;
        self.amplitude * (-(d * d) / (T::lit(2.0) * self.sigma * self.sigma)).exp()
    }
}

/// Width given to point features on a timeline of `len` days.
pub fn point_sigma<T: Scalar>(len: usize) -> T {
    (T::lit(0.01) * T::from_usize_lossy(len)).max(T::one())
}

/// Component for a ranked instance: centred on its anchor, `extent / 6`
/// wide for extended features and [`point_sigma`] wide otherwise.
pub fn to_gaussian<T: Scalar>(f: &FeatureInstance<T>, timeline: &Timeline) -> Result<GaussianComponent<T>> {
    if !(f.rank > T::zero()) {
        return Err(ImportanceError::Rank(f.rank.to_string()));
    }
    let center = timeline
        .index_of(f.anchor.date)
        .ok_or(ImportanceError::OutsideTimeline(f.anchor.date))?;
    let sigma = if f.is_extended() {
        T::from_usize_lossy(f.extent_days() as usize) / T::lit(6.0)
    } else {
        point_sigma(timeline.len())
    };
    Ok(GaussianComponent::new(
        T::from_usize_lossy(center),
        sigma,
        f.rank,
        ComponentSource {
            series_id: f.series_id.clone(),
            kind: Some(f.kind),
            anchor: f.anchor.date,
        },
    ))
}

/// How several values at one grid day are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixPolicy {
    #[default]
    Max,
    Mean,
    Sum,
}

impl MixPolicy {
    pub fn name(self) -> &'static str {
        match self {
            Self::Max => "max",
            Self::Mean => "mean",
            Self::Sum => "sum",
        }
    }

    fn combine<T: Scalar>(self, values: impl Iterator<Item = T>) -> T {
        let mut count = 0usize;
        let mut acc = T::zero();
        for v in values {
            acc = match (self, count) {
                (Self::Max, 0) => v,
                (Self::Max, _) => acc.max(v),
                _ => acc + v,
            };
            count += 1;
        }
        match self {
            Self::Mean if count > 0 => acc / T::from_usize_lossy(count),
            _ => acc,
        }
    }
}

impl fmt::Display for MixPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MixPolicy {
    type Err = ImportanceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            _ => Err(ImportanceError::UnknownPolicy(s.to_string())),
        }
    }
}

/// An importance function sampled once per timeline day.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceCurve<T> {
    pub timeline: Timeline,
    pub samples: Vec<T>,
    pub components: Vec<GaussianComponent<T>>,
}

impl<T: Scalar> ImportanceCurve<T> {
    pub fn zero(timeline: Timeline) -> Self {
        Self {
            timeline,
            samples: vec![T::zero(); timeline.len()],
            components: Vec::new(),
        }
    }

    pub fn max_sample(&self) -> T {
        self.samples.iter().copied().fold(T::zero(), T::max)
    }

    /// `(date, importance)` pairs along the grid.
    pub fn points(&self) -> impl Iterator<Item = (NaiveDate, T)> + '_ {
        self.timeline.grid().zip(self.samples.iter().copied())
    }
}

/// Samples a mixture of components on the grid with the given policy.
pub fn mix_components<T: Scalar>(
    components: &[GaussianComponent<T>],
    timeline: &Timeline,
    policy: MixPolicy,
) -> ImportanceCurve<T> {
    let samples = (0..timeline.len())
        .map(|i| {
            let t = T::from_usize_lossy(i);
            policy.combine(components.iter().map(|c| c.value_at(t)))
        })
        .collect();
    ImportanceCurve {
        timeline: *timeline,
        samples,
        components: components.to_vec(),
    }
}

pub fn mix_max<T: Scalar>(components: &[GaussianComponent<T>], timeline: &Timeline) -> ImportanceCurve<T> {
    mix_components(components, timeline, MixPolicy::Max)
}

/// Combines curves sample by sample.
pub fn mix_curves<T: Scalar>(curves: &[ImportanceCurve<T>], policy: MixPolicy) -> Result<ImportanceCurve<T>> {
    let first = curves.first().ok_or(ImportanceError::NoCurves)?;
    if curves
        .iter()
        .any(|c| c.timeline != first.timeline || c.samples.len() != first.samples.len())
    {
        return Err(ImportanceError::TimelineMismatch);
    }
    let samples = (0..first.samples.len())
        .map(|i| policy.combine(curves.iter().map(|c| c.samples[i])))
        .collect();
    Ok(ImportanceCurve {
        timeline: first.timeline,
        samples,
        components: curves.iter().flat_map(|c| c.components.iter().cloned()).collect(),
    })
}

pub fn mix_mean<T: Scalar>(curves: &[ImportanceCurve<T>]) -> Result<ImportanceCurve<T>> {
    mix_curves(curves, MixPolicy::Mean)
}

/// Mixes components within each series with `within`, then the per-series
/// curves with `across`.
pub fn overall_curve_with<T: Scalar>(
    per_series: &BTreeMap<String, Vec<GaussianComponent<T>>>,
    timeline: &Timeline,
    within: MixPolicy,
    across: MixPolicy,
) -> Result<ImportanceCurve<T>> {
    if per_series.is_empty() {
        return Ok(ImportanceCurve::zero(*timeline));
    }
    let curves: Vec<_> = per_series
        .values()
        .map(|cs| mix_components(cs, timeline, within))
        .collect();
    mix_curves(&curves, across)
}

/// Max within a series, mean across series.
pub fn overall_curve<T: Scalar>(
    per_series: &BTreeMap<String, Vec<GaussianComponent<T>>>,
    timeline: &Timeline,
) -> Result<ImportanceCurve<T>> {
    overall_curve_with(per_series, timeline, MixPolicy::Max, MixPolicy::Mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{parse_date, TimePoint};

    fn timeline(days: i64) -> Timeline {
        let start = parse_date("2020-01-01").unwrap();
        Timeline::new(start, crate::timeseries::shift(start, days - 1)).unwrap()
    }

    fn comp(center: f64, sigma: f64, amp: f64) -> GaussianComponent<f64> {
        GaussianComponent::new(
            center,
            sigma,
            amp,
            ComponentSource {
                series_id: "TS1".into(),
                kind: None,
                anchor: parse_date("2020-01-01").unwrap(),
            },
        )
    }

    fn instance(start: i64, anchor: i64, end: i64, rank: f64) -> FeatureInstance<f64> {
        let origin = parse_date("2020-01-01").unwrap();
        FeatureInstance {
            series_id: "TS1".into(),
            kind: FeatureKind::Peak,
            start: TimePoint::at_offset(origin, start),
            end: TimePoint::at_offset(origin, end),
            anchor: TimePoint::at_offset(origin, anchor),
            rank,
            attributes: BTreeMap::new(),
        }
    }

    #[test]
    fn gaussian_rules() {
        let tl = timeline(100);
        let point = to_gaussian(&instance(40, 40, 40, 10.0), &tl).unwrap();
        assert_eq!(point.value_at(40.0), 10.0);
        assert_eq!(point.sigma, 1.0);
        let seg = to_gaussian(&instance(10, 25, 40, 6.0), &tl).unwrap();
        assert_eq!((seg.sigma, seg.amplitude, seg.center), (5.0, 6.0, 25.0));
        let half = to_gaussian(&instance(3, 3, 3, 0.5), &tl).unwrap();
        assert_eq!(half.value_at(3.0), 0.5);
        assert_eq!(point_sigma::<f64>(400), 4.0);
        assert!(matches!(
            to_gaussian(&instance(200, 200, 200, 1.0), &tl),
            Err(ImportanceError::OutsideTimeline(_))
        ));
    }

    #[test]
    fn max_picks_dominant_component() {
        let tl = timeline(40);
        let a = comp(10.0, 2.0, 10.0);
        let b = comp(20.0, 2.0, 5.0);
        let curve = mix_max(&[a.clone(), b.clone()], &tl);
        assert_eq!(curve.samples[10], 10.0);
        // b contributes 5 * exp(-12.5) at day 10
        assert!((b.value_at(10.0) - 5.0 * (-12.5f64).exp()).abs() < 1e-15);
        assert_eq!(curve.samples[20], 5.0);
        assert_eq!(
            mix_max(&[a.clone(), a.clone()], &tl).samples,
            mix_max(&[a], &tl).samples
        );
    }

    #[test]
    fn empty_mixture_is_zero() {
        let tl = timeline(5);
        assert_eq!(mix_max::<f64>(&[], &tl).samples, vec![0.0; 5]);
        assert_eq!(
            overall_curve::<f64>(&BTreeMap::new(), &tl).unwrap().samples,
            vec![0.0; 5]
        );
    }

    #[test]
    fn mean_of_curves() {
        let tl = timeline(2);
        let a = ImportanceCurve {
            timeline: tl,
            samples: vec![2.0, 4.0],
            components: vec![],
        };
        let b = ImportanceCurve {
            timeline: tl,
            samples: vec![4.0, 8.0],
            components: vec![],
        };
        assert_eq!(mix_mean(&[a.clone(), b]).unwrap().samples, vec![3.0, 6.0]);
        assert_eq!(mix_mean(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(mix_mean::<f64>(&[]), Err(ImportanceError::NoCurves));
        let other = ImportanceCurve::zero(timeline(3));
        assert_eq!(mix_mean(&[a, other]), Err(ImportanceError::TimelineMismatch));
    }

    #[test]
    fn overall_halves_with_silent_series() {
        let tl = timeline(30);
        let per = BTreeMap::from([("A".to_string(), vec![comp(10.0, 2.0, 8.0)]), ("B".to_string(), vec![])]);
        let overall = overall_curve(&per, &tl).unwrap();
        let alone = mix_max(&per["A"], &tl);
        for (o, a) in overall.samples.iter().zip(&alone.samples) {
            assert_eq!(*o, a / 2.0);
        }
        let summed = overall_curve_with(&per, &tl, MixPolicy::Sum, MixPolicy::Sum).unwrap();
        assert_eq!(summed.samples[10], 8.0);
    }

    #[test]
    fn policy_names() {
        for p in [MixPolicy::Max, MixPolicy::Mean, MixPolicy::Sum] {
            assert_eq!(p.name().parse::<MixPolicy>().unwrap(), p);
        }
        assert!("median".parse::<MixPolicy>().is_err());
    }
}
