//! Story compiler for time-series data.
//!
//! A feature-action table names data features to look for (peaks, rises,
//! value thresholds, categorical events) and the visual actions to register
//! when they are found. [`story::compile`] runs the table against a set of
//! series, ranks what it found on a Gaussian importance curve, cuts the
//! timeline into sections at the most important moments, and produces a
//! self-contained [`story::StoryDocument`] that a player can animate.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! at the crate root fix it to `f64`, which is what the CLI uses.

// NaN must fail range checks, so several guards are written as `!(x > y)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detect;
pub mod fat;
pub mod importance;
pub mod render;
pub mod scalar;
pub mod segmentation;
pub mod story;
pub mod timeseries;

pub use scalar::Scalar;

/// Default upper bound of the rank scale.
pub const DEFAULT_R_MAX: f64 = 10.0;

pub type NumericalTimeSeries = timeseries::NumericalTimeSeries<f64>;
pub type CategoricalTimeSeries = timeseries::CategoricalTimeSeries<f64>;
pub type TimeSeries = timeseries::TimeSeries<f64>;
pub type SeriesSet = timeseries::SeriesSet<f64>;
pub type FeatureInstance = detect::FeatureInstance<f64>;
pub type DetectionBuffer = detect::DetectionBuffer<f64>;
pub type PeakSegment = detect::PeakSegment<f64>;
pub type GaussianComponent = importance::GaussianComponent<f64>;
pub type ImportanceCurve = importance::ImportanceCurve<f64>;
pub type ActionEvent = story::ActionEvent<f64>;
pub type Section = segmentation::Section<f64>;
pub type StoryDocument = story::StoryDocument<f64>;
pub type CompileSettings = story::CompileSettings<f64>;

pub type NumericalTimeSeriesF32 = timeseries::NumericalTimeSeries<f32>;
pub type ImportanceCurveF32 = importance::ImportanceCurve<f32>;
pub type StoryDocumentF32 = story::StoryDocument<f32>;
