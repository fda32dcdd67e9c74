use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::detect::{detect, AttrValue, DetectError, DetectSettings, DetectionBuffer, FeatureInstance, MatchMode};
use crate::fat::{is_param_name, FeatureActionRow, FeatureActionTable, ParamValue};
use crate::importance::{
    overall_curve_with, point_sigma, to_gaussian, ComponentSource, GaussianComponent, ImportanceCurve, ImportanceError,
    MixPolicy,
};
use crate::scalar::Scalar;
use crate::segmentation::{default_min_gap, segment, select_actions, Section, SegmentError, SelectionPolicy};
use crate::timeseries::{SeriesSet, TimePoint, TimeSeries, Timeline};

use super::template::{Binding, TemplateError, TextTemplate};
use super::{ActionEvent, ActionKind, Advance, EmbeddedPoints, EmbeddedSeries, StoryDocument, StoryMode};

/// A problem with one table row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// Source line in the table file.
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("no data to build a timeline from")]
    NoData,
    #[error("{0}")]
    Settings(String),
    #[error("{} row error(s)", .0.len())]
    Rows(Vec<RowError>),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
}

#[derive(Debug, Clone, PartialEq, Error)]
enum RowProblem {
    #[error("unknown series {0}")]
    UnknownSeries(String),
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error("PAUSE needs a numeric TIME of at least 0 seconds")]
    PauseTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileSettings<T> {
    pub k: usize,
    /// `None` picks [`default_min_gap`].
    pub min_gap: Option<usize>,
    pub selection: SelectionPolicy,
    pub mode: StoryMode,
    pub r_max: T,
    pub context: BTreeMap<String, String>,
    pub mix_within: MixPolicy,
    pub mix_across: MixPolicy,
    /// chrono format for dates in text; ISO when unset.
    pub text_date_format: Option<String>,
    pub title: Option<String>,
    /// Seconds per section in automatic mode.
    pub unit_section_time: T,
    pub detect: DetectSettings<T>,
    pub stamp: Option<String>,
}

impl<T: Scalar> Default for CompileSettings<T> {
    fn default() -> Self {
        Self {
            k: 3,
            min_gap: None,
            selection: SelectionPolicy::All,
            mode: StoryMode::Interactive,
            r_max: T::lit(crate::DEFAULT_R_MAX),
            context: BTreeMap::new(),
            mix_within: MixPolicy::Max,
            mix_across: MixPolicy::Mean,
            text_date_format: None,
            title: None,
            unit_section_time: T::lit(10.0),
            detect: DetectSettings::default(),
            stamp: None,
        }
    }
}

impl<T: Scalar> CompileSettings<T> {
    pub fn validate(&self) -> Result<(), CompileError> {
        if self.k < 1 {
            return Err(SegmentError::Sections(self.k).into());
        }
        if self.min_gap == Some(0) {
            return Err(SegmentError::MinGap(0).into());
        }
        if !(self.r_max >= T::one()) {
            return Err(CompileError::Settings(format!(
                "r_max must be at least 1, got {}",
                self.r_max
            )));
        }
        self.selection.validate(self.r_max.as_f64())?;
        if !(self.unit_section_time > T::zero()) {
            return Err(CompileError::Settings("unit section time must be positive".into()));
        }
        if !(self.detect.slope.value_span > T::zero() && self.detect.slope.day_unit > T::zero()) {
            return Err(CompileError::Settings("slope scale factors must be positive".into()));
        }
        Ok(())
    }
}

/// One detected instance and the row that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    /// Index into the table's rows.
    pub row: usize,
    pub source_row: usize,
    pub instance: FeatureInstance<T>,
}

/// Everything the table produced before segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRun<T> {
    pub timeline: Timeline,
    pub detections: Vec<Detection<T>>,
    /// Registered events in registration order, anchored on the timeline.
    pub events: Vec<ActionEvent<T>>,
    pub components: BTreeMap<String, Vec<GaussianComponent<T>>>,
}

impl<T: Scalar> DetectionRun<T> {
    pub fn curve(&self, within: MixPolicy, across: MixPolicy) -> Result<ImportanceCurve<T>, ImportanceError> {
        overall_curve_with(&self.components, &self.timeline, within, across)
    }
}

/// Builds events from detected instances.
#[derive(Debug, Clone, Copy, Default)]
pub struct Registrar<'a, T> {
    /// Series whose values on the anchor date are bound by upper-cased id.
    pub data: Option<&'a SeriesSet<T>>,
    /// Re-anchor time points on this timeline.
    pub timeline: Option<&'a Timeline>,
    pub date_format: Option<&'a str>,
}

impl<T: Scalar> Registrar<'_, T> {
    fn bindings(&self, inst: &FeatureInstance<T>, buffer: &DetectionBuffer<T>) -> BTreeMap<String, Binding> {
        let mut b = BTreeMap::new();
        if let Some(data) = self.data {
            for s in data.iter().filter_map(TimeSeries::as_numerical) {
                let name = s.id().to_ascii_uppercase();
                if let (true, Some(v)) = (is_param_name(&name), s.value_at(inst.anchor.date)) {
                    b.insert(name, Binding::Real(v.as_f64()));
                }
            }
        }
        for (k, v) in &buffer.context {
            b.insert(k.to_ascii_uppercase(), Binding::Text(v.clone()));
        }
        b.insert("RANK".into(), Binding::Real(inst.rank.as_f64()));
        for (k, v) in &inst.attributes {
            let value = match v {
                AttrValue::Real(x) => Binding::Real(x.as_f64()),
                AttrValue::Text(s) => Binding::Text(s.clone()),
                AttrValue::Date(d) => Binding::Date(*d),
                AttrValue::Flag(f) => Binding::Text(if *f { "TRUE" } else { "FALSE" }.into()),
            };
            b.insert(k.clone(), value);
        }
        b
    }

    fn rebase(&self, p: TimePoint) -> TimePoint {
        match self.timeline {
            Some(t) => TimePoint::new(t.start(), p.date),
            None => p,
        }
    }

    /// Registers `row`'s action at the instance.
    ///
    /// `cursor_before` is where the buffer stood before detection; `DRAW_DATA`
    /// reveals data from there up to the anchor.
    fn register(
        &self,
        row: &FeatureActionRow,
        source_row: usize,
        inst: &FeatureInstance<T>,
        buffer: &DetectionBuffer<T>,
        cursor_before: TimePoint,
    ) -> Result<ActionEvent<T>, RowProblem> {
        let action: ActionKind = row
            .action
            .parse()
            .map_err(|_| RowProblem::UnknownAction(row.action.clone()))?;
        let text = TextTemplate::parse(&row.text)?.render(&self.bindings(inst, buffer), self.date_format)?;
        let mut params = row.action_params.clone();
        match action {
            ActionKind::TextBox if !params.contains("BOX") => {
                params.insert("BOX", ParamValue::Integer(1)).expect("valid name");
            }
            ActionKind::Pause => {
                let ok = params
                    .get("TIME")
                    .and_then(ParamValue::as_f64)
                    .is_some_and(|t| t >= 0.0);
                if !ok {
                    return Err(RowProblem::PauseTime);
                }
            }
            _ => {}
        }
        let extent = if action == ActionKind::DrawData {
            let from = if cursor_before.date <= inst.anchor.date {
                cursor_before
            } else {
                inst.anchor
            };
            Some((from, inst.anchor))
        } else if inst.is_extended() {
            Some((inst.start, inst.end))
        } else {
            None
        };
        Ok(ActionEvent {
            action,
            params,
            text,
            anchor: self.rebase(inst.anchor),
            extent: extent.map(|(a, b)| (self.rebase(a), self.rebase(b))),
            rank: inst.rank,
            series_id: inst.series_id.clone(),
            source_row,
        })
    }
}

/// Registers one action against one instance, with the buffer context as the
/// only bindings besides the instance's own attributes.
pub fn register_action<T: Scalar>(
    row: &FeatureActionRow,
    instance: &FeatureInstance<T>,
    buffer: &DetectionBuffer<T>,
) -> Result<ActionEvent<T>, String> {
    Registrar::default()
        .register(row, 0, instance, buffer, instance.start)
        .map_err(|e| e.to_string())
}

fn buffer_context<T: Scalar>(series: &TimeSeries<T>, base: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    let mut ctx: BTreeMap<String, String> = base.iter().map(|(k, v)| (k.to_ascii_uppercase(), v.clone())).collect();
    if let Some(region) = series.as_numerical().and_then(|s| s.region()) {
        ctx.entry("REGION".into()).or_insert_with(|| region.to_string());
    }
    ctx
}

/// Executes every runnable row in table order with one buffer per series,
/// registering actions and their importance components.
pub fn run_detection<T: Scalar>(
    table: &FeatureActionTable,
    data: &SeriesSet<T>,
    settings: &CompileSettings<T>,
) -> Result<DetectionRun<T>, CompileError> {
    let timeline = data.timeline().ok_or(CompileError::NoData)?;
    let registrar = Registrar {
        data: Some(data),
        timeline: Some(&timeline),
        date_format: settings.text_date_format.as_deref(),
    };
    let mut buffers: BTreeMap<String, DetectionBuffer<T>> = BTreeMap::new();
    let mut run = DetectionRun {
        timeline,
        detections: Vec::new(),
        events: Vec::new(),
        components: BTreeMap::new(),
    };
    let mut errors = Vec::new();

    for (source_row, (row_index, row)) in table.executable_rows().enumerate() {
        let line = table.line_of(row_index);
        let mut step = || -> Result<(), RowProblem> {
            let series = data
                .get(&row.series_id)
                .ok_or_else(|| RowProblem::UnknownSeries(row.series_id.clone()))?;
            let buffer = buffers
                .entry(row.series_id.clone())
                .or_insert_with(|| DetectionBuffer::new(series, buffer_context(series, &settings.context)));
            run.components.entry(row.series_id.clone()).or_default();
            let mode = MatchMode::for_row(row)?;
            let cursor_before = buffer.cursor;
            for inst in detect(row, series, buffer, mode, &settings.detect)? {
                let event = registrar.register(row, source_row, &inst, buffer, cursor_before)?;
                let component = to_gaussian(&inst, &timeline)?;
                run.components.entry(row.series_id.clone()).or_default().push(component);
                run.events.push(event);
                run.detections.push(Detection {
                    row: row_index,
                    source_row,
                    instance: inst,
                });
            }
            Ok(())
        };
        if let Err(e) = step() {
            errors.push(RowError {
                line,
                message: e.to_string(),
            });
        }
    }
    if !errors.is_empty() {
        return Err(CompileError::Rows(errors));
    }

    // ranked categorical events weigh in directly
    let sigma = point_sigma::<T>(timeline.len());
    for cts in data.iter().filter_map(TimeSeries::as_categorical) {
        for e in cts.events() {
            let (Some(rank), Some(center)) = (e.rank, timeline.index_of(e.point.date)) else {
                continue;
            };
            let source = ComponentSource {
                series_id: cts.id().to_string(),
                kind: None,
                anchor: e.point.date,
            };
            run.components
                .entry(cts.id().to_string())
                .or_default()
                .push(GaussianComponent::new(T::from_usize_lossy(center), sigma, rank, source));
        }
    }
    Ok(run)
}

fn embed<T: Scalar>(series: &TimeSeries<T>) -> EmbeddedSeries<T> {
    let points = match series {
        TimeSeries::Numerical(s) => EmbeddedPoints::Numerical(s.points().map(|(p, v)| (p.date, v)).collect()),
        TimeSeries::Categorical(s) => {
            EmbeddedPoints::Categorical(s.events().iter().map(|e| (e.point.date, e.category.clone())).collect())
        }
    };
    EmbeddedSeries {
        id: series.id().to_string(),
        label: series.label().to_string(),
        points,
    }
}

/// Compiles a table and its data into a story document.
pub fn compile<T: Scalar>(
    table: &FeatureActionTable,
    data: &SeriesSet<T>,
    settings: &CompileSettings<T>,
) -> Result<StoryDocument<T>, CompileError> {
    settings.validate()?;
    let run = run_detection(table, data, settings)?;
    let timeline = run.timeline;
    let curve = run.curve(settings.mix_within, settings.mix_across)?;
    let min_gap = settings
        .min_gap
        .unwrap_or_else(|| default_min_gap(timeline.len(), settings.k));
    let plan = segment(&curve, settings.k, min_gap)?.with_selection(settings.selection);

    let advance = match settings.mode {
        StoryMode::Interactive => Advance::Play,
        StoryMode::Auto => Advance::Timer {
            delay: settings.unit_section_time,
        },
    };
    let mut sections: Vec<Section<T>> = plan
        .ranges(timeline.len())
        .into_iter()
        .enumerate()
        .map(|(i, r)| Section {
            advance,
            ..Section::from_range(i, &timeline, r)
        })
        .collect();

    let mut events = run.events;
    // stable: same-day events keep table order
    events.sort_by_key(|e| e.anchor.date);
    for e in events {
        let day = e.anchor.index.max(0) as usize;
        sections[plan.section_of(day)].events.push(e);
    }
    for s in &mut sections {
        s.events = select_actions(&s.events, plan.selection);
    }

    Ok(StoryDocument {
        title: settings.title.clone().unwrap_or_else(|| "Untitled story".to_string()),
        context: settings.context.clone(),
        mode: settings.mode,
        unit_section_time: settings.unit_section_time,
        timeline,
        series: data.iter().map(embed).collect(),
        sections,
        stamp: settings.stamp.clone(),
    })
}
