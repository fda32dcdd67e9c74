//! Action registration and story documents.

mod compile;
mod json;
mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::fat::ParamMap;
use crate::scalar::Scalar;
use crate::segmentation::Section;
use crate::timeseries::{TimePoint, Timeline};

pub use compile::{
    compile, register_action, run_detection, CompileError, CompileSettings, Detection, DetectionRun, Registrar,
    RowError,
};
pub use json::{deserialize, serialize, JsonError, STORY_VERSION};
pub use template::{format_real, resolve_text, Binding, TemplateError, TextTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    DrawData,
    DrawAxis,
    TextBox,
    TextPos,
    Line,
    Circle,
    Rectangle,
    Arrow,
    Nts,
    Cts,
    Node,
    Connector,
    Axis,
    Pause,
}

const SHAPE: &[&str] = &["COLOR", "STROKE_WIDTH", "OPACITY", "VISIBLE"];

impl ActionKind {
    pub const ALL: [ActionKind; 14] = [
        Self::DrawData,
        Self::DrawAxis,
        Self::TextBox,
        Self::TextPos,
        Self::Line,
        Self::Circle,
        Self::Rectangle,
        Self::Arrow,
        Self::Nts,
        Self::Cts,
        Self::Node,
        Self::Connector,
        Self::Axis,
        Self::Pause,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DrawData => "DRAW_DATA",
            Self::DrawAxis => "DRAW_AXIS",
            Self::TextBox => "TEXT_BOX",
            Self::TextPos => "TEXT_POS",
            Self::Line => "LINE",
            Self::Circle => "CIRCLE",
            Self::Rectangle => "RECTANGLE",
            Self::Arrow => "ARROW",
            Self::Nts => "NTS",
            Self::Cts => "CTS",
            Self::Node => "NODE",
            Self::Connector => "CONNECTOR",
            Self::Axis => "AXIS",
            Self::Pause => "PAUSE",
        }
    }

    pub fn params(self) -> &'static [&'static str] {
        match self {
            Self::DrawData => &["COLOR", "STROKE_WIDTH", "OPACITY"],
            Self::DrawAxis => &["COLOR"],
            Self::TextBox => &["BOX"],
            Self::TextPos => &["X", "Y", "COLOR_TEXT", "COLOR_BG", "FONT_SIZE", "VISIBLE"],
            Self::Circle | Self::Node => &["SIZE", "COLOR", "STROKE_WIDTH", "OPACITY", "VISIBLE"],
            Self::Line | Self::Rectangle | Self::Arrow | Self::Connector => SHAPE,
            Self::Nts | Self::Cts | Self::Axis => &["COLOR", "OPACITY", "VISIBLE"],
            Self::Pause => &["TIME"],
        }
    }

    /// Axis, data and pause actions, which selection never drops.
    pub fn is_structural(self) -> bool {
        matches!(self, Self::DrawAxis | Self::DrawData | Self::Pause)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

/// A registered action waiting to be played.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionEvent<T> {
    pub action: ActionKind,
    pub params: ParamMap,
    pub text: String,
    /// Index relative to the story timeline once compiled.
    pub anchor: TimePoint,
    pub extent: Option<(TimePoint, TimePoint)>,
    pub rank: T,
    pub series_id: String,
    /// Position of the originating row among the table's executable rows.
    pub source_row: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoryMode {
    #[default]
    Interactive,
    Auto,
}

impl StoryMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Interactive => "interactive",
            Self::Auto => "auto",
        }
    }
}

impl FromStr for StoryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "interactive" => Ok(Self::Interactive),
            "auto" => Ok(Self::Auto),
            other => Err(format!("unknown mode `{other}` (expected interactive or auto)")),
        }
    }
}

/// What moves the player from one section to the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Advance<T> {
    Play,
    Timer { delay: T },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddedPoints<T> {
    Numerical(Vec<(NaiveDate, T)>),
    Categorical(Vec<(NaiveDate, String)>),
}

/// Series data carried inside a document so it plays without the sources.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSeries<T> {
    pub id: String,
    pub label: String,
    pub points: EmbeddedPoints<T>,
}

impl<T: Scalar> EmbeddedSeries<T> {
    pub fn kind(&self) -> &'static str {
        match self.points {
            EmbeddedPoints::Numerical(_) => "numerical",
            EmbeddedPoints::Categorical(_) => "categorical",
        }
    }

    pub fn numerical(&self) -> Option<&[(NaiveDate, T)]> {
        match &self.points {
            EmbeddedPoints::Numerical(p) => Some(p),
            EmbeddedPoints::Categorical(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoryDocument<T> {
    pub title: String,
    pub context: BTreeMap<String, String>,
    pub mode: StoryMode,
    /// Seconds per section when played automatically.
    pub unit_section_time: T,
    pub timeline: Timeline,
    pub series: Vec<EmbeddedSeries<T>>,
    pub sections: Vec<Section<T>>,
    pub stamp: Option<String>,
}

impl<T: Scalar> StoryDocument<T> {
    pub fn series(&self, id: &str) -> Option<&EmbeddedSeries<T>> {
        self.series.iter().find(|s| s.id == id)
    }

    pub fn events(&self) -> impl Iterator<Item = &ActionEvent<T>> {
        self.sections.iter().flat_map(|s| s.events.iter())
    }

    /// Total playing time in automatic mode.
    pub fn auto_duration(&self) -> T {
        self.unit_section_time * T::from_usize_lossy(self.sections.len())
    }
}
