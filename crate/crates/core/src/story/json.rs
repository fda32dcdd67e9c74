use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::fat::{ParamMap, ParamValue};
use crate::scalar::Scalar;
use crate::segmentation::Section;
use crate::timeseries::{parse_date, TimePoint, Timeline, DATE_FORMAT};

use super::{ActionEvent, ActionKind, Advance, EmbeddedPoints, EmbeddedSeries, StoryDocument, StoryMode};

pub const STORY_VERSION: &str = "msb-story/1";

/// A schema violation, located by JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JsonError {
    #[error("invalid JSON: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

impl JsonError {
    pub fn path(&self) -> Option<&str> {
        match self {
            Self::Schema { path, .. } => Some(path),
            Self::Syntax(_) => None,
        }
    }
}

fn date_str(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

fn number<T: Scalar>(x: T) -> Value {
    json!(x.as_f64())
}

fn param_value(v: &ParamValue) -> Value {
    match v {
        ParamValue::Bool(b) => json!(b),
        ParamValue::Integer(i) => json!(i),
        ParamValue::Real(x) => json!(x),
        ParamValue::Color(s) | ParamValue::Text(s) => json!(s),
    }
}

fn event_value<T: Scalar>(e: &ActionEvent<T>) -> Value {
    let params: Map<String, Value> = e.params.iter().map(|(k, v)| (k.to_string(), param_value(v))).collect();
    json!({
        "action": e.action.name(),
        "params": params,
        "text": e.text,
        "anchor": date_str(e.anchor.date),
        "extent": e.extent.map(|(a, b)| json!([date_str(a.date), date_str(b.date)])),
        "rank": number(e.rank),
        "seriesId": e.series_id,
        "sourceRow": e.source_row,
    })
}

fn series_value<T: Scalar>(s: &EmbeddedSeries<T>) -> Value {
    let points: Vec<Value> = match &s.points {
        EmbeddedPoints::Numerical(p) => p.iter().map(|(d, v)| json!([date_str(*d), number(*v)])).collect(),
        EmbeddedPoints::Categorical(p) => p.iter().map(|(d, c)| json!([date_str(*d), c])).collect(),
    };
    json!({
        "id": s.id,
        "label": s.label,
        "kind": s.kind(),
        "points": points,
    })
}

fn section_value<T: Scalar>(s: &Section<T>) -> Value {
    let advance = match s.advance {
        Advance::Play => json!({ "trigger": "play" }),
        Advance::Timer { delay } => json!({ "trigger": "timer", "delay": number(delay) }),
    };
    json!({
        "index": s.index,
        "range": [date_str(s.start), date_str(s.end)],
        "events": s.events.iter().map(event_value).collect::<Vec<_>>(),
        "advance": advance,
    })
}

/// Pretty-printed JSON with a fixed key order and a trailing newline.
pub fn serialize<T: Scalar>(doc: &StoryDocument<T>) -> String {
    let mut root = json!({
        "version": STORY_VERSION,
        "title": doc.title,
        "context": doc.context,
        "mode": doc.mode.name(),
        "unitSectionTime": number(doc.unit_section_time),
        "timeline": { "start": date_str(doc.timeline.start()), "end": date_str(doc.timeline.end()) },
        "series": doc.series.iter().map(series_value).collect::<Vec<_>>(),
        "sections": doc.sections.iter().map(section_value).collect::<Vec<_>>(),
    });
    if let Some(stamp) = &doc.stamp {
        root["stamp"] = json!(stamp);
    }
    let mut out = serde_json::to_string_pretty(&root).expect("JSON values always serialize");
    out.push('\n');
    out
}

/// Walks a JSON value, tracking the pointer for error messages.
struct Cursor<'a> {
    value: &'a Value,
    path: String,
}

impl<'a> Cursor<'a> {
    fn err<X>(&self, message: impl Into<String>) -> Result<X, JsonError> {
        Err(JsonError::Schema {
            path: if self.path.is_empty() {
                "/".into()
            } else {
                self.path.clone()
            },
            message: message.into(),
        })
    }

    fn field(&self, key: &str) -> Result<Cursor<'a>, JsonError> {
        let path = format!("{}/{}", self.path, key);
        let obj = match self.value.as_object() {
            Some(o) => o,
            None => return self.err("expected an object"),
        };
        match obj.get(key) {
            Some(value) => Ok(Cursor { value, path }),
            None => Err(JsonError::Schema {
                path,
                message: "missing required field".into(),
            }),
        }
    }

    fn optional(&self, key: &str) -> Option<Cursor<'a>> {
        let value = self.value.as_object()?.get(key).filter(|v| !v.is_null())?;
        Some(Cursor {
            value,
            path: format!("{}/{}", self.path, key),
        })
    }

    fn items(&self) -> Result<Vec<Cursor<'a>>, JsonError> {
        match self.value.as_array() {
            Some(a) => Ok(a
                .iter()
                .enumerate()
                .map(|(i, value)| Cursor {
                    value,
                    path: format!("{}/{}", self.path, i),
                })
                .collect()),
            None => self.err("expected an array"),
        }
    }

    fn str(&self) -> Result<&'a str, JsonError> {
        match self.value.as_str() {
            Some(s) => Ok(s),
            None => self.err("expected a string"),
        }
    }

    fn f64(&self) -> Result<f64, JsonError> {
        match self.value.as_f64() {
            Some(x) => Ok(x),
            None => self.err("expected a number"),
        }
    }

    fn usize(&self) -> Result<usize, JsonError> {
        match self.value.as_u64() {
            Some(x) => Ok(x as usize),
            None => self.err("expected a non-negative integer"),
        }
    }

    fn date(&self) -> Result<NaiveDate, JsonError> {
        match parse_date(self.str()?) {
            Some(d) => Ok(d),
            None => self.err("expected a YYYY-MM-DD date"),
        }
    }

    fn pair(&self) -> Result<(Cursor<'a>, Cursor<'a>), JsonError> {
        let items = self.items()?;
        match <[Cursor<'a>; 2]>::try_from(items) {
            Ok([a, b]) => Ok((a, b)),
            Err(_) => self.err("expected a two-element array"),
        }
    }
}

fn read_params(c: &Cursor<'_>) -> Result<ParamMap, JsonError> {
    let obj = match c.value.as_object() {
        Some(o) => o,
        None => return c.err("expected an object"),
    };
    let mut map = ParamMap::new();
    for (k, v) in obj {
        let at = Cursor {
            value: v,
            path: format!("{}/{}", c.path, k),
        };
        let value = match v {
            Value::Bool(b) => ParamValue::Bool(*b),
            Value::Number(n) => match n.as_i64() {
                Some(i) => ParamValue::Integer(i),
                None => ParamValue::Real(at.f64()?),
            },
            Value::String(s) => match ParamValue::parse(s) {
                color @ ParamValue::Color(_) => color,
                _ => ParamValue::Text(s.clone()),
            },
            _ => return at.err("expected a scalar parameter value"),
        };
        if let Err(e) = map.insert(k.clone(), value) {
            return at.err(e.to_string());
        }
    }
    Ok(map)
}

fn read_event<T: Scalar>(c: &Cursor<'_>, origin: NaiveDate) -> Result<ActionEvent<T>, JsonError> {
    let action_at = c.field("action")?;
    let action: ActionKind = match action_at.str()?.parse() {
        Ok(a) => a,
        Err(e) => return action_at.err(e),
    };
    let extent = match c.optional("extent") {
        Some(x) => {
            let (a, b) = x.pair()?;
            Some((TimePoint::new(origin, a.date()?), TimePoint::new(origin, b.date()?)))
        }
        None => None,
    };
    Ok(ActionEvent {
        action,
        params: read_params(&c.field("params")?)?,
        text: c.field("text")?.str()?.to_string(),
        anchor: TimePoint::new(origin, c.field("anchor")?.date()?),
        extent,
        rank: T::lit(c.field("rank")?.f64()?),
        series_id: c.field("seriesId")?.str()?.to_string(),
        source_row: match c.optional("sourceRow") {
            Some(r) => r.usize()?,
            None => 0,
        },
    })
}

fn read_series<T: Scalar>(c: &Cursor<'_>) -> Result<EmbeddedSeries<T>, JsonError> {
    let kind_at = c.field("kind")?;
    let points_at = c.field("points")?;
    let points = match kind_at.str()? {
        "numerical" => EmbeddedPoints::Numerical(
            points_at
                .items()?
                .iter()
                .map(|p| {
                    let (d, v) = p.pair()?;
                    Ok((d.date()?, T::lit(v.f64()?)))
                })
                .collect::<Result<_, JsonError>>()?,
        ),
        "categorical" => EmbeddedPoints::Categorical(
            points_at
                .items()?
                .iter()
                .map(|p| {
                    let (d, v) = p.pair()?;
                    Ok((d.date()?, v.str()?.to_string()))
                })
                .collect::<Result<_, JsonError>>()?,
        ),
        _ => return kind_at.err("expected \"numerical\" or \"categorical\""),
    };
    Ok(EmbeddedSeries {
        id: c.field("id")?.str()?.to_string(),
        label: c.field("label")?.str()?.to_string(),
        points,
    })
}

fn read_section<T: Scalar>(c: &Cursor<'_>, origin: NaiveDate) -> Result<Section<T>, JsonError> {
    let (start, end) = c.field("range")?.pair()?;
    let advance = match c.optional("advance") {
        None => Advance::Play,
        Some(a) => {
            let trigger = a.field("trigger")?;
            match trigger.str()? {
                "play" => Advance::Play,
                "timer" => Advance::Timer {
                    delay: T::lit(a.field("delay")?.f64()?),
                },
                _ => return trigger.err("expected \"play\" or \"timer\""),
            }
        }
    };
    Ok(Section {
        index: c.field("index")?.usize()?,
        start: start.date()?,
        end: end.date()?,
        events: c
            .field("events")?
            .items()?
            .iter()
            .map(|e| read_event(e, origin))
            .collect::<Result<_, _>>()?,
        advance,
    })
}

/// Reads a document; unknown fields are ignored.
pub fn deserialize<T: Scalar>(text: &str) -> Result<StoryDocument<T>, JsonError> {
    let value: Value = serde_json::from_str(text).map_err(|e| JsonError::Syntax(e.to_string()))?;
    let root = Cursor {
        value: &value,
        path: String::new(),
    };
    if !value.is_object() {
        return root.err("expected an object");
    }
    let version = root.field("version")?;
    if version.str()? != STORY_VERSION {
        return version.err(format!("unsupported version, expected {STORY_VERSION}"));
    }
    let tl = root.field("timeline")?;
    let (start, end) = (tl.field("start")?.date()?, tl.field("end")?.date()?);
    let timeline = match Timeline::new(start, end) {
        Ok(t) => t,
        Err(e) => return tl.err(e.to_string()),
    };
    let mode_at = root.field("mode")?;
    let mode: StoryMode = match mode_at.str()?.parse() {
        Ok(m) => m,
        Err(e) => return mode_at.err(e),
    };
    let context_at = root.field("context")?;
    let context = match context_at.value.as_object() {
        Some(obj) => obj
            .iter()
            .map(|(k, v)| {
                let at = Cursor {
                    value: v,
                    path: format!("{}/{}", context_at.path, k),
                };
                Ok((k.clone(), at.str()?.to_string()))
            })
            .collect::<Result<BTreeMap<_, _>, JsonError>>()?,
        None => return context_at.err("expected an object"),
    };
    Ok(StoryDocument {
        title: root.field("title")?.str()?.to_string(),
        context,
        mode,
        unit_section_time: T::lit(root.field("unitSectionTime")?.f64()?),
        timeline,
        series: root
            .field("series")?
            .items()?
            .iter()
            .map(read_series)
            .collect::<Result<_, _>>()?,
        sections: root
            .field("sections")?
            .items()?
            .iter()
            .map(|s| read_section(s, start))
            .collect::<Result<_, _>>()?,
        stamp: root
            .optional("stamp")
            .map(|s| s.str().map(str::to_string))
            .transpose()?,
    })
}
