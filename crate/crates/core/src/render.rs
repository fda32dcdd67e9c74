//! Static SVG snapshots of story sections.
//!
//! Each snapshot shows the state at the end of a section: axes once drawn,
//! every series revealed up to its furthest `DRAW_DATA`, the current
//! section's highlight glyphs, and the latest text of every message box.

use std::collections::BTreeMap;
use std::fmt::Write;

use chrono::NaiveDate;

use crate::fat::ParamValue;
use crate::scalar::Scalar;
use crate::story::{ActionEvent, ActionKind, StoryDocument};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const PLOT_BOTTOM: f64 = 330.0;
const BOX_TOP: f64 = 360.0;
const BOX_LINE: f64 = 22.0;

const PALETTE: [&str; 6] = ["#1F77B4", "#FF7F0E", "#2CA02C", "#9467BD", "#8C564B", "#17BECF"];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Frame {
    start: NaiveDate,
    days: f64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn new<T: Scalar>(doc: &StoryDocument<T>) -> Self {
        let values = doc
            .series
            .iter()
            .filter_map(|s| s.numerical())
            .flat_map(|p| p.iter().map(|(_, v)| v.as_f64()));
        let (mut lo, mut hi) = values.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi <= lo {
            lo -= 1.0;
            hi += 1.0;
        }
        Self {
            start: doc.timeline.start(),
            days: (doc.timeline.len().max(2) - 1) as f64,
            lo,
            hi,
        }
    }

    fn x(&self, d: NaiveDate) -> f64 {
        let i = (d - self.start).num_days() as f64;
        LEFT + i / self.days * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        PLOT_BOTTOM - (v - self.lo) / (self.hi - self.lo) * (PLOT_BOTTOM - TOP)
    }
}

fn param_f64(e: &ActionEvent<impl Scalar>, name: &str, default: f64) -> f64 {
    e.params.get(name).and_then(ParamValue::as_f64).unwrap_or(default)
}

fn param_str(e: &ActionEvent<impl Scalar>, name: &str, default: &str) -> String {
    e.params
        .get(name)
        .map(|v| v.to_string())
        .unwrap_or_else(|| default.to_string())
}

fn style<T: Scalar>(e: &ActionEvent<T>, default_color: &str) -> String {
    format!(
        "stroke=\"{}\" stroke-width=\"{:.2}\" opacity=\"{:.2}\"",
        escape(&param_str(e, "COLOR", default_color)),
        param_f64(e, "STROKE_WIDTH", 2.0),
        param_f64(e, "OPACITY", 1.0)
    )
}

fn value_on<T: Scalar>(doc: &StoryDocument<T>, series: &str, d: NaiveDate) -> Option<f64> {
    doc.series(series)?
        .numerical()?
        .iter()
        .find(|(pd, _)| *pd == d)
        .map(|(_, v)| v.as_f64())
}

/// Renders the end state of section `index`.
pub fn render_section<T: Scalar>(doc: &StoryDocument<T>, index: usize) -> String {
    let f = Frame::new(doc);
    let upto = &doc.sections[..=index.min(doc.sections.len() - 1)];
    let section = &doc.sections[index.min(doc.sections.len() - 1)];
    let past = || upto.iter().flat_map(|s| s.events.iter());

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\">"
    );
    let _ = writeln!(
        svg,
        "<text class=\"title\" x=\"{LEFT:.2}\" y=\"24.00\" font-size=\"16\">{} ({}/{})</text>",
        escape(&doc.title),
        section.index + 1,
        doc.sections.len()
    );

    if past().any(|e| e.action == ActionKind::DrawAxis) {
        let x1 = WIDTH - RIGHT;
        let _ = writeln!(svg, "<g class=\"axes\" stroke=\"#333333\" stroke-width=\"1.00\">");
        let _ = writeln!(
            svg,
            "<line x1=\"{LEFT:.2}\" y1=\"{PLOT_BOTTOM:.2}\" x2=\"{x1:.2}\" y2=\"{PLOT_BOTTOM:.2}\"/>"
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{LEFT:.2}\" y1=\"{TOP:.2}\" x2=\"{LEFT:.2}\" y2=\"{PLOT_BOTTOM:.2}\"/>"
        );
        let _ = writeln!(svg, "</g>");
        let label_y = PLOT_BOTTOM + 16.0;
        let _ = writeln!(
            svg,
            "<text class=\"tick\" x=\"{LEFT:.2}\" y=\"{label_y:.2}\" font-size=\"11\">{}</text>",
            doc.timeline.start().format("%Y-%m-%d")
        );
        let _ = writeln!(
            svg,
            "<text class=\"tick\" x=\"{:.2}\" y=\"{label_y:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            x1,
            doc.timeline.end().format("%Y-%m-%d")
        );
        for v in [f.lo, f.hi] {
            let _ = writeln!(
                svg,
                "<text class=\"tick\" x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
                LEFT - 6.0,
                f.y(v) + 4.0,
                crate::story::format_real(v)
            );
        }
    }

    // furthest revealed date per series
    let mut reveal: BTreeMap<&str, NaiveDate> = BTreeMap::new();
    for e in past().filter(|e| e.action == ActionKind::DrawData) {
        let end = e.extent.map(|(_, b)| b.date).unwrap_or(e.anchor.date);
        let slot = reveal.entry(e.series_id.as_str()).or_insert(end);
        *slot = (*slot).max(end);
    }
    for (i, s) in doc.series.iter().enumerate() {
        let (Some(points), Some(&until)) = (s.numerical(), reveal.get(s.id.as_str())) else {
            continue;
        };
        let coords: Vec<String> = points
            .iter()
            .filter(|(d, _)| *d <= until)
            .map(|(d, v)| format!("{:.2},{:.2}", f.x(*d), f.y(v.as_f64())))
            .collect();
        if coords.is_empty() {
            continue;
        }
        let _ = writeln!(
            svg,
            "<polyline class=\"data\" data-series=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.50\" points=\"{}\"/>",
            escape(&s.id),
            PALETTE[i % PALETTE.len()],
            coords.join(" ")
        );
    }

    for e in &section.events {
        if e.params.get("VISIBLE").and_then(ParamValue::as_bool) == Some(false) {
            continue;
        }
        let x = f.x(e.anchor.date);
        let y = value_on(doc, &e.series_id, e.anchor.date).map_or(PLOT_BOTTOM, |v| f.y(v));
        let (x0, x1) = e.extent.map_or((x, x), |(a, b)| (f.x(a.date), f.x(b.date)));
        let tag = escape(&e.series_id);
        match e.action {
            ActionKind::Circle => {
                let _ = writeln!(
                    svg,
                    "<circle data-series=\"{tag}\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{:.2}\" fill=\"none\" {}/>",
                    param_f64(e, "SIZE", 8.0),
                    style(e, "#E84A5F")
                );
            }
            ActionKind::Node => {
                let r = param_f64(e, "SIZE", 5.0);
                let _ = writeln!(
                    svg,
                    "<ellipse class=\"node\" data-series=\"{tag}\" cx=\"{x:.2}\" cy=\"{y:.2}\" rx=\"{r:.2}\" ry=\"{r:.2}\" fill=\"{}\" opacity=\"{:.2}\"/>",
                    escape(&param_str(e, "COLOR", "#FFA500")),
                    param_f64(e, "OPACITY", 1.0)
                );
            }
            ActionKind::Line => {
                let _ = writeln!(
                    svg,
                    "<line class=\"highlight\" x1=\"{x:.2}\" y1=\"{TOP:.2}\" x2=\"{x:.2}\" y2=\"{PLOT_BOTTOM:.2}\" {}/>",
                    style(e, "#E84A5F")
                );
            }
            ActionKind::Rectangle | ActionKind::Cts => {
                let (x0, w) = if x1 > x0 { (x0, x1 - x0) } else { (x - 4.0, 8.0) };
                let class = if e.action == ActionKind::Cts {
                    "cts"
                } else {
                    "highlight"
                };
                let _ = writeln!(
                    svg,
                    "<rect class=\"{class}\" x=\"{x0:.2}\" y=\"{TOP:.2}\" width=\"{w:.2}\" height=\"{:.2}\" fill=\"none\" {}/>",
                    PLOT_BOTTOM - TOP,
                    style(e, "#E84A5F")
                );
            }
            ActionKind::Arrow => {
                let tip = y - 4.0;
                let _ = writeln!(
                    svg,
                    "<path class=\"arrow\" d=\"M{x:.2},{:.2} L{x:.2},{tip:.2} M{:.2},{:.2} L{x:.2},{tip:.2} L{:.2},{:.2}\" fill=\"none\" {}/>",
                    tip - 40.0,
                    x - 6.0,
                    tip - 8.0,
                    x + 6.0,
                    tip - 8.0,
                    style(e, "#E84A5F")
                );
            }
            ActionKind::Nts => {
                let from = e.extent.map_or(e.anchor.date, |(a, _)| a.date);
                let to = e.extent.map_or(e.anchor.date, |(_, b)| b.date);
                let coords: Vec<String> = doc
                    .series(&e.series_id)
                    .and_then(|s| s.numerical())
                    .unwrap_or(&[])
                    .iter()
                    .filter(|(d, _)| *d >= from && *d <= to)
                    .map(|(d, v)| format!("{:.2},{:.2}", f.x(*d), f.y(v.as_f64())))
                    .collect();
                let _ = writeln!(
                    svg,
                    "<polyline class=\"nts\" data-series=\"{tag}\" fill=\"none\" points=\"{}\" {}/>",
                    coords.join(" "),
                    style(e, "#E84A5F")
                );
            }
            ActionKind::Connector => {
                let y0 = e
                    .extent
                    .and_then(|(a, _)| value_on(doc, &e.series_id, a.date))
                    .map_or(y, |v| f.y(v));
                let _ = writeln!(
                    svg,
                    "<line class=\"connector\" x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{y:.2}\" {}/>",
                    style(e, "#808080")
                );
            }
            ActionKind::Axis => {
                let (a, b) = if x1 > x0 { (x0, x1) } else { (x - 4.0, x + 4.0) };
                let _ = writeln!(
                    svg,
                    "<line class=\"axis-highlight\" x1=\"{a:.2}\" y1=\"{PLOT_BOTTOM:.2}\" x2=\"{b:.2}\" y2=\"{PLOT_BOTTOM:.2}\" {}/>",
                    style(e, "#E84A5F")
                );
            }
            ActionKind::TextPos => {
                let _ = writeln!(
                    svg,
                    "<text class=\"label\" x=\"{:.2}\" y=\"{:.2}\" font-size=\"{:.2}\" fill=\"{}\" style=\"background:{}\">{}</text>",
                    LEFT + param_f64(e, "X", 0.0),
                    TOP + param_f64(e, "Y", 0.0),
                    param_f64(e, "FONT_SIZE", 12.0),
                    escape(&param_str(e, "COLOR_TEXT", "#000000")),
                    escape(&param_str(e, "COLOR_BG", "none")),
                    escape(&e.text)
                );
            }
            ActionKind::TextBox | ActionKind::DrawAxis | ActionKind::DrawData | ActionKind::Pause => {}
        }
    }

    // the latest text per message box, up to and including this section
    let mut boxes: BTreeMap<i64, &str> = BTreeMap::new();
    for e in past().filter(|e| e.action == ActionKind::TextBox) {
        let n = e.params.get("BOX").and_then(ParamValue::as_i64).unwrap_or(1);
        boxes.insert(n, &e.text);
    }
    for (i, (n, text)) in boxes.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text class=\"message\" data-box=\"{n}\" x=\"{LEFT:.2}\" y=\"{:.2}\" font-size=\"13\">{}</text>",
            BOX_TOP + BOX_LINE * i as f64,
            escape(text)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// One snapshot per section.
pub fn render_all<T: Scalar>(doc: &StoryDocument<T>) -> Vec<String> {
    (0..doc.sections.len()).map(|i| render_section(doc, i)).collect()
}

/// File name for a section snapshot, numbered from 1.
pub fn snapshot_name(index: usize) -> String {
    format!("section-{:02}.svg", index + 1)
}
