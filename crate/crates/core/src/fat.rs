//! Feature-action table parsing and emission.
//!
//! A table is a CSV file with eight columns:
//!
//! ```text
//! TimeSeriesId,Feature,FeatureParams,Rank,Action,ActionParams,Text,Comments
//! ```
//!
//! Parameter columns hold `NAME:value` pairs separated by commas. Rows naming
//! a feature or action outside the [`Vocabulary`] still parse; they are marked
//! inert, reported as warnings, and never executed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::detect::FeatureKind;
use crate::story::ActionKind;
use crate::DEFAULT_R_MAX;

pub const HEADER: [&str; 8] = [
    "TimeSeriesId",
    "Feature",
    "FeatureParams",
    "Rank",
    "Action",
    "ActionParams",
    "Text",
    "Comments",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("parameter `{0}` has no `:`")]
    MissingColon(String),
    #[error("parameter with empty name in `{0}`")]
    EmptyName(String),
    #[error("invalid parameter name `{0}`")]
    InvalidName(String),
    #[error("duplicate parameter `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line 1: expected header `{}`, found `{found}`", HEADER.join(","))]
    Header { found: String },
    #[error("line {line}: expected 8 columns, found {found}")]
    ColumnCount { line: u64, found: usize },
    #[error("line {line}: rank `{value}` is not a number")]
    RankNotNumeric { line: u64, value: String },
    #[error("line {line}: rank {rank} out of range [1,{r_max}]")]
    RankOutOfRange { line: u64, rank: f64, r_max: f64 },
    #[error("line {line}: {column}: {source}")]
    Params {
        line: u64,
        column: &'static str,
        source: ParamError,
    },
    #[error("line {line}: empty {column}")]
    EmptyField { line: u64, column: &'static str },
    #[error("{0}")]
    Write(String),
}

impl TableError {
    pub fn line(&self) -> Option<u64> {
        match self {
            Self::Csv { line, .. }
            | Self::ColumnCount { line, .. }
            | Self::RankNotNumeric { line, .. }
            | Self::RankOutOfRange { line, .. }
            | Self::Params { line, .. }
            | Self::EmptyField { line, .. } => Some(*line),
            Self::Header { .. } => Some(1),
            _ => None,
        }
    }
}

/// A parameter value, tagged by the shape of its text.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Bool(bool),
    Integer(i64),
    Real(f64),
    /// `#RRGGBB`
    Color(String),
    Text(String),
}

impl ParamValue {
    pub fn parse(raw: &str) -> Self {
        let raw = raw.trim();
        match raw {
            "TRUE" => return Self::Bool(true),
            "FALSE" => return Self::Bool(false),
            _ => {}
        }
        if is_color(raw) {
            return Self::Color(raw.to_ascii_uppercase());
        }
        if let Ok(i) = raw.parse::<i64>() {
            return Self::Integer(i);
        }
        match raw.parse::<f64>() {
            Ok(x) if x.is_finite() => Self::Real(x),
            _ => Self::Text(raw.to_string()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Self::Integer(i) => Some(i as f64),
            Self::Real(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Self::Integer(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Self::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Self::Color(s) | Self::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bool(true) => f.write_str("TRUE"),
            Self::Bool(false) => f.write_str("FALSE"),
            Self::Integer(i) => write!(f, "{i}"),
            Self::Real(x) => write!(f, "{x}"),
            Self::Color(s) | Self::Text(s) => f.write_str(s),
        }
    }
}

fn is_color(raw: &str) -> bool {
    raw.len() == 7 && raw.starts_with('#') && raw[1..].bytes().all(|b| b.is_ascii_hexdigit())
}

pub(crate) fn is_param_name(name: &str) -> bool {
    let mut bytes = name.bytes();
    matches!(bytes.next(), Some(b'A'..=b'Z'))
        && bytes.all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
}

/// Ordered `NAME -> value` map; order is kept for deterministic emission.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamMap {
    entries: Vec<(String, ParamValue)>,
}

impl ParamMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Appends an entry, rejecting invalid or duplicate names.
    pub fn insert(&mut self, name: impl Into<String>, value: ParamValue) -> Result<(), ParamError> {
        let name = name.into();
        if !is_param_name(&name) {
            return Err(ParamError::InvalidName(name));
        }
        if self.contains(&name) {
            return Err(ParamError::Duplicate(name));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamValue)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for ParamMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, value)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}:{value}")?;
        }
        Ok(())
    }
}

/// Parses `NAME:value, NAME:value, ...`. Names are uppercased.
pub fn parse_params(raw: &str) -> Result<ParamMap, ParamError> {
    let mut map = ParamMap::new();
    if raw.trim().is_empty() {
        return Ok(map);
    }
    for entry in raw.split(',') {
        let entry = entry.trim();
        let (name, value) = entry
            .split_once(':')
            .ok_or_else(|| ParamError::MissingColon(entry.to_string()))?;
        let name = name.trim().to_ascii_uppercase();
        if name.is_empty() {
            return Err(ParamError::EmptyName(entry.to_string()));
        }
        map.insert(name, ParamValue::parse(value))?;
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureActionRow {
    pub series_id: String,
    pub feature: String,
    pub feature_params: ParamMap,
    pub rank: f64,
    pub action: String,
    pub action_params: ParamMap,
    pub text: String,
    pub comment: String,
    /// Set when the feature or action is not in the vocabulary.
    pub inert: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct FeatureActionTable {
    pub rows: Vec<FeatureActionRow>,
    /// Source line of each row, parallel to `rows`.
    pub lines: Vec<u64>,
    pub warnings: Vec<Diagnostic>,
}

/// Structural equality over rows only; warnings and line numbers are excluded.
impl PartialEq for FeatureActionTable {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
    }
}

impl FeatureActionTable {
    pub fn new(rows: Vec<FeatureActionRow>) -> Self {
        let lines = (0..rows.len() as u64).map(|i| i + 2).collect();
        Self {
            rows,
            lines,
            warnings: Vec::new(),
        }
    }

    /// Rows that will run, paired with their table index.
    pub fn executable_rows(&self) -> impl Iterator<Item = (usize, &FeatureActionRow)> {
        self.rows.iter().enumerate().filter(|(_, r)| !r.inert)
    }

    pub fn line_of(&self, row: usize) -> u64 {
        self.lines.get(row).copied().unwrap_or(row as u64 + 2)
    }
}

/// Known feature and action names, each with the parameters it understands.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    features: BTreeMap<String, BTreeSet<String>>,
    actions: BTreeMap<String, BTreeSet<String>>,
}

impl Vocabulary {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Every built-in feature and action.
    pub fn msb() -> Self {
        let mut v = Self::empty();
        for kind in FeatureKind::ALL {
            v = v.with_feature(kind.name(), kind.params());
        }
        for kind in ActionKind::ALL {
            v = v.with_action(kind.name(), kind.params());
        }
        v
    }

    pub fn with_feature(mut self, name: &str, params: &[&str]) -> Self {
        self.features
            .insert(name.to_string(), params.iter().map(|p| p.to_string()).collect());
        self
    }

    pub fn with_action(mut self, name: &str, params: &[&str]) -> Self {
        self.actions
            .insert(name.to_string(), params.iter().map(|p| p.to_string()).collect());
        self
    }

    pub fn knows_feature(&self, name: &str) -> bool {
        self.features.contains_key(name)
    }

    pub fn knows_action(&self, name: &str) -> bool {
        self.actions.contains_key(name)
    }

    pub fn feature_names(&self) -> BTreeSet<String> {
        self.features.keys().cloned().collect()
    }

    pub fn action_names(&self) -> BTreeSet<String> {
        self.actions.keys().cloned().collect()
    }
}

/// Table reader with a vocabulary and rank ceiling.
#[derive(Debug, Clone)]
pub struct TableParser {
    vocabulary: Vocabulary,
    r_max: f64,
}

impl Default for TableParser {
    fn default() -> Self {
        Self {
            vocabulary: Vocabulary::msb(),
            r_max: DEFAULT_R_MAX,
        }
    }
}

impl TableParser {
    pub fn new(vocabulary: Vocabulary) -> Self {
        Self {
            vocabulary,
            r_max: DEFAULT_R_MAX,
        }
    }

    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }

    pub fn parse_file(&self, path: impl AsRef<Path>) -> Result<FeatureActionTable, TableError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.parse_reader(file)
    }

    pub fn parse_str(&self, csv: &str) -> Result<FeatureActionTable, TableError> {
        self.parse_reader(csv.as_bytes())
    }

    pub fn parse_reader<R: Read>(&self, reader: R) -> Result<FeatureActionTable, TableError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(csv_error)?.clone();
        let found: Vec<&str> = headers.iter().map(str::trim).collect();
        if found != HEADER {
            return Err(TableError::Header { found: found.join(",") });
        }
        let mut table = FeatureActionTable::default();
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() == 1 && record[0].trim().is_empty() {
                continue;
            }
            if record.len() != HEADER.len() {
                return Err(TableError::ColumnCount {
                    line,
                    found: record.len(),
                });
            }
            let row = self.parse_row(&record, line, &mut table.warnings)?;
            table.rows.push(row);
            table.lines.push(line);
        }
        Ok(table)
    }

    fn parse_row(
        &self,
        record: &csv::StringRecord,
        line: u64,
        warnings: &mut Vec<Diagnostic>,
    ) -> Result<FeatureActionRow, TableError> {
        let series_id = record[0].trim().to_string();
        if series_id.is_empty() {
            return Err(TableError::EmptyField {
                line,
                column: "TimeSeriesId",
            });
        }
        let feature = record[1].trim().to_ascii_uppercase();
        if feature.is_empty() {
            return Err(TableError::EmptyField {
                line,
                column: "Feature",
            });
        }
        let feature_params = parse_params(&record[2]).map_err(|source| TableError::Params {
            line,
            column: "FeatureParams",
            source,
        })?;
        let raw_rank = record[3].trim();
        let rank: f64 =
            raw_rank
                .parse()
                .ok()
                .filter(|r: &f64| !r.is_nan())
                .ok_or_else(|| TableError::RankNotNumeric {
                    line,
                    value: raw_rank.to_string(),
                })?;
        if !(1.0..=self.r_max).contains(&rank) {
            return Err(TableError::RankOutOfRange {
                line,
                rank,
                r_max: self.r_max,
            });
        }
        let action = record[4].trim().to_ascii_uppercase();
        let action_params = parse_params(&record[5]).map_err(|source| TableError::Params {
            line,
            column: "ActionParams",
            source,
        })?;

        let mut inert = false;
        let mut warn = |message: String| warnings.push(Diagnostic { line, message });
        match self.vocabulary.features.get(&feature) {
            None => {
                warn(format!("unknown feature {feature}"));
                inert = true;
            }
            Some(known) => {
                for name in feature_params.names().filter(|n| !known.contains(*n)) {
                    warn(format!("unknown parameter {name} for feature {feature}"));
                }
            }
        }
        match self.vocabulary.actions.get(&action) {
            None if action.is_empty() => {
                warn("missing action".to_string());
                inert = true;
            }
            None => {
                warn(format!("unknown action {action}"));
                inert = true;
            }
            Some(known) => {
                for name in action_params.names().filter(|n| !known.contains(*n)) {
                    warn(format!("unknown parameter {name} for action {action}"));
                }
            }
        }

        Ok(FeatureActionRow {
            series_id,
            feature,
            feature_params,
            rank,
            action,
            action_params,
            text: record[6].to_string(),
            comment: record[7].to_string(),
            inert,
        })
    }
}

fn csv_error(e: csv::Error) -> TableError {
    TableError::Csv {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    }
}

/// Parses a table file with the given known names and the default rank
/// ceiling. Names outside the sets make rows inert; parameters are not
/// checked.
pub fn parse_table(
    path: impl AsRef<Path>,
    known_features: &BTreeSet<String>,
    known_actions: &BTreeSet<String>,
) -> Result<FeatureActionTable, TableError> {
    let mut vocab = Vocabulary::empty();
    let builtin = Vocabulary::msb();
    for f in known_features {
        let params = builtin.features.get(f).cloned().unwrap_or_default();
        vocab.features.insert(f.clone(), params);
    }
    for a in known_actions {
        let params = builtin.actions.get(a).cloned().unwrap_or_default();
        vocab.actions.insert(a.clone(), params);
    }
    TableParser::new(vocab).parse_file(path)
}

/// Writes the canonical CSV form of a table.
pub fn write_table<W: Write>(table: &FeatureActionTable, writer: W) -> Result<(), TableError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(writer);
    let err = |e: csv::Error| TableError::Write(e.to_string());
    wtr.write_record(HEADER).map_err(err)?;
    for row in &table.rows {
        wtr.write_record([
            row.series_id.clone(),
            row.feature.clone(),
            row.feature_params.to_string(),
            row.rank.to_string(),
            row.action.clone(),
            row.action_params.to_string(),
            row.text.clone(),
            row.comment.clone(),
        ])
        .map_err(err)?;
    }
    wtr.flush().map_err(|e| TableError::Write(e.to_string()))
}

pub fn emit_table(table: &FeatureActionTable, path: impl AsRef<Path>) -> Result<(), TableError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_table(table, std::io::BufWriter::new(file))
}

pub fn table_to_string(table: &FeatureActionTable) -> String {
    let mut buf = Vec::new();
    write_table(table, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "TimeSeriesId,Feature,FeatureParams,Rank,Action,ActionParams,Text,Comments\n";

    fn parse(body: &str) -> Result<FeatureActionTable, TableError> {
        TableParser::default().parse_str(&format!("{HEAD}{body}"))
    }

    #[test]
    fn first_draw_axis_row() {
        let t = parse("TS1,FIRST,,10,DRAW_AXIS,,,\n").unwrap();
        let row = &t.rows[0];
        assert_eq!(row.series_id, "TS1");
        assert_eq!(row.feature, "FIRST");
        assert_eq!(row.rank, 10.0);
        assert_eq!(row.action, "DRAW_AXIS");
        assert!(row.feature_params.is_empty() && row.action_params.is_empty());
        assert!(!row.inert);
        assert!(t.warnings.is_empty());
    }

    #[test]
    fn comparator_params() {
        let t = parse("TS1,SLOPE,\"GT:-10, LT:10\",3,TEXT_BOX,,,\n").unwrap();
        let p = &t.rows[0].feature_params;
        assert_eq!(p.get("GT"), Some(&ParamValue::Integer(-10)));
        assert_eq!(p.get("LT"), Some(&ParamValue::Integer(10)));
        assert_eq!(p.names().collect::<Vec<_>>(), vec!["GT", "LT"]);
    }

    #[test]
    fn typed_params() {
        let p = parse_params("SIZE:10, STROKE_WIDTH:3, COLOR:#E84A5F, OPACITY:0.6").unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.get("SIZE"), Some(&ParamValue::Integer(10)));
        assert_eq!(p.get("STROKE_WIDTH"), Some(&ParamValue::Integer(3)));
        assert_eq!(p.get("COLOR"), Some(&ParamValue::Color("#E84A5F".into())));
        assert_eq!(p.get("OPACITY"), Some(&ParamValue::Real(0.6)));
        assert_eq!(
            parse_params("UPTO:28").unwrap().get("UPTO"),
            Some(&ParamValue::Integer(28))
        );
        assert!(parse_params("").unwrap().is_empty());
        assert!(parse_params("   ").unwrap().is_empty());
        assert_eq!(
            parse_params("VISIBLE:TRUE, LABEL:lockdown").unwrap().get("LABEL"),
            Some(&ParamValue::Text("lockdown".into()))
        );
        assert_eq!(parse_params("box:1").unwrap().names().next(), Some("BOX"));
    }

    #[test]
    fn param_errors() {
        assert_eq!(parse_params("SIZE 10"), Err(ParamError::MissingColon("SIZE 10".into())));
        assert!(matches!(parse_params(":10"), Err(ParamError::EmptyName(_))));
        assert_eq!(parse_params("A:1, A:2"), Err(ParamError::Duplicate("A".into())));
        assert!(matches!(parse_params("1A:2"), Err(ParamError::InvalidName(_))));
    }

    #[test]
    fn unknown_constants_are_inert() {
        let t = parse("TS1,SPARKLE,,5,TEXT_BOX,,,\nTS1,FIRST,,5,JUGGLE,,,\n").unwrap();
        assert!(t.rows.iter().all(|r| r.inert));
        assert_eq!(t.warnings[0].message, "unknown feature SPARKLE");
        assert_eq!(t.warnings[1].message, "unknown action JUGGLE");
        assert_eq!(t.executable_rows().count(), 0);
    }

    #[test]
    fn unknown_params_warn_only() {
        let t = parse("TS1,PEAK,WOBBLE:3,5,CIRCLE,GLOW:1,,\n").unwrap();
        assert!(!t.rows[0].inert);
        assert_eq!(t.warnings.len(), 2);
        assert_eq!(t.warnings[0].line, 2);
    }

    #[test]
    fn names_are_uppercased() {
        let t = parse("TS1,peak,,5,circle,size:3,,\n").unwrap();
        assert_eq!(t.rows[0].feature, "PEAK");
        assert_eq!(t.rows[0].action, "CIRCLE");
        assert!(t.rows[0].action_params.contains("SIZE"));
    }

    #[test]
    fn rank_errors() {
        assert!(matches!(
            parse("TS1,FIRST,,11,DRAW_AXIS,,,\n"),
            Err(TableError::RankOutOfRange { line: 2, .. })
        ));
        assert!(matches!(
            parse("TS1,FIRST,,0.5,DRAW_AXIS,,,\n"),
            Err(TableError::RankOutOfRange { .. })
        ));
        assert!(matches!(
            parse("TS1,FIRST,,high,DRAW_AXIS,,,\n"),
            Err(TableError::RankNotNumeric { .. })
        ));
        assert!(matches!(
            parse("TS1,FIRST,,,DRAW_AXIS,,,\n"),
            Err(TableError::RankNotNumeric { .. })
        ));
        let t = TableParser::default().with_r_max(20.0);
        assert!(t.parse_str(&format!("{HEAD}TS1,FIRST,,15,DRAW_AXIS,,,\n")).is_ok());
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            parse("TS1,FIRST,,10,DRAW_AXIS\n"),
            Err(TableError::ColumnCount { line: 2, found: 5 })
        ));
        assert!(matches!(
            TableParser::default().parse_str("a,b\n"),
            Err(TableError::Header { .. })
        ));
        assert!(matches!(
            parse(",FIRST,,10,DRAW_AXIS,,,\n"),
            Err(TableError::EmptyField { .. })
        ));
        assert!(matches!(
            parse("TS1,VALUE,GT,10,DRAW_AXIS,,,\n"),
            Err(TableError::Params {
                column: "FeatureParams",
                ..
            })
        ));
    }

    #[test]
    fn empty_table_emits_header_only() {
        let t = FeatureActionTable::default();
        assert_eq!(table_to_string(&t), HEAD);
    }

    #[test]
    fn quoted_text_round_trips() {
        let t = parse("TS1,CURRENT,,5,TEXT_BOX,BOX:1,\"By {DATE}, cases \"\"rose\"\".\",note\n").unwrap();
        assert_eq!(t.rows[0].text, "By {DATE}, cases \"rose\".");
        let out = table_to_string(&t);
        assert!(out.contains("\"By {DATE}, cases \"\"rose\"\".\""));
        let again = TableParser::default().parse_str(&out).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn parse_table_with_sets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(
            &path,
            format!("{HEAD}TS1,FIRST,,10,DRAW_AXIS,,,\nTS1,PEAK,,10,DRAW_DATA,,,\n"),
        )
        .unwrap();
        let features: BTreeSet<String> = ["FIRST".to_string()].into();
        let actions: BTreeSet<String> = ["DRAW_AXIS".to_string(), "DRAW_DATA".to_string()].into();
        let t = parse_table(&path, &features, &actions).unwrap();
        assert!(!t.rows[0].inert);
        assert!(t.rows[1].inert);
    }
}
