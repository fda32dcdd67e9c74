use std::collections::BTreeMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::fat::is_param_name;
use crate::timeseries::DATE_FORMAT;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unclosed `{{` at byte {0}")]
    Unclosed(usize),
    #[error("unmatched `}}` at byte {0}")]
    Unmatched(usize),
    #[error("invalid placeholder name `{0}`")]
    InvalidName(String),
    #[error("no value bound for placeholder {{{0}}}")]
    Unbound(String),
}

/// A value a placeholder can be bound to.
#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Integer(i64),
    Real(f64),
    Date(NaiveDate),
    Text(String),
}

impl Binding {
    pub fn render(&self, date_format: &str) -> String {
        match self {
            Self::Integer(i) => i.to_string(),
            Self::Real(x) => format_real(*x),
            Self::Date(d) => d.format(date_format).to_string(),
            Self::Text(s) => s.clone(),
        }
    }
}

/// One decimal place, with a trailing `.0` dropped.
pub fn format_real(x: f64) -> String {
    let s = format!("{x:.1}");
    let s = s.strip_suffix(".0").unwrap_or(&s);
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Placeholder(String),
}

/// A string with `{NAME}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextTemplate {
    raw: String,
    pieces: Vec<Piece>,
}

impl TextTemplate {
    pub fn parse(raw: &str) -> Result<Self, TemplateError> {
        let mut pieces = Vec::new();
        let mut literal = String::new();
        let mut chars = raw.char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' => {
                    let rest = &raw[i + 1..];
                    let close = rest.find('}').ok_or(TemplateError::Unclosed(i))?;
                    let name = &rest[..close];
                    if !is_param_name(name) {
                        return Err(TemplateError::InvalidName(name.to_string()));
                    }
                    if !literal.is_empty() {
                        pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                    }
                    pieces.push(Piece::Placeholder(name.to_string()));
                    for _ in 0..=name.chars().count() {
                        chars.next();
                    }
                }
                '}' => return Err(TemplateError::Unmatched(i)),
                c => literal.push(c),
            }
        }
        if !literal.is_empty() {
            pieces.push(Piece::Literal(literal));
        }
        Ok(Self {
            raw: raw.to_string(),
            pieces,
        })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Placeholder(n) => Some(n.as_str()),
            Piece::Literal(_) => None,
        })
    }

    /// Substitutes every placeholder, failing on the first unbound one.
    pub fn render(
        &self,
        bindings: &BTreeMap<String, Binding>,
        date_format: Option<&str>,
    ) -> Result<String, TemplateError> {
        let date_format = date_format.unwrap_or(DATE_FORMAT);
        let mut out = String::with_capacity(self.raw.len());
        for piece in &self.pieces {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Placeholder(name) => {
                    let value = bindings.get(name).ok_or_else(|| TemplateError::Unbound(name.clone()))?;
                    out.push_str(&value.render(date_format));
                }
            }
        }
        Ok(out)
    }
}

/// Parses and renders in one step with ISO dates.
pub fn resolve_text(template: &str, bindings: &BTreeMap<String, Binding>) -> Result<String, TemplateError> {
    TextTemplate::parse(template)?.render(bindings, None)
}
