//! ARFF and CSV readers.
//!
//! Supported ARFF subset: `@relation`, `@attribute` with `numeric`, `real`,
//! `integer` or a `{...}` nominal list, and dense comma-separated `@data`
//! rows. Keywords are case-insensitive and lines starting with `%` are
//! comments. KEEL-style extras (`@inputs`, `@outputs`, value ranges after a
//! numeric type) are accepted and ignored. Sparse rows, `string`, `date` and
//! `relational` attributes are rejected, as are missing values (`?`).

use crate::data::{Attribute, Dataset, Violation};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error(
        "line {line}: unknown nominal token '{token}' for attribute '{attribute}' (data row {row})"
    )]
    UnknownNominal {
        line: usize,
        row: usize,
        token: String,
        attribute: String,
    },
    #[error("line {line}: missing value unsupported (data row {row})")]
    MissingValue { line: usize, row: usize },
    #[error("line {line}: cannot parse '{token}' as a number (data row {row})")]
    BadNumber {
        line: usize,
        row: usize,
        token: String,
    },
    #[error("line {line}: ragged row {line}: expected {expected} values, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("class attribute '{0}' is not nominal")]
    ClassNotNominal(String),
    #[error("class attribute '{0}' not found")]
    ClassNotFound(String),
    #[error("class column {index} out of range for {columns} columns")]
    ClassColumnOutOfRange { index: usize, columns: usize },
    #[error("empty file")]
    EmptyFile,
    #[error("unsupported ARFF feature: {0}")]
    Unsupported(String),
    #[error("invalid dataset: {0}")]
    Invalid(#[from] Violation),
}

/// Which attribute holds the class labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ClassSelector {
    #[default]
    Last,
    Index(usize),
    Named(String),
}

impl ClassSelector {
    fn resolve(&self, names: &[&str]) -> Result<usize, IngestError> {
        match self {
            ClassSelector::Last => names.len().checked_sub(1).ok_or(IngestError::EmptyFile),
            ClassSelector::Index(index) if *index < names.len() => Ok(*index),
            ClassSelector::Index(index) => Err(IngestError::ClassColumnOutOfRange {
                index: *index,
                columns: names.len(),
            }),
            ClassSelector::Named(name) => names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| IngestError::ClassNotFound(name.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArffKind {
    Numeric,
    Nominal(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArffAttribute {
    pub name: String,
    pub kind: ArffKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArffRow {
    /// 1-based line number in the source text.
    pub line: usize,
    pub tokens: Vec<String>,
}

/// Syntactic view of an ARFF file, before values are interpreted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArffDocument {
    pub relation_name: String,
    pub attributes: Vec<ArffAttribute>,
    pub data_rows: Vec<ArffRow>,
}

impl ArffDocument {
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut relation_name = String::new();
        let mut attributes = Vec::new();
        let mut data_rows = Vec::new();
        let mut in_data = false;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('%') {
                continue;
            }
            if in_data {
                if trimmed.starts_with('{') {
                    return Err(IngestError::Unsupported(format!(
                        "sparse data row at line {line}"
                    )));
                }
                let tokens = split_tokens(trimmed, line)?;
                if tokens.len() != attributes.len() {
                    return Err(IngestError::RaggedRow {
                        line,
                        expected: attributes.len(),
                        found: tokens.len(),
                    });
                }
                data_rows.push(ArffRow { line, tokens });
                continue;
            }
            if !trimmed.starts_with('@') {
                return Err(syntax(line, "expected a declaration starting with '@'"));
            }
            let (keyword, rest) = split_keyword(trimmed);
            match keyword.to_ascii_lowercase().as_str() {
                "@relation" => {
                    let (name, _) = take_name(rest, line)?;
                    relation_name = name;
                }
                "@attribute" => attributes.push(parse_attribute(rest, line)?),
                "@inputs" | "@outputs" | "@input" | "@output" => {}
                "@data" => {
                    if attributes.is_empty() {
                        return Err(syntax(line, "@data before any @attribute"));
                    }
                    in_data = true;
                }
                other => return Err(syntax(line, &format!("unknown declaration '{other}'"))),
            }
        }
        if !in_data {
            return Err(IngestError::EmptyFile);
        }
        Ok(ArffDocument {
            relation_name,
            attributes,
            data_rows,
        })
    }

    /// Interprets the document as a dataset. Non-class nominal attributes are
    /// kept as category indices.
    pub fn into_dataset(self, class: &ClassSelector) -> Result<Dataset, IngestError> {
        if self.data_rows.is_empty() {
            return Err(IngestError::Invalid(Violation::Empty));
        }
        let names: Vec<&str> = self.attributes.iter().map(|a| a.name.as_str()).collect();
        let class_idx = class.resolve(&names)?;
        let class_names = match &self.attributes[class_idx].kind {
            ArffKind::Nominal(categories) => categories.clone(),
            ArffKind::Numeric => {
                return Err(IngestError::ClassNotNominal(
                    self.attributes[class_idx].name.clone(),
                ))
            }
        };

        let mut rows = Vec::with_capacity(self.data_rows.len());
        let mut labels = Vec::with_capacity(self.data_rows.len());
        for (row_idx, row) in self.data_rows.iter().enumerate() {
            let row_no = row_idx + 1;
            let mut values = Vec::with_capacity(self.attributes.len() - 1);
            for (col, (token, attribute)) in row.tokens.iter().zip(&self.attributes).enumerate() {
                if token == "?" {
                    return Err(IngestError::MissingValue {
                        line: row.line,
                        row: row_no,
                    });
                }
                let value = match &attribute.kind {
                    ArffKind::Numeric => {
                        parse_number(token).ok_or_else(|| IngestError::BadNumber {
                            line: row.line,
                            row: row_no,
                            token: token.clone(),
                        })?
                    }
                    ArffKind::Nominal(categories) => categories
                        .iter()
                        .position(|c| c == token)
                        .ok_or_else(|| IngestError::UnknownNominal {
                            line: row.line,
                            row: row_no,
                            token: token.clone(),
                            attribute: attribute.name.clone(),
                        })? as f64,
                };
                if col == class_idx {
                    labels.push(value as usize);
                } else {
                    values.push(value);
                }
            }
            rows.push(values);
        }

        let attributes = self
            .attributes
            .into_iter()
            .enumerate()
            .filter(|(i, _)| *i != class_idx)
            .map(|(_, a)| match a.kind {
                ArffKind::Numeric => Attribute::Numeric { name: a.name },
                ArffKind::Nominal(categories) => Attribute::Nominal {
                    name: a.name,
                    categories,
                },
            })
            .collect();
        Ok(Dataset::new(rows, labels, attributes, class_names)?)
    }
}

/// Parses an ARFF document into a dataset.
pub fn parse_arff(text: &str, class: &ClassSelector) -> Result<Dataset, IngestError> {
    ArffDocument::parse(text)?.into_dataset(class)
}

/// Writes a dataset as dense ARFF with the class attribute last.
/// Numeric values are written in shortest round-trip form.
pub fn to_arff(data: &Dataset, relation: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@relation {}", quote(relation));
    let _ = writeln!(out);
    for attribute in &data.attributes {
        match attribute {
            Attribute::Numeric { name } => {
                let _ = writeln!(out, "@attribute {} numeric", quote(name));
            }
            Attribute::Nominal { name, categories } => {
                let _ = writeln!(
                    out,
                    "@attribute {} {{{}}}",
                    quote(name),
                    join_quoted(categories)
                );
            }
        }
    }
    let _ = writeln!(
        out,
        "@attribute class {{{}}}",
        join_quoted(&data.class_names)
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "@data");
    for (row, &label) in data.rows.iter().zip(&data.labels) {
        let mut tokens: Vec<String> = row
            .iter()
            .zip(&data.attributes)
            .map(|(&v, a)| match a {
                Attribute::Numeric { .. } => format!("{v:?}"),
                Attribute::Nominal { categories, .. } => quote(&categories[v as usize]),
            })
            .collect();
        tokens.push(quote(&data.class_names[label]));
        let _ = writeln!(out, "{}", tokens.join(","));
    }
    out
}

/// Parses delimiter-separated text with `,` as separator.
///
/// Non-class columns are numeric when every token parses as a finite number,
/// otherwise nominal with categories in first-appearance order. Class values
/// are always treated as category names.
pub fn parse_csv(text: &str, header: bool, class: &ClassSelector) -> Result<Dataset, IngestError> {
    let (names, records) = csv_records(text, header)?;
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let class_idx = class.resolve(&name_refs)?;
    let n_cols = names.len();

    for (_, tokens) in &records {
        debug_assert_eq!(tokens.len(), n_cols);
    }
    for (row, (line, tokens)) in records.iter().enumerate() {
        if tokens.iter().any(|t| t.is_empty() || t == "?") {
            return Err(IngestError::MissingValue {
                line: *line,
                row: row + 1,
            });
        }
    }

    let mut attributes = Vec::with_capacity(n_cols - 1);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n_cols - 1);
    let mut labels = Vec::new();
    let mut class_names = Vec::new();
    for col in 0..n_cols {
        let tokens = records.iter().map(|(_, t)| t[col].as_str());
        if col == class_idx {
            let (categories, codes) = encode_categories(tokens);
            class_names = categories;
            labels = codes;
            continue;
        }
        let numeric: Option<Vec<f64>> = tokens.clone().map(parse_number).collect();
        match numeric {
            Some(values) => {
                attributes.push(Attribute::numeric(names[col].clone()));
                columns.push(values);
            }
            None => {
                let (categories, codes) = encode_categories(tokens);
                attributes.push(Attribute::nominal(names[col].clone(), categories));
                columns.push(codes.into_iter().map(|c| c as f64).collect());
            }
        }
    }
    let rows = (0..records.len())
        .map(|r| columns.iter().map(|c| c[r]).collect())
        .collect();
    Ok(Dataset::new(rows, labels, attributes, class_names)?)
}

/// Encodes the feature tokens of one query row against a known schema.
/// Nominal tokens must name one of the attribute's categories.
pub fn encode_features(
    tokens: &[String],
    attributes: &[Attribute],
    line: usize,
    row: usize,
) -> Result<Vec<f64>, IngestError> {
    if tokens.len() != attributes.len() {
        return Err(IngestError::RaggedRow {
            line,
            expected: attributes.len(),
            found: tokens.len(),
        });
    }
    tokens
        .iter()
        .zip(attributes)
        .map(|(token, attribute)| {
            if token.is_empty() || token == "?" {
                return Err(IngestError::MissingValue { line, row });
            }
            match attribute {
                Attribute::Numeric { .. } => {
                    parse_number(token).ok_or_else(|| IngestError::BadNumber {
                        line,
                        row,
                        token: token.clone(),
                    })
                }
                Attribute::Nominal { name, categories } => categories
                    .iter()
                    .position(|c| c == token)
                    .map(|i| i as f64)
                    .ok_or_else(|| IngestError::UnknownNominal {
                        line,
                        row,
                        token: token.clone(),
                        attribute: name.clone(),
                    }),
            }
        })
        .collect()
}

/// A data record: 1-based source line and its raw tokens.
pub type Record = (usize, Vec<String>);

/// Column names plus records; every record has the same width.
pub fn csv_records(text: &str, header: bool) -> Result<(Vec<String>, Vec<Record>), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(None)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            syntax(line, &e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        records.push((line, record.iter().map(str::to_string).collect::<Vec<_>>()));
    }
    if records.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    let width = records[0].1.len();
    for (line, tokens) in &records {
        if tokens.len() != width {
            return Err(IngestError::RaggedRow {
                line: *line,
                expected: width,
                found: tokens.len(),
            });
        }
    }
    let names = if header {
        records.remove(0).1
    } else {
        (0..width).map(|c| format!("col{c}")).collect()
    };
    if records.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Ok((names, records))
}

fn encode_categories<'a>(tokens: impl Iterator<Item = &'a str>) -> (Vec<String>, Vec<usize>) {
    let mut categories: Vec<String> = Vec::new();
    let codes = tokens
        .map(|t| match categories.iter().position(|c| c == t) {
            Some(i) => i,
            None => {
                categories.push(t.to_string());
                categories.len() - 1
            }
        })
        .collect();
    (categories, codes)
}

fn parse_number(token: &str) -> Option<f64> {
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn syntax(line: usize, message: &str) -> IngestError {
    IngestError::Syntax {
        line,
        message: message.to_string(),
    }
}

fn split_keyword(s: &str) -> (&str, &str) {
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim_start()),
        None => (s, ""),
    }
}

/// Reads a possibly quoted name; returns it and the remaining text.
fn take_name(s: &str, line: usize) -> Result<(String, &str), IngestError> {
    let s = s.trim_start();
    let mut chars = s.char_indices();
    match chars.next() {
        None => Err(syntax(line, "missing name")),
        Some((_, q @ ('\'' | '"'))) => {
            let end = s[1..]
                .find(q)
                .ok_or_else(|| syntax(line, "unterminated quote"))?
                + 1;
            Ok((s[1..end].to_string(), s[end + 1..].trim_start()))
        }
        Some(_) => {
            let end = s
                .find(|c: char| c.is_whitespace() || c == '{')
                .unwrap_or(s.len());
            Ok((s[..end].to_string(), s[end..].trim_start()))
        }
    }
}

fn parse_attribute(rest: &str, line: usize) -> Result<ArffAttribute, IngestError> {
    let (name, type_text) = take_name(rest, line)?;
    if type_text.starts_with('{') {
        let close = type_text
            .rfind('}')
            .ok_or_else(|| syntax(line, "unterminated nominal list"))?;
        let categories = split_tokens(&type_text[1..close], line)?;
        if categories.is_empty() || categories.iter().any(String::is_empty) {
            return Err(syntax(line, "empty nominal category"));
        }
        return Ok(ArffAttribute {
            name,
            kind: ArffKind::Nominal(categories),
        });
    }
    let (kind, _range) = split_keyword(type_text);
    match kind.to_ascii_lowercase().as_str() {
        "numeric" | "real" | "integer" => Ok(ArffAttribute {
            name,
            kind: ArffKind::Numeric,
        }),
        "string" | "date" | "relational" => Err(IngestError::Unsupported(format!(
            "attribute '{name}' of type {kind} at line {line}"
        ))),
        "" => Err(syntax(line, &format!("attribute '{name}' has no type"))),
        other => Err(syntax(line, &format!("unknown attribute type '{other}'"))),
    }
}

/// Splits on commas outside quotes; tokens are trimmed and unquoted.
fn split_tokens(s: &str, line: usize) -> Result<Vec<String>, IngestError> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    let mut was_quoted = false;
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) if c == '\\' => {
                if let Some(next) = chars.next() {
                    current.push(next);
                }
            }
            Some(_) => current.push(c),
            None if c == '\'' || c == '"' => {
                if !current.trim().is_empty() {
                    return Err(syntax(line, "quote inside unquoted token"));
                }
                current.clear();
                quote = Some(c);
                was_quoted = true;
            }
            None if c == ',' => {
                tokens.push(finish_token(&mut current, was_quoted));
                was_quoted = false;
            }
            None => current.push(c),
        }
    }
    if quote.is_some() {
        return Err(syntax(line, "unterminated quote"));
    }
    let last = finish_token(&mut current, was_quoted);
    if !(last.is_empty() && tokens.is_empty()) {
        tokens.push(last);
    }
    Ok(tokens)
}

fn finish_token(current: &mut String, quoted: bool) -> String {
    let token = if quoted {
        current.trim_end().to_string()
    } else {
        current.trim().to_string()
    };
    current.clear();
    token
}

fn quote(s: &str) -> String {
    let needs = s.is_empty()
        || s == "?"
        || s.chars()
            .any(|c| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '%' | '\'' | '"' | '\\'));
    if needs {
        format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
    } else {
        s.to_string()
    }
}

fn join_quoted(items: &[String]) -> String {
    items.iter().map(|s| quote(s)).collect::<Vec<_>>().join(",")
}
