//! Reading datasets and query rows from ARFF or CSV files.

use crate::error::CliError;
use bootdes::data::{Attribute, Dataset};
use bootdes::ingest::{
    csv_records, encode_features, parse_arff, parse_csv, ArffDocument, ClassSelector, IngestError,
    Record,
};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Arff,
    Csv,
}

/// `.arff` and KEEL `.dat` files are ARFF; `.csv` and `.txt` are CSV.
pub fn format_of(path: &Path) -> Result<Format, CliError> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("arff" | "dat") => Ok(Format::Arff),
        Some("csv" | "txt") => Ok(Format::Csv),
        _ => Err(CliError::Data(format!(
            "{}: unrecognized file type (expected .arff, .dat or .csv)",
            path.display()
        ))),
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn parse_dataset(
    path: &Path,
    text: &str,
    csv_header: bool,
    class: &ClassSelector,
) -> Result<Dataset, CliError> {
    let parsed = match format_of(path)? {
        Format::Arff => parse_arff(text, class),
        Format::Csv => parse_csv(text, csv_header, class),
    };
    parsed.map_err(|e| CliError::data(path.display(), "ingest", e))
}

pub fn load_dataset(
    path: &Path,
    csv_header: bool,
    class: &ClassSelector,
) -> Result<Dataset, CliError> {
    parse_dataset(path, &read_text(path)?, csv_header, class)
}

/// Picks the schema's columns out of `names` by name, or positionally when
/// the file has exactly the schema's width (optionally plus a trailing class
/// column).
fn column_map(
    names: Option<&[String]>,
    width: usize,
    schema: &[Attribute],
) -> Result<Vec<usize>, String> {
    if let Some(names) = names {
        let by_name: Option<Vec<usize>> = schema
            .iter()
            .map(|a| names.iter().position(|n| n == a.name()))
            .collect();
        if let Some(map) = by_name {
            return Ok(map);
        }
    }
    if width == schema.len() || width == schema.len() + 1 {
        Ok((0..schema.len()).collect())
    } else {
        Err(format!(
            "dimensionality mismatch: model expects {} features, input rows have {width} columns",
            schema.len()
        ))
    }
}

/// Raw feature rows of a query file, encoded against the model's schema.
pub fn load_queries(
    path: &Path,
    csv_header: bool,
    schema: &[Attribute],
) -> Result<Vec<Vec<f64>>, CliError> {
    let text = read_text(path)?;
    let fail = |e: &dyn std::fmt::Display| CliError::data(path.display(), "reading queries", e);
    let (names, records): (Option<Vec<String>>, Vec<Record>) = match format_of(path)? {
        Format::Arff => {
            let doc = ArffDocument::parse(&text).map_err(|e| fail(&e))?;
            let names = doc.attributes.iter().map(|a| a.name.clone()).collect();
            (
                Some(names),
                doc.data_rows
                    .into_iter()
                    .map(|r| (r.line, r.tokens))
                    .collect(),
            )
        }
        Format::Csv => {
            let (names, records) = csv_records(&text, csv_header).map_err(|e| fail(&e))?;
            (csv_header.then_some(names), records)
        }
    };
    if records.is_empty() {
        return Err(fail(&IngestError::EmptyFile));
    }
    let width = records[0].1.len();
    let map = column_map(names.as_deref(), width, schema).map_err(|e| fail(&e))?;
    records
        .iter()
        .enumerate()
        .map(|(row, (line, tokens))| {
            if tokens.len() != width {
                return Err(fail(&IngestError::RaggedRow {
                    line: *line,
                    expected: width,
                    found: tokens.len(),
                }));
            }
            let picked: Vec<String> = map.iter().map(|&c| tokens[c].clone()).collect();
            encode_features(&picked, schema, *line, row + 1).map_err(|e| fail(&e))
        })
        .collect()
}
