//! Core domain types: datasets, support vectors and labels.
//!
//! Labels are 0-based class indices. Parsers assign indices to class names in
//! order of first declaration, so the same file always yields the same encoding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Class index in `0..n_classes`.
pub type Label = usize;

/// Tolerance used when checking that supports sum to one.
pub const SUPPORT_SUM_TOLERANCE: f64 = 1e-9;

/// Describes one feature column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attribute {
    Numeric {
        name: String,
    },
    /// Values are stored in the feature matrix as category indices.
    Nominal {
        name: String,
        categories: Vec<String>,
    },
}

impl Attribute {
    pub fn numeric(name: impl Into<String>) -> Self {
        Attribute::Numeric { name: name.into() }
    }

    pub fn nominal<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Attribute::Nominal {
            name: name.into(),
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Attribute::Numeric { name } | Attribute::Nominal { name, .. } => name,
        }
    }

    pub fn is_nominal(&self) -> bool {
        matches!(self, Attribute::Nominal { .. })
    }
}

/// First invariant a [`Dataset`] breaks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("empty dataset")]
    Empty,
    #[error("n_classes must be at least 2, got {0}")]
    TooFewClasses(usize),
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("ragged rows: row {row} has {found} values, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("label out of range: row {row} has label {label} but n_classes = {n_classes}")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        n_classes: usize,
    },
    #[error("{rows} rows but {labels} labels")]
    LabelCountMismatch { rows: usize, labels: usize },
    #[error("{attributes} attribute descriptors for {columns} columns")]
    AttributeCountMismatch { attributes: usize, columns: usize },
    #[error("row {row}, column {column}: value {value} is not a category index of '{attribute}'")]
    NominalOutOfRange {
        row: usize,
        column: usize,
        value: f64,
        attribute: String,
    },
    #[error("row {row}, column {column}: non-finite value")]
    NonFinite { row: usize, column: usize },
}

/// Feature matrix with class labels and per-column metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub attributes: Vec<Attribute>,
    pub n_classes: usize,
    /// Human-readable class names, `class_names[j]` for label `j`.
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Builds and validates a dataset.
    pub fn new(
        rows: Vec<Vec<f64>>,
        labels: Vec<Label>,
        attributes: Vec<Attribute>,
        class_names: Vec<String>,
    ) -> Result<Self, Violation> {
        let data = Dataset {
            rows,
            labels,
            n_classes: class_names.len(),
            attributes,
            class_names,
        };
        data.validate()?;
        Ok(data)
    }

    /// All-numeric dataset with generated attribute and class names.
    pub fn numeric(
        rows: Vec<Vec<f64>>,
        labels: Vec<Label>,
        n_classes: usize,
    ) -> Result<Self, Violation> {
        let dim = rows.first().map_or(0, Vec::len);
        let attributes = (0..dim)
            .map(|c| Attribute::numeric(format!("x{c}")))
            .collect();
        let class_names = (0..n_classes).map(|c| format!("c{c}")).collect();
        Dataset::new(rows, labels, attributes, class_names)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.attributes.len()
    }

    pub fn has_nominal(&self) -> bool {
        self.attributes.iter().any(Attribute::is_nominal)
    }

    /// Per-class row counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &label in &self.labels {
            counts[label] += 1;
        }
        counts
    }

    /// New dataset holding the given rows (in that order, repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            attributes: self.attributes.clone(),
            n_classes: self.n_classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Same labels and class names, new features with all-numeric columns.
    pub fn with_features(&self, rows: Vec<Vec<f64>>) -> Result<Dataset, Violation> {
        let dim = rows.first().map_or(0, Vec::len);
        Dataset::new(
            rows,
            self.labels.clone(),
            (0..dim)
                .map(|c| Attribute::numeric(format!("x{c}")))
                .collect(),
            self.class_names.clone(),
        )
    }

    /// Returns the first violated invariant, if any.
    pub fn validate(&self) -> Result<(), Violation> {
        if self.rows.is_empty() {
            return Err(Violation::Empty);
        }
        if self.n_classes < 2 {
            return Err(Violation::TooFewClasses(self.n_classes));
        }
        if self.class_names.len() != self.n_classes {
            return Err(Violation::TooFewClasses(
                self.class_names.len().min(self.n_classes),
            ));
        }
        let dim = self.rows[0].len();
        if dim == 0 {
            return Err(Violation::NoFeatures);
        }
        for (row, values) in self.rows.iter().enumerate() {
            if values.len() != dim {
                return Err(Violation::RaggedRow {
                    row,
                    expected: dim,
                    found: values.len(),
                });
            }
        }
        if self.labels.len() != self.rows.len() {
            return Err(Violation::LabelCountMismatch {
                rows: self.rows.len(),
                labels: self.labels.len(),
            });
        }
        if let Some((row, &label)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.n_classes)
        {
            return Err(Violation::LabelOutOfRange {
                row,
                label,
                n_classes: self.n_classes,
            });
        }
        if self.attributes.len() != dim {
            return Err(Violation::AttributeCountMismatch {
                attributes: self.attributes.len(),
                columns: dim,
            });
        }
        for (row, values) in self.rows.iter().enumerate() {
            for (column, (&value, attribute)) in values.iter().zip(&self.attributes).enumerate() {
                if !value.is_finite() {
                    return Err(Violation::NonFinite { row, column });
                }
                if let Attribute::Nominal { name, categories } = attribute {
                    if value < 0.0 || value.fract() != 0.0 || value as usize >= categories.len() {
                        return Err(Violation::NominalOutOfRange {
                            row,
                            column,
                            value,
                            attribute: name.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Error for support vectors that are not a probability vector.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SupportError {
    #[error("support vector is empty")]
    Empty,
    #[error("support {index} = {value} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("supports sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("cannot normalize supports with non-positive total {0}")]
    ZeroMass(f64),
}

/// Normalized per-class supports `g_i(x)`: each in `[0, 1]`, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SupportVector(Vec<f64>);

impl SupportVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SupportError> {
        if values.is_empty() {
            return Err(SupportError::Empty);
        }
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(SupportError::OutOfRange { index, value });
            }
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > SUPPORT_SUM_TOLERANCE {
            return Err(SupportError::NotNormalized(total));
        }
        Ok(SupportVector(values))
    }

    /// Scales non-negative weights to sum to one.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self, SupportError> {
        if weights.is_empty() {
            return Err(SupportError::Empty);
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w >= 0.0) || !w.is_finite())
        {
            return Err(SupportError::OutOfRange { index, value });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(SupportError::ZeroMass(total));
        }
        for w in &mut weights {
            *w = (*w / total).min(1.0);
        }
        Ok(SupportVector(weights))
    }

    /// Normalizes unnormalized log-weights with the max-subtraction trick.
    /// Entries equal to `-inf` get support exactly 0.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self, SupportError> {
        let max = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(SupportError::ZeroMass(max));
        }
        SupportVector::from_weights(log_weights.iter().map(|&l| (l - max).exp()).collect())
    }

    /// Uniform supports over `n_classes` classes.
    pub fn uniform(n_classes: usize) -> Self {
        SupportVector(vec![1.0 / n_classes as f64; n_classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Maximum-support rule; ties go to the lowest class index.
    pub fn argmax(&self) -> Label {
        argmax_support(&self.0)
    }
}

impl std::ops::Index<usize> for SupportVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Index of the maximal value, lowest index on ties. Returns 0 for an empty slice.
pub fn argmax_support(supports: &[f64]) -> Label {
    let mut best = 0;
    for (i, &s) in supports.iter().enumerate().skip(1) {
        if s > supports[best] {
            best = i;
        }
    }
    best
}
