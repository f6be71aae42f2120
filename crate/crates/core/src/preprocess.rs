//! Feature preprocessing: one-hot encoding of nominal columns, standardization
//! and PCA projection, applied in that order.
//!
//! Every transform is fit on the rows passed to `fit` only and applied
//! unchanged to any later rows.

use crate::data::{Attribute, Dataset};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when comparing cumulative explained variance to the threshold.
const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("need at least 2 rows to fit, got {0}")]
    TooFewRows(usize),
    #[error("dimension mismatch: expected {expected} columns, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("variance threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("every column has zero variance")]
    NoInformativeColumns,
}

/// Expands each nominal column with `c` categories into `c` indicator columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    /// `Some(c)` for a nominal input column with `c` categories.
    columns: Vec<Option<usize>>,
}

impl OneHotEncoder {
    pub fn fit(attributes: &[Attribute]) -> Self {
        let columns = attributes
            .iter()
            .map(|a| match a {
                Attribute::Numeric { .. } => None,
                Attribute::Nominal { categories, .. } => Some(categories.len()),
            })
            .collect();
        OneHotEncoder { columns }
    }

    pub fn input_dim(&self) -> usize {
        self.columns.len()
    }

    pub fn output_dim(&self) -> usize {
        self.columns.iter().map(|c| c.unwrap_or(1)).sum()
    }

    pub fn is_identity(&self) -> bool {
        self.columns.iter().all(Option::is_none)
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        check_dim(self.input_dim(), row.len())?;
        let mut out = Vec::with_capacity(self.output_dim());
        for (&value, column) in row.iter().zip(&self.columns) {
            match column {
                None => out.push(value),
                Some(c) => {
                    let start = out.len();
                    out.resize(start + c, 0.0);
                    // out-of-range codes encode as all zeros
                    if value >= 0.0 && (value as usize) < *c && value.fract() == 0.0 {
                        out[start + value as usize] = 1.0;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Per-column mean and population standard deviation. Zero-variance columns
/// are dropped and recorded in `dropped`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    input_dim: usize,
    kept: Vec<usize>,
    means: Vec<f64>,
    stds: Vec<f64>,
    pub dropped: Vec<usize>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, PreprocessError> {
        if rows.len() < 2 {
            return Err(PreprocessError::TooFewRows(rows.len()));
        }
        let input_dim = rows[0].len();
        let n = rows.len() as f64;
        let mut standardizer = Standardizer {
            input_dim,
            kept: vec![],
            means: vec![],
            stds: vec![],
            dropped: vec![],
        };
        for col in 0..input_dim {
            let mean = rows.iter().map(|r| r[col]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[col] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            // relative test so that round-off on a constant column does not count as variance
            if std > 1e-12 * mean.abs().max(1e-300) && std > 0.0 {
                standardizer.kept.push(col);
                standardizer.means.push(mean);
                standardizer.stds.push(std);
            } else {
                standardizer.dropped.push(col);
            }
        }
        Ok(standardizer)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.kept.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        check_dim(self.input_dim, row.len())?;
        Ok(self
            .kept
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&c, (m, s))| (row[c] - m) / s)
            .collect())
    }
}

/// Projection onto the leading principal components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    /// `k` rows of length `d`, orthonormal.
    components: Vec<Vec<f64>>,
    means: Vec<f64>,
    /// All covariance eigenvalues in non-increasing order.
    eigenvalues: Vec<f64>,
    pub retained_variance_fraction: f64,
}

impl Pca {
    /// Keeps the smallest `k` whose cumulative explained variance reaches
    /// `variance_threshold`.
    pub fn fit(rows: &[Vec<f64>], variance_threshold: f64) -> Result<Self, PreprocessError> {
        if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
            return Err(PreprocessError::BadThreshold(variance_threshold));
        }
        if rows.len() < 2 {
            return Err(PreprocessError::TooFewRows(rows.len()));
        }
        let n = rows.len();
        let d = rows[0].len();
        let means: Vec<f64> = (0..d)
            .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n as f64)
            .collect();
        let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - means[j]);

        let (eigenvalues, vectors) = if d <= n {
            let cov = centered.transpose() * &centered / n as f64;
            let (values, vectors) = sorted_eigen(cov);
            (values, vectors)
        } else {
            // Gram route: X Xᵀ/n shares its non-zero spectrum with XᵀX/n
            let gram = &centered * centered.transpose() / n as f64;
            let (values, u) = sorted_eigen(gram);
            let mut vectors = DMatrix::zeros(d, values.len());
            for (k, &lambda) in values.iter().enumerate() {
                if lambda > 0.0 {
                    let v = centered.transpose() * u.column(k) / (n as f64 * lambda).sqrt();
                    vectors.set_column(k, &v);
                }
            }
            (values, vectors)
        };

        let total: f64 = eigenvalues.iter().sum();
        if !(total > 0.0) {
            return Err(PreprocessError::NoInformativeColumns);
        }
        let mut k = 0;
        let mut cumulative = 0.0;
        while k < eigenvalues.len() && eigenvalues[k] > 0.0 {
            cumulative += eigenvalues[k];
            k += 1;
            if cumulative / total >= variance_threshold - THRESHOLD_SLACK {
                break;
            }
        }
        let components = (0..k)
            .map(|c| {
                let mut v: Vec<f64> = vectors.column(c).iter().copied().collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                let pivot = v
                    .iter()
                    .copied()
                    .fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
                if pivot < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            })
            .collect();
        let mut eigenvalues = eigenvalues;
        eigenvalues.resize(d, 0.0);
        Ok(Pca {
            components,
            means,
            eigenvalues,
            retained_variance_fraction: (cumulative / total).min(1.0),
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.means.len()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        check_dim(self.input_dim(), row.len())?;
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(row.iter().zip(&self.means))
                    .map(|(w, (x, m))| w * (x - m))
                    .sum()
            })
            .collect())
    }
}

/// Eigen-decomposition with eigenvalues sorted in non-increasing order and
/// tiny negative round-off clamped to zero.
fn sorted_eigen(matrix: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let dim = matrix.nrows();
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Preprocessing settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// PCA explained-variance threshold; `None` skips the projection.
    pub variance_threshold: Option<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            variance_threshold: Some(0.95),
        }
    }
}

/// Fitted one-hot → standardize → project chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPipeline {
    pub one_hot: OneHotEncoder,
    pub standardizer: Standardizer,
    pub pca: Option<Pca>,
}

impl PreprocessPipeline {
    pub fn fit(data: &Dataset, config: &PreprocessConfig) -> Result<Self, PreprocessError> {
        let one_hot = OneHotEncoder::fit(&data.attributes);
        let encoded = data
            .rows
            .iter()
            .map(|r| one_hot.transform(r))
            .collect::<Result<Vec<_>, _>>()?;
        let standardizer = Standardizer::fit(&encoded)?;
        if standardizer.output_dim() == 0 {
            return Err(PreprocessError::NoInformativeColumns);
        }
        let pca = match config.variance_threshold {
            Some(threshold) => {
                let standardized = encoded
                    .iter()
                    .map(|r| standardizer.transform(r))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(Pca::fit(&standardized, threshold)?)
            }
            None => None,
        };
        Ok(PreprocessPipeline {
            one_hot,
            standardizer,
            pca,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.one_hot.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.pca
            .as_ref()
            .map_or(self.standardizer.output_dim(), Pca::n_components)
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        let encoded = self.one_hot.transform(row)?;
        let standardized = self.standardizer.transform(&encoded)?;
        match &self.pca {
            Some(pca) => pca.transform(&standardized),
            None => Ok(standardized),
        }
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PreprocessError> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }

    /// Transforms the features of a dataset, keeping labels and class names.
    pub fn apply_dataset(&self, data: &Dataset) -> Result<Dataset, PreprocessError> {
        let rows = self.apply(&data.rows)?;
        data.with_features(rows)
            .map_err(|_| PreprocessError::NoInformativeColumns)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<(), PreprocessError> {
    if expected == found {
        Ok(())
    } else {
        Err(PreprocessError::DimensionMismatch { expected, found })
    }
}
