//! Base classifiers following the canonical model: each produces normalized
//! per-class supports and predicts by maximum support.
//!
//! Classes absent from the training data get prior 0, so the Bayes-type
//! models (naive Bayes, LDA, QDA) give them support 0 and nearest centroid
//! has no centroid for them. k-NN uses Laplace-smoothed votes over all classes.

use crate::data::{Dataset, Label, SupportVector};
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty pool")]
    EmptyPool,
    #[error("dimension mismatch: classifier expects {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}

/// Bandwidth rule for the per-feature kernel density estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// `0.9 · min(σ, IQR/1.34) · n^(-1/5)`.
    Silverman,
    Fixed(f64),
}

/// Which base classifier to train, with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    NaiveBayesKde { bandwidth: Bandwidth },
    NaiveBayesGaussian,
    NearestCentroid,
    Knn { k: usize },
    Lda,
    Qda,
}

impl ClassifierSpec {
    /// The five-member heterogeneous pool used by default.
    pub fn default_pool() -> Vec<ClassifierSpec> {
        vec![
            ClassifierSpec::NaiveBayesKde {
                bandwidth: Bandwidth::Silverman,
            },
            ClassifierSpec::NearestCentroid,
            ClassifierSpec::Knn { k: 5 },
            ClassifierSpec::Lda,
            ClassifierSpec::Qda,
        ]
    }

    pub fn name(&self) -> String {
        match self {
            ClassifierSpec::NaiveBayesKde { .. } => "naive_bayes_kde".into(),
            ClassifierSpec::NaiveBayesGaussian => "naive_bayes_gaussian".into(),
            ClassifierSpec::NearestCentroid => "nearest_centroid".into(),
            ClassifierSpec::Knn { k } => format!("knn({k})"),
            ClassifierSpec::Lda => "lda".into(),
            ClassifierSpec::Qda => "qda".into(),
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match *self {
            ClassifierSpec::Knn { k: 0 } => Err(ClassifierError::InvalidHyperparameter(
                "knn needs k >= 1".into(),
            )),
            ClassifierSpec::NaiveBayesKde {
                bandwidth: Bandwidth::Fixed(h),
            } if !(h > 0.0 && h.is_finite()) => Err(ClassifierError::InvalidHyperparameter(
                format!("kde bandwidth must be > 0, got {h}"),
            )),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for ClassifierSpec {
    type Err = ClassifierError;

    /// Accepts `naive_bayes_kde`, `naive_bayes_kde(0.5)`, `naive_bayes_gaussian`,
    /// `nearest_centroid`, `knn`, `knn(7)`, `lda`, `qda`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let (head, arg) = match s.find('(') {
            Some(open) if s.ends_with(')') => (&s[..open], Some(&s[open + 1..s.len() - 1])),
            _ => (s.as_str(), None),
        };
        let bad =
            || ClassifierError::InvalidHyperparameter(format!("cannot parse classifier '{s}'"));
        let spec = match (head, arg) {
            ("naive_bayes_kde" | "nb_kde", None) => ClassifierSpec::NaiveBayesKde {
                bandwidth: Bandwidth::Silverman,
            },
            ("naive_bayes_kde" | "nb_kde", Some(h)) => ClassifierSpec::NaiveBayesKde {
                bandwidth: Bandwidth::Fixed(h.parse().map_err(|_| bad())?),
            },
            ("naive_bayes_gaussian" | "nb_gaussian", None) => ClassifierSpec::NaiveBayesGaussian,
            ("nearest_centroid", None) => ClassifierSpec::NearestCentroid,
            ("knn", None) => ClassifierSpec::Knn { k: 5 },
            ("knn", Some(k)) => ClassifierSpec::Knn {
                k: k.parse().map_err(|_| bad())?,
            },
            ("lda", None) => ClassifierSpec::Lda,
            ("qda", None) => ClassifierSpec::Qda,
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Anything that maps a feature vector to normalized class supports.
pub trait SupportModel {
    fn n_classes(&self) -> usize;
    fn dim(&self) -> usize;
    fn predict_supports(&self, x: &[f64]) -> Result<SupportVector, ClassifierError>;

    fn predict(&self, x: &[f64]) -> Result<Label, ClassifierError> {
        Ok(self.predict_supports(x)?.argmax())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    log_priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeNbModel {
    log_priors: Vec<f64>,
    /// `samples[class][feature]` holds that class's training values.
    samples: Vec<Vec<Vec<f64>>>,
    /// `bandwidths[class][feature]`.
    bandwidths: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    /// `None` for classes absent from training.
    centroids: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClass {
    mean: Vec<f64>,
    /// Lower Cholesky factor of the regularized covariance.
    chol: DMatrix<f64>,
    log_det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantModel {
    log_priors: Vec<f64>,
    /// One shared entry for LDA, one per class for QDA; `None` for absent classes.
    classes: Vec<Option<GaussianClass>>,
    shared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    NaiveBayesGaussian(GaussianNbModel),
    NaiveBayesKde(KdeNbModel),
    NearestCentroid(CentroidModel),
    Knn(KnnModel),
    Discriminant(DiscriminantModel),
}

/// A fitted base classifier. Immutable; `predict_supports` is pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub spec: ClassifierSpec,
    pub n_classes: usize,
    pub dim: usize,
    pub params: ModelParams,
}

/// Fits one classifier. None of the current kinds draw random numbers, so
/// `_seed` only fixes the signature for kinds that will.
pub fn train(
    spec: &ClassifierSpec,
    data: &Dataset,
    _seed: u64,
) -> Result<TrainedClassifier, ClassifierError> {
    spec.validate()?;
    if data.rows.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let m = data.n_classes;
    let dim = data.rows[0].len();
    let by_class = group_by_class(data);
    let n = data.rows.len() as f64;
    let log_priors: Vec<f64> = by_class
        .iter()
        .map(|rows| {
            if rows.is_empty() {
                f64::NEG_INFINITY
            } else {
                (rows.len() as f64 / n).ln()
            }
        })
        .collect();

    let params = match *spec {
        ClassifierSpec::NaiveBayesGaussian => {
            let floor = variance_floor(&data.rows);
            let (means, variances) = by_class
                .iter()
                .map(|rows| {
                    if rows.is_empty() {
                        return (vec![0.0; dim], vec![1.0; dim]);
                    }
                    let mean = column_means(rows, dim);
                    let var = (0..dim)
                        .map(|c| {
                            rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>()
                                / rows.len() as f64
                                + floor
                        })
                        .collect();
                    (mean, var)
                })
                .unzip();
            ModelParams::NaiveBayesGaussian(GaussianNbModel {
                log_priors,
                means,
                variances,
            })
        }
        ClassifierSpec::NaiveBayesKde { bandwidth } => {
            let fallback: Vec<f64> = (0..dim)
                .map(|c| {
                    let all: Vec<f64> = data.rows.iter().map(|r| r[c]).collect();
                    positive_or(silverman(&all), 1.0)
                })
                .collect();
            let samples: Vec<Vec<Vec<f64>>> = by_class
                .iter()
                .map(|rows| {
                    (0..dim)
                        .map(|c| rows.iter().map(|r| r[c]).collect())
                        .collect()
                })
                .collect();
            let bandwidths = samples
                .iter()
                .map(|features: &Vec<Vec<f64>>| {
                    features
                        .iter()
                        .enumerate()
                        .map(|(c, values)| match bandwidth {
                            Bandwidth::Fixed(h) => h,
                            Bandwidth::Silverman => positive_or(silverman(values), fallback[c]),
                        })
                        .collect()
                })
                .collect();
            ModelParams::NaiveBayesKde(KdeNbModel {
                log_priors,
                samples,
                bandwidths,
            })
        }
        ClassifierSpec::NearestCentroid => ModelParams::NearestCentroid(CentroidModel {
            centroids: by_class
                .iter()
                .map(|rows| (!rows.is_empty()).then(|| column_means(rows, dim)))
                .collect(),
        }),
        ClassifierSpec::Knn { k } => ModelParams::Knn(KnnModel {
            k,
            rows: data.rows.clone(),
            labels: data.labels.clone(),
        }),
        ClassifierSpec::Lda => {
            let mut scatter = DMatrix::<f64>::zeros(dim, dim);
            let means: Vec<Option<Vec<f64>>> = by_class
                .iter()
                .map(|rows| (!rows.is_empty()).then(|| column_means(rows, dim)))
                .collect();
            for (rows, mean) in by_class.iter().zip(&means) {
                if let Some(mean) = mean {
                    add_scatter(&mut scatter, rows, mean);
                }
            }
            let chol = regularized_cholesky(scatter / n);
            let log_det = chol_log_det(&chol);
            let classes = means
                .into_iter()
                .map(|mean| {
                    mean.map(|mean| GaussianClass {
                        mean,
                        chol: chol.clone(),
                        log_det,
                    })
                })
                .collect();
            ModelParams::Discriminant(DiscriminantModel {
                log_priors,
                classes,
                shared: true,
            })
        }
        ClassifierSpec::Qda => {
            let classes = by_class
                .iter()
                .map(|rows| {
                    if rows.is_empty() {
                        return None;
                    }
                    let mean = column_means(rows, dim);
                    let mut scatter = DMatrix::<f64>::zeros(dim, dim);
                    add_scatter(&mut scatter, rows, &mean);
                    let chol = regularized_cholesky(scatter / rows.len() as f64);
                    let log_det = chol_log_det(&chol);
                    Some(GaussianClass {
                        mean,
                        chol,
                        log_det,
                    })
                })
                .collect();
            ModelParams::Discriminant(DiscriminantModel {
                log_priors,
                classes,
                shared: false,
            })
        }
    };
    Ok(TrainedClassifier {
        spec: *spec,
        n_classes: m,
        dim,
        params,
    })
}

/// Trains every spec on the same data, preserving order.
pub fn train_pool(
    specs: &[ClassifierSpec],
    data: &Dataset,
    seed: u64,
) -> Result<Vec<TrainedClassifier>, ClassifierError> {
    if specs.is_empty() {
        return Err(ClassifierError::EmptyPool);
    }
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| train(spec, data, crate::seed::derive(seed, &[i as u64])))
        .collect()
}

impl SupportModel for TrainedClassifier {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_supports(&self, x: &[f64]) -> Result<SupportVector, ClassifierError> {
        if x.len() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let m = self.n_classes;
        let supports = match &self.params {
            ModelParams::NaiveBayesGaussian(model) => {
                let log_post: Vec<f64> = (0..m)
                    .map(|c| {
                        if model.log_priors[c] == f64::NEG_INFINITY {
                            return f64::NEG_INFINITY;
                        }
                        model.log_priors[c]
                            + x.iter()
                                .zip(model.means[c].iter().zip(&model.variances[c]))
                                .map(|(xi, (mu, var))| -0.5 * ((xi - mu).powi(2) / var + var.ln()))
                                .sum::<f64>()
                    })
                    .collect();
                SupportVector::from_log_weights(&log_post)
            }
            ModelParams::NaiveBayesKde(model) => {
                let log_post: Vec<f64> = (0..m)
                    .map(|c| {
                        if model.log_priors[c] == f64::NEG_INFINITY {
                            return f64::NEG_INFINITY;
                        }
                        model.log_priors[c]
                            + x.iter()
                                .enumerate()
                                .map(|(f, &xi)| {
                                    log_kde(&model.samples[c][f], model.bandwidths[c][f], xi)
                                })
                                .sum::<f64>()
                    })
                    .collect();
                SupportVector::from_log_weights(&log_post)
            }
            ModelParams::NearestCentroid(model) => SupportVector::from_weights(
                model
                    .centroids
                    .iter()
                    .map(|c| c.as_ref().map_or(0.0, |c| 1.0 / (1.0 + euclidean(c, x))))
                    .collect(),
            ),
            ModelParams::Knn(model) => SupportVector::from_weights(knn_votes(model, m, x)),
            ModelParams::Discriminant(model) => {
                let log_post: Vec<f64> = model
                    .classes
                    .iter()
                    .zip(&model.log_priors)
                    .map(|(class, &lp)| match class {
                        None => f64::NEG_INFINITY,
                        Some(g) => {
                            let diff = DVector::from_iterator(
                                x.len(),
                                x.iter().zip(&g.mean).map(|(a, b)| a - b),
                            );
                            let z = g
                                .chol
                                .solve_lower_triangular(&diff)
                                .expect("cholesky factor is non-singular");
                            let maha = z.norm_squared();
                            // the shared log-det cancels for LDA
                            if model.shared {
                                lp - 0.5 * maha
                            } else {
                                lp - 0.5 * (maha + g.log_det)
                            }
                        }
                    })
                    .collect();
                SupportVector::from_log_weights(&log_post)
            }
        };
        // non-finite inputs can make every log-weight NaN; fall back to uniform
        Ok(supports.unwrap_or_else(|_| SupportVector::uniform(m)))
    }
}

fn knn_votes(model: &KnnModel, m: usize, x: &[f64]) -> Vec<f64> {
    let k = model.k.min(model.rows.len());
    let mut dist: Vec<(f64, usize)> = model
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (squared_distance(r, x), i))
        .collect();
    // (distance, index) ordering keeps equidistant neighbours deterministic
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut counts = vec![1.0; m];
    for &(_, i) in dist.iter().take(k) {
        counts[model.labels[i]] += 1.0;
    }
    let denom = (k + m) as f64;
    counts.iter().map(|c| c / denom).collect()
}

/// Log of a Gaussian kernel density estimate, via log-sum-exp.
fn log_kde(samples: &[f64], h: f64, x: f64) -> f64 {
    let exponents: Vec<f64> = samples
        .iter()
        .map(|s| -0.5 * ((x - s) / h).powi(2))
        .collect();
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = exponents.iter().map(|e| (e - max).exp()).sum();
    max + sum.ln() - (samples.len() as f64).ln() - h.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn silverman(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    0.9 * spread * (n as f64).powf(-0.2)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn positive_or(value: f64, fallback: f64) -> f64 {
    if value > 0.0 && value.is_finite() {
        value
    } else {
        fallback
    }
}

fn variance_floor(rows: &[Vec<f64>]) -> f64 {
    let dim = rows[0].len();
    let mean = column_means(rows.iter().collect::<Vec<_>>().as_slice(), dim);
    let n = rows.len() as f64;
    let max_var = (0..dim)
        .map(|c| rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n)
        .fold(0.0, f64::max);
    1e-9 * max_var.max(1.0)
}

fn group_by_class(data: &Dataset) -> Vec<Vec<&Vec<f64>>> {
    let mut groups = vec![Vec::new(); data.n_classes];
    for (row, &label) in data.rows.iter().zip(&data.labels) {
        groups[label].push(row);
    }
    groups
}

fn column_means(rows: &[&Vec<f64>], dim: usize) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..dim)
        .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n)
        .collect()
}

fn add_scatter(scatter: &mut DMatrix<f64>, rows: &[&Vec<f64>], mean: &[f64]) {
    let dim = mean.len();
    for r in rows {
        for i in 0..dim {
            let di = r[i] - mean[i];
            for j in 0..=i {
                let v = di * (r[j] - mean[j]);
                scatter[(i, j)] += v;
                if i != j {
                    scatter[(j, i)] += v;
                }
            }
        }
    }
}

/// Cholesky factor of `Σ + εI`, `ε = 1e-6 · trace(Σ)/d`; the identity when the trace is 0.
fn regularized_cholesky(mut cov: DMatrix<f64>) -> DMatrix<f64> {
    let dim = cov.nrows();
    let trace = cov.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return DMatrix::identity(dim, dim);
    }
    let mut eps = 1e-6 * trace / dim as f64;
    for _ in 0..8 {
        let mut reg = cov.clone();
        for i in 0..dim {
            reg[(i, i)] += eps;
        }
        if let Some(chol) = Cholesky::new(reg) {
            return chol.l();
        }
        // round-off can leave a barely indefinite matrix; grow the ridge
        eps *= 100.0;
    }
    for i in 0..dim {
        cov[(i, i)] = trace / dim as f64;
    }
    Cholesky::new(DMatrix::from_diagonal(&cov.diagonal()))
        .map_or_else(|| DMatrix::identity(dim, dim), |c| c.l())
}

fn chol_log_det(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}
