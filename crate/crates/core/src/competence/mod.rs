//! Source competence of a classifier at validation points.
//!
//! The competence of a classifier at `x` is the probability that a randomized
//! model of that classifier labels `x` correctly. Three randomized models are
//! provided:
//!
//! * **bootstrap**: the classifier retrained on `K` bootstrap resamples of
//!   its training set; competence is the fraction `K_c / K` of replicas that
//!   classify the validation point correctly.
//! * **RRC-beta**: class supports replaced by independent `Beta(M·g_i, M·(1-g_i))`
//!   variables, so `E[Δ_i] = g_i`; competence is `P[Δ_j > max_{k≠j} Δ_k]`,
//!   estimated by Monte Carlo.
//! * **RRC-Gaussian**: as RRC-beta, with each `Δ_i` a normal truncated to
//!   `[0, 1]`, mean `g_i` and standard deviation
//!   `sigma_scale · sqrt(g_i(1-g_i)/(M+1))`.
//!
//! Strict ties in the RRC event count as misclassification. Supports equal to
//! exactly 0 or 1 become point masses.

mod truncnorm;

pub use truncnorm::TruncatedNormal;

use crate::classifiers::{self, ClassifierError, ClassifierSpec, SupportModel, TrainedClassifier};
use crate::data::{Dataset, Label, SupportVector};
use crate::seed;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SAMPLE_STREAM: u64 = 0x5a4d_504c;
const REPLICA_STREAM: u64 = 0x5245_504c;
const RRC_STREAM: u64 = 0x5252_4343;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompetenceError {
    #[error("number of bootstrap replicas must be at least 1")]
    ZeroReplicas,
    #[error("number of Monte Carlo samples must be at least 1")]
    ZeroSamples,
    #[error("sigma_scale must be positive and finite, got {0}")]
    BadSigmaScale(f64),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("competence set has {points} points but {values} values")]
    LengthMismatch { points: usize, values: usize },
    #[error("competence value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("label {label} out of range for {n_classes} classes")]
    BadLabel { label: Label, n_classes: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// How source competences are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CompetenceMethod {
    Bootstrap { k: usize },
    RrcBeta { mc_samples: usize },
    RrcGaussian { mc_samples: usize, sigma_scale: f64 },
}

impl CompetenceMethod {
    pub const DEFAULT_REPLICAS: usize = 31;
    pub const DEFAULT_MC_SAMPLES: usize = 100_000;
    pub const DEFAULT_SIGMA_SCALE: f64 = 1.0;

    pub fn name(&self) -> &'static str {
        match self {
            CompetenceMethod::Bootstrap { .. } => "bootstrap",
            CompetenceMethod::RrcBeta { .. } => "rrc_beta",
            CompetenceMethod::RrcGaussian { .. } => "rrc_gaussian",
        }
    }

    pub fn validate(&self) -> Result<(), CompetenceError> {
        match *self {
            CompetenceMethod::Bootstrap { k: 0 } => Err(CompetenceError::ZeroReplicas),
            CompetenceMethod::RrcBeta { mc_samples: 0 }
            | CompetenceMethod::RrcGaussian { mc_samples: 0, .. } => {
                Err(CompetenceError::ZeroSamples)
            }
            CompetenceMethod::RrcGaussian { sigma_scale, .. }
                if !(sigma_scale > 0.0 && sigma_scale.is_finite()) =>
            {
                Err(CompetenceError::BadSigmaScale(sigma_scale))
            }
            _ => Ok(()),
        }
    }
}

/// Validation points with their source competence for one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetenceSet {
    pub classifier_id: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl CompetenceSet {
    pub fn new(
        classifier_id: usize,
        points: Vec<Vec<f64>>,
        values: Vec<f64>,
    ) -> Result<Self, CompetenceError> {
        if points.is_empty() {
            return Err(CompetenceError::EmptyValidation);
        }
        if points.len() != values.len() {
            return Err(CompetenceError::LengthMismatch {
                points: points.len(),
                values: values.len(),
            });
        }
        if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CompetenceError::OutOfRange(v));
        }
        Ok(CompetenceSet {
            classifier_id,
            points,
            values,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// (min, mean, max) of the source values.
    pub fn summary(&self) -> (f64, f64, f64) {
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        (min, mean, max)
    }
}

/// Seed of the `replica`-th bootstrap sample. Independent of the classifier,
/// so every classifier is retrained on the same `K` samples.
pub fn sample_seed(master: u64, replica: usize) -> u64 {
    seed::derive(master, &[SAMPLE_STREAM, replica as u64])
}

/// Training seed of a classifier's `replica`-th bootstrap replica.
pub fn replica_seed(master: u64, classifier_id: usize, replica: usize) -> u64 {
    seed::derive(
        master,
        &[REPLICA_STREAM, classifier_id as u64, replica as u64],
    )
}

/// Monte Carlo seed for the RRC estimate at validation point `point`.
pub fn rrc_point_seed(master: u64, classifier_id: usize, point: usize) -> u64 {
    seed::derive(master, &[RRC_STREAM, classifier_id as u64, point as u64])
}

/// `n` row indices drawn uniformly with replacement.
pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// A bootstrap resample of `data` with the same number of rows.
pub fn bootstrap_sample(data: &Dataset, seed: u64) -> Result<Dataset, CompetenceError> {
    if data.rows.is_empty() {
        return Err(CompetenceError::EmptyDataset);
    }
    Ok(data.subset(&bootstrap_indices(data.rows.len(), seed)))
}

/// One classifier retrained on `K` bootstrap samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReplicas {
    pub replicas: Vec<TrainedClassifier>,
    pub sample_seeds: Vec<u64>,
    pub train_seeds: Vec<u64>,
}

impl BootstrapReplicas {
    pub fn train(
        spec: &ClassifierSpec,
        data: &Dataset,
        k: usize,
        master_seed: u64,
        classifier_id: usize,
    ) -> Result<Self, CompetenceError> {
        if k == 0 {
            return Err(CompetenceError::ZeroReplicas);
        }
        if data.rows.is_empty() {
            return Err(CompetenceError::EmptyDataset);
        }
        let sample_seeds: Vec<u64> = (0..k).map(|r| sample_seed(master_seed, r)).collect();
        let train_seeds: Vec<u64> = (0..k)
            .map(|r| replica_seed(master_seed, classifier_id, r))
            .collect();
        let replicas = sample_seeds
            .par_iter()
            .zip(&train_seeds)
            .map(|(&s, &t)| Ok(classifiers::train(spec, &bootstrap_sample(data, s)?, t)?))
            .collect::<Result<Vec<_>, CompetenceError>>()?;
        Ok(BootstrapReplicas {
            replicas,
            sample_seeds,
            train_seeds,
        })
    }

    /// Number of replicas that predict `label` at `x`.
    pub fn correct_count(&self, x: &[f64], label: Label) -> Result<usize, CompetenceError> {
        let mut hits = 0;
        for replica in &self.replicas {
            if replica.predict(x)? == label {
                hits += 1;
            }
        }
        Ok(hits)
    }
}

/// Bootstrap competence `K_c / K` at every validation point.
pub fn bootstrap_competence(
    spec: &ClassifierSpec,
    train: &Dataset,
    validation: &Dataset,
    k: usize,
    seed: u64,
    classifier_id: usize,
) -> Result<CompetenceSet, CompetenceError> {
    if validation.rows.is_empty() {
        return Err(CompetenceError::EmptyValidation);
    }
    let replicas = BootstrapReplicas::train(spec, train, k, seed, classifier_id)?;
    let values = validation
        .rows
        .par_iter()
        .zip(&validation.labels)
        .map(|(x, &label)| Ok(replicas.correct_count(x, label)? as f64 / k as f64))
        .collect::<Result<Vec<_>, CompetenceError>>()?;
    CompetenceSet::new(classifier_id, validation.rows.clone(), values)
}

/// Randomized reference classifier: a distribution for each class support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RandomizedReference {
    Beta,
    TruncatedGaussian { sigma_scale: f64 },
}

#[derive(Debug, Clone, Copy)]
enum Marginal {
    Point(f64),
    Beta(Beta<f64>),
    Gaussian(TruncatedNormal),
}

impl Marginal {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Marginal::Point(v) => *v,
            Marginal::Beta(beta) => beta.sample(rng),
            Marginal::Gaussian(t) => t.sample(rng),
        }
    }
}

/// Per-class random supports `Δ_i` of the randomized reference model.
#[derive(Debug, Clone)]
pub struct RandomSupports {
    marginals: Vec<Marginal>,
}

impl RandomSupports {
    pub fn new(model: RandomizedReference, supports: &SupportVector) -> Self {
        let m = supports.len() as f64;
        let marginals = supports
            .as_slice()
            .iter()
            .map(|&g| {
                if g <= 0.0 || g >= 1.0 {
                    return Marginal::Point(g.clamp(0.0, 1.0));
                }
                match model {
                    RandomizedReference::Beta => match Beta::new(m * g, m * (1.0 - g)) {
                        Ok(beta) => Marginal::Beta(beta),
                        Err(_) => Marginal::Point(g),
                    },
                    RandomizedReference::TruncatedGaussian { sigma_scale } => {
                        let sd = sigma_scale * (g * (1.0 - g) / (m + 1.0)).sqrt();
                        if sd > 0.0 {
                            Marginal::Gaussian(TruncatedNormal::with_mean(g, sd))
                        } else {
                            Marginal::Point(g)
                        }
                    }
                }
            })
            .collect();
        RandomSupports { marginals }
    }

    pub fn n_classes(&self) -> usize {
        self.marginals.len()
    }

    /// One independent draw of every `Δ_i`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (o, marginal) in out.iter_mut().zip(&self.marginals) {
            *o = marginal.sample(rng);
        }
    }

    /// Monte Carlo estimate of `P[Δ_label > Δ_k for all k ≠ label]`.
    pub fn probability_correct(&self, label: Label, mc_samples: usize, seed: u64) -> f64 {
        let mut rng = seed::rng(seed);
        let mut draw = vec![0.0; self.marginals.len()];
        let mut hits = 0usize;
        for _ in 0..mc_samples {
            self.sample_into(&mut rng, &mut draw);
            let target = draw[label];
            if draw
                .iter()
                .enumerate()
                .all(|(k, &d)| k == label || target > d)
            {
                hits += 1;
            }
        }
        hits as f64 / mc_samples as f64
    }
}

fn rrc_competence(
    model: RandomizedReference,
    supports: &SupportVector,
    true_label: Label,
    mc_samples: usize,
    seed: u64,
) -> Result<f64, CompetenceError> {
    if mc_samples == 0 {
        return Err(CompetenceError::ZeroSamples);
    }
    if true_label >= supports.len() {
        return Err(CompetenceError::BadLabel {
            label: true_label,
            n_classes: supports.len(),
        });
    }
    Ok(RandomSupports::new(model, supports).probability_correct(true_label, mc_samples, seed))
}

/// RRC competence with beta-distributed supports.
pub fn rrc_beta_competence(
    supports: &SupportVector,
    true_label: Label,
    mc_samples: usize,
    seed: u64,
) -> Result<f64, CompetenceError> {
    rrc_competence(
        RandomizedReference::Beta,
        supports,
        true_label,
        mc_samples,
        seed,
    )
}

/// RRC competence with truncated-Gaussian supports.
pub fn rrc_gaussian_competence(
    supports: &SupportVector,
    true_label: Label,
    sigma_scale: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<f64, CompetenceError> {
    CompetenceMethod::RrcGaussian {
        mc_samples,
        sigma_scale,
    }
    .validate()?;
    rrc_competence(
        RandomizedReference::TruncatedGaussian { sigma_scale },
        supports,
        true_label,
        mc_samples,
        seed,
    )
}

/// Competence set of `classifier` on `validation`.
///
/// The bootstrap method retrains `classifier.spec` on resamples of `train`;
/// the RRC methods use the supports of `classifier` itself, which must have
/// been trained on `train`.
pub fn build_competence_set(
    method: &CompetenceMethod,
    classifier: &TrainedClassifier,
    train: &Dataset,
    validation: &Dataset,
    seed: u64,
    classifier_id: usize,
) -> Result<CompetenceSet, CompetenceError> {
    method.validate()?;
    if validation.rows.is_empty() {
        return Err(CompetenceError::EmptyValidation);
    }
    let model = match *method {
        CompetenceMethod::Bootstrap { k } => {
            return bootstrap_competence(
                &classifier.spec,
                train,
                validation,
                k,
                seed,
                classifier_id,
            )
        }
        CompetenceMethod::RrcBeta { .. } => RandomizedReference::Beta,
        CompetenceMethod::RrcGaussian { sigma_scale, .. } => {
            RandomizedReference::TruncatedGaussian { sigma_scale }
        }
    };
    let mc_samples = match *method {
        CompetenceMethod::RrcBeta { mc_samples }
        | CompetenceMethod::RrcGaussian { mc_samples, .. } => mc_samples,
        CompetenceMethod::Bootstrap { .. } => unreachable!(),
    };
    let values = validation
        .rows
        .par_iter()
        .zip(&validation.labels)
        .enumerate()
        .map(|(i, (x, &label))| {
            let supports = classifier.predict_supports(x)?;
            rrc_competence(
                model,
                &supports,
                label,
                mc_samples,
                rrc_point_seed(seed, classifier_id, i),
            )
        })
        .collect::<Result<Vec<_>, CompetenceError>>()?;
    CompetenceSet::new(classifier_id, validation.rows.clone(), values)
}
