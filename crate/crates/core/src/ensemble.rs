//! Dynamic ensemble selection.
//!
//! For a query `x`, every pool member whose competence at `x` is strictly
//! greater than `alpha` is selected; the selected supports are summed with
//! competence weights and the class with maximal fused support wins. When no
//! member clears the threshold, the single most competent member is used.

use crate::classifiers::{self, ClassifierError, ClassifierSpec, SupportModel, TrainedClassifier};
use crate::competence::{build_competence_set, CompetenceError, CompetenceMethod};
use crate::data::{argmax_support, Dataset, Label, SupportVector};
use crate::field::{competence_profile, CompetenceField, FieldError};
use crate::preprocess::{PreprocessError, PreprocessPipeline};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("pool and fields differ in length ({pool} vs {fields})")]
    PoolFieldMismatch { pool: usize, fields: usize },
    #[error("alpha {0} outside [0, 1)")]
    BadAlpha(f64),
    #[error("train and validation sets disagree on {0}")]
    IncompatibleSplits(&'static str),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Competence(#[from] CompetenceError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// A pool member chosen for a query, with its competence there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub index: usize,
    pub competence: f64,
}

/// Result of competence-weighted fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fusion {
    /// Raw weighted sum `Σ c_l · g^(l)`.
    pub raw: Vec<f64>,
    /// `raw` renormalized to sum 1 (uniform if the weights were all zero).
    pub supports: SupportVector,
    /// Set when every selected weight was 0.
    pub zero_weight: bool,
}

/// Everything `classify` computed for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub label: Label,
    pub competences: Vec<f64>,
    pub selected: Vec<Selected>,
    pub fallback: bool,
    pub fusion: Fusion,
}

/// Trained DES system. Immutable: classification does no training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEnsemble {
    pub pool: Vec<TrainedClassifier>,
    pub fields: Vec<CompetenceField>,
    pub alpha: f64,
    pub n_classes: usize,
    pub method: CompetenceMethod,
    pub seed: u64,
    /// Applied to raw queries by [`TrainedEnsemble::classify`].
    pub pipeline: Option<PreprocessPipeline>,
}

impl TrainedEnsemble {
    pub fn new(
        pool: Vec<TrainedClassifier>,
        fields: Vec<CompetenceField>,
        alpha: f64,
        method: CompetenceMethod,
        seed: u64,
    ) -> Result<Self, EnsembleError> {
        if pool.len() != fields.len() || pool.is_empty() {
            return Err(EnsembleError::PoolFieldMismatch {
                pool: pool.len(),
                fields: fields.len(),
            });
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(EnsembleError::BadAlpha(alpha));
        }
        let n_classes = pool[0].n_classes;
        Ok(TrainedEnsemble {
            pool,
            fields,
            alpha,
            n_classes,
            method,
            seed,
            pipeline: None,
        })
    }

    pub fn with_pipeline(mut self, pipeline: PreprocessPipeline) -> Self {
        self.pipeline = Some(pipeline);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self, EnsembleError> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(EnsembleError::BadAlpha(alpha));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Competence of every pool member at a preprocessed query.
    pub fn competences(&self, x: &[f64]) -> Result<Vec<f64>, EnsembleError> {
        Ok(competence_profile(&self.fields, x)?)
    }

    /// Members with competence above `alpha`, in pool order.
    pub fn select_ensemble(&self, x: &[f64]) -> Result<Vec<Selected>, EnsembleError> {
        Ok(select_by_threshold(&self.competences(x)?, self.alpha).0)
    }

    pub fn fuse_supports(&self, x: &[f64], selected: &[Selected]) -> Result<Fusion, EnsembleError> {
        let members = selected
            .iter()
            .map(|s| Ok((s.competence, self.pool[s.index].predict_supports(x)?)))
            .collect::<Result<Vec<_>, EnsembleError>>()?;
        Ok(fuse(&members, self.n_classes))
    }

    /// Full decision for a query that is already preprocessed.
    pub fn explain_preprocessed(&self, x: &[f64]) -> Result<Explanation, EnsembleError> {
        let competences = self.competences(x)?;
        let (selected, fallback) = select_by_threshold(&competences, self.alpha);
        let fusion = self.fuse_supports(x, &selected)?;
        Ok(Explanation {
            label: fusion.supports.argmax(),
            competences,
            selected,
            fallback,
            fusion,
        })
    }

    pub fn classify_preprocessed(&self, x: &[f64]) -> Result<Label, EnsembleError> {
        Ok(self.explain_preprocessed(x)?.label)
    }

    /// Full decision for a raw query; the stored pipeline (if any) is applied first.
    pub fn explain(&self, raw: &[f64]) -> Result<Explanation, EnsembleError> {
        match &self.pipeline {
            Some(p) => self.explain_preprocessed(&p.apply_row(raw)?),
            None => self.explain_preprocessed(raw),
        }
    }

    pub fn classify(&self, raw: &[f64]) -> Result<Label, EnsembleError> {
        Ok(self.explain(raw)?.label)
    }

    pub fn classify_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<Label>, EnsembleError> {
        rows.par_iter().map(|r| self.classify(r)).collect()
    }
}

/// Threshold selection with fallback to the most competent member (lowest
/// index on ties). The flag reports whether the fallback was used.
pub fn select_by_threshold(competences: &[f64], alpha: f64) -> (Vec<Selected>, bool) {
    let selected: Vec<Selected> = competences
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > alpha)
        .map(|(index, &competence)| Selected { index, competence })
        .collect();
    if !selected.is_empty() || competences.is_empty() {
        return (selected, false);
    }
    let index = argmax_support(competences);
    (
        vec![Selected {
            index,
            competence: competences[index],
        }],
        true,
    )
}

/// Competence-weighted sum of member supports.
pub fn fuse(members: &[(f64, SupportVector)], n_classes: usize) -> Fusion {
    let mut raw = vec![0.0; n_classes];
    for (weight, supports) in members {
        for (r, s) in raw.iter_mut().zip(supports.as_slice()) {
            *r += weight * s;
        }
    }
    match SupportVector::from_weights(raw.clone()) {
        Ok(supports) => Fusion {
            raw,
            supports,
            zero_weight: false,
        },
        Err(_) => Fusion {
            raw,
            supports: SupportVector::uniform(n_classes),
            zero_weight: true,
        },
    }
}

/// Trains the pool on `train`, builds each member's competence set on
/// `validation` and wraps them into fields. `alpha` defaults to `1/M`.
pub fn train_des(
    specs: &[ClassifierSpec],
    train: &Dataset,
    validation: &Dataset,
    method: &CompetenceMethod,
    alpha: Option<f64>,
    seed: u64,
) -> Result<TrainedEnsemble, EnsembleError> {
    if validation.rows.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    if train.n_classes != validation.n_classes {
        return Err(EnsembleError::IncompatibleSplits("number of classes"));
    }
    if train.rows.first().map(Vec::len) != validation.rows.first().map(Vec::len) {
        return Err(EnsembleError::IncompatibleSplits("feature dimension"));
    }
    method.validate()?;
    let pool = classifiers::train_pool(specs, train, seed)?;
    let fields = pool
        .par_iter()
        .enumerate()
        .map(|(id, classifier)| {
            let set = build_competence_set(method, classifier, train, validation, seed, id)?;
            Ok(CompetenceField::new(set))
        })
        .collect::<Result<Vec<_>, EnsembleError>>()?;
    let alpha = alpha.unwrap_or(1.0 / train.n_classes as f64);
    TrainedEnsemble::new(pool, fields, alpha, *method, seed)
}
