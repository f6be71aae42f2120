//! Competence over the whole feature space from a competence set.
//!
//! Each validation point acts as a source of its competence value; the
//! competence at `x` is the average of the source values weighted by
//! `exp(-dist(x_k, x)^2)` and normalized by the weight sum.

use crate::classifiers::squared_distance;
use crate::competence::CompetenceSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shifted exponents below this contribute exactly 0 in `f64`.
const UNDERFLOW_EXPONENT: f64 = -745.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("dimension mismatch: field sources have {expected} features, query has {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Normalized Gaussian potential field over a competence set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetenceField {
    sources: CompetenceSet,
}

impl CompetenceField {
    pub fn new(sources: CompetenceSet) -> Self {
        CompetenceField { sources }
    }

    pub fn sources(&self) -> &CompetenceSet {
        &self.sources
    }

    pub fn dim(&self) -> usize {
        self.sources.dim()
    }

    /// `Σ c_k exp(-d_k²) / Σ exp(-d_k²)`, computed with the smallest squared
    /// distance subtracted from every exponent.
    pub fn competence_at(&self, x: &[f64]) -> Result<f64, FieldError> {
        if x.len() != self.dim() {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let dist2: Vec<f64> = self
            .sources
            .points()
            .iter()
            .map(|p| squared_distance(p, x))
            .collect();
        let nearest = dist2.iter().copied().fold(f64::INFINITY, f64::min);
        let mut weighted = 0.0;
        let mut total = 0.0;
        for (&d2, &c) in dist2.iter().zip(self.sources.values()) {
            let exponent = nearest - d2;
            if exponent < UNDERFLOW_EXPONENT {
                continue;
            }
            let w = exponent.exp();
            weighted += w * c;
            total += w;
        }
        if !(total > 0.0) {
            // only reachable with non-finite coordinates
            return Ok(self.sources.values().iter().sum::<f64>() / self.sources.len() as f64);
        }
        Ok(weighted / total)
    }
}

/// Competence of every field at `x`, in pool order.
pub fn competence_profile(fields: &[CompetenceField], x: &[f64]) -> Result<Vec<f64>, FieldError> {
    fields.iter().map(|f| f.competence_at(x)).collect()
}
