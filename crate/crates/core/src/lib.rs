//! Dynamic ensemble selection with classifier competence estimated by
//! bootstrap resampling or by randomized reference classifiers.
//!
//! The typical flow is: ingest a [`Dataset`], fit a [`PreprocessPipeline`],
//! train a pool and its competence fields with [`train_des`], then call
//! [`TrainedEnsemble::classify`]. The [`eval`] module holds the
//! cross-validation protocol and the nonparametric tests used to compare
//! competence methods.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod competence;
pub mod data;
pub mod ensemble;
pub mod eval;
pub mod field;
pub mod ingest;
pub mod preprocess;
pub mod seed;

pub use classifiers::{
    train, train_pool, ClassifierError, ClassifierSpec, SupportModel, TrainedClassifier,
};
pub use competence::{build_competence_set, CompetenceError, CompetenceMethod, CompetenceSet};
pub use data::{argmax_support, Attribute, Dataset, Label, SupportVector, Violation};
pub use ensemble::{train_des, EnsembleError, Explanation, TrainedEnsemble};
pub use field::CompetenceField;
pub use preprocess::{PreprocessConfig, PreprocessPipeline};
