//! Repeated stratified cross-validation of DES configurations.
//!
//! Within every fold the training portion is split again into a part that
//! trains the pool and a part that builds the competence sets; the test fold
//! is only used for scoring. All methods see the same folds, splits and
//! training seeds, so their pools are identical.

use super::metrics::{confusion, criteria, ConfusionMatrix, Criterion, MetricsError};
use crate::classifiers::ClassifierSpec;
use crate::competence::CompetenceMethod;
use crate::data::{Dataset, Label};
use crate::ensemble::{train_des, EnsembleError};
use crate::preprocess::{PreprocessConfig, PreprocessError, PreprocessPipeline};
use crate::seed;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const FOLD_STREAM: u64 = 0x464f_4c44;
const SPLIT_STREAM: u64 = 0x5350_4c54;
const TRAIN_STREAM: u64 = 0x5452_4e44;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CvError {
    #[error("dataset too small for 2-fold stratified cross-validation: {0}")]
    TooSmall(String),
    #[error("invalid cross-validation setting: {0}")]
    InvalidConfig(String),
    #[error("repeat {repeat}, fold {fold}: {source}")]
    Fold {
        repeat: usize,
        fold: usize,
        source: Box<CvError>,
    },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Test-fold index of every object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: usize,
    pub requested: usize,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn reduced(&self) -> bool {
        self.folds < self.requested
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

fn class_members(labels: &[Label], n_classes: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        members[label].push(i);
    }
    members
}

/// Stratified assignment of objects to `folds` folds.
///
/// When some class has fewer members than `folds`, the number of folds drops
/// to that class size; fewer than 2 folds is an error. Each class is
/// shuffled and dealt round-robin, continuing where the previous class
/// stopped, so every fold gets `floor` or `ceil` of each class's share.
pub fn stratified_folds(
    labels: &[Label],
    n_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<FoldPlan, CvError> {
    if folds < 2 {
        return Err(CvError::InvalidConfig(format!(
            "folds must be at least 2, got {folds}"
        )));
    }
    let mut members = class_members(labels, n_classes);
    let smallest = members
        .iter()
        .map(Vec::len)
        .filter(|&c| c > 0)
        .min()
        .unwrap_or(0);
    let used = folds.min(smallest);
    if used < 2 {
        return Err(CvError::TooSmall(format!(
            "smallest class has {smallest} object(s)"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in &mut members {
        class.shuffle(&mut rng);
        for &i in class.iter() {
            assignment[i] = next % used;
            next += 1;
        }
    }
    Ok(FoldPlan {
        folds: used,
        requested: folds,
        assignment,
    })
}

/// Stratified split of `indices` into (train, validation) with roughly
/// `validation_fraction` of every class in validation. Each class keeps at
/// least one object on the training side.
pub fn train_validation_split(
    labels: &[Label],
    n_classes: usize,
    indices: &[usize],
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), CvError> {
    let mut members = vec![Vec::new(); n_classes];
    for &i in indices {
        members[labels[i]].push(i);
    }
    let mut rng = seed::rng(seed);
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for class in &mut members {
        class.shuffle(&mut rng);
        let n_val = ((class.len() as f64 * validation_fraction).round() as usize)
            .min(class.len().saturating_sub(1));
        validation.extend_from_slice(&class[..n_val]);
        train.extend_from_slice(&class[n_val..]);
    }
    if validation.is_empty() {
        return Err(CvError::TooSmall(
            "no class can spare an object for the validation set".into(),
        ));
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok((train, validation))
}

/// One competence method under comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub name: String,
    pub method: CompetenceMethod,
    /// Selection threshold; `None` means `1/M`.
    pub alpha: Option<f64>,
}

impl MethodConfig {
    pub fn new(method: CompetenceMethod) -> Self {
        MethodConfig {
            name: method.name().to_string(),
            method,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    /// Share of each training portion used for competence estimation.
    pub validation_fraction: f64,
    pub preprocess: PreprocessConfig,
    /// Fit preprocessing on each fold's training part (otherwise once on
    /// the whole dataset).
    pub per_fold_preprocessing: bool,
    pub pool: Vec<ClassifierSpec>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 2,
            repeats: 5,
            validation_fraction: 1.0 / 3.0,
            preprocess: PreprocessConfig::default(),
            per_fold_preprocessing: true,
            pool: ClassifierSpec::default_pool(),
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<(), CvError> {
        if self.folds < 2 {
            return Err(CvError::InvalidConfig(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        if self.repeats == 0 {
            return Err(CvError::InvalidConfig("repeats must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(CvError::InvalidConfig(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.pool.is_empty() {
            return Err(CvError::InvalidConfig("empty classifier pool".into()));
        }
        Ok(())
    }
}

/// Scores of one method on one test fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub repeat: usize,
    pub fold: usize,
    pub raw: [f64; 8],
    pub accuracy: f64,
    pub absent_classes: Vec<Label>,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub name: String,
    /// Criterion values averaged over all folds and repeats.
    pub mean_raw: [f64; 8],
    pub mean_accuracy: f64,
    pub folds: Vec<FoldScore>,
}

impl MethodOutcome {
    pub fn mean_loss(&self, c: Criterion) -> f64 {
        c.loss(self.mean_raw[c.index()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub folds_used: usize,
    pub methods: Vec<MethodOutcome>,
    pub warnings: Vec<String>,
}

/// Runs every method through `repeats` rounds of stratified `folds`-fold
/// cross-validation. Folds run in parallel; results are ordered by
/// (repeat, fold) regardless of completion order.
pub fn cross_validate(
    data: &Dataset,
    methods: &[MethodConfig],
    config: &CvConfig,
    seed: u64,
) -> Result<CvOutcome, CvError> {
    config.validate()?;
    if methods.is_empty() {
        return Err(CvError::InvalidConfig("no methods to evaluate".into()));
    }
    let plans = (0..config.repeats)
        .map(|r| {
            stratified_folds(
                &data.labels,
                data.n_classes,
                config.folds,
                seed::derive(seed, &[FOLD_STREAM, r as u64]),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let folds_used = plans[0].folds;
    let mut warnings = Vec::new();
    if plans[0].reduced() {
        warnings.push(format!(
            "folds reduced from {} to {} because the smallest class has only {} objects",
            config.folds, folds_used, folds_used
        ));
    }
    let global = if config.per_fold_preprocessing {
        None
    } else {
        Some(PreprocessPipeline::fit(data, &config.preprocess)?)
    };

    let jobs: Vec<(usize, usize)> = (0..config.repeats)
        .flat_map(|r| (0..folds_used).map(move |f| (r, f)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(repeat, fold)| {
            run_fold(
                data,
                methods,
                config,
                global.as_ref(),
                &plans[repeat],
                repeat,
                fold,
                seed,
            )
            .map_err(|e| CvError::Fold {
                repeat,
                fold,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut outcomes: Vec<MethodOutcome> = methods
        .iter()
        .map(|m| MethodOutcome {
            name: m.name.clone(),
            mean_raw: [0.0; 8],
            mean_accuracy: 0.0,
            folds: Vec::new(),
        })
        .collect();
    for per_method in scores {
        for (outcome, score) in outcomes.iter_mut().zip(per_method) {
            outcome.folds.push(score);
        }
    }
    for outcome in &mut outcomes {
        let count = outcome.folds.len() as f64;
        for c in 0..8 {
            outcome.mean_raw[c] = outcome.folds.iter().map(|s| s.raw[c]).sum::<f64>() / count;
        }
        outcome.mean_accuracy = outcome.folds.iter().map(|s| s.accuracy).sum::<f64>() / count;
    }
    if outcomes
        .iter()
        .flat_map(|o| &o.folds)
        .any(|s| !s.absent_classes.is_empty())
    {
        warnings.push(
            "some test folds lack a class; it was left out of that fold's macro averages".into(),
        );
    }
    Ok(CvOutcome {
        folds_used,
        methods: outcomes,
        warnings,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    data: &Dataset,
    methods: &[MethodConfig],
    config: &CvConfig,
    global: Option<&PreprocessPipeline>,
    plan: &FoldPlan,
    repeat: usize,
    fold: usize,
    master: u64,
) -> Result<Vec<FoldScore>, CvError> {
    let split_seed = seed::derive(master, &[SPLIT_STREAM, repeat as u64, fold as u64]);
    let (train_idx, val_idx) = train_validation_split(
        &data.labels,
        data.n_classes,
        &plan.train_indices(fold),
        config.validation_fraction,
        split_seed,
    )?;
    let (train, validation, test) = (
        data.subset(&train_idx),
        data.subset(&val_idx),
        data.subset(&plan.test_indices(fold)),
    );
    let fitted;
    let pipeline = match global {
        Some(p) => p,
        None => {
            fitted = PreprocessPipeline::fit(&train, &config.preprocess)?;
            &fitted
        }
    };
    let train = pipeline.apply_dataset(&train)?;
    let validation = pipeline.apply_dataset(&validation)?;
    let test_rows = pipeline.apply(&test.rows)?;
    let train_seed = seed::derive(master, &[TRAIN_STREAM, repeat as u64, fold as u64]);

    methods
        .iter()
        .map(|m| {
            let ensemble = train_des(
                &config.pool,
                &train,
                &validation,
                &m.method,
                m.alpha,
                train_seed,
            )?;
            let predicted = test_rows
                .iter()
                .map(|x| ensemble.classify_preprocessed(x))
                .collect::<Result<Vec<_>, _>>()?;
            let cm = confusion(&test.labels, &predicted, data.n_classes)?;
            let values = criteria(&cm)?;
            Ok(FoldScore {
                repeat,
                fold,
                raw: values.raw,
                accuracy: cm.accuracy(),
                absent_classes: values.absent_classes,
                confusion: cm,
            })
        })
        .collect()
}
