//! Confusion matrices and the eight macro/micro quality criteria.

use crate::data::Label;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no objects to evaluate")]
    Empty,
    #[error("length mismatch: {truth} true labels, {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: Label, n_classes: usize },
}

/// Counts indexed by `(true, predicted)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    /// Builds a matrix from explicit counts; rows must be square.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Option<Self> {
        let m = counts.len();
        (m > 0 && counts.iter().all(|r| r.len() == m)).then_some(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: Label, predicted: Label) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn add(&mut self, truth: Label, predicted: Label) {
        self.counts[truth][predicted] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    pub fn true_counts(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn predicted_counts(&self) -> Vec<u64> {
        (0..self.n_classes())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

pub fn confusion(
    truth: &[Label],
    predicted: &[Label],
    n_classes: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= n_classes {
                return Err(MetricsError::LabelOutOfRange { label, n_classes });
            }
        }
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    MaFDR,
    MaFNR,
    MaF1,
    MaMCC,
    MiFDR,
    MiFNR,
    MiF1,
    MiMCC,
}

impl Criterion {
    pub const ALL: [Criterion; 8] = [
        Criterion::MaFDR,
        Criterion::MaFNR,
        Criterion::MaF1,
        Criterion::MaMCC,
        Criterion::MiFDR,
        Criterion::MiFNR,
        Criterion::MiF1,
        Criterion::MiMCC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::MaFDR => "MaFDR",
            Criterion::MaFNR => "MaFNR",
            Criterion::MaF1 => "MaF1",
            Criterion::MaMCC => "MaMCC",
            Criterion::MiFDR => "MiFDR",
            Criterion::MiFNR => "MiFNR",
            Criterion::MiF1 => "MiF1",
            Criterion::MiMCC => "MiMCC",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Converts a raw value to a loss (lower is better).
    pub fn loss(self, raw: f64) -> f64 {
        match self {
            Criterion::MaFDR | Criterion::MaFNR | Criterion::MiFDR | Criterion::MiFNR => raw,
            Criterion::MaF1 | Criterion::MiF1 => 1.0 - raw,
            Criterion::MaMCC | Criterion::MiMCC => (1.0 - raw) / 2.0,
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown criterion {s:?}"))
    }
}

/// Raw values of all criteria, indexed by [`Criterion::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaValues {
    pub raw: [f64; 8],
    /// Classes with no true objects; they are left out of macro averages.
    pub absent_classes: Vec<Label>,
}

impl CriteriaValues {
    pub fn get(&self, c: Criterion) -> f64 {
        self.raw[c.index()]
    }

    pub fn loss(&self, c: Criterion) -> f64 {
        c.loss(self.get(c))
    }

    pub fn losses(&self) -> [f64; 8] {
        Criterion::ALL.map(|c| self.loss(c))
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn binary_mcc(tp: f64, fp: f64, fn_: f64, tn: f64) -> f64 {
    ratio(
        tp * tn - fp * fn_,
        ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt(),
    )
}

/// All eight criteria of a non-empty confusion matrix.
///
/// Undefined precision (nothing predicted as the class) counts as 0, and so
/// does F1 when precision and recall are both 0 and MCC when a marginal is 0.
pub fn criteria(cm: &ConfusionMatrix) -> Result<CriteriaValues, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let n = total as f64;
    let truth = cm.true_counts();
    let predicted = cm.predicted_counts();

    let (mut precision, mut recall, mut f1, mut mcc) = (0.0, 0.0, 0.0, 0.0);
    let mut absent_classes = Vec::new();
    let mut present = 0usize;
    for j in 0..cm.n_classes() {
        if truth[j] == 0 {
            absent_classes.push(j);
            continue;
        }
        present += 1;
        let tp = cm.get(j, j) as f64;
        let fp = predicted[j] as f64 - tp;
        let fn_ = truth[j] as f64 - tp;
        let tn = n - tp - fp - fn_;
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        precision += p;
        recall += r;
        f1 += ratio(2.0 * p * r, p + r);
        mcc += binary_mcc(tp, fp, fn_, tn);
    }
    let present = present as f64;

    let correct = cm.correct() as f64;
    let errors = n - correct;
    let micro_precision = ratio(correct, correct + errors);
    let micro_recall = micro_precision;
    let micro_f1 = ratio(
        2.0 * micro_precision * micro_recall,
        micro_precision + micro_recall,
    );

    let cross: f64 = truth
        .iter()
        .zip(&predicted)
        .map(|(&t, &p)| t as f64 * p as f64)
        .sum();
    let sum_t2: f64 = truth.iter().map(|&t| (t as f64).powi(2)).sum();
    let sum_p2: f64 = predicted.iter().map(|&p| (p as f64).powi(2)).sum();
    let micro_mcc = ratio(
        correct * n - cross,
        ((n * n - sum_p2) * (n * n - sum_t2)).sqrt(),
    );

    Ok(CriteriaValues {
        raw: [
            1.0 - precision / present,
            1.0 - recall / present,
            f1 / present,
            mcc / present,
            1.0 - micro_precision,
            1.0 - micro_recall,
            micro_f1,
            micro_mcc,
        ],
        absent_classes,
    })
}
