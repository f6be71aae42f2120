//! Benchmark report: per-criterion ranks, Friedman test and pairwise
//! Wilcoxon tests under family-wise error control.

use super::metrics::Criterion;
use super::stats::{
    adjust_pairwise, average_ranks, friedman_test, holm_adjust, method_pairs, wilcoxon_signed_rank,
    Mcp, StatsError,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Default significance level of all tests.
pub const DEFAULT_TEST_ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no result for dataset '{dataset}' and method '{method}'")]
    MissingCell { dataset: String, method: String },
    #[error("duplicate result for dataset '{dataset}' and method '{method}'")]
    DuplicateCell { dataset: String, method: String },
    #[error("no methods to report")]
    NoMethods,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("writing table: {0}")]
    Csv(#[from] csv::Error),
}

/// Mean criterion values of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub dataset: String,
    pub method: String,
    /// Raw values indexed by [`Criterion::index`].
    pub raw: [f64; 8],
    pub accuracy: f64,
}

/// Losses of one criterion, rows = datasets, columns = methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionTable {
    pub criterion: Criterion,
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    pub losses: Vec<Vec<f64>>,
}

impl CriterionTable {
    pub fn from_results(
        criterion: Criterion,
        results: &[DatasetResult],
        datasets: &[String],
        methods: &[String],
    ) -> Result<Self, ReportError> {
        let mut cells: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        for r in results {
            if cells
                .insert(
                    (&r.dataset, &r.method),
                    criterion.loss(r.raw[criterion.index()]),
                )
                .is_some()
            {
                return Err(ReportError::DuplicateCell {
                    dataset: r.dataset.clone(),
                    method: r.method.clone(),
                });
            }
        }
        let losses = datasets
            .iter()
            .map(|d| {
                methods
                    .iter()
                    .map(|m| {
                        cells
                            .get(&(d.as_str(), m.as_str()))
                            .copied()
                            .ok_or_else(|| ReportError::MissingCell {
                                dataset: d.clone(),
                                method: m.clone(),
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CriterionTable {
            criterion,
            datasets: datasets.to_vec(),
            methods: methods.to_vec(),
            losses,
        })
    }

    pub fn column(&self, method: usize) -> Vec<f64> {
        self.losses.iter().map(|row| row[method]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanSummary {
    pub statistic: f64,
    pub p_value: f64,
    /// Holm-adjusted over all reported criteria.
    pub adjusted_p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub first: usize,
    pub second: usize,
    /// Positive-rank sum of `first - second` losses.
    pub statistic: f64,
    pub p_value: f64,
    pub adjusted_p_value: f64,
    pub significant: bool,
    pub exact: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSection {
    pub criterion: Criterion,
    pub ranks: Vec<f64>,
    pub friedman: Option<FriedmanSummary>,
    pub pairwise: Vec<PairwiseComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Every setting of the run, defaults included.
    pub settings: BTreeMap<String, String>,
    pub alpha: f64,
    pub mcp: Mcp,
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    pub results: Vec<DatasetResult>,
    pub sections: Vec<CriterionSection>,
    pub notes: Vec<String>,
}

/// Assembles the report for `criteria` from per-dataset results.
///
/// With a single method only ranks are reported; the Friedman test also
/// needs at least two datasets.
pub fn build_report(
    results: &[DatasetResult],
    datasets: &[String],
    methods: &[String],
    criteria: &[Criterion],
    alpha: f64,
    mcp: Mcp,
    settings: BTreeMap<String, String>,
) -> Result<EvaluationReport, ReportError> {
    if methods.is_empty() {
        return Err(ReportError::NoMethods);
    }
    let k = methods.len();
    let mut notes = Vec::new();
    let with_tests = k >= 2 && !datasets.is_empty();
    if k < 2 {
        notes.push("only one method: statistical tests skipped".to_string());
    }
    let with_friedman = with_tests && datasets.len() >= 2;
    if with_tests && !with_friedman {
        notes.push("fewer than two datasets: Friedman test skipped".to_string());
    }

    let mut sections = Vec::with_capacity(criteria.len());
    for &criterion in criteria {
        let table = CriterionTable::from_results(criterion, results, datasets, methods)?;
        let ranks = if datasets.is_empty() {
            Vec::new()
        } else {
            average_ranks(&table.losses)?
        };
        let friedman = if with_friedman {
            let f = friedman_test(&table.losses)?;
            Some(FriedmanSummary {
                statistic: f.statistic,
                p_value: f.p_value,
                adjusted_p_value: f.p_value,
            })
        } else {
            None
        };
        let mut pairwise = Vec::new();
        if with_tests {
            let tests = method_pairs(k)
                .into_iter()
                .map(|(i, j)| {
                    Ok((
                        i,
                        j,
                        wilcoxon_signed_rank(&table.column(i), &table.column(j))?,
                    ))
                })
                .collect::<Result<Vec<_>, StatsError>>()?;
            let raw: Vec<f64> = tests.iter().map(|t| t.2.p_value).collect();
            let adjusted = adjust_pairwise(k, &raw, mcp)?;
            for ((first, second, w), adjusted_p_value) in tests.into_iter().zip(adjusted) {
                pairwise.push(PairwiseComparison {
                    first,
                    second,
                    statistic: w.statistic,
                    p_value: w.p_value,
                    adjusted_p_value,
                    significant: adjusted_p_value <= alpha,
                    exact: w.exact,
                    degenerate: w.degenerate,
                });
            }
        }
        sections.push(CriterionSection {
            criterion,
            ranks,
            friedman,
            pairwise,
        });
    }

    let friedman_p: Vec<f64> = sections
        .iter()
        .filter_map(|s| s.friedman.map(|f| f.p_value))
        .collect();
    let adjusted = holm_adjust(&friedman_p);
    for (f, adj) in sections
        .iter_mut()
        .filter_map(|s| s.friedman.as_mut())
        .zip(adjusted)
    {
        f.adjusted_p_value = adj;
    }
    if with_tests {
        notes.push(format!(
            "pairwise p-values are two-sided Wilcoxon signed-rank tests; '*' marks rejection at alpha = {alpha} after {} adjustment",
            mcp.name()
        ));
    }
    if with_friedman {
        notes.push(
            "adjusted Friedman p-values are Holm-adjusted over the reported criteria".to_string(),
        );
    }

    Ok(EvaluationReport {
        settings,
        alpha,
        mcp,
        methods: methods.to_vec(),
        datasets: datasets.to_vec(),
        results: results.to_vec(),
        sections,
        notes,
    })
}

fn short_p(p: f64) -> String {
    let s = format!("{p:.3}");
    s.strip_prefix('0').map(str::to_string).unwrap_or(s)
}

/// Fixed three decimals, switching to scientific notation below 0.001.
fn friedman_p(p: f64) -> String {
    if p >= 1e-3 {
        format!("{p:.3}")
    } else {
        format!("{p:.2e}")
    }
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Raw criterion values, one line per (dataset, method).
    pub fn to_dsv(&self, delimiter: u8) -> Result<String, ReportError> {
        let mut writer = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        let mut header = vec!["dataset".to_string(), "method".to_string()];
        header.extend(Criterion::ALL.iter().map(|c| c.name().to_string()));
        header.push("accuracy".to_string());
        writer.write_record(&header)?;
        for r in &self.results {
            let mut record = vec![r.dataset.clone(), r.method.clone()];
            record.extend(r.raw.iter().map(|v| v.to_string()));
            record.push(r.accuracy.to_string());
            writer.write_record(&record)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output of utf-8 input"))
    }

    /// Plain-text table: per criterion the Friedman p-value, the rank row and
    /// the upper triangle of pairwise p-values.
    pub fn to_text(&self) -> String {
        let width = self
            .methods
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(10)
            + 2;
        let mut out = String::new();
        let _ = writeln!(out, "Methods: {}", self.methods.join(", "));
        let _ = writeln!(out, "Datasets: {}", self.datasets.len());
        let _ = writeln!(
            out,
            "Test level: {}, multiple comparisons: {}",
            self.alpha,
            self.mcp.name()
        );
        for section in &self.sections {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<w$}{}", "Nam.", section.criterion.name(), w = width);
            if let Some(f) = section.friedman {
                let _ = writeln!(
                    out,
                    "{:<w$}{} (adjusted {}, chi2 = {:.4})",
                    "Frd.",
                    friedman_p(f.p_value),
                    friedman_p(f.adjusted_p_value),
                    f.statistic,
                    w = width
                );
            }
            let _ = write!(out, "{:<w$}", "", w = width);
            for m in &self.methods {
                let _ = write!(out, "{m:>w$}", w = width);
            }
            let _ = writeln!(out);
            let _ = write!(out, "{:<w$}", "Rank", w = width);
            for r in &section.ranks {
                let _ = write!(out, "{:>w$}", format!("{r:.3}"), w = width);
            }
            let _ = writeln!(out);
            if section.pairwise.is_empty() {
                continue;
            }
            for (i, name) in self.methods.iter().enumerate().take(self.methods.len() - 1) {
                let _ = write!(out, "{name:<w$}", w = width);
                for j in 0..self.methods.len() {
                    let cell = section
                        .pairwise
                        .iter()
                        .find(|p| p.first == i && p.second == j)
                        .map(|p| {
                            format!(
                                "{}{}",
                                short_p(p.p_value),
                                if p.significant { "*" } else { "" }
                            )
                        })
                        .unwrap_or_default();
                    let _ = write!(out, "{cell:>w$}", w = width);
                }
                let _ = writeln!(out);
            }
        }
        if !self.notes.is_empty() {
            let _ = writeln!(out);
            for note in &self.notes {
                let _ = writeln!(out, "Note: {note}");
            }
        }
        if !self.settings.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "Settings:");
            for (key, value) in &self.settings {
                let _ = writeln!(out, "  {key} = {value}");
            }
        }
        out
    }
}
