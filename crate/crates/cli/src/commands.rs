//! The four subcommands, as library functions.

use crate::config::Settings;
use crate::error::CliError;
use crate::io::{load_dataset, load_queries, parse_dataset, read_text};
use crate::model::{write_atomic, ModelFile};
use bootdes::data::Dataset;
use bootdes::ensemble::{train_des, Explanation};
use bootdes::eval::cv::{cross_validate, train_validation_split, MethodConfig};
use bootdes::eval::metrics::Criterion;
use bootdes::eval::report::{build_report, DatasetResult, EvaluationReport};
use bootdes::preprocess::PreprocessPipeline;
use bootdes::seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const SPLIT_STREAM: u64 = 0x7472_6169_6e73;
const TRAIN_STREAM: u64 = 0x6d6f_6465_6c73;
const CACHE_FORMAT: &str = "bootdes-benchmark-cache-v1";

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_DSV: &str = "criteria.tsv";

/// Splits `data` 2:1 (by default) into pool-training and competence
/// validation parts, fits preprocessing on the training part and trains the
/// ensemble.
pub fn train_model(
    settings: &Settings,
    method: &MethodConfig,
    data: &Dataset,
) -> Result<ModelFile, CliError> {
    let all: Vec<usize> = (0..data.n_rows()).collect();
    let (train_idx, val_idx) = train_validation_split(
        &data.labels,
        data.n_classes,
        &all,
        settings.cv.validation_fraction,
        seed::derive(settings.seed, &[SPLIT_STREAM]),
    )
    .map_err(|e| CliError::data("training data", "split", e))?;
    let (train, validation) = (data.subset(&train_idx), data.subset(&val_idx));
    let pipeline = PreprocessPipeline::fit(&train, &settings.cv.preprocess)
        .map_err(|e| CliError::data("training data", "preprocess", e))?;
    let prep = |d: &Dataset| {
        pipeline
            .apply_dataset(d)
            .map_err(|e| CliError::data("training data", "preprocess", e))
    };
    let (train_p, validation_p) = (prep(&train)?, prep(&validation)?);
    let ensemble = train_des(
        &settings.cv.pool,
        &train_p,
        &validation_p,
        &method.method,
        method.alpha,
        seed::derive(settings.seed, &[TRAIN_STREAM]),
    )
    .map_err(|e| CliError::data("training data", "training", e))?
    .with_pipeline(pipeline);

    let mut echo = settings.echo();
    echo.retain(|k, _| {
        !k.starts_with("method.") && !k.starts_with("cv.") && !k.starts_with("test.")
    });
    echo.insert("method".into(), method.name.clone());
    echo.insert(
        "validation_fraction".into(),
        settings.cv.validation_fraction.to_string(),
    );
    echo.insert("train_rows".into(), train_idx.len().to_string());
    echo.insert("validation_rows".into(), val_idx.len().to_string());
    Ok(ModelFile {
        ensemble,
        schema: data.attributes.clone(),
        class_names: data.class_names.clone(),
        settings: echo,
    })
}

/// One line per pool member: kind and min/mean/max source competence.
pub fn competence_summary(model: &ModelFile) -> Vec<String> {
    model
        .ensemble
        .pool
        .iter()
        .zip(&model.ensemble.fields)
        .enumerate()
        .map(|(i, (classifier, field))| {
            let (min, mean, max) = field.sources().summary();
            format!(
                "member {i} ({}): {} competence sources, min {min:.4}, mean {mean:.4}, max {max:.4}",
                classifier.spec.name(),
                field.sources().len()
            )
        })
        .collect()
}

pub fn cmd_train(settings: &Settings, dataset: &Path, out: &Path) -> Result<ModelFile, CliError> {
    let method = settings
        .methods
        .first()
        .ok_or_else(|| CliError::config("no competence method configured"))?;
    let data = load_dataset(dataset, settings.csv_header, &settings.class)?;
    log::info!(
        "{}: {} rows, {} features, {} classes",
        dataset.display(),
        data.n_rows(),
        data.dim(),
        data.n_classes
    );
    let model = train_model(settings, method, &data).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", dataset.display())),
        other => other,
    })?;
    for line in competence_summary(&model) {
        log::info!("{line}");
    }
    model
        .save(out)
        .map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    log::info!("model written to {}", out.display());
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    ModelFile::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedMember {
    pub member: usize,
    pub classifier: String,
    pub competence: f64,
}

/// Diagnostics for one classified row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowExplanation {
    pub row: usize,
    pub label: String,
    pub label_index: usize,
    pub fused_supports: Vec<f64>,
    pub raw_fused_supports: Vec<f64>,
    pub competences: Vec<f64>,
    pub selected: Vec<SelectedMember>,
    pub fallback: bool,
    pub zero_weight: bool,
}

impl RowExplanation {
    fn new(row: usize, model: &ModelFile, e: Explanation) -> Self {
        RowExplanation {
            row,
            label: model.class_names[e.label].clone(),
            label_index: e.label,
            fused_supports: e.fusion.supports.as_slice().to_vec(),
            raw_fused_supports: e.fusion.raw,
            competences: e.competences,
            selected: e
                .selected
                .iter()
                .map(|s| SelectedMember {
                    member: s.index,
                    classifier: model.ensemble.pool[s.index].spec.name(),
                    competence: s.competence,
                })
                .collect(),
            fallback: e.fallback,
            zero_weight: e.fusion.zero_weight,
        }
    }
}

pub fn explain_rows(model: &ModelFile, rows: &[Vec<f64>]) -> Result<Vec<RowExplanation>, CliError> {
    rows.par_iter()
        .enumerate()
        .map(|(i, row)| {
            let e = model
                .ensemble
                .explain(row)
                .map_err(|e| CliError::data(format!("row {}", i + 1), "predict", e))?;
            Ok(RowExplanation::new(i + 1, model, e))
        })
        .collect()
}

/// Labels (one per line) or, with `explain`, one JSON object per line.
pub fn cmd_predict(
    model_path: &Path,
    input: &Path,
    csv_header: bool,
    explain: bool,
) -> Result<String, CliError> {
    let model = load_model(model_path)?;
    let rows = load_queries(input, csv_header, &model.schema)?;
    let explained = explain_rows(&model, &rows).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", input.display())),
        other => other,
    })?;
    let mut out = String::new();
    for e in &explained {
        if explain {
            let line = serde_json::to_string(e).map_err(|err| CliError::Data(err.to_string()))?;
            let _ = writeln!(out, "{line}");
        } else {
            let _ = writeln!(out, "{}", e.label);
        }
    }
    Ok(out)
}

pub fn cmd_inspect(model_path: &Path) -> Result<String, CliError> {
    let model = load_model(model_path)?;
    let e = &model.ensemble;
    let mut out = String::new();
    let _ = writeln!(out, "format version: {}", crate::model::FORMAT_VERSION);
    let _ = writeln!(out, "method: {} ({:?})", e.method.name(), e.method);
    let _ = writeln!(out, "alpha: {}", e.alpha);
    let _ = writeln!(out, "seed: {}", e.seed);
    let _ = writeln!(
        out,
        "classes: {} ({})",
        e.n_classes,
        model.class_names.join(", ")
    );
    let _ = writeln!(
        out,
        "features: {} raw -> {} after preprocessing",
        model.schema.len(),
        e.pipeline
            .as_ref()
            .map_or(model.schema.len(), PreprocessPipeline::output_dim)
    );
    if let Some(pca) = e.pipeline.as_ref().and_then(|p| p.pca.as_ref()) {
        let _ = writeln!(
            out,
            "pca: {} components, retained variance {:.4}",
            pca.n_components(),
            pca.retained_variance_fraction
        );
    }
    let _ = writeln!(out, "pool:");
    for line in competence_summary(&model) {
        let _ = writeln!(out, "  {line}");
    }
    let _ = writeln!(out, "settings:");
    for (k, v) in &model.settings {
        let _ = writeln!(out, "  {k} = {v}");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CachedDataset {
    dataset: String,
    results: Vec<DatasetResult>,
    warnings: Vec<String>,
}

/// A dataset's results and whether they came from the cache.
type Evaluated = Result<(CachedDataset, bool), CliError>;

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub report: Option<EvaluationReport>,
    pub failures: Vec<(String, String)>,
    pub cache_hits: usize,
    pub files: Vec<PathBuf>,
}

fn dataset_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn cache_key(settings_json: &str, name: &str, bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(CACHE_FORMAT.as_bytes());
    h.update([0]);
    h.update(settings_json.as_bytes());
    h.update([0]);
    h.update(name.as_bytes());
    h.update([0]);
    h.update(bytes);
    hex::encode(h.finalize())
}

fn evaluate_dataset(
    settings: &Settings,
    path: &Path,
    name: &str,
) -> Result<CachedDataset, CliError> {
    let text = read_text(path)?;
    let data = parse_dataset(path, &text, settings.csv_header, &settings.class)?;
    let outcome = cross_validate(&data, &settings.methods, &settings.cv, settings.seed)
        .map_err(|e| CliError::data(name, "cross-validation", e))?;
    let results = outcome
        .methods
        .iter()
        .map(|m| DatasetResult {
            dataset: name.to_string(),
            method: m.name.clone(),
            raw: m.mean_raw,
            accuracy: m.mean_accuracy,
        })
        .collect();
    Ok(CachedDataset {
        dataset: name.to_string(),
        results,
        warnings: outcome.warnings,
    })
}

/// Cross-validates every method on every dataset and writes the report.
///
/// Finished datasets are cached under `<out>/cache`, keyed by the dataset
/// bytes and all result-relevant settings, so an interrupted run resumes
/// where it stopped. Datasets are processed in parallel but assembled in
/// sorted order.
pub fn run_benchmark(settings: &Settings) -> Result<BenchmarkOutcome, CliError> {
    let out = settings
        .output_dir
        .clone()
        .ok_or_else(|| CliError::config("no output directory (set output_dir or pass --out)"))?;
    if settings.datasets.is_empty() {
        return Err(CliError::config("no datasets given"));
    }
    let names: Vec<String> = settings.datasets.iter().map(|p| dataset_name(p)).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(CliError::config(format!(
                "two datasets share the file name '{n}'"
            )));
        }
    }
    if settings.methods.len() < 2 {
        log::warn!(
            "only one method configured: the report will contain criteria but no statistical tests"
        );
    }
    let cache_dir = out.join("cache");
    std::fs::create_dir_all(&cache_dir).map_err(|e| CliError::io(&cache_dir, e))?;
    let settings_json = serde_json::to_string(&settings.echo()).expect("string map");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {} workers: {e}", settings.workers)))?;
    let evaluated: Vec<(String, Evaluated)> = pool.install(|| {
        settings
            .datasets
            .par_iter()
            .zip(&names)
            .map(|(path, name)| {
                let run = || -> Evaluated {
                    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
                    let entry =
                        cache_dir.join(format!("{}.json", cache_key(&settings_json, name, &bytes)));
                    if let Ok(text) = std::fs::read_to_string(&entry) {
                        match serde_json::from_str::<CachedDataset>(&text) {
                            Ok(cached) => {
                                log::info!("{name}: cache hit");
                                return Ok((cached, true));
                            }
                            Err(e) => log::warn!("{name}: ignoring unreadable cache entry: {e}"),
                        }
                    }
                    log::info!("{name}: evaluating");
                    let result = evaluate_dataset(settings, path, name)?;
                    let json = serde_json::to_string(&result).expect("serializable results");
                    write_atomic(&entry, json.as_bytes()).map_err(|e| CliError::io(&entry, e))?;
                    Ok((result, false))
                };
                (name.clone(), run())
            })
            .collect()
    });

    let mut results = Vec::new();
    let mut datasets = Vec::new();
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    let mut cache_hits = 0;
    for (name, outcome) in evaluated {
        match outcome {
            Ok((cached, hit)) => {
                cache_hits += usize::from(hit);
                notes.extend(cached.warnings.iter().map(|w| format!("{name}: {w}")));
                datasets.push(name);
                results.extend(cached.results);
            }
            Err(e) => {
                log::error!("{name}: {e}");
                notes.push(format!("{name}: failed: {e}"));
                failures.push((name, e.to_string()));
            }
        }
    }

    let mut files = Vec::new();
    let report = if datasets.is_empty() {
        None
    } else {
        let methods: Vec<String> = settings.methods.iter().map(|m| m.name.clone()).collect();
        let mut report = build_report(
            &results,
            &datasets,
            &methods,
            &Criterion::ALL,
            settings.test_alpha,
            settings.mcp,
            settings.echo(),
        )
        .map_err(|e| CliError::Data(format!("building report: {e}")))?;
        report.notes.extend(notes);
        let outputs = [
            (
                REPORT_JSON,
                report
                    .to_json()
                    .map_err(|e| CliError::Data(e.to_string()))?,
            ),
            (REPORT_TEXT, report.to_text()),
            (
                REPORT_DSV,
                report
                    .to_dsv(b'\t')
                    .map_err(|e| CliError::Data(e.to_string()))?,
            ),
        ];
        for (file, contents) in outputs {
            let path = out.join(file);
            write_atomic(&path, contents.as_bytes()).map_err(|e| CliError::io(&path, e))?;
            files.push(path);
        }
        Some(report)
    };
    Ok(BenchmarkOutcome {
        report,
        failures,
        cache_hits,
        files,
    })
}
