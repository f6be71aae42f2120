//! Experiment configuration: a TOML file plus command-line overrides,
//! resolved into [`Settings`] with every default filled in.
//!
//! ```toml
//! seed = 7
//! datasets = ["data/iris.arff"]       # paths relative to this file
//! dataset_dir = "data"                # every .arff/.dat/.csv inside
//! pool = ["naive_bayes_kde", "nearest_centroid", "knn(5)", "lda", "qda"]
//!
//! [[methods]]
//! kind = "bootstrap"                  # bootstrap | rrc_beta | rrc_gaussian
//! k = 31
//!
//! [preprocess]
//! variance_threshold = 0.95
//! pca = true
//! per_fold = true
//!
//! [cv]
//! folds = 2
//! repeats = 5
//! validation_fraction = 0.3333333333333333
//!
//! [test]
//! alpha = 0.05
//! mcp = "bergmann-hommel"             # or "holm"
//!
//! [input]
//! csv_header = true
//! class = "last"                      # "last", a column index or a name
//! ```

use crate::error::CliError;
use bootdes::classifiers::ClassifierSpec;
use bootdes::competence::CompetenceMethod;
use bootdes::eval::cv::{CvConfig, MethodConfig};
use bootdes::eval::stats::Mcp;
use bootdes::eval::DEFAULT_TEST_ALPHA;
use bootdes::ingest::ClassSelector;
use bootdes::preprocess::PreprocessConfig;
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub datasets: Vec<PathBuf>,
    pub dataset_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub pool: Option<Vec<String>>,
    #[serde(default)]
    pub methods: Vec<MethodEntry>,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub input: InputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub kind: String,
    pub name: Option<String>,
    pub k: Option<usize>,
    pub mc_samples: Option<usize>,
    pub sigma_scale: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    pub variance_threshold: Option<f64>,
    pub pca: Option<bool>,
    pub per_fold: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub validation_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSection {
    pub alpha: Option<f64>,
    pub mcp: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub csv_header: Option<bool>,
    pub class: Option<toml::Value>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// Comma-separated method kinds.
    pub method: Option<String>,
    pub alpha: Option<f64>,
    pub k_bootstrap: Option<usize>,
    pub mc_samples: Option<usize>,
    pub sigma_scale: Option<f64>,
    pub variance_threshold: Option<f64>,
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub mcp: Option<String>,
    pub datasets: Vec<PathBuf>,
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub datasets: Vec<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub workers: usize,
    pub methods: Vec<MethodConfig>,
    pub cv: CvConfig,
    pub test_alpha: f64,
    pub mcp: Mcp,
    pub csv_header: bool,
    pub class: ClassSelector,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(CliError::config)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.datasets.iter_mut().for_each(rebase);
        config.dataset_dir.as_mut().map(rebase);
        config.output_dir.as_mut().map(rebase);
        Ok(config)
    }
}

fn method_from_kind(kind: &str) -> Result<CompetenceMethod, CliError> {
    match kind.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "bootstrap" => Ok(CompetenceMethod::Bootstrap {
            k: CompetenceMethod::DEFAULT_REPLICAS,
        }),
        "rrc_beta" | "beta" => Ok(CompetenceMethod::RrcBeta {
            mc_samples: CompetenceMethod::DEFAULT_MC_SAMPLES,
        }),
        "rrc_gaussian" | "gaussian" => Ok(CompetenceMethod::RrcGaussian {
            mc_samples: CompetenceMethod::DEFAULT_MC_SAMPLES,
            sigma_scale: CompetenceMethod::DEFAULT_SIGMA_SCALE,
        }),
        other => Err(CliError::config(format!(
            "unknown method '{other}' (expected bootstrap, rrc_beta or rrc_gaussian)"
        ))),
    }
}

fn apply_params(
    method: CompetenceMethod,
    k: Option<usize>,
    mc: Option<usize>,
    sigma: Option<f64>,
) -> CompetenceMethod {
    match method {
        CompetenceMethod::Bootstrap { k: default } => CompetenceMethod::Bootstrap {
            k: k.unwrap_or(default),
        },
        CompetenceMethod::RrcBeta { mc_samples } => CompetenceMethod::RrcBeta {
            mc_samples: mc.unwrap_or(mc_samples),
        },
        CompetenceMethod::RrcGaussian {
            mc_samples,
            sigma_scale,
        } => CompetenceMethod::RrcGaussian {
            mc_samples: mc.unwrap_or(mc_samples),
            sigma_scale: sigma.unwrap_or(sigma_scale),
        },
    }
}

fn class_selector(value: Option<&toml::Value>) -> Result<ClassSelector, CliError> {
    match value {
        None => Ok(ClassSelector::Last),
        Some(toml::Value::Integer(i)) if *i >= 0 => Ok(ClassSelector::Index(*i as usize)),
        Some(toml::Value::String(s)) if s.eq_ignore_ascii_case("last") => Ok(ClassSelector::Last),
        Some(toml::Value::String(s)) => Ok(ClassSelector::Named(s.clone())),
        Some(other) => Err(CliError::config(format!(
            "input.class must be \"last\", an index or a name, got {other}"
        ))),
    }
}

fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?
            .path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("arff" | "dat" | "csv")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

impl Settings {
    /// Merges file values, overrides and defaults. A seed is mandatory.
    pub fn resolve(config: &ExperimentConfig, overrides: &Overrides) -> Result<Self, CliError> {
        let seed = overrides.seed.or(config.seed).ok_or_else(|| {
            CliError::config("a seed is required (set `seed` in the config or pass --seed)")
        })?;

        let mut datasets: Vec<PathBuf> = config.datasets.clone();
        if let Some(dir) = &config.dataset_dir {
            datasets.extend(dataset_files(dir)?);
        }
        datasets.extend(overrides.datasets.iter().cloned());
        let mut seen = BTreeSet::new();
        datasets.retain(|p| seen.insert(p.clone()));
        datasets.sort();

        let pool = match &config.pool {
            Some(names) => names
                .iter()
                .map(|n| n.parse::<ClassifierSpec>().map_err(CliError::config))
                .collect::<Result<Vec<_>, _>>()?,
            None => ClassifierSpec::default_pool(),
        };

        let mut entries: Vec<MethodEntry> = match &overrides.method {
            Some(list) => list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|kind| {
                    // keep file parameters of a matching kind
                    config
                        .methods
                        .iter()
                        .find(|m| m.kind.eq_ignore_ascii_case(kind.trim()))
                        .cloned()
                        .unwrap_or(MethodEntry {
                            kind: kind.trim().to_string(),
                            ..MethodEntry::default()
                        })
                })
                .collect(),
            None => config.methods.clone(),
        };
        if entries.is_empty() {
            entries = ["bootstrap", "rrc_beta", "rrc_gaussian"]
                .iter()
                .map(|k| MethodEntry {
                    kind: k.to_string(),
                    ..MethodEntry::default()
                })
                .collect();
        }
        let mut methods = Vec::with_capacity(entries.len());
        for entry in &entries {
            let base = method_from_kind(&entry.kind)?;
            let method = apply_params(
                base,
                overrides.k_bootstrap.or(entry.k),
                overrides.mc_samples.or(entry.mc_samples),
                overrides.sigma_scale.or(entry.sigma_scale),
            );
            method.validate().map_err(CliError::config)?;
            let alpha = overrides.alpha.or(entry.alpha);
            if let Some(a) = alpha {
                if !(0.0..1.0).contains(&a) {
                    return Err(CliError::config(format!(
                        "selection alpha must lie in [0, 1), got {a}"
                    )));
                }
            }
            let name = entry
                .name
                .clone()
                .unwrap_or_else(|| method.name().to_string());
            methods.push(MethodConfig {
                name,
                method,
                alpha,
            });
        }
        let mut names = BTreeSet::new();
        for m in &methods {
            if !names.insert(m.name.clone()) {
                return Err(CliError::config(format!(
                    "duplicate method name '{}'; set `name` to tell them apart",
                    m.name
                )));
            }
        }

        let threshold = overrides
            .variance_threshold
            .or(config.preprocess.variance_threshold)
            .unwrap_or(DEFAULT_VARIANCE_THRESHOLD);
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(CliError::config(format!(
                "variance threshold must lie in (0, 1], got {threshold}"
            )));
        }
        let pca = config.preprocess.pca.unwrap_or(true);
        let defaults = CvConfig::default();
        let cv = CvConfig {
            folds: overrides
                .folds
                .or(config.cv.folds)
                .unwrap_or(defaults.folds),
            repeats: overrides
                .repeats
                .or(config.cv.repeats)
                .unwrap_or(defaults.repeats),
            validation_fraction: config
                .cv
                .validation_fraction
                .unwrap_or(defaults.validation_fraction),
            preprocess: PreprocessConfig {
                variance_threshold: pca.then_some(threshold),
            },
            per_fold_preprocessing: config.preprocess.per_fold.unwrap_or(true),
            pool,
        };
        cv.validate().map_err(CliError::config)?;

        let test_alpha = config.test.alpha.unwrap_or(DEFAULT_TEST_ALPHA);
        if !(test_alpha > 0.0 && test_alpha < 1.0) {
            return Err(CliError::config(format!(
                "test alpha must lie in (0, 1), got {test_alpha}"
            )));
        }
        let mcp = match overrides.mcp.as_ref().or(config.test.mcp.as_ref()) {
            Some(s) => s.parse::<Mcp>().map_err(CliError::config)?,
            None => Mcp::BergmannHommel,
        };

        let workers = overrides
            .workers
            .or(config.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1);

        Ok(Settings {
            seed,
            datasets,
            output_dir: overrides.out.clone().or_else(|| config.output_dir.clone()),
            workers,
            methods,
            cv,
            test_alpha,
            mcp,
            csv_header: config.input.csv_header.unwrap_or(true),
            class: class_selector(config.input.class.as_ref())?,
        })
    }

    /// Every setting that affects results, as text. Worker count and output
    /// location are left out because they do not change any number.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert("seed".into(), self.seed.to_string());
        out.insert(
            "pool".into(),
            self.cv
                .pool
                .iter()
                .map(ClassifierSpec::name)
                .collect::<Vec<_>>()
                .join(", "),
        );
        for m in &self.methods {
            let params = match m.method {
                CompetenceMethod::Bootstrap { k } => format!("bootstrap, k = {k}"),
                CompetenceMethod::RrcBeta { mc_samples } => {
                    format!("rrc_beta, mc_samples = {mc_samples}")
                }
                CompetenceMethod::RrcGaussian {
                    mc_samples,
                    sigma_scale,
                } => {
                    format!("rrc_gaussian, mc_samples = {mc_samples}, sigma_scale = {sigma_scale}")
                }
            };
            let alpha = m.alpha.map_or("1/M".to_string(), |a| a.to_string());
            out.insert(
                format!("method.{}", m.name),
                format!("{params}, alpha = {alpha}"),
            );
        }
        out.insert("cv.folds".into(), self.cv.folds.to_string());
        out.insert("cv.repeats".into(), self.cv.repeats.to_string());
        out.insert("cv.stratified".into(), "true".into());
        out.insert(
            "cv.validation_fraction".into(),
            self.cv.validation_fraction.to_string(),
        );
        out.insert(
            "preprocess.variance_threshold".into(),
            self.cv
                .preprocess
                .variance_threshold
                .map_or("none (no PCA)".into(), |t| t.to_string()),
        );
        out.insert(
            "preprocess.per_fold".into(),
            self.cv.per_fold_preprocessing.to_string(),
        );
        out.insert("test.alpha".into(), self.test_alpha.to_string());
        out.insert("test.mcp".into(), self.mcp.name().into());
        out.insert("input.csv_header".into(), self.csv_header.to_string());
        out.insert(
            "input.class".into(),
            match &self.class {
                ClassSelector::Last => "last".into(),
                ClassSelector::Index(i) => i.to_string(),
                ClassSelector::Named(n) => n.clone(),
            },
        );
        out
    }
}
