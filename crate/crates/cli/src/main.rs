use bootdes_cli::commands::{cmd_inspect, cmd_predict, cmd_train, run_benchmark};
use bootdes_cli::config::{ExperimentConfig, Overrides, Settings};
use bootdes_cli::error::CliError;
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Dynamic ensemble selection with bootstrap or randomized-reference competence.
#[derive(Debug, Parser)]
#[command(name = "bootdes", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an ensemble on one dataset and write a model file.
    Train {
        /// Training data (.arff, .dat or .csv).
        dataset: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Classify rows with a trained model.
    Predict {
        /// Model file written by `train`.
        model: PathBuf,
        /// Rows to classify (.arff, .dat or .csv); a class column is ignored.
        input: PathBuf,
        /// Emit one JSON object per row with selected members, competences and fused supports.
        #[arg(long)]
        explain: bool,
        /// The CSV input has no header row.
        #[arg(long)]
        no_header: bool,
    },
    /// Cross-validate the configured methods on every dataset and write reports.
    Benchmark {
        /// Extra datasets, added to those in the config.
        datasets: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print a summary of a model file.
    InspectModel { model: PathBuf },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (benchmark) or model file path (train).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Competence method(s): bootstrap, rrc_beta, rrc_gaussian; comma separated.
    #[arg(long)]
    method: Option<String>,
    /// Selection threshold; defaults to 1/M.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k_bootstrap: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    sigma_scale: Option<f64>,
    #[arg(long)]
    variance_threshold: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Multiple comparison procedure: bergman-hommel or holm.
    #[arg(long)]
    mcp: Option<String>,
    /// CSV inputs have no header row.
    #[arg(long)]
    no_header: bool,
}

impl RunArgs {
    fn settings(&self, datasets: Vec<PathBuf>) -> Result<Settings, CliError> {
        let config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let overrides = Overrides {
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            method: self.method.clone(),
            alpha: self.alpha,
            k_bootstrap: self.k_bootstrap,
            mc_samples: self.mc_samples,
            sigma_scale: self.sigma_scale,
            variance_threshold: self.variance_threshold,
            folds: self.folds,
            repeats: self.repeats,
            mcp: self.mcp.clone(),
            datasets,
        };
        let mut settings = Settings::resolve(&config, &overrides)?;
        if self.no_header {
            settings.csv_header = false;
        }
        Ok(settings)
    }
}

fn print(text: &str) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
    {
        // downstream closed early, as with `| head`
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e)),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { dataset, run } => {
            let out = run
                .out
                .clone()
                .ok_or_else(|| CliError::config("train needs --out <model file>"))?;
            let mut settings = run.settings(Vec::new())?;
            if run.method.is_none() && run.config.is_none() {
                settings.methods.truncate(1);
            }
            if settings.methods.len() > 1 {
                log::warn!(
                    "several methods configured; training with the first, '{}'",
                    settings.methods[0].name
                );
            }
            cmd_train(&settings, &dataset, &out).map(drop)
        }
        Command::Predict {
            model,
            input,
            explain,
            no_header,
        } => print(&cmd_predict(&model, &input, !no_header, explain)?),
        Command::Benchmark { datasets, run } => {
            let settings = run.settings(datasets)?;
            let outcome = run_benchmark(&settings)?;
            for file in &outcome.files {
                log::info!("wrote {}", file.display());
            }
            if outcome.failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::PartialFailure {
                    failed: outcome.failures.len(),
                    total: settings.datasets.len(),
                })
            }
        }
        Command::InspectModel { model } => print(&cmd_inspect(&model)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
