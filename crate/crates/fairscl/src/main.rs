//! Command-line front end.
//!
//! Five subcommands cover the pipeline stages: `generate` materializes the
//! dataset, `train` fits the configured methods and saves checkpoints,
//! `evaluate` scores saved checkpoints and writes the report, `run` does all
//! of it in one shot, and `report` re-renders an existing `report.json`.
//! Every subcommand takes the same flags; a JSON config file provides the
//! full configuration and the flags override individual fields.
//!
//! Errors print to stderr and map to stable exit codes (configuration 2,
//! data/metric 3, training 4, I/O 5).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairscl::experiment::{
    evaluate_saved, generate_outputs, rerender_report, run_experiment, train_outputs,
    ExperimentConfig, Manifest, ReportFormat,
};
use fairscl::{Error, Method, Result};

#[derive(Parser)]
#[command(
    name = "fairscl",
    version,
    about = "Train classifiers with group-aware contrastive pretraining and audit their subgroup ranking fairness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or ingest) the dataset and write dataset.csv.
    Generate(CommonOpts),
    /// Train the configured methods and write checkpoints/<method>.bin.
    Train(CommonOpts),
    /// Score saved checkpoints on the held-out split and write the report.
    Evaluate(CommonOpts),
    /// Full pipeline: load data, train, evaluate, write everything.
    Run(CommonOpts),
    /// Re-render an existing report.json into the requested formats.
    Report(CommonOpts),
}

impl Command {
    fn opts(&self) -> &CommonOpts {
        match self {
            Command::Generate(o)
            | Command::Train(o)
            | Command::Evaluate(o)
            | Command::Run(o)
            | Command::Report(o) => o,
        }
    }
}

#[derive(Args)]
struct CommonOpts {
    /// JSON configuration file; the flags below override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; every random stream derives from it.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Comma-separated methods to run (erm, balanced, adv, scl, proposed).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    methods: Option<Vec<Method>>,

    /// Audit one group attribute (replaces the config's attribute list).
    #[arg(long, value_name = "NAME")]
    attribute: Option<String>,

    /// Bootstrap replicate count.
    #[arg(long, value_name = "N")]
    bootstrap: Option<usize>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Comma-separated report renderings (json, markdown, delimited).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    format: Option<Vec<ReportFormat>>,
}

impl CommonOpts {
    fn effective_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(methods) = &self.methods {
            cfg.methods = methods.clone();
        }
        if let Some(attribute) = &self.attribute {
            cfg.attributes = vec![attribute.clone()];
        }
        if let Some(bootstrap) = self.bootstrap {
            cfg.bootstrap_replicates = bootstrap;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(formats) = &self.format {
            cfg.formats = formats.clone();
        }
        Ok(cfg)
    }
}

fn announce(out: &Path, manifest: &Manifest) {
    for name in manifest.files.keys() {
        println!("wrote {}", out.join(name).display());
    }
    println!("wrote {}", out.join("manifest.json").display());
    for failure in &manifest.failures {
        let method = failure.method.map_or_else(|| "-".into(), |m| m.to_string());
        eprintln!("warning: [{} {}] {}", failure.stage, method, failure.message);
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = cli.command.opts().effective_config()?;
    match cli.command {
        Command::Generate(_) => {
            let manifest = generate_outputs(&cfg)?;
            announce(&cfg.out, &manifest);
        }
        Command::Train(_) => {
            let manifest = train_outputs(&cfg)?;
            announce(&cfg.out, &manifest);
        }
        Command::Evaluate(_) => {
            evaluate_saved(&cfg)?;
            announce_from_disk(&cfg)?;
        }
        Command::Run(_) => {
            run_experiment(&cfg)?;
            announce_from_disk(&cfg)?;
        }
        Command::Report(_) => {
            let manifest = rerender_report(&cfg)?;
            announce(&cfg.out, &manifest);
        }
    }
    Ok(())
}

/// `run`/`evaluate` return the report, not the manifest; read the manifest
/// they wrote so the file list printed matches the directory exactly.
fn announce_from_disk(cfg: &ExperimentConfig) -> Result<()> {
    let text = fs::read_to_string(cfg.out.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    announce(&cfg.out, &manifest);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
