use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vancorisk::pipeline::{run_pipeline, run_stage, PipelineError, RunConfig, Stage, ENV_OUT, ENV_THREADS};
use vancorisk::Error;

/// Vancomycin-associated creatinine elevation risk pipeline.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; required when no configuration file is given.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory (overrides $VANCORISK_OUT and the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap (overrides $VANCORISK_THREADS and the configuration).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or ingest stays into events.csv and admissions.csv.
    Generate,
    /// Apply inclusion filters and label outcomes.
    Label,
    /// Split, impute and scale.
    Preprocess,
    /// Two-stage feature selection.
    Select,
    /// Cross-validated grid search and final training of every family.
    Train,
    /// Test-set metrics at the fixed sensitivity.
    Evaluate,
    /// SHAP, ALE and ablation for the primary model.
    Explain,
    /// Posterior risk sampling.
    Uq,
    /// Markdown summary and SVG figures.
    Report,
    /// The whole pipeline, or a single step with --stage.
    Run {
        /// Run only this step (generate, label, preprocess, select, train,
        /// evaluate, explain, uq or report).
        #[arg(long)]
        stage: Option<String>,
    },
    /// Print the effective configuration.
    Config,
}

fn config_error(e: Error) -> PipelineError {
    PipelineError { step: "config".into(), source: e }
}

fn env_usize(name: &str) -> Result<Option<usize>, PipelineError> {
    match std::env::var(name) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| config_error(Error::Config(format!("${name} must be a positive integer, got `{v}`")))),
        Err(_) => Ok(None),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match (&cli.config, cli.seed) {
        (Some(path), _) => RunConfig::from_file(path).map_err(config_error)?,
        (None, Some(seed)) => RunConfig::with_seed(seed),
        (None, None) => {
            return Err(config_error(Error::Config("a seed is required: pass --seed or --config".into())));
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = std::env::var_os(ENV_OUT) {
        cfg.out_dir = PathBuf::from(out);
    }
    if let Some(t) = env_usize(ENV_THREADS)? {
        cfg.threads = Some(t);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = load_config(cli)?;
    let single = |s: Stage| run_stage(&cfg, s).map(|_| ());
    match &cli.command {
        Command::Generate => single(Stage::Generate),
        Command::Label => single(Stage::Label),
        Command::Preprocess => single(Stage::Preprocess),
        Command::Select => single(Stage::Select),
        Command::Train => single(Stage::Train),
        Command::Evaluate => single(Stage::Evaluate),
        Command::Explain => single(Stage::Explain),
        Command::Uq => single(Stage::Uq),
        Command::Report => single(Stage::Report),
        Command::Run { stage: Some(name) } => {
            let stage = Stage::parse(name)
                .ok_or_else(|| config_error(Error::Config(format!("unknown stage `{name}`"))))?;
            single(stage)
        }
        Command::Run { stage: None } => {
            let m = run_pipeline(&cfg)?;
            let total: f64 = m.steps.iter().map(|s| s.wall_seconds).sum();
            log::info!("finished in {total:.1} s; artifacts in {}", cfg.out_dir.display());
            Ok(())
        }
        Command::Config => {
            cfg.validate().map_err(config_error)?;
            print!("{}", cfg.resolved().to_json().map_err(config_error)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::FAILURE
        }
    }
}
