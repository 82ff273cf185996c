//! The configuration-driven end-to-end run.
//!
//! Every stage reads its inputs from files in the artifact directory and
//! writes its outputs there, so running the stages one by one produces the
//! same artifacts as [`run_pipeline`]. All CSV and JSON artifacts except
//! `manifest.json` (which records wall times) are byte-identical across runs
//! with the same configuration.

mod artifacts;
mod config;
mod plots;
mod report;
mod stages;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use artifacts::*;
pub use config::{
    default_grid, CvSettings, InputConfig, InterpretConfig, RunConfig, UqConfig, CONFIG_SCHEMA_VERSION, ENV_OUT,
    ENV_THREADS,
};

use crate::error::Error;

/// Pipeline steps in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Label,
    Preprocess,
    Select,
    Train,
    Evaluate,
    Explain,
    Uq,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Generate,
        Stage::Label,
        Stage::Preprocess,
        Stage::Select,
        Stage::Train,
        Stage::Evaluate,
        Stage::Explain,
        Stage::Uq,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Label => "label",
            Stage::Preprocess => "preprocess",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
            Stage::Uq => "uq",
            Stage::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A failure tagged with the step it happened in.
#[derive(Debug, thiserror::Error)]
#[error("{step}: {source}")]
pub struct PipelineError {
    /// `"config"` for failures before any step runs.
    pub step: String,
    #[source]
    pub source: Error,
}

impl PipelineError {
    fn new(step: impl Into<String>, source: Error) -> Self {
        Self { step: step.into(), source }
    }

    /// The machine-readable record printed by the command-line tool.
    pub fn record(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "step": self.step,
                "kind": self.source.kind(),
                "message": self.source.to_string(),
            }
        })
    }
}

/// What one step did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: Stage,
    pub wall_seconds: f64,
    /// Paths relative to the artifact directory; inputs outside it are absolute.
    pub reads: Vec<String>,
    pub writes: Vec<String>,
    /// Set when the step was disabled by configuration.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub vancorisk: String,
    pub config_schema: u32,
    pub model_schema: u32,
    pub posterior_schema: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            vancorisk: env!("CARGO_PKG_VERSION").to_string(),
            config_schema: CONFIG_SCHEMA_VERSION,
            model_schema: crate::models::MODEL_SCHEMA_VERSION,
            posterior_schema: crate::uq::POSTERIOR_SCHEMA_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub versions: Versions,
    /// Steps in execution order.
    pub steps: Vec<StepRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> crate::Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Tracks the files a step touches.
pub(crate) struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub dir: &'a Path,
    reads: Vec<String>,
    writes: Vec<String>,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a RunConfig, dir: &'a Path) -> Self {
        Self { cfg, dir, reads: Vec::new(), writes: Vec::new() }
    }

    /// Path of an upstream artifact; it must exist.
    pub fn input(&mut self, name: &str) -> crate::Result<PathBuf> {
        let p = self.dir.join(name);
        if !p.exists() {
            return Err(Error::Config(format!("missing upstream artifact {name}; run the earlier stages first")));
        }
        self.reads.push(name.to_string());
        Ok(p)
    }

    /// Record a file outside the artifact directory.
    pub fn external(&mut self, p: &Path) {
        self.reads.push(p.display().to_string());
    }

    pub fn output(&mut self, name: &str) -> crate::Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.writes.push(name.to_string());
        Ok(p)
    }

    /// Output path of a dataset CSV, also recording its schema sidecar.
    pub fn dataset_output(&mut self, name: &str) -> crate::Result<PathBuf> {
        let sidecar = name.replace(".csv", ".schema.json");
        let p = self.output(name)?;
        self.writes.push(sidecar);
        Ok(p)
    }

    pub fn dataset_input(&mut self, name: &str) -> crate::Result<PathBuf> {
        let p = self.input(name)?;
        let sidecar = name.replace(".csv", ".schema.json");
        if self.dir.join(&sidecar).exists() {
            self.reads.push(sidecar);
        }
        Ok(p)
    }

    /// Seed of a stochastic step, derived from the master seed.
    pub fn seed(&self, tag: &str, index: u64) -> u64 {
        crate::rng::derive_seed(self.cfg.seed, tag, index)
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> crate::Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn prepare(cfg: &RunConfig) -> Result<RunConfig, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::new("config", e))?;
    let cfg = cfg.resolved();
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError::new("config", e.into()))?;
    Ok(cfg)
}

fn execute(cfg: &RunConfig, stage: Stage) -> Result<StepRecord, PipelineError> {
    let start = Instant::now();
    let mut ctx = Ctx::new(cfg, &cfg.out_dir);
    log::info!("step {stage}");
    let ran = with_threads(cfg.threads, || stages::run(&mut ctx, stage))
        .and_then(|r| r)
        .map_err(|e| PipelineError::new(stage.as_str(), e))?;
    Ok(StepRecord {
        step: stage,
        wall_seconds: start.elapsed().as_secs_f64(),
        reads: ctx.reads,
        writes: ctx.writes,
        skipped: !ran,
    })
}

fn write_config_and_manifest(cfg: &RunConfig, steps: Vec<StepRecord>) -> crate::Result<Manifest> {
    std::fs::write(cfg.out_dir.join(CONFIG), cfg.to_json()?)?;
    let manifest = Manifest {
        schema_version: 1,
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        versions: Versions::default(),
        steps,
    };
    std::fs::write(cfg.out_dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Run every step in order and write `manifest.json`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Manifest, PipelineError> {
    let cfg = prepare(cfg)?;
    let mut steps = Vec::new();
    for stage in Stage::ALL {
        steps.push(execute(&cfg, stage)?);
    }
    write_config_and_manifest(&cfg, steps).map_err(|e| PipelineError::new("manifest", e))
}

/// Run a single step against an existing artifact directory. The step's
/// record replaces any earlier record of the same step in the manifest.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<StepRecord, PipelineError> {
    let cfg = prepare(cfg)?;
    let record = execute(&cfg, stage)?;
    let path = cfg.out_dir.join(MANIFEST);
    let mut steps = match Manifest::load(&path) {
        Ok(m) if m.config_hash == cfg.hash().unwrap_or_default() => m.steps,
        _ => Vec::new(),
    };
    steps.retain(|s| s.step != stage);
    steps.push(record.clone());
    steps.sort_by_key(|s| s.step);
    write_config_and_manifest(&cfg, steps).map_err(|e| PipelineError::new("manifest", e))?;
    Ok(record)
}
