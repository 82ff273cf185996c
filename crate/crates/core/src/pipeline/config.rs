use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::interpret::{AblationConfig, DEFAULT_ALE_BINS};
use crate::models::{GbdtConfig, LogregConfig, MlpConfig, ModelConfig, ModelFamily};
use crate::preprocess::SmoteConfig;
use crate::rng::derive_seed;
use crate::schema::ALE_DEFAULT_FEATURES;
use crate::select::SelectionConfig;
use crate::synth::{AttritionTargets, GeneratorSpec};
use crate::uq::{PriorKind, SamplerConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding the output directory.
pub const ENV_OUT: &str = "VANCORISK_OUT";
/// Environment variable capping the worker thread count.
pub const ENV_THREADS: &str = "VANCORISK_THREADS";

/// Where the stays come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputConfig {
    /// Generate a synthetic cohort. With `attrition` set, a screening
    /// population is generated whose filters remove the given stage counts,
    /// and the eligible cohort has `attrition.first_stays` stays.
    Synthetic {
        #[serde(default)]
        generator: GeneratorSpec,
        #[serde(default)]
        attrition: Option<AttritionTargets>,
    },
    /// Event and admission tables in the `events.csv` / `admissions.csv` layout.
    Files { events: PathBuf, admissions: PathBuf },
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig::Synthetic {
            generator: GeneratorSpec::default(),
            attrition: Some(AttritionTargets::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvSettings {
    pub n_folds: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { n_folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpretConfig {
    pub enabled: bool,
    /// Test rows explained with SHAP.
    pub shap_rows: usize,
    pub ale_features: Vec<String>,
    pub ale_bins: usize,
    pub ablation: AblationConfig,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            shap_rows: 1000,
            ale_features: ALE_DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect(),
            ale_bins: DEFAULT_ALE_BINS,
            ablation: AblationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UqConfig {
    pub enabled: bool,
    pub prior: PriorKind,
    pub sampler: SamplerConfig,
}

impl Default for UqConfig {
    fn default() -> Self {
        Self { enabled: true, prior: PriorKind::Elevation, sampler: SamplerConfig::default() }
    }
}

/// Everything one run needs. Only `seed` is mandatory in the JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Master seed; every stochastic step draws from a stream derived from it.
    pub seed: u64,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub smote: SmoteConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(default = "all_families")]
    pub families: Vec<ModelFamily>,
    /// Candidate configurations. Families without an entry here use the
    /// built-in grid.
    #[serde(default)]
    pub grid: Vec<ModelConfig>,
    #[serde(default = "default_primary")]
    pub primary_family: ModelFamily,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub interpret: InterpretConfig,
    #[serde(default)]
    pub uq: UqConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}
fn default_test_fraction() -> f64 {
    0.3
}
fn all_families() -> Vec<ModelFamily> {
    ModelFamily::ALL.to_vec()
}
fn default_primary() -> ModelFamily {
    ModelFamily::GbdtOrdered
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("artifacts")
}

/// The built-in hyperparameter grid of a family; the first entry is the default.
pub fn default_grid(family: ModelFamily) -> Vec<ModelConfig> {
    match family {
        ModelFamily::GbdtOrdered => vec![
            ModelConfig::GbdtOrdered(GbdtConfig::ordered_default()),
            ModelConfig::GbdtOrdered(GbdtConfig { max_depth: 6, ..GbdtConfig::ordered_default() }),
        ],
        ModelFamily::GbdtLeafwise => vec![
            ModelConfig::GbdtLeafwise(GbdtConfig::leafwise_default()),
            ModelConfig::GbdtLeafwise(GbdtConfig { max_leaves: 31, ..GbdtConfig::leafwise_default() }),
        ],
        ModelFamily::GbdtLevelwise => vec![
            ModelConfig::GbdtLevelwise(GbdtConfig::levelwise_default()),
            ModelConfig::GbdtLevelwise(GbdtConfig { max_depth: 6, ..GbdtConfig::levelwise_default() }),
        ],
        ModelFamily::Logreg => vec![
            ModelConfig::Logreg(LogregConfig::default()),
            ModelConfig::Logreg(LogregConfig { lambda: 1e-2, ..LogregConfig::default() }),
        ],
        ModelFamily::GaussianNb => vec![ModelConfig::GaussianNb],
        ModelFamily::Mlp => vec![
            ModelConfig::Mlp(MlpConfig::default()),
            ModelConfig::Mlp(MlpConfig { hidden_units: 64, ..MlpConfig::default() }),
        ],
    }
}

impl RunConfig {
    /// A default configuration with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults deserialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        if c.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                c.schema_version
            )));
        }
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Candidates searched for `family`.
    pub fn candidates(&self, family: ModelFamily) -> Vec<ModelConfig> {
        let mine: Vec<ModelConfig> = self.grid.iter().filter(|c| c.family() == family).cloned().collect();
        if mine.is_empty() {
            default_grid(family)
        } else {
            mine
        }
    }

    /// Copy the master seed into the generator and sampler so the effective
    /// configuration written to the artifact directory is self-describing.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let InputConfig::Synthetic { generator, .. } = &mut c.input {
            generator.seed = derive_seed(self.seed, "generator", 0);
        }
        c.uq.sampler.seed = derive_seed(self.seed, "uq", 0);
        c
    }

    /// SHA-256 of the compact JSON form, hex encoded. The output directory
    /// and thread cap do not change results and are left out.
    pub fn hash(&self) -> Result<String> {
        let c = Self { out_dir: PathBuf::new(), threads: None, ..self.clone() };
        let digest = Sha256::digest(serde_json::to_string(&c)?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        if self.families.is_empty() {
            return bad("no model families requested".into());
        }
        if !self.families.contains(&self.primary_family) {
            return bad(format!("primary_family {} is not among the requested families", self.primary_family));
        }
        if self.cv.n_folds < 2 {
            return bad("cv.n_folds must be at least 2".into());
        }
        if self.smote.k == 0 || !(self.smote.target_ratio > 0.0) {
            return bad("smote needs k >= 1 and a positive target_ratio".into());
        }
        if !(self.eval.target_sensitivity > 0.0 && self.eval.target_sensitivity <= 1.0) {
            return Err(Error::InvalidTarget(self.eval.target_sensitivity));
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        if self.interpret.enabled && !self.primary_family.is_tree_ensemble() {
            return Err(Error::UnsupportedFamily {
                operation: "tree SHAP",
                family: self.primary_family.to_string(),
            });
        }
        if self.uq.enabled && self.uq.sampler.n_chains < 3 {
            return bad("uq.sampler.n_chains must be at least 3".into());
        }
        match &self.input {
            InputConfig::Synthetic { generator, attrition } => {
                generator.validate()?;
                if let Some(t) = attrition {
                    if t.first_stays != generator.n_patients {
                        return Err(Error::InvalidSpec(format!(
                            "attrition.first_stays {} differs from generator.n_patients {}",
                            t.first_stays, generator.n_patients
                        )));
                    }
                }
            }
            InputConfig::Files { events, admissions } => {
                for p in [events, admissions] {
                    if !p.is_file() {
                        return bad(format!("input file {} does not exist", p.display()));
                    }
                }
            }
        }
        Ok(())
    }
}
