//! Six classifier families behind one train/predict contract.
//!
//! Every model produces a raw log-odds score; probabilities are its sigmoid.
//! A per-model `logit_offset` is added to the raw score so a model fitted on
//! rebalanced data can be mapped back to the original class prior.

pub mod gbdt;
pub mod gnb;
pub mod logreg;
pub mod mlp;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stats;

pub use gbdt::{GbdtConfig, GbdtParams};
pub use gnb::GnbParams;
pub use logreg::{LogregConfig, LogregParams, Penalty};
pub use mlp::{MlpConfig, MlpParams};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    GbdtOrdered,
    GbdtLeafwise,
    GbdtLevelwise,
    Logreg,
    GaussianNb,
    Mlp,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        ModelFamily::GbdtOrdered,
        ModelFamily::GbdtLeafwise,
        ModelFamily::GbdtLevelwise,
        ModelFamily::Logreg,
        ModelFamily::GaussianNb,
        ModelFamily::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::GbdtOrdered => "gbdt_ordered",
            ModelFamily::GbdtLeafwise => "gbdt_leafwise",
            ModelFamily::GbdtLevelwise => "gbdt_levelwise",
            ModelFamily::Logreg => "logreg",
            ModelFamily::GaussianNb => "gaussian_nb",
            ModelFamily::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }

    pub fn is_tree_ensemble(self) -> bool {
        matches!(self, ModelFamily::GbdtOrdered | ModelFamily::GbdtLeafwise | ModelFamily::GbdtLevelwise)
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyperparameters of one model, tagged by family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    GbdtOrdered(GbdtConfig),
    GbdtLeafwise(GbdtConfig),
    GbdtLevelwise(GbdtConfig),
    Logreg(LogregConfig),
    GaussianNb,
    Mlp(MlpConfig),
}

impl ModelConfig {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelConfig::GbdtOrdered(_) => ModelFamily::GbdtOrdered,
            ModelConfig::GbdtLeafwise(_) => ModelFamily::GbdtLeafwise,
            ModelConfig::GbdtLevelwise(_) => ModelFamily::GbdtLevelwise,
            ModelConfig::Logreg(_) => ModelFamily::Logreg,
            ModelConfig::GaussianNb => ModelFamily::GaussianNb,
            ModelConfig::Mlp(_) => ModelFamily::Mlp,
        }
    }

    /// The default configuration of a family.
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::GbdtOrdered => ModelConfig::GbdtOrdered(GbdtConfig::ordered_default()),
            ModelFamily::GbdtLeafwise => ModelConfig::GbdtLeafwise(GbdtConfig::leafwise_default()),
            ModelFamily::GbdtLevelwise => ModelConfig::GbdtLevelwise(GbdtConfig::levelwise_default()),
            ModelFamily::Logreg => ModelConfig::Logreg(LogregConfig::default()),
            ModelFamily::GaussianNb => ModelConfig::GaussianNb,
            ModelFamily::Mlp => ModelConfig::Mlp(MlpConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParams {
    Gbdt(GbdtParams),
    Logreg(LogregParams),
    GaussianNb(GnbParams),
    Mlp(MlpParams),
}

/// A fitted classifier. Immutable once trained apart from the prior offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema_version: u32,
    pub family: ModelFamily,
    pub config: ModelConfig,
    pub seed: u64,
    pub feature_names: Vec<String>,
    /// Added to every raw score.
    pub logit_offset: f64,
    pub params: FittedParams,
    /// Training loss after each iteration (boosting round, optimizer step or epoch).
    pub loss_trace: Vec<f64>,
}

/// Fit a model of the configured family.
pub fn train(config: &ModelConfig, data: &Dataset, seed: u64) -> Result<TrainedModel> {
    if data.n_rows() == 0 {
        return Err(Error::SingleClass);
    }
    if data.has_missing() {
        return Err(Error::Config("training data must be imputed".into()));
    }
    let (params, loss_trace) = match config {
        ModelConfig::GbdtOrdered(c) => gbdt::train(data, gbdt::Variant::Ordered, c, seed)?,
        ModelConfig::GbdtLeafwise(c) => gbdt::train(data, gbdt::Variant::Leafwise, c, seed)?,
        ModelConfig::GbdtLevelwise(c) => gbdt::train(data, gbdt::Variant::Levelwise, c, seed)?,
        ModelConfig::Logreg(c) => logreg::train(data, c)?,
        ModelConfig::GaussianNb => gnb::train(data)?,
        ModelConfig::Mlp(c) => mlp::train(data, c, seed)?,
    };
    Ok(TrainedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        family: config.family(),
        config: config.clone(),
        seed,
        feature_names: data.feature_names(),
        logit_offset: 0.0,
        params,
        loss_trace,
    })
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Shift the raw score so a model fitted at class prior `fitted_prior`
    /// predicts under `target_prior`.
    pub fn set_prior_correction(&mut self, target_prior: f64, fitted_prior: f64) {
        self.logit_offset = stats::logit(target_prior) - stats::logit(fitted_prior);
    }

    fn raw_unchecked(&self, x: &[f64]) -> f64 {
        let s = match &self.params {
            FittedParams::Gbdt(p) => p.raw_score(x),
            FittedParams::Logreg(p) => p.raw_score(x),
            FittedParams::GaussianNb(p) => p.raw_score(x),
            FittedParams::Mlp(p) => p.raw_score(x),
        };
        s + self.logit_offset
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::WidthMismatch { expected: self.n_features(), got: x.len() });
        }
        Ok(())
    }

    /// Log-odds score of one row.
    pub fn raw_score(&self, x: &[f64]) -> Result<f64> {
        self.check_width(x)?;
        Ok(self.raw_unchecked(x))
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        self.raw_score(x).map(stats::sigmoid)
    }

    /// Probabilities for a row-major batch of rows of the training width.
    pub fn predict_rows(&self, values: &[f64]) -> Result<Vec<f64>> {
        let d = self.n_features();
        if d == 0 || !values.len().is_multiple_of(d) {
            return Err(Error::WidthMismatch { expected: d, got: values.len() % d.max(1) });
        }
        Ok(values.chunks(d).map(|r| stats::sigmoid(self.raw_unchecked(r))).collect())
    }

    pub fn predict_proba(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.n_cols() != self.n_features() {
            return Err(Error::WidthMismatch { expected: self.n_features(), got: data.n_cols() });
        }
        if data.n_rows() == 0 {
            return Ok(Vec::new());
        }
        self.predict_rows(data.values())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "model schema_version {} (expected {MODEL_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        if m.family != m.config.family() {
            return Err(Error::Schema(format!("model family {} does not match its config", m.family)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Mean logistic loss of raw scores `f` against labels.
pub fn logloss_raw(f: &[f64], y: &[f64]) -> f64 {
    let s: f64 = f.iter().zip(y).map(|(&f, &y)| softplus(f) - y * f).sum();
    s / f.len() as f64
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn labels_f64(data: &Dataset) -> Vec<f64> {
    data.labels().iter().map(|&y| if y { 1.0 } else { 0.0 }).collect()
}
