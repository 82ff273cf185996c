//! A trained model bundled with the preprocessing it expects, so it can be
//! applied to raw (unscaled, possibly incomplete) feature vectors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::preprocess::{transform, PreprocessParams};

pub const RISK_MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub schema_version: u32,
    pub preprocess: PreprocessParams,
    pub model: TrainedModel,
}

impl RiskModel {
    pub fn new(preprocess: PreprocessParams, model: TrainedModel) -> Result<Self> {
        if preprocess.feature_names() != model.feature_names {
            return Err(Error::Schema("preprocessing columns do not match the model's features".into()));
        }
        Ok(Self { schema_version: RISK_MODEL_SCHEMA_VERSION, preprocess, model })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.model.feature_names
    }

    /// Probability for one raw row; NaN entries are imputed.
    pub fn predict_raw(&self, raw: &[f64]) -> Result<f64> {
        self.model.predict_one(&self.preprocess.transform_row(raw)?)
    }

    /// Probabilities for a raw dataset whose columns include the model's features.
    pub fn predict_dataset(&self, raw: &Dataset) -> Result<Vec<f64>> {
        let sub = raw.select_columns(self.feature_names())?;
        self.model.predict_proba(&transform(&sub, &self.preprocess)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.schema_version != RISK_MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!("risk model schema_version {}", m.schema_version)));
        }
        if m.model.schema_version != crate::models::MODEL_SCHEMA_VERSION || m.model.family != m.model.config.family() {
            return Err(Error::Schema("embedded model has an unsupported version or inconsistent family".into()));
        }
        Self::new(m.preprocess, m.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
