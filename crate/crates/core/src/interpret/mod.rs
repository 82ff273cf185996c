//! Post-hoc explanation: exact TreeSHAP, accumulated local effects and
//! leave-one-feature-out ablation.

mod ablation;
mod ale;
mod shap;

pub use ablation::{ablation, AblationConfig, AblationResult, AblationRow};
pub use ale::{ale_curve, AleCurve, DEFAULT_ALE_BINS};
pub use shap::{
    exact_shapley, shap_base_value, shap_summary, shap_tree, tree_conditional_expectation, tree_expected_value,
    tree_shap_into, ShapExplanation, ShapSummary,
};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::models::TrainedModel;

/// ALE of a trained model's predicted probability.
pub fn model_ale(model: &TrainedModel, data: &Dataset, feature: &str, n_bins: usize) -> Result<AleCurve> {
    if data.n_cols() != model.n_features() {
        return Err(crate::Error::WidthMismatch { expected: model.n_features(), got: data.n_cols() });
    }
    ale_curve(|x| model.predict_one(x).unwrap_or(f64::NAN), data, feature, n_bins)
}
