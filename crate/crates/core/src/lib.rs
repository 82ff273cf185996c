//! Risk modeling for vancomycin-associated creatinine elevation in ICU stays.
//!
//! The crate covers the whole workflow:
//!
//! - [`cohort`]: inclusion filters, KDIGO-style outcome labeling and
//!   pre-dose feature snapshots from time-stamped patient events.
//! - [`synth`]: a synthetic cohort generator calibrated to published
//!   group-conditional feature statistics.
//! - [`preprocess`]: stratified splitting, train-fitted imputation and
//!   min-max scaling, SMOTE oversampling.
//! - [`select`]: ANOVA F filtering followed by random-forest Gini ranking.
//! - [`models`]: three gradient-boosted tree variants, logistic regression,
//!   Gaussian naive Bayes and a one-hidden-layer network.
//! - [`eval`]: AUROC, bootstrap intervals, fixed-sensitivity metrics,
//!   stratified cross-validation and Welch t-tests.
//! - [`interpret`]: exact tree SHAP, accumulated local effects and
//!   leave-one-feature-out ablation.
//! - [`uq`]: differential-evolution adaptive Metropolis sampling of the
//!   posterior risk distribution.
//! - [`pipeline`]: the configuration-driven end-to-end run behind the CLI.

pub mod cohort;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod risk;
pub mod rng;
pub mod schema;
pub mod select;
pub mod stats;
pub mod synth;
pub mod uq;

pub use dataset::{Dataset, FeatureKind, FeatureMeta};
pub use error::{Error, Result};
pub use models::{ModelConfig, ModelFamily, TrainedModel};
pub use risk::RiskModel;
