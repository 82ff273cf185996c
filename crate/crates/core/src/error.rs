use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("patient {patient_id}: no vancomycin dose recorded")]
    MissingVancoTime { patient_id: String },

    #[error("patient {patient_id}: no creatinine measurement before the first vancomycin dose")]
    MissingBaseline { patient_id: String },

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("input contains a single outcome class")]
    SingleClass,

    #[error("column `{0}` has no non-missing training values")]
    AllMissingColumn(String),

    #[error("minority class has {have} rows; SMOTE with k={k} needs at least {need}")]
    TooFewMinority { have: usize, k: usize, need: usize },

    #[error("requested top {k} of only {available} scored features")]
    KTooLarge { k: usize, available: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("row width {got} does not match expected width {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("group `{0}` is empty")]
    EmptyGroup(String),

    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },

    #[error("target sensitivity {0} is outside (0, 1]")]
    InvalidTarget(f64),

    #[error("{folds}-fold cross-validation needs at least {folds} rows per class, smallest class has {have}")]
    TooFewSamples { folds: usize, have: usize },

    #[error("{operation} is not supported for model family {family}")]
    UnsupportedFamily { operation: &'static str, family: String },

    #[error("feature `{0}` is constant")]
    ConstantFeature(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("sampler: {0}")]
    Sampler(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingVancoTime { .. } => "missing_vanco_time",
            Error::MissingBaseline { .. } => "missing_baseline",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::SingleClass => "single_class",
            Error::AllMissingColumn(_) => "all_missing_column",
            Error::TooFewMinority { .. } => "too_few_minority",
            Error::KTooLarge { .. } => "k_too_large",
            Error::DegenerateData(_) => "degenerate_data",
            Error::Config(_) => "config",
            Error::Diverged { .. } => "diverged",
            Error::WidthMismatch { .. } => "width_mismatch",
            Error::EmptyGroup(_) => "empty_group",
            Error::TooFewValues { .. } => "too_few_values",
            Error::InvalidTarget(_) => "invalid_target",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::UnsupportedFamily { .. } => "unsupported_family",
            Error::ConstantFeature(_) => "constant_feature",
            Error::UnknownFeature(_) => "unknown_feature",
            Error::Schema(_) => "schema_mismatch",
            Error::Sampler(_) => "sampler",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
