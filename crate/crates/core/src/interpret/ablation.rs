use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::auroc;
use crate::models::{train, LogregConfig, ModelConfig, Penalty};
use crate::rng::stream;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    /// Bootstrap resamples of the training set; 0 reports point estimates only.
    pub n_boot: usize,
    pub logreg: LogregConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { n_boot: 20, logreg: LogregConfig { penalty: Penalty::L2, ..LogregConfig::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub feature: String,
    pub auroc_without: f64,
    pub delta_auroc: f64,
    pub boot_mean: Option<f64>,
    pub boot_sd: Option<f64>,
    pub boot_low: Option<f64>,
    pub boot_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub baseline_auroc: f64,
    /// Rows in the order the features were given.
    pub rows: Vec<AblationRow>,
}

impl AblationResult {
    /// Features by decreasing point-estimate delta, ties by name.
    pub fn ranking(&self) -> Vec<&str> {
        let mut r: Vec<&AblationRow> = self.rows.iter().collect();
        r.sort_by(|a, b| b.delta_auroc.total_cmp(&a.delta_auroc).then_with(|| a.feature.cmp(&b.feature)));
        r.into_iter().map(|x| x.feature.as_str()).collect()
    }
}

fn fit_auroc(train_set: &Dataset, test: &Dataset, cfg: &ModelConfig, drop: Option<usize>) -> Result<f64> {
    let (tr, te) = match drop {
        Some(j) => (train_set.drop_column(j), test.drop_column(j)),
        None => (train_set.clone(), test.clone()),
    };
    let m = train(cfg, &tr, 0)?;
    auroc(&m.predict_proba(&te)?, te.labels())
}

/// All deltas for one training set: baseline AUROC and `AUC_full - AUC_without_j`.
fn deltas(train_set: &Dataset, test: &Dataset, cfg: &ModelConfig, cols: &[usize]) -> Result<(f64, Vec<(f64, f64)>)> {
    let full = fit_auroc(train_set, test, cfg, None)?;
    let d = cols
        .par_iter()
        .map(|&j| fit_auroc(train_set, test, cfg, Some(j)).map(|a| (a, full - a)))
        .collect::<Result<Vec<_>>>()?;
    Ok((full, d))
}

/// Leave-one-feature-out ablation with an L2 logistic regression retrained
/// from scratch for every omitted feature. Both sets must be preprocessed.
pub fn ablation(
    train_set: &Dataset,
    test: &Dataset,
    features: &[String],
    cfg: &AblationConfig,
    seed: u64,
) -> Result<AblationResult> {
    if train_set.n_cols() < 2 {
        return Err(Error::TooFewValues { need: 2, got: train_set.n_cols() });
    }
    if train_set.feature_names() != test.feature_names() {
        return Err(Error::Schema("ablation train and test columns differ".into()));
    }
    let cols = features
        .iter()
        .map(|f| train_set.column_index(f).ok_or_else(|| Error::UnknownFeature(f.clone())))
        .collect::<Result<Vec<_>>>()?;
    let model = ModelConfig::Logreg(cfg.logreg.clone());
    let (baseline, point) = deltas(train_set, test, &model, &cols)?;

    let n = train_set.n_rows();
    let boots: Vec<Vec<f64>> = (0..cfg.n_boot)
        .map(|b| {
            let mut rng = stream(seed, "ablation_boot", b as u64);
            loop {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let s = train_set.select_rows(&idx);
                if s.require_both_classes().is_ok() {
                    return deltas(&s, test, &model, &cols).map(|(_, d)| d.into_iter().map(|x| x.1).collect());
                }
            }
        })
        .collect::<Result<_>>()?;

    let rows = features
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let mut samples: Vec<f64> = boots.iter().map(|b| b[k]).collect();
            samples.sort_by(f64::total_cmp);
            let have = !samples.is_empty();
            AblationRow {
                feature: f.clone(),
                auroc_without: point[k].0,
                delta_auroc: point[k].1,
                boot_mean: have.then(|| stats::mean(&samples)),
                boot_sd: (samples.len() > 1).then(|| stats::sample_sd(&samples)),
                boot_low: have.then(|| stats::quantile_sorted(&samples, 0.025)),
                boot_high: have.then(|| stats::quantile_sorted(&samples, 0.975)),
            }
        })
        .collect();
    Ok(AblationResult { baseline_auroc: baseline, rows })
}
