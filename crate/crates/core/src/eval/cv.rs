use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_scores, EvalConfig, MetricsReport};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{train, ModelConfig};
use crate::preprocess::{fit_params, smote, transform, SmoteConfig};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub n_folds: usize,
    /// Oversampling applied to each fold's training part; `None` disables it.
    pub smote: Option<SmoteConfig>,
    pub eval: EvalConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            smote: Some(SmoteConfig::default()),
            eval: EvalConfig { n_boot: 0, ..EvalConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub metrics: MetricsReport,
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// so every fold's class counts differ by at most one.
pub fn stratified_folds(labels: &[bool], n_folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_folds < 2 {
        return Err(Error::Config("n_folds must be at least 2".into()));
    }
    let mut folds = vec![Vec::new(); n_folds];
    let mut offset = 0;
    for (c, class) in [false, true].into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < n_folds {
            return Err(Error::TooFewSamples { folds: n_folds, have: idx.len() });
        }
        idx.shuffle(&mut stream(seed, "cv_folds", c as u64));
        for (k, i) in idx.into_iter().enumerate() {
            folds[(k + offset) % n_folds].push(i);
        }
        // continue dealing where the previous class stopped to balance sizes
        offset += labels.iter().filter(|&&y| y == class).count();
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mark = vec![true; n];
    for &i in fold {
        mark[i] = false;
    }
    (0..n).filter(|&i| mark[i]).collect()
}

fn fit_and_score(
    train_part: &Dataset,
    valid: &Dataset,
    model: &ModelConfig,
    cfg: &CvConfig,
    fold: usize,
    seed: u64,
) -> Result<FoldResult> {
    let fold_seed = derive_seed(seed, "cv_fold", fold as u64);
    let params = fit_params(train_part)?;
    let mut tr = transform(train_part, &params)?;
    let va = transform(valid, &params)?;
    if let Some(s) = cfg.smote {
        tr = smote(&tr, s, derive_seed(fold_seed, "smote", 0))?;
    }
    let m = train(model, &tr, derive_seed(fold_seed, "model", 0))?;
    let scores = m.predict_proba(&va)?;
    let metrics = evaluate_scores(&scores, va.labels(), &cfg.eval, derive_seed(fold_seed, "eval", 0))?;
    Ok(FoldResult { fold, n_train: tr.n_rows(), n_validation: va.n_rows(), metrics })
}

/// Stratified k-fold cross-validation on raw (unimputed) training data.
/// Imputation, scaling and oversampling are fitted on each fold's training
/// part only; the validation fold is never resampled.
pub fn cross_validate(data: &Dataset, model: &ModelConfig, cfg: &CvConfig, seed: u64) -> Result<Vec<FoldResult>> {
    data.require_both_classes()?;
    let folds = stratified_folds(data.labels(), cfg.n_folds, seed)?;
    folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| {
            let train_part = data.select_rows(&complement(data.n_rows(), fold));
            fit_and_score(&train_part, &data.select_rows(fold), model, cfg, k, seed)
        })
        .collect()
}

/// The flawed protocol kept as a negative control: the whole training set is
/// preprocessed and oversampled first, then split into folds, so synthetic
/// rows interpolated from validation rows end up on both sides.
pub fn cross_validate_leaky(data: &Dataset, model: &ModelConfig, cfg: &CvConfig, seed: u64) -> Result<Vec<FoldResult>> {
    data.require_both_classes()?;
    let params = fit_params(data)?;
    let mut all = transform(data, &params)?;
    if let Some(s) = cfg.smote {
        all = smote(&all, s, derive_seed(seed, "leaky_smote", 0))?;
    }
    let folds = stratified_folds(all.labels(), cfg.n_folds, seed)?;
    let no_resample = CvConfig { smote: None, ..*cfg };
    folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| {
            let train_part = all.select_rows(&complement(all.n_rows(), fold));
            fit_and_score(&train_part, &all.select_rows(fold), model, &no_resample, k, seed)
        })
        .collect()
}

pub fn mean_auroc(folds: &[FoldResult]) -> f64 {
    folds.iter().map(|f| f.metrics.auroc).sum::<f64>() / folds.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub config: ModelConfig,
    pub mean_auroc: f64,
    pub fold_auroc: Vec<f64>,
}

/// Cross-validate every candidate and return them with the index of the best
/// mean AUROC (the first candidate wins ties).
pub fn grid_search(data: &Dataset, candidates: &[ModelConfig], cfg: &CvConfig, seed: u64) -> Result<(usize, Vec<GridResult>)> {
    if candidates.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let results: Vec<GridResult> = candidates
        .iter()
        .map(|c| {
            let folds = cross_validate(data, c, cfg, seed)?;
            Ok(GridResult {
                config: c.clone(),
                mean_auroc: mean_auroc(&folds),
                fold_auroc: folds.iter().map(|f| f.metrics.auroc).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.mean_auroc > results[best].mean_auroc {
            best = i;
        }
    }
    Ok((best, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<bool> = (0..103).map(|i| i % 4 == 0).collect();
        let folds = stratified_folds(&labels, 5, 3).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        let pos: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i]).count()).collect();
        assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn too_few_per_class() {
        let labels = [true, true, false, false, false, false];
        assert!(matches!(stratified_folds(&labels, 5, 0), Err(Error::TooFewSamples { .. })));
    }
}
