use serde::{Deserialize, Serialize};

use super::FittedParams;
use crate::dataset::Dataset;
use crate::error::Result;

pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes: per-class feature means and variances (maximum
/// likelihood, floored) and empirical class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbParams {
    /// Priors for (negative, positive).
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

fn log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean) * (x - mean) / var)
}

impl GnbParams {
    /// Posterior log-odds of the positive class.
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        let mut s = self.priors[1].ln() - self.priors[0].ln();
        for (j, &v) in x.iter().enumerate() {
            s += log_density(v, self.means[1][j], self.variances[1][j]) - log_density(v, self.means[0][j], self.variances[0][j]);
        }
        s
    }
}

pub(super) fn train(data: &Dataset) -> Result<(FittedParams, Vec<f64>)> {
    data.require_both_classes()?;
    let (neg, pos) = data.class_indices();
    let n = data.n_rows() as f64;
    let fit = |idx: &[usize]| {
        let d = data.n_cols();
        let m = idx.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in idx {
            for (a, v) in mean.iter_mut().zip(data.row(i)) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= m);
        let mut var = vec![0.0; d];
        for &i in idx {
            for ((a, v), mu) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *a += (v - mu) * (v - mu);
            }
        }
        var.iter_mut().for_each(|a| *a = (*a / m).max(VARIANCE_FLOOR));
        (mean, var)
    };
    let (m0, v0) = fit(&neg);
    let (m1, v1) = fit(&pos);
    let params = GnbParams { priors: [neg.len() as f64 / n, pos.len() as f64 / n], means: [m0, m1], variances: [v0, v1] };
    // mean negative log-likelihood of the labels
    let y = super::labels_f64(data);
    let raw: Vec<f64> = (0..data.n_rows()).map(|i| params.raw_score(data.row(i))).collect();
    let loss = super::logloss_raw(&raw, &y);
    Ok((FittedParams::GaussianNb(params), vec![loss]))
}
