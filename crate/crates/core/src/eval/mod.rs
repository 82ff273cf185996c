//! Discrimination and threshold metrics, bootstrap intervals and Welch's
//! two-sample test.

mod cv;

pub use cv::{
    cross_validate, cross_validate_leaky, grid_search, mean_auroc, stratified_folds, CvConfig, FoldResult,
    GridResult,
};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats;

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::WidthMismatch { expected: labels.len(), got: scores.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Config("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((n_pos, n_neg))
}

/// Area under the ROC curve as the Mann-Whitney statistic with midranks:
/// `P(s_pos > s_neg) + P(s_pos = s_neg) / 2`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (doubled) midranks of the positives, kept integral
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u128;
        let pos_in_group = idx[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        rank_sum2 += twice_mid * pos_in_group;
        i = j + 1;
    }
    let np = n_pos as u128;
    let u2 = rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Percentile bootstrap interval for AUROC. Resamples missing a class are redrawn.
pub fn bootstrap_ci(scores: &[f64], labels: &[bool], n_boot: usize, alpha: f64, seed: u64) -> Result<(f64, f64)> {
    check_inputs(scores, labels)?;
    if n_boot == 0 {
        return Err(Error::Config("n_boot must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    let n = scores.len();
    let mut stats_: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, "bootstrap_auroc", b as u64);
            let mut s = vec![0.0; n];
            let mut l = vec![false; n];
            loop {
                for k in 0..n {
                    let i = rng.random_range(0..n);
                    s[k] = scores[i];
                    l[k] = labels[i];
                }
                if let Ok(a) = auroc(&s, &l) {
                    return a;
                }
            }
        })
        .collect();
    stats_.sort_by(f64::total_cmp);
    Ok((
        stats::quantile_sorted(&stats_, alpha / 2.0),
        stats::quantile_sorted(&stats_, 1.0 - alpha / 2.0),
    ))
}

/// Largest threshold at which `score >= threshold` flags at least
/// `ceil(target * n_pos)` positives: the corresponding order statistic of the
/// positive scores.
pub fn threshold_at_sensitivity(scores: &[f64], labels: &[bool], target: f64) -> Result<f64> {
    check_inputs(scores, labels)?;
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidTarget(target));
    }
    let mut pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y).map(|(&s, _)| s).collect();
    pos.sort_by(|a, b| b.total_cmp(a));
    let k = ((target * pos.len() as f64 - 1e-9).ceil() as usize).clamp(1, pos.len());
    Ok(pos[k - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

impl Confusion {
    /// Counts with `score >= threshold` classified positive.
    pub fn at(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion { tp: 0, fp: 0, tn: 0, fn_: 0 };
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
    pub fn ppv(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }
    pub fn npv(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fn_)
    }
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.tp + self.tn + self.fp + self.fn_)
    }
    pub fn f1(&self) -> Option<f64> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

/// Threshold metrics; undefined ratios are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub confusion: Confusion,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

pub fn confusion_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> ThresholdMetrics {
    let c = Confusion::at(scores, labels, threshold);
    ThresholdMetrics {
        threshold,
        confusion: c,
        accuracy: c.accuracy(),
        f1: c.f1(),
        sensitivity: c.sensitivity(),
        specificity: c.specificity(),
        ppv: c.ppv(),
        npv: c.npv(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Bootstrap replicates for the AUROC interval; 0 skips the interval.
    pub n_boot: usize,
    pub alpha: f64,
    pub target_sensitivity: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_boot: 2000, alpha: 0.05, target_sensitivity: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub auroc_ci_low: Option<f64>,
    pub auroc_ci_high: Option<f64>,
    pub target_sensitivity: f64,
    /// The threshold is chosen on the scores being evaluated.
    pub threshold_source: String,
    pub threshold: f64,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// AUROC with interval plus metrics at the fixed-sensitivity threshold.
pub fn evaluate_scores(scores: &[f64], labels: &[bool], cfg: &EvalConfig, seed: u64) -> Result<MetricsReport> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let a = auroc(scores, labels)?;
    let (lo, hi) = if cfg.n_boot > 0 {
        let (l, h) = bootstrap_ci(scores, labels, cfg.n_boot, cfg.alpha, seed)?;
        (Some(l), Some(h))
    } else {
        (None, None)
    };
    let t = threshold_at_sensitivity(scores, labels, cfg.target_sensitivity)?;
    let m = confusion_metrics(scores, labels, t);
    Ok(MetricsReport {
        auroc: a,
        auroc_ci_low: lo,
        auroc_ci_high: hi,
        target_sensitivity: cfg.target_sensitivity,
        threshold_source: "evaluated_scores".into(),
        threshold: t,
        accuracy: m.accuracy,
        f1: m.f1,
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        ppv: m.ppv,
        npv: m.npv,
        n_pos,
        n_neg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC vertices from the strictest threshold to the most lenient, starting at (0, 0).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push(RocPoint { threshold: s, fpr: fp as f64 / n_neg as f64, tpr: tp as f64 / n_pos as f64 });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::TooFewValues { need: 2, got: s.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (stats::sample_variance(a) / na, stats::sample_variance(b) / nb);
    let diff = stats::mean(a) - stats::mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if diff == 0.0 {
            WelchResult { t: 0.0, df, p_value: 1.0 }
        } else {
            WelchResult { t: diff.signum() * f64::INFINITY, df, p_value: 0.0 }
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchResult { t, df, p_value: stats::student_t_two_sided_p(t, df) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_hand_cases() {
        assert_eq!(auroc(&[0.9, 0.4, 0.5, 0.1], &[true, true, false, false]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.2, 0.2, 0.2], &[true, false, true]).unwrap(), 0.5);
        assert_eq!(auroc(&[3.0, 2.0, 1.0], &[true, true, false]).unwrap(), 1.0);
        assert!(matches!(auroc(&[1.0], &[true]), Err(Error::SingleClass)));
    }

    #[test]
    fn perfect_separation_interval_is_degenerate() {
        let s: Vec<f64> = (0..20).map(f64::from).collect();
        let l: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        assert_eq!(bootstrap_ci(&s, &l, 200, 0.05, 1).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn threshold_order_statistic() {
        let s = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3];
        let l = [true, true, false, true, true, true, false];
        let t = threshold_at_sensitivity(&s, &l, 0.8).unwrap();
        assert_eq!(t, 0.5);
        assert_eq!(Confusion::at(&s, &l, t).tp, 4);
        assert_eq!(threshold_at_sensitivity(&s, &l, 1.0).unwrap(), 0.4);
        assert!(matches!(threshold_at_sensitivity(&s, &l, 0.0), Err(Error::InvalidTarget(_))));
        assert!(matches!(threshold_at_sensitivity(&s, &l, 1.5), Err(Error::InvalidTarget(_))));
    }

    #[test]
    fn confusion_hand_case() {
        // TP=4, FN=1, TN=7, FP=3
        let mut s = vec![];
        let mut l = vec![];
        for (score, label, count) in [(1.0, true, 4), (0.0, true, 1), (0.0, false, 7), (1.0, false, 3)] {
            for _ in 0..count {
                s.push(score);
                l.push(label);
            }
        }
        let m = confusion_metrics(&s, &l, 0.5);
        assert_eq!(m.sensitivity, Some(0.8));
        assert_eq!(m.specificity, Some(0.7));
        assert_eq!(m.ppv, Some(4.0 / 7.0));
        assert_eq!(m.npv, Some(7.0 / 8.0));
        assert_eq!(m.accuracy, Some(11.0 / 15.0));
    }

    #[test]
    fn extreme_thresholds() {
        let s = [0.1, 0.6, 0.3, 0.8];
        let l = [false, true, false, true];
        let none = confusion_metrics(&s, &l, 2.0);
        assert_eq!(none.sensitivity, Some(0.0));
        assert_eq!(none.ppv, None);
        assert_eq!(none.npv, Some(0.5));
        let all = confusion_metrics(&s, &l, f64::NEG_INFINITY);
        assert_eq!((all.sensitivity, all.specificity), (Some(1.0), Some(0.0)));
    }

    #[test]
    fn welch_hand_case() {
        let r = welch_ttest(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((r.t + 1.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p_value - 0.346_593_507_087_3).abs() < 1e-9, "{}", r.p_value);
        let s = welch_ttest(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.t, s.p_value.to_bits()), (-r.t, r.p_value.to_bits()));
        let z = welch_ttest(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((z.t, z.p_value), (0.0, 1.0));
        assert!(matches!(welch_ttest(&[1.0], &[1.0, 2.0]), Err(Error::TooFewValues { .. })));
    }

    #[test]
    fn roc_curve_ends_at_one() {
        let pts = roc_curve(&[0.9, 0.4, 0.5, 0.1], &[true, true, false, false]).unwrap();
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(pts.len(), 5);
    }
}
