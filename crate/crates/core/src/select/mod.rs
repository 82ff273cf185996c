//! Two-stage feature selection: a univariate ANOVA F filter followed by
//! random-forest impurity ranking. Admission-level features bypass both
//! stages and are always appended.

mod forest;

pub use forest::{gini_importance, ForestConfig};

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::schema;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub name: String,
    pub f_statistic: f64,
    pub p_value: f64,
    pub gini_importance: Option<f64>,
    /// 1-based rank by F statistic.
    pub rank: usize,
}

/// Two-group one-way ANOVA F statistic and its upper-tail p-value.
/// Zero within-group variation gives `F = +inf, p = 0` unless the groups
/// also share a mean, in which case `F = 0, p = 1`.
pub fn anova_f(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let m = (na * ma + nb * mb) / n;
    let ssb = na * (ma - m).powi(2) + nb * (mb - m).powi(2);
    let ssw: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
    let df_w = n - 2.0;
    if ssb == 0.0 {
        return (0.0, 1.0);
    }
    if ssw == 0.0 {
        return (f64::INFINITY, 0.0);
    }
    let f = ssb / (ssw / df_w);
    (f, stats::f_upper_tail(f, 1.0, df_w))
}

/// F scores for every column, ranked by decreasing F (ties by name).
pub fn anova_f_scores(data: &Dataset) -> Result<Vec<FeatureScore>> {
    if data.has_missing() {
        return Err(Error::Config("ANOVA scoring requires imputed data".into()));
    }
    let (neg, pos) = data.class_indices();
    if neg.len() < 2 || pos.len() < 2 {
        return Err(Error::TooFewValues { need: 2, got: neg.len().min(pos.len()) });
    }
    let mut scores: Vec<FeatureScore> = (0..data.n_cols())
        .into_par_iter()
        .map(|j| {
            let a: Vec<f64> = neg.iter().map(|&i| data.get(i, j)).collect();
            let b: Vec<f64> = pos.iter().map(|&i| data.get(i, j)).collect();
            let (f, p) = anova_f(&a, &b);
            FeatureScore { name: data.meta()[j].name.clone(), f_statistic: f, p_value: p, gini_importance: None, rank: 0 }
        })
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&x, &y| by_f(&scores[x], &scores[y]));
    for (r, &k) in order.iter().enumerate() {
        scores[k].rank = r + 1;
    }
    Ok(scores)
}

fn by_f(a: &FeatureScore, b: &FeatureScore) -> Ordering {
    b.f_statistic.total_cmp(&a.f_statistic).then_with(|| a.name.cmp(&b.name))
}

/// Names of the `k` highest-F features, best first; ties go to the
/// lexicographically smaller name.
pub fn select_top_k(scores: &[FeatureScore], k: usize) -> Result<Vec<String>> {
    if k > scores.len() {
        return Err(Error::KTooLarge { k, available: scores.len() });
    }
    let mut s: Vec<&FeatureScore> = scores.iter().collect();
    s.sort_by(|a, b| by_f(a, b));
    Ok(s.into_iter().take(k).map(|f| f.name.clone()).collect())
}

/// Importance scores for every column, in column order.
pub fn rf_importance(data: &Dataset, cfg: &ForestConfig, seed: u64) -> Result<Vec<FeatureScore>> {
    let imp = gini_importance(data, cfg, seed)?;
    let mut order: Vec<usize> = (0..imp.len()).collect();
    let names = data.feature_names();
    order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then_with(|| names[a].cmp(&names[b])));
    let mut rank = vec![0; imp.len()];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r + 1;
    }
    Ok((0..imp.len())
        .map(|j| FeatureScore {
            name: names[j].clone(),
            f_statistic: f64::NAN,
            p_value: f64::NAN,
            gini_importance: Some(imp[j]),
            rank: rank[j],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub stage1_k: usize,
    pub stage2_k: usize,
    /// Optional stage-1 filter keeping only features with `p <= threshold`.
    pub p_threshold: Option<f64>,
    pub forest: ForestConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { stage1_k: 30, stage2_k: 15, p_threshold: None, forest: ForestConfig::default() }
    }
}

/// One row of the selection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub name: String,
    pub f_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub importance: Option<f64>,
    pub admission: bool,
    pub stage1: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Final features in schema order, then any non-schema features by name.
    pub features: Vec<String>,
    pub stage1: Vec<String>,
    pub stage2: Vec<String>,
    pub rows: Vec<SelectionRow>,
}

fn schema_order(names: &mut [String]) {
    let pos = |n: &str| schema::FEATURES.iter().position(|f| f.id == n).unwrap_or(usize::MAX);
    names.sort_by(|a, b| pos(a).cmp(&pos(b)).then_with(|| a.cmp(b)));
}

/// Stage 1 keeps the top `stage1_k` non-admission candidates by F, stage 2 the
/// top `stage2_k` of those by forest importance. Both `k` values are capped at
/// the number of candidates available. Admission features are appended.
pub fn two_stage_select(
    data: &Dataset,
    admission_features: &[String],
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<SelectionResult> {
    for a in admission_features {
        if data.column_index(a).is_none() {
            return Err(Error::UnknownFeature(a.clone()));
        }
    }
    let candidates: Vec<String> =
        data.feature_names().into_iter().filter(|n| !admission_features.contains(n)).collect();
    let cand_data = data.select_columns(&candidates)?;
    let f_scores = anova_f_scores(&cand_data)?;
    let eligible: Vec<FeatureScore> = match cfg.p_threshold {
        Some(t) => f_scores.iter().filter(|s| s.p_value <= t).cloned().collect(),
        None => f_scores.clone(),
    };
    let k1 = cfg.stage1_k.min(eligible.len());
    let stage1 = select_top_k(&eligible, k1)?;

    let stage1_data = cand_data.select_columns(&stage1)?;
    let k2 = cfg.stage2_k.min(stage1.len());
    let imp = if stage1.is_empty() { Vec::new() } else { rf_importance(&stage1_data, &cfg.forest, seed)? };
    let mut ranked: Vec<&FeatureScore> = imp.iter().collect();
    ranked.sort_by_key(|s| s.rank);
    let stage2: Vec<String> = ranked.iter().take(k2).map(|s| s.name.clone()).collect();

    let mut features: Vec<String> = stage2.clone();
    features.extend(admission_features.iter().cloned());
    schema_order(&mut features);

    let mut rows = Vec::new();
    for n in data.feature_names() {
        let f = f_scores.iter().find(|s| s.name == n);
        rows.push(SelectionRow {
            f_statistic: f.map(|s| s.f_statistic),
            p_value: f.map(|s| s.p_value),
            importance: imp.iter().find(|s| s.name == n).and_then(|s| s.gini_importance),
            admission: admission_features.contains(&n),
            stage1: stage1.contains(&n),
            selected: features.contains(&n),
            name: n,
        });
    }
    Ok(SelectionResult { features, stage1, stage2, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMeta;

    fn two_groups(a: &[f64], b: &[f64]) -> Dataset {
        let values: Vec<f64> = a.iter().chain(b).copied().collect();
        let labels = (0..values.len()).map(|i| i >= a.len()).collect();
        Dataset::new(values, labels, vec![FeatureMeta::continuous("x")]).unwrap()
    }

    #[test]
    fn hand_anova() {
        let s = anova_f_scores(&two_groups(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0])).unwrap();
        // SSB = 13.5, SSW = 4 on 4 df
        assert!((s[0].f_statistic - 13.5).abs() < 1e-12);
        let p = statrs::distribution::FisherSnedecor::new(1.0, 4.0).unwrap();
        let want = statrs::distribution::ContinuousCDF::sf(&p, 13.5);
        assert!((s[0].p_value - want).abs() < 1e-10);
        let s = anova_f_scores(&two_groups(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!((s[0].f_statistic, s[0].p_value), (0.0, 1.0));
        let s = anova_f_scores(&two_groups(&[1.0, 1.0], &[2.0, 2.0])).unwrap();
        assert_eq!((s[0].f_statistic, s[0].p_value), (f64::INFINITY, 0.0));
    }

    fn score(name: &str, f: f64) -> FeatureScore {
        FeatureScore { name: name.into(), f_statistic: f, p_value: 0.5, gini_importance: None, rank: 0 }
    }

    #[test]
    fn top_k_ties_break_by_name() {
        let s = vec![score("b", 2.0), score("a", 2.0), score("c", 5.0)];
        assert_eq!(select_top_k(&s, 2).unwrap(), vec!["c", "a"]);
        assert_eq!(select_top_k(&s, 3).unwrap(), vec!["c", "a", "b"]);
        assert!(matches!(select_top_k(&s, 4), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn single_split_importance_is_one() {
        let d = two_groups(&[0.0, 0.1, 0.2], &[1.0, 1.1, 1.2]);
        let cfg = ForestConfig { n_trees: 1, max_depth: 1, bootstrap: false, ..Default::default() };
        assert_eq!(gini_importance(&d, &cfg, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn unused_feature_has_zero_importance() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64, 7.0]).collect();
        let labels = (0..40).map(|i| i % 2 == 1).collect();
        let d = Dataset::from_rows(&rows, labels, vec![FeatureMeta::continuous("s"), FeatureMeta::continuous("c")])
            .unwrap();
        let imp = gini_importance(&d, &ForestConfig { n_trees: 20, ..Default::default() }, 1).unwrap();
        assert_eq!(imp[1], 0.0);
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_data_is_degenerate() {
        let d = two_groups(&[1.0, 1.0], &[1.0, 1.0]);
        assert!(matches!(gini_importance(&d, &ForestConfig::default(), 0), Err(Error::DegenerateData(_))));
    }
}
