//! Stratified splitting, train-fitted imputation and min-max scaling, and
//! SMOTE oversampling of the minority class.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats;

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

/// Split into (train, test), allocating `round(n_c * test_fraction)` rows of
/// each class to the test side. Row order within each side follows the input.
pub fn stratified_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test_fraction {test_fraction} outside (0, 1)")));
    }
    data.require_both_classes()?;
    let (neg, pos) = data.class_indices();
    let mut test = Vec::new();
    let mut train = Vec::new();
    for (c, mut idx) in [neg, pos].into_iter().enumerate() {
        idx.shuffle(&mut stream(seed, "stratified_split", c as u64));
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.select_rows(&train), data.select_rows(&test)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnParams {
    pub name: String,
    pub kind: FeatureKind,
    /// Imputation value: the median for continuous columns, the mode for binary ones.
    pub fill: f64,
    pub min: f64,
    pub max: f64,
}

impl ColumnParams {
    pub fn is_degenerate(&self) -> bool {
        self.kind == FeatureKind::Continuous && self.max == self.min
    }

    fn apply(&self, v: f64) -> f64 {
        let v = if v.is_nan() { self.fill } else { v };
        match self.kind {
            FeatureKind::Binary => v,
            FeatureKind::Continuous if self.is_degenerate() => 0.0,
            FeatureKind::Continuous => (v - self.min) / (self.max - self.min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessParams {
    pub schema_version: u32,
    pub columns: Vec<ColumnParams>,
}

/// Fit imputation and scaling parameters on training rows, ignoring missing
/// values. Binary ties resolve to 0.
pub fn fit_params(train: &Dataset) -> Result<PreprocessParams> {
    let columns = (0..train.n_cols())
        .map(|j| {
            let meta = &train.meta()[j];
            let mut vals: Vec<f64> = train.column(j).filter(|v| !v.is_nan()).collect();
            if vals.is_empty() {
                return Err(Error::AllMissingColumn(meta.name.clone()));
            }
            vals.sort_by(f64::total_cmp);
            let (min, max) = (vals[0], vals[vals.len() - 1]);
            let fill = match meta.kind {
                FeatureKind::Continuous => stats::median(&vals),
                FeatureKind::Binary => {
                    let ones = vals.iter().filter(|&&v| v == 1.0).count();
                    if 2 * ones > vals.len() {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            let c = ColumnParams { name: meta.name.clone(), kind: meta.kind, fill, min, max };
            if c.is_degenerate() {
                log::warn!("column `{}` is constant in training data; it will be scaled to 0", c.name);
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    Ok(PreprocessParams { schema_version: PARAMS_SCHEMA_VERSION, columns })
}

impl PreprocessParams {
    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Parameters for a subset of columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let columns = names
            .iter()
            .map(|n| {
                self.columns.iter().find(|c| &c.name == n).cloned().ok_or_else(|| Error::UnknownFeature(n.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(Self { schema_version: self.schema_version, columns })
    }

    /// Transform one raw row in place of a full dataset.
    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.columns.len() {
            return Err(Error::WidthMismatch { expected: self.columns.len(), got: row.len() });
        }
        Ok(row.iter().zip(&self.columns).map(|(&v, c)| c.apply(v)).collect())
    }

    /// Inverse of the scaling for a continuous column (identity for binary).
    pub fn unscale(&self, j: usize, v: f64) -> f64 {
        let c = &self.columns[j];
        match c.kind {
            FeatureKind::Binary => v,
            FeatureKind::Continuous => c.min + v * (c.max - c.min),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Impute then min-max scale. Values outside the training range are not clipped.
pub fn transform(data: &Dataset, params: &PreprocessParams) -> Result<Dataset> {
    if data.n_cols() != params.columns.len() {
        return Err(Error::WidthMismatch { expected: params.columns.len(), got: data.n_cols() });
    }
    for (m, c) in data.meta().iter().zip(&params.columns) {
        if m.name != c.name {
            return Err(Error::Schema(format!("expected column `{}`, found `{}`", c.name, m.name)));
        }
    }
    Ok(data.map_values(|j, v| params.columns[j].apply(v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k: usize,
    /// Desired minority/majority ratio after oversampling.
    pub target_ratio: f64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self { k: 5, target_ratio: 1.0 }
    }
}

/// Where a synthetic row came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOrigin {
    /// Row indices (into the input dataset) of the two parents.
    pub base: usize,
    pub neighbor: usize,
    pub delta: f64,
    /// The interpolated row before binary columns are rounded.
    pub unrounded: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    pub data: Dataset,
    pub origins: Vec<SyntheticOrigin>,
}

/// k nearest minority neighbours (Euclidean) of each minority row; ties go to
/// the lower index.
fn minority_neighbours(data: &Dataset, minority: &[usize], k: usize) -> Vec<Vec<usize>> {
    minority
        .par_iter()
        .map(|&i| {
            let xi = data.row(i);
            let mut d: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&m| m != i)
                .map(|&m| {
                    let dist: f64 = xi.iter().zip(data.row(m)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (dist, m)
                })
                .collect();
            let kth = k.min(d.len()) - 1;
            d.select_nth_unstable_by(kth, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().map(|(_, m)| m).collect()
        })
        .collect()
}

/// Oversample the minority class. Synthetic row `s` takes base row
/// `minority[s mod m]`, a neighbour drawn uniformly from its k nearest
/// minority rows, and `delta ~ U(0, 1)`.
pub fn smote_with_origins(train: &Dataset, config: SmoteConfig, seed: u64) -> Result<SmoteOutput> {
    let SmoteConfig { k, target_ratio } = config;
    if k == 0 {
        return Err(Error::Config("SMOTE k must be at least 1".into()));
    }
    if !(target_ratio > 0.0 && target_ratio.is_finite()) {
        return Err(Error::Config(format!("SMOTE target_ratio {target_ratio} must be positive")));
    }
    if train.has_missing() {
        return Err(Error::Config("SMOTE requires imputed data".into()));
    }
    let (neg, pos) = train.class_indices();
    let (minority, majority, minority_label) =
        if pos.len() <= neg.len() { (pos, neg, true) } else { (neg, pos, false) };
    if minority.len() < k + 1 {
        return Err(Error::TooFewMinority { have: minority.len(), k, need: k + 1 });
    }
    let wanted = (target_ratio * majority.len() as f64).round() as usize;
    let n_new = wanted.saturating_sub(minority.len());
    let mut out = train.clone();
    if n_new == 0 {
        return Ok(SmoteOutput { data: out, origins: Vec::new() });
    }

    let neighbours = minority_neighbours(train, &minority, k);
    let binary: Vec<bool> = train.meta().iter().map(|m| m.kind == FeatureKind::Binary).collect();
    let origins: Vec<SyntheticOrigin> = (0..n_new)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, "smote", s as u64);
            let b = s % minority.len();
            let nb = neighbours[b][rng.random_range(0..neighbours[b].len())];
            let delta: f64 = rng.random();
            let (xb, xn) = (train.row(minority[b]), train.row(nb));
            let unrounded: Vec<f64> = xb.iter().zip(xn).map(|(a, c)| a + delta * (c - a)).collect();
            SyntheticOrigin { base: minority[b], neighbor: nb, delta, unrounded }
        })
        .collect();

    let mut values = Vec::with_capacity(n_new * train.n_cols());
    for o in &origins {
        values.extend(o.unrounded.iter().zip(&binary).map(|(&v, &bin)| {
            if bin {
                if v >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            } else {
                v
            }
        }));
    }
    out.append_rows(&values, &vec![minority_label; n_new]);
    Ok(SmoteOutput { data: out, origins })
}

pub fn smote(train: &Dataset, config: SmoteConfig, seed: u64) -> Result<Dataset> {
    smote_with_origins(train, config, seed).map(|o| o.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMeta;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> Dataset {
        let labels = (0..values.len()).map(|i| i % 2 == 0).collect();
        Dataset::new(values.to_vec(), labels, vec![FeatureMeta::continuous("x")]).unwrap()
    }

    #[test]
    fn medians_follow_order_statistics() {
        assert_eq!(fit_params(&col(&[1.0, 2.0, 100.0])).unwrap().columns[0].fill, 2.0);
        assert_eq!(fit_params(&col(&[1.0, 2.0, 3.0, 100.0])).unwrap().columns[0].fill, 2.5);
        assert_eq!(fit_params(&col(&[f64::NAN, 2.0, 3.0])).unwrap().columns[0].fill, 2.5);
    }

    #[test]
    fn binary_mode() {
        let d = Dataset::new(vec![0.0, 0.0, 1.0], vec![true, false, true], vec![FeatureMeta::binary("b")]).unwrap();
        assert_eq!(fit_params(&d).unwrap().columns[0].fill, 0.0);
    }

    #[test]
    fn all_missing_column_is_named() {
        let err = fit_params(&col(&[f64::NAN, f64::NAN])).unwrap_err();
        assert!(matches!(err, Error::AllMissingColumn(ref n) if n == "x"));
    }

    #[test]
    fn scaling_is_affine_and_unclipped() {
        let p = fit_params(&col(&[0.0, 10.0, 5.0])).unwrap();
        let t = transform(&col(&[5.0, 12.0, f64::NAN]), &p).unwrap();
        assert_eq!(t.values(), &[0.5, 1.2, 0.5]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let p = fit_params(&col(&[3.0, 3.0])).unwrap();
        assert_eq!(transform(&col(&[3.0, 7.0]), &p).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn split_sizes_and_balance() {
        let d = col(&[0.0, 1.0, 2.0, 3.0]);
        let (tr, te) = stratified_split(&d, 0.5, 1).unwrap();
        assert_eq!((tr.n_rows(), tr.n_positive()), (2, 1));
        assert_eq!((te.n_rows(), te.n_positive()), (2, 1));
        let (tr2, _) = stratified_split(&d, 0.5, 1).unwrap();
        assert_eq!(tr, tr2);
    }

    #[test]
    fn split_rejects_single_class() {
        let d = Dataset::new(vec![1.0, 2.0], vec![true, true], vec![FeatureMeta::continuous("x")]).unwrap();
        assert!(matches!(stratified_split(&d, 0.3, 0), Err(Error::SingleClass)));
    }

    #[test]
    fn smote_single_neighbour_stays_on_segment() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0], vec![6.0, 5.0], vec![7.0, 5.0], vec![8.0, 5.0]];
        let meta = vec![FeatureMeta::continuous("a"), FeatureMeta::continuous("b")];
        let d = Dataset::from_rows(&rows, vec![true, true, false, false, false, false], meta).unwrap();
        let out = smote(&d, SmoteConfig { k: 1, target_ratio: 1.0 }, 4).unwrap();
        assert_eq!(out.n_rows(), 8);
        for i in 6..8 {
            let r = out.row(i);
            assert!(r[0] == r[1] && (0.0..=1.0).contains(&r[0]));
            assert!(out.labels()[i]);
        }
    }

    #[test]
    fn smote_balances_counts() {
        let values: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let labels = (0..100).map(|i| i < 30).collect();
        let d = Dataset::new(values, labels, vec![FeatureMeta::continuous("x")]).unwrap();
        let out = smote(&d, SmoteConfig::default(), 0).unwrap();
        assert_eq!((out.n_positive(), out.n_rows() - out.n_positive()), (70, 70));
        assert_eq!(&out.values()[..100], d.values());
    }

    #[test]
    fn smote_needs_enough_minority_rows() {
        let d = col(&[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            smote(&d, SmoteConfig { k: 5, target_ratio: 1.0 }, 0),
            Err(Error::TooFewMinority { have: 2, .. })
        ));
    }

    #[test]
    fn params_json_round_trip_is_exact() {
        let p = fit_params(&col(&[0.1, 0.7, 1.0 / 3.0])).unwrap();
        assert_eq!(PreprocessParams::from_json(&p.to_json().unwrap()).unwrap(), p);
    }

    proptest! {
        #[test]
        fn scaling_preserves_order(xs in prop::collection::vec(-1e3f64..1e3, 2..40), a in -2e3f64..2e3, b in -2e3f64..2e3) {
            let p = fit_params(&col(&xs)).unwrap();
            let t = transform(&col(&[a.min(b), a.max(b)]), &p).unwrap();
            prop_assert!(t.values()[0] <= t.values()[1]);
        }

        #[test]
        fn fit_ignores_test_rows(xs in prop::collection::vec(-1e3f64..1e3, 2..40), noise in -1e3f64..1e3) {
            let train = col(&xs);
            let p1 = fit_params(&train).unwrap();
            let _ = transform(&col(&[noise, noise * 2.0]), &p1).unwrap();
            let p2 = fit_params(&train).unwrap();
            prop_assert_eq!(p1, p2);
        }

        #[test]
        fn transform_with_unit_params_is_identity(xs in prop::collection::vec(0f64..1.0, 1..20)) {
            let p = PreprocessParams {
                schema_version: PARAMS_SCHEMA_VERSION,
                columns: vec![ColumnParams { name: "x".into(), kind: FeatureKind::Continuous, fill: 0.5, min: 0.0, max: 1.0 }],
            };
            let d = col(&xs);
            prop_assert_eq!(transform(&d, &p).unwrap(), d);
        }
    }
}
