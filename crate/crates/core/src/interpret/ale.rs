use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_ALE_BINS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleCurve {
    pub feature: String,
    /// Strictly increasing quantile edges.
    pub edges: Vec<f64>,
    /// Centered accumulated effect at each edge.
    pub values: Vec<f64>,
    /// Rows falling in each bin (one fewer entry than `edges`).
    pub bin_counts: Vec<usize>,
}

impl AleCurve {
    /// Count-weighted mean of the curve, averaging the two edges of each bin.
    pub fn weighted_mean(&self) -> f64 {
        weighted_mean(&self.values, &self.bin_counts)
    }
}

fn weighted_mean(values: &[f64], counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let s: f64 = counts.iter().enumerate().map(|(k, &c)| c as f64 * 0.5 * (values[k] + values[k + 1])).sum();
    s / n as f64
}

/// Quantile edges of `col`, deduplicated.
fn quantile_edges(col: &mut [f64], n_bins: usize) -> Vec<f64> {
    col.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (0..=n_bins).map(|k| stats::quantile_sorted(col, k as f64 / n_bins as f64)).collect();
    edges.dedup();
    edges
}

/// Accumulated local effects of feature `name` on the prediction function `f`.
///
/// Each row contributes `f(x | x_j = upper) - f(x | x_j = lower)` to the bin
/// holding its value; bins are `(e_k, e_k+1]` with the lowest edge included
/// in the first bin. The accumulated curve is centered so its count-weighted
/// mean is zero.
pub fn ale_curve<F>(f: F, data: &Dataset, name: &str, n_bins: usize) -> Result<AleCurve>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let j = data.column_index(name).ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
    if data.meta()[j].kind != FeatureKind::Continuous {
        return Err(Error::Config(format!("ALE needs a continuous feature, `{name}` is binary")));
    }
    if n_bins < 2 {
        return Err(Error::Config("ALE needs at least 2 bins".into()));
    }
    if data.n_rows() == 0 {
        return Err(Error::TooFewValues { need: 1, got: 0 });
    }
    let mut col: Vec<f64> = data.column(j).collect();
    if col.iter().any(|v| v.is_nan()) {
        return Err(Error::Config("ALE requires imputed data".into()));
    }
    let edges = quantile_edges(&mut col, n_bins);
    if edges.len() < 2 {
        return Err(Error::ConstantFeature(name.to_string()));
    }
    let nb = edges.len() - 1;
    let bin_of = |v: f64| edges[1..nb].partition_point(|&e| e < v);

    let per_row: Vec<(usize, f64)> = (0..data.n_rows())
        .into_par_iter()
        .map(|i| {
            let mut x = data.row(i).to_vec();
            let k = bin_of(x[j]);
            x[j] = edges[k + 1];
            let hi = f(&x);
            x[j] = edges[k];
            (k, hi - f(&x))
        })
        .collect();
    let mut sums = vec![0.0; nb];
    let mut counts = vec![0usize; nb];
    for (k, d) in per_row {
        sums[k] += d;
        counts[k] += 1;
    }
    let mut values = vec![0.0; nb + 1];
    for k in 0..nb {
        let step = if counts[k] > 0 { sums[k] / counts[k] as f64 } else { 0.0 };
        values[k + 1] = values[k] + step;
    }
    let c = weighted_mean(&values, &counts);
    values.iter_mut().for_each(|v| *v -= c);
    Ok(AleCurve { feature: name.to_string(), edges, values, bin_counts: counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMeta;
    use crate::rng::stream;
    use rand::Rng as _;

    fn uniform(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = stream(seed, "ale_test", 0);
        let values = (0..n * d).map(|_| rng.random::<f64>()).collect();
        let meta = (0..d).map(|j| FeatureMeta::continuous(format!("x{j}"))).collect();
        Dataset::new(values, (0..n).map(|i| i % 2 == 0).collect(), meta).unwrap()
    }

    #[test]
    fn ignored_feature_is_flat() {
        let d = uniform(500, 2, 1);
        let c = ale_curve(|x| 3.0 * x[0], &d, "x1", 16).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_feature_is_an_error() {
        let d = uniform(50, 2, 2).map_values(|j, v| if j == 1 { 4.0 } else { v });
        assert!(matches!(ale_curve(|x| x[1], &d, "x1", 8), Err(Error::ConstantFeature(_))));
    }

    #[test]
    fn counts_cover_every_row() {
        let d = uniform(1000, 1, 3);
        let c = ale_curve(|x| x[0] * x[0], &d, "x0", 10).unwrap();
        assert_eq!(c.bin_counts.iter().sum::<usize>(), 1000);
        assert!(c.edges.windows(2).all(|w| w[0] < w[1]));
        assert!(c.weighted_mean().abs() < 1e-12);
    }
}
