//! Bagged Gini classification trees, used only for impurity importance.

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::tree::{BinMapper, BinnedMatrix, DEFAULT_MAX_BINS};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per split; `None` means `floor(sqrt(d))`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub max_bins: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 8, mtry: None, bootstrap: true, max_bins: DEFAULT_MAX_BINS }
    }
}

fn gini(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

struct TreeCtx<'a> {
    bins: &'a BinnedMatrix,
    mapper: &'a BinMapper,
    y: &'a [bool],
    mtry: usize,
    max_depth: usize,
    total_weight: f64,
}

/// Grow one tree on weighted rows, adding `p(v) * delta_gini` per split to `imp`.
fn grow(ctx: &TreeCtx, rows: Vec<(usize, f64)>, depth: usize, rng: &mut Rng, imp: &mut [f64]) {
    let w: f64 = rows.iter().map(|r| r.1).sum();
    let wp: f64 = rows.iter().filter(|r| ctx.y[r.0]).map(|r| r.1).sum();
    let node_gini = gini(wp, w);
    if depth >= ctx.max_depth || node_gini == 0.0 || rows.len() < 2 {
        return;
    }
    let d = ctx.bins.n_cols;
    let mut best: Option<(usize, usize, f64)> = None;
    for f in sample(rng, d, ctx.mtry.min(d)).into_iter() {
        let nb = ctx.mapper.n_bins(f);
        let mut hw = vec![0.0; nb];
        let mut hp = vec![0.0; nb];
        let col = ctx.bins.column(f);
        for &(i, wi) in &rows {
            let b = col[i] as usize;
            hw[b] += wi;
            if ctx.y[i] {
                hp[b] += wi;
            }
        }
        let (mut lw, mut lp) = (0.0, 0.0);
        for b in 0..nb - 1 {
            lw += hw[b];
            lp += hp[b];
            let (rw, rp) = (w - lw, wp - lp);
            if lw <= 0.0 || rw <= 0.0 {
                continue;
            }
            let dec = node_gini - (lw / w) * gini(lp, lw) - (rw / w) * gini(rp, rw);
            if best.is_none_or(|(_, _, bd)| dec > bd) {
                best = Some((f, b, dec));
            }
        }
    }
    let Some((f, b, dec)) = best.filter(|x| x.2 > 0.0) else { return };
    imp[f] += (w / ctx.total_weight) * dec;
    let col = ctx.bins.column(f);
    let (left, right): (Vec<_>, Vec<_>) = rows.into_iter().partition(|&(i, _)| col[i] as usize <= b);
    grow(ctx, left, depth + 1, rng, imp);
    grow(ctx, right, depth + 1, rng, imp);
}

/// Mean decrease in Gini impurity per feature, averaged over trees and
/// normalized to sum to one.
pub fn gini_importance(data: &Dataset, cfg: &ForestConfig, seed: u64) -> Result<Vec<f64>> {
    data.require_both_classes()?;
    if cfg.n_trees == 0 || cfg.max_depth == 0 {
        return Err(Error::Config("forest needs at least one tree of depth >= 1".into()));
    }
    let d = data.n_cols();
    let mapper = BinMapper::fit(data, cfg.max_bins)?;
    if (0..d).all(|j| mapper.n_bins(j) == 1) {
        return Err(Error::DegenerateData("every feature is constant".into()));
    }
    let bins = mapper.bin_dataset(data);
    let n = data.n_rows();
    let mtry = cfg.mtry.unwrap_or(((d as f64).sqrt().floor() as usize).max(1)).max(1);
    let per_tree: Vec<Vec<f64>> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, "forest_tree", t as u64);
            let rows: Vec<(usize, f64)> = if cfg.bootstrap {
                let mut counts = vec![0u32; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
                counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i, f64::from(c))).collect()
            } else {
                (0..n).map(|i| (i, 1.0)).collect()
            };
            let total_weight = rows.iter().map(|r| r.1).sum();
            let ctx = TreeCtx { bins: &bins, mapper: &mapper, y: data.labels(), mtry, max_depth: cfg.max_depth, total_weight };
            let mut imp = vec![0.0; d];
            grow(&ctx, rows, 0, &mut rng, &mut imp);
            imp
        })
        .collect();
    // reduce in tree order so the sum does not depend on scheduling
    let mut imp = vec![0.0; d];
    for t in &per_tree {
        for (a, b) in imp.iter_mut().zip(t) {
            *a += b / cfg.n_trees as f64;
        }
    }
    let total: f64 = imp.iter().sum();
    if total > 0.0 {
        imp.iter_mut().for_each(|v| *v /= total);
    }
    Ok(imp)
}
