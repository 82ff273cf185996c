//! Path-dependent TreeSHAP.
//!
//! The coalition value is the cover-weighted conditional expectation of the
//! tree output: splits on features in the coalition follow the row, all other
//! splits average their children by training cover. Values are reported in
//! raw (log-odds) score space, where the ensemble is additive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::tree::{Node, Tree};
use crate::models::{FittedParams, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub base_value: f64,
    pub phi: Vec<f64>,
    /// Raw score of the explained row.
    pub prediction: f64,
}

fn child_fraction(tree: &Tree, parent: usize, child: usize) -> f64 {
    let pc = tree.nodes[parent].cover();
    if pc > 0.0 {
        tree.nodes[child].cover() / pc
    } else {
        0.5
    }
}

/// Cover-weighted mean output of a tree.
pub fn tree_expected_value(tree: &Tree) -> f64 {
    tree_conditional_expectation(tree, &[], &[])
}

/// Expected tree output when only the features flagged in `known` are fixed
/// to their values in `x`. An empty `known` slice means no feature is known.
pub fn tree_conditional_expectation(tree: &Tree, x: &[f64], known: &[bool]) -> f64 {
    fn go(t: &Tree, k: usize, x: &[f64], known: &[bool]) -> f64 {
        match t.nodes[k] {
            Node::Leaf { value, .. } => value,
            Node::Split { feature, threshold, left, right, .. } => {
                if known.get(feature).copied().unwrap_or(false) {
                    go(t, if x[feature] <= threshold { left } else { right }, x, known)
                } else {
                    child_fraction(t, k, left) * go(t, left, x, known)
                        + child_fraction(t, k, right) * go(t, right, x, known)
                }
            }
        }
    }
    go(tree, 0, x, known)
}

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    let d = path.len();
    path.push(PathElem { feature, zero, one, weight: if d == 0 { 1.0 } else { 0.0 } });
    for i in (0..d).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / (d + 1) as f64;
        path[i].weight = zero * path[i].weight * (d - i) as f64 / (d + 1) as f64;
    }
}

fn unwind(path: &mut Vec<PathElem>, i: usize) {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let mut n = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = path[j].weight;
            path[j].weight = n * (l + 1) as f64 / ((j + 1) as f64 * one);
            n = t - path[j].weight * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            path[j].weight = path[j].weight * (l + 1) as f64 / (zero * (l - j) as f64);
        }
    }
    // weights stay in place; only the feature fractions shift down
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElem], i: usize) -> f64 {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let mut n = path[l].weight;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = n * (l + 1) as f64 / ((j + 1) as f64 * one);
            total += t;
            n = path[j].weight - t * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            total += path[j].weight / (zero * (l - j) as f64 / (l + 1) as f64);
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    k: usize,
    x: &[f64],
    phi: &mut [f64],
    mut path: Vec<PathElem>,
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    extend(&mut path, zero, one, feature);
    match tree.nodes[k] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                if let Some(f) = e.feature {
                    phi[f] += w * (e.one - e.zero) * value;
                }
            }
        }
        Node::Split { feature: f, threshold, left, right, .. } => {
            let (hot, cold) = if x[f] <= threshold { (left, right) } else { (right, left) };
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(pos) = (1..path.len()).find(|&i| path[i].feature == Some(f)) {
                iz = path[pos].zero;
                io = path[pos].one;
                unwind(&mut path, pos);
            }
            recurse(tree, hot, x, phi, path.clone(), iz * child_fraction(tree, k, hot), io, Some(f));
            recurse(tree, cold, x, phi, path, iz * child_fraction(tree, k, cold), 0.0, Some(f));
        }
    }
}

/// Add one tree's Shapley values for row `x` into `phi`.
pub fn tree_shap_into(tree: &Tree, x: &[f64], phi: &mut [f64]) {
    if matches!(tree.nodes[0], Node::Leaf { .. }) {
        return;
    }
    recurse(tree, 0, x, phi, Vec::with_capacity(tree.depth() + 2), 1.0, 1.0, None);
}

fn ensemble(model: &TrainedModel) -> Result<(f64, &[Tree])> {
    match &model.params {
        FittedParams::Gbdt(p) if model.family.is_tree_ensemble() => Ok((p.base_score + model.logit_offset, &p.trees)),
        _ => Err(Error::UnsupportedFamily { operation: "TreeSHAP", family: model.family.to_string() }),
    }
}

/// Expected raw score under the training cover distribution.
pub fn shap_base_value(model: &TrainedModel) -> Result<f64> {
    let (base, trees) = ensemble(model)?;
    Ok(base + trees.iter().map(tree_expected_value).sum::<f64>())
}

/// Exact path-dependent Shapley values of one row.
pub fn shap_tree(model: &TrainedModel, row: &[f64]) -> Result<ShapExplanation> {
    let (base, trees) = ensemble(model)?;
    if row.len() != model.n_features() {
        return Err(Error::WidthMismatch { expected: model.n_features(), got: row.len() });
    }
    let mut phi = vec![0.0; row.len()];
    for t in trees {
        tree_shap_into(t, row, &mut phi);
    }
    Ok(ShapExplanation {
        base_value: base + trees.iter().map(tree_expected_value).sum::<f64>(),
        phi,
        prediction: model.raw_score(row)?,
    })
}

/// Shapley values of an arbitrary `d`-player game by enumerating all
/// coalitions. Exponential in `d`; meant for checking small cases.
pub fn exact_shapley(d: usize, value: impl Fn(&[bool]) -> f64) -> Result<Vec<f64>> {
    if d > 20 {
        return Err(Error::Config(format!("exact Shapley enumeration with {d} players is infeasible")));
    }
    let mut fact = vec![1.0f64; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let n_sets = 1usize << d;
    let v: Vec<f64> = (0..n_sets)
        .map(|s| {
            let mask: Vec<bool> = (0..d).map(|j| s >> j & 1 == 1).collect();
            value(&mask)
        })
        .collect();
    let mut phi = vec![0.0; d];
    for (s, vs) in v.iter().enumerate() {
        let size = s.count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if s >> j & 1 == 0 {
                let w = fact[size] * fact[d - size - 1] / fact[d];
                *p += w * (v[s | 1 << j] - vs);
            }
        }
    }
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub feature_names: Vec<String>,
    pub base_value: f64,
    /// Indices of the explained rows in the input dataset.
    pub rows: Vec<usize>,
    /// One phi vector per explained row.
    pub phi: Vec<Vec<f64>>,
    pub mean_abs: Vec<f64>,
    /// Feature indices by decreasing mean |phi|, ties by name.
    pub ranking: Vec<usize>,
}

impl ShapSummary {
    /// Share of the total mean |phi| carried by feature `j`.
    pub fn share(&self, j: usize) -> f64 {
        let total: f64 = self.mean_abs.iter().sum();
        if total > 0.0 {
            self.mean_abs[j] / total
        } else {
            0.0
        }
    }

    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.ranking.iter().position(|&j| self.feature_names[j] == name).map(|r| r + 1)
    }
}

/// Explain up to `max_rows` rows, taken evenly spaced through the dataset
/// when it is larger, and rank features by mean |phi|.
pub fn shap_summary(model: &TrainedModel, data: &Dataset, max_rows: usize) -> Result<ShapSummary> {
    let (_, trees) = ensemble(model)?;
    if data.n_cols() != model.n_features() {
        return Err(Error::WidthMismatch { expected: model.n_features(), got: data.n_cols() });
    }
    let n = data.n_rows();
    let m = n.min(max_rows);
    if m == 0 {
        return Err(Error::TooFewValues { need: 1, got: 0 });
    }
    let rows: Vec<usize> = (0..m).map(|k| k * n / m).collect();
    let phi: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|&i| {
            let mut p = vec![0.0; data.n_cols()];
            for t in trees {
                tree_shap_into(t, data.row(i), &mut p);
            }
            p
        })
        .collect();
    let d = data.n_cols();
    let mut mean_abs = vec![0.0; d];
    for p in &phi {
        for (a, v) in mean_abs.iter_mut().zip(p) {
            *a += v.abs();
        }
    }
    mean_abs.iter_mut().for_each(|a| *a /= m as f64);
    let names = data.feature_names();
    let mut ranking: Vec<usize> = (0..d).collect();
    ranking.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then_with(|| names[a].cmp(&names[b])));
    Ok(ShapSummary { feature_names: names, base_value: shap_base_value(model)?, rows, phi, mean_abs, ranking })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(feature: usize, threshold: f64, left: usize, right: usize, cover: f64) -> Node {
        Node::Split { feature, threshold, left, right, cover }
    }
    fn leaf(value: f64, cover: f64) -> Node {
        Node::Leaf { value, cover }
    }

    fn brute(tree: &Tree, x: &[f64]) -> Vec<f64> {
        exact_shapley(x.len(), |s| tree_conditional_expectation(tree, x, s)).unwrap()
    }

    #[test]
    fn stump_credits_only_its_feature() {
        let t = Tree { nodes: vec![split(1, 0.5, 1, 2, 10.0), leaf(-1.0, 4.0), leaf(2.0, 6.0)] };
        let mut phi = vec![0.0; 3];
        tree_shap_into(&t, &[9.0, 0.0, 9.0], &mut phi);
        // E = 0.4 * -1 + 0.6 * 2 = 0.8; f = -1
        assert_eq!(phi[0], 0.0);
        assert_eq!(phi[2], 0.0);
        assert!((phi[1] - (-1.8)).abs() < 1e-12);
    }

    #[test]
    fn repeated_feature_on_path_matches_enumeration() {
        let t = Tree {
            nodes: vec![
                split(0, 0.5, 1, 2, 10.0),
                split(1, 0.3, 3, 4, 6.0),
                split(0, 0.8, 5, 6, 4.0),
                leaf(1.0, 2.0),
                split(0, 0.2, 7, 8, 4.0),
                leaf(-2.0, 1.0),
                leaf(3.0, 3.0),
                leaf(0.5, 3.0),
                leaf(4.0, 1.0),
            ],
        };
        for x in [[0.1, 0.1, 0.0], [0.6, 0.9, 1.0], [0.9, 0.0, 0.0], [0.3, 0.5, 0.0]] {
            let mut phi = vec![0.0; 3];
            tree_shap_into(&t, &x, &mut phi);
            let want = brute(&t, &x);
            for j in 0..3 {
                assert!((phi[j] - want[j]).abs() < 1e-12, "{x:?}: {phi:?} vs {want:?}");
            }
            let total = tree_expected_value(&t) + phi.iter().sum::<f64>();
            assert!((total - t.predict(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_features_get_equal_credit() {
        // f = 1 when both x0 and x1 exceed 0.5, built symmetrically
        let t = Tree {
            nodes: vec![
                split(0, 0.5, 1, 2, 8.0),
                leaf(0.0, 4.0),
                split(1, 0.5, 3, 4, 4.0),
                leaf(0.0, 2.0),
                leaf(1.0, 2.0),
            ],
        };
        let mut phi = vec![0.0; 2];
        tree_shap_into(&t, &[1.0, 1.0], &mut phi);
        assert!((phi[0] - phi[1]).abs() < 1e-12);
    }
}
