//! Histogram-binned regression trees fitted to gradient statistics.
//!
//! One engine grows trees under three policies: oblivious (every node at a
//! depth shares one split), depth-wise, and best-first with a leaf budget.
//! A row goes left when `x <= threshold`.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_BINS: usize = 64;

/// Per-feature split candidates. Bin `b` holds values in
/// `(cuts[b - 1], cuts[b]]`; the last bin is open above.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    cuts: Vec<Vec<f64>>,
}

impl BinMapper {
    /// Cut points at midpoints between distinct values, thinned to quantiles
    /// when a column has more than `max_bins` distinct values.
    pub fn fit(data: &Dataset, max_bins: usize) -> Result<Self> {
        if !(2..=256).contains(&max_bins) {
            return Err(Error::Config(format!("max_bins {max_bins} outside [2, 256]")));
        }
        if data.has_missing() {
            return Err(Error::Config("tree models require imputed data".into()));
        }
        let cuts = (0..data.n_cols())
            .map(|j| {
                let mut v: Vec<f64> = data.column(j).collect();
                v.sort_by(f64::total_cmp);
                let mut distinct = v.clone();
                distinct.dedup();
                let mid = |a: f64, b: f64| a + 0.5 * (b - a);
                if distinct.len() <= max_bins {
                    distinct.windows(2).map(|w| mid(w[0], w[1])).collect::<Vec<_>>()
                } else {
                    let mut cuts: Vec<f64> = Vec::with_capacity(max_bins - 1);
                    for q in 1..max_bins {
                        let at = v[(q * v.len()) / max_bins - 1];
                        // next distinct value above `at`
                        let k = distinct.partition_point(|&x| x <= at);
                        if k < distinct.len() {
                            let c = mid(at, distinct[k]);
                            if cuts.last() != Some(&c) {
                                cuts.push(c);
                            }
                        }
                    }
                    cuts
                }
            })
            .collect();
        Ok(Self { cuts })
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn n_bins(&self, j: usize) -> usize {
        self.cuts[j].len() + 1
    }

    pub fn threshold(&self, j: usize, bin: usize) -> f64 {
        self.cuts[j][bin]
    }

    pub fn bin(&self, j: usize, x: f64) -> u8 {
        self.cuts[j].partition_point(|&c| c < x) as u8
    }

    pub fn bin_dataset(&self, data: &Dataset) -> BinnedMatrix {
        let (n, d) = (data.n_rows(), data.n_cols());
        let mut bins = vec![0u8; n * d];
        for j in 0..d {
            for i in 0..n {
                bins[j * n + i] = self.bin(j, data.get(i, j));
            }
        }
        BinnedMatrix { n_rows: n, n_cols: d, bins }
    }
}

/// Column-major bin indices.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    bins: Vec<u8>,
}

impl BinnedMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> usize {
        self.bins[j * self.n_rows + i] as usize
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[u8] {
        &self.bins[j * self.n_rows..(j + 1) * self.n_rows]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize, cover: f64 },
    Leaf { value: f64, cover: f64 },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

/// A binary tree stored as a node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value, cover }] }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    k = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match t.nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn scale_leaves(&mut self, s: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value, .. } = n {
                *value *= s;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Growth {
    /// Symmetric tree: all nodes at one depth share a split.
    Oblivious { depth: usize },
    /// Expand every splittable node level by level.
    LevelWise { max_depth: usize },
    /// Always expand the leaf with the largest gain, up to `max_leaves`.
    LeafWise { max_leaves: usize, max_depth: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub l2_reg: f64,
    pub min_child_weight: f64,
    pub min_split_gain: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    g: f64,
    h: f64,
    n: u32,
}

fn leaf_score(g: f64, h: f64, l2: f64) -> f64 {
    g * g / (h + l2)
}

/// Per-feature histograms of the rows in `rows`.
fn histograms(bins: &BinnedMatrix, mapper: &BinMapper, rows: &[usize], grad: &[f64], hess: &[f64]) -> Vec<Vec<Acc>> {
    (0..bins.n_cols)
        .map(|j| {
            let col = bins.column(j);
            let mut h = vec![Acc::default(); mapper.n_bins(j)];
            for &i in rows {
                let a = &mut h[col[i] as usize];
                a.g += grad[i];
                a.h += hess[i];
                a.n += 1;
            }
            h
        })
        .collect()
}

/// Gain of splitting after `bin` for every feature/bin, or `None` where the
/// split leaves a side empty or below the weight floor.
fn split_gains(hist: &[Vec<Acc>], p: &SplitParams) -> Vec<Vec<Option<f64>>> {
    hist.iter()
        .map(|h| {
            let tot = h.iter().fold(Acc::default(), |a, b| Acc { g: a.g + b.g, h: a.h + b.h, n: a.n + b.n });
            let parent = leaf_score(tot.g, tot.h, p.l2_reg);
            let mut left = Acc::default();
            let mut out = Vec::with_capacity(h.len().saturating_sub(1));
            for b in &h[..h.len() - 1] {
                left.g += b.g;
                left.h += b.h;
                left.n += b.n;
                let (rg, rh, rn) = (tot.g - left.g, tot.h - left.h, tot.n - left.n);
                if left.n == 0 || rn == 0 || left.h < p.min_child_weight || rh < p.min_child_weight {
                    out.push(None);
                } else {
                    let gain = 0.5 * (leaf_score(left.g, left.h, p.l2_reg) + leaf_score(rg, rh, p.l2_reg) - parent);
                    out.push(Some(gain));
                }
            }
            out
        })
        .collect()
}

fn best_split(hist: &[Vec<Acc>], p: &SplitParams) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    for (feature, gains) in split_gains(hist, p).into_iter().enumerate() {
        for (bin, g) in gains.into_iter().enumerate() {
            if let Some(gain) = g {
                if best.is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate { feature, bin, gain });
                }
            }
        }
    }
    best.filter(|b| b.gain >= p.min_split_gain)
}

/// A grown tree structure with the training rows that reached each leaf.
#[derive(Debug, Clone)]
pub struct GrownTree {
    pub tree: Tree,
    /// (node index, rows) for every leaf.
    pub leaves: Vec<(usize, Vec<usize>)>,
}

impl GrownTree {
    /// Newton leaf values `-sum(g) / (sum(h) + l2)` over the given rows only
    /// (rows outside `include` are ignored); a leaf with no included rows gets 0.
    pub fn newton_values(&self, grad: &[f64], hess: &[f64], l2: f64, include: impl Fn(usize) -> bool) -> Vec<f64> {
        self.leaves
            .iter()
            .map(|(_, rows)| {
                let (mut g, mut h) = (0.0, 0.0);
                for &i in rows {
                    if include(i) {
                        g += grad[i];
                        h += hess[i];
                    }
                }
                if h + l2 > 0.0 {
                    -g / (h + l2)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn set_leaf_values(&mut self, values: &[f64]) {
        for ((node, _), &v) in self.leaves.iter().zip(values) {
            if let Node::Leaf { value, .. } = &mut self.tree.nodes[*node] {
                *value = v;
            }
        }
    }

    /// Leaf position (index into `leaves`) of every training row.
    pub fn leaf_of_rows(&self, n_rows: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n_rows];
        for (k, (_, rows)) in self.leaves.iter().enumerate() {
            for &i in rows {
                out[i] = k;
            }
        }
        out
    }
}

struct Builder<'a> {
    bins: &'a BinnedMatrix,
    mapper: &'a BinMapper,
    grad: &'a [f64],
    hess: &'a [f64],
    params: SplitParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn push_leaf(&mut self, rows: &[usize]) -> usize {
        self.nodes.push(Node::Leaf { value: 0.0, cover: rows.len() as f64 });
        self.nodes.len() - 1
    }

    fn partition(&self, rows: &[usize], feature: usize, bin: usize) -> (Vec<usize>, Vec<usize>) {
        let col = self.bins.column(feature);
        rows.iter().partition(|&&i| (col[i] as usize) <= bin)
    }

    /// Turn leaf `node` into a split and return the two child leaves.
    fn split(&mut self, node: usize, rows: &[usize], feature: usize, bin: usize) -> [(usize, Vec<usize>); 2] {
        let (l, r) = self.partition(rows, feature, bin);
        let left = self.push_leaf(&l);
        let right = self.push_leaf(&r);
        self.nodes[node] = Node::Split {
            feature,
            threshold: self.mapper.threshold(feature, bin),
            left,
            right,
            cover: rows.len() as f64,
        };
        [(left, l), (right, r)]
    }

    fn best(&self, rows: &[usize]) -> Option<Candidate> {
        best_split(&histograms(self.bins, self.mapper, rows, self.grad, self.hess), &self.params)
    }

    fn level_wise(&mut self, rows: Vec<usize>, max_depth: usize) -> Vec<(usize, Vec<usize>)> {
        let root = self.push_leaf(&rows);
        let mut frontier = vec![(root, rows)];
        let mut done = Vec::new();
        for _ in 0..max_depth {
            let mut next = Vec::new();
            for (node, rows) in frontier {
                match self.best(&rows) {
                    Some(c) => next.extend(self.split(node, &rows, c.feature, c.bin)),
                    None => done.push((node, rows)),
                }
            }
            frontier = next;
            if frontier.is_empty() {
                break;
            }
        }
        done.extend(frontier);
        done
    }

    fn leaf_wise(&mut self, rows: Vec<usize>, max_leaves: usize, max_depth: usize) -> Vec<(usize, Vec<usize>)> {
        let root = self.push_leaf(&rows);
        let mut open: Vec<(usize, Vec<usize>, usize, Option<Candidate>)> = Vec::new();
        let first = if max_depth > 0 { self.best(&rows) } else { None };
        open.push((root, rows, 0, first));
        let mut n_leaves = 1;
        while n_leaves < max_leaves {
            // largest gain; ties go to the earliest-created leaf
            let pick = open
                .iter()
                .enumerate()
                .filter_map(|(k, o)| o.3.map(|c| (k, o.0, c.gain)))
                .max_by(|a, b| a.2.total_cmp(&b.2).then(b.1.cmp(&a.1)));
            let Some((k, ..)) = pick else { break };
            let (node, rows, depth, cand) = open.swap_remove(k);
            let c = cand.expect("picked candidate");
            for (child, child_rows) in self.split(node, &rows, c.feature, c.bin) {
                let cand = if depth + 1 < max_depth { self.best(&child_rows) } else { None };
                open.push((child, child_rows, depth + 1, cand));
            }
            n_leaves += 1;
        }
        open.sort_by_key(|o| o.0);
        open.into_iter().map(|(node, rows, ..)| (node, rows)).collect()
    }

    fn oblivious(&mut self, rows: Vec<usize>, depth: usize) -> Vec<(usize, Vec<usize>)> {
        let root = self.push_leaf(&rows);
        let mut level = vec![(root, rows)];
        for _ in 0..depth {
            // sum the per-node gains of each shared (feature, bin) choice
            let mut total: Option<Vec<Vec<(f64, bool)>>> = None;
            for (_, rows) in &level {
                let hist = histograms(self.bins, self.mapper, rows, self.grad, self.hess);
                let gains = split_gains(&hist, &self.params);
                let t = total.get_or_insert_with(|| {
                    gains.iter().map(|g| vec![(0.0, false); g.len()]).collect()
                });
                for (tf, gf) in t.iter_mut().zip(&gains) {
                    for (tb, gb) in tf.iter_mut().zip(gf) {
                        if let Some(g) = gb {
                            tb.0 += g;
                            tb.1 = true;
                        }
                    }
                }
            }
            let mut best: Option<Candidate> = None;
            for (feature, tf) in total.unwrap_or_default().into_iter().enumerate() {
                for (bin, (gain, valid)) in tf.into_iter().enumerate() {
                    if valid && best.is_none_or(|b| gain > b.gain) {
                        best = Some(Candidate { feature, bin, gain });
                    }
                }
            }
            let Some(c) = best.filter(|b| b.gain >= self.params.min_split_gain) else { break };
            let mut next = Vec::with_capacity(2 * level.len());
            for (node, rows) in level {
                let (l, r) = self.partition(&rows, c.feature, c.bin);
                if l.is_empty() || r.is_empty() {
                    // an empty side carries no data; keep the node whole
                    next.push((node, rows));
                } else {
                    next.extend(self.split(node, &rows, c.feature, c.bin));
                }
            }
            level = next;
        }
        level
    }
}

/// Grow one tree on gradient statistics of the given rows. Leaf values are
/// left at zero; fill them with [`GrownTree::newton_values`].
pub fn grow(
    bins: &BinnedMatrix,
    mapper: &BinMapper,
    grad: &[f64],
    hess: &[f64],
    rows: Vec<usize>,
    growth: Growth,
    params: SplitParams,
) -> GrownTree {
    let mut b = Builder { bins, mapper, grad, hess, params, nodes: Vec::new() };
    let mut leaves = match growth {
        Growth::Oblivious { depth } => b.oblivious(rows, depth),
        Growth::LevelWise { max_depth } => b.level_wise(rows, max_depth),
        Growth::LeafWise { max_leaves, max_depth } => b.leaf_wise(rows, max_leaves.max(1), max_depth),
    };
    leaves.sort_by_key(|l| l.0);
    GrownTree { tree: Tree { nodes: b.nodes }, leaves }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMeta;

    fn xor() -> Dataset {
        Dataset::from_rows(
            &[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![false, true, true, false],
            vec![FeatureMeta::continuous("a"), FeatureMeta::continuous("b")],
        )
        .unwrap()
    }

    #[test]
    fn bins_use_midpoints() {
        let m = BinMapper::fit(&xor(), 64).unwrap();
        assert_eq!(m.n_bins(0), 2);
        assert_eq!(m.threshold(0, 0), 0.5);
        assert_eq!(m.bin(0, 0.5), 0);
        assert_eq!(m.bin(0, 0.50001), 1);
    }

    #[test]
    fn many_distinct_values_are_thinned() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        let labels = vec![false; 1000];
        let d = Dataset::new(values, labels, vec![FeatureMeta::continuous("x")]).unwrap();
        let m = BinMapper::fit(&d, 64).unwrap();
        assert!(m.n_bins(0) <= 64 && m.n_bins(0) > 50);
        let b = m.bin_dataset(&d);
        let counts = (0..m.n_bins(0)).map(|k| b.column(0).iter().filter(|&&x| x as usize == k).count());
        assert!(counts.clone().all(|c| c > 0));
    }

    fn grads() -> (Vec<f64>, Vec<f64>) {
        // gradients at p = 0.5
        let g = xor().labels().iter().map(|&y| 0.5 - f64::from(u8::from(y))).collect();
        (g, vec![0.25; 4])
    }

    #[test]
    fn each_policy_separates_xor_at_depth_two() {
        let d = xor();
        let m = BinMapper::fit(&d, 64).unwrap();
        let b = m.bin_dataset(&d);
        let (g, h) = grads();
        let p = SplitParams { l2_reg: 0.0, min_child_weight: 1e-6, min_split_gain: 0.0 };
        for growth in [
            Growth::Oblivious { depth: 2 },
            Growth::LevelWise { max_depth: 2 },
            Growth::LeafWise { max_leaves: 4, max_depth: 2 },
        ] {
            let mut t = grow(&b, &m, &g, &h, (0..4).collect(), growth, p);
            assert_eq!(t.tree.n_leaves(), 4, "{growth:?}");
            let v = t.newton_values(&g, &h, 0.0, |_| true);
            t.set_leaf_values(&v);
            for i in 0..4 {
                let s = t.tree.predict(d.row(i));
                assert_eq!(s > 0.0, d.labels()[i], "{growth:?}");
            }
        }
    }

    #[test]
    fn leaf_budget_is_respected() {
        let d = xor();
        let m = BinMapper::fit(&d, 64).unwrap();
        let b = m.bin_dataset(&d);
        let (g, h) = grads();
        let p = SplitParams { l2_reg: 0.0, min_child_weight: 1e-6, min_split_gain: 0.0 };
        let t = grow(&b, &m, &g, &h, (0..4).collect(), Growth::LeafWise { max_leaves: 3, max_depth: 5 }, p);
        assert_eq!(t.tree.n_leaves(), 3);
        assert_eq!(t.leaves.iter().map(|l| l.1.len()).sum::<usize>(), 4);
    }

    #[test]
    fn covers_count_rows() {
        let d = xor();
        let m = BinMapper::fit(&d, 64).unwrap();
        let b = m.bin_dataset(&d);
        let (g, h) = grads();
        let p = SplitParams { l2_reg: 0.0, min_child_weight: 1e-6, min_split_gain: 0.0 };
        let t = grow(&b, &m, &g, &h, (0..4).collect(), Growth::LevelWise { max_depth: 2 }, p);
        assert_eq!(t.tree.nodes[0].cover(), 4.0);
        for n in &t.tree.nodes {
            if let Node::Split { left, right, cover, .. } = n {
                assert_eq!(t.tree.nodes[*left].cover() + t.tree.nodes[*right].cover(), *cover);
            }
        }
    }
}
