//! Gradient-boosted trees on the logistic loss.
//!
//! The three variants share the tree engine and differ in growth policy.
//! The ordered variant additionally chooses each tree's structure from
//! gradients evaluated by supporting models that were fitted only on a
//! prefix of a random permutation preceding the sample, so no sample's own
//! label leaks into the residual it is fitted against.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tree::{self, BinMapper, Growth, SplitParams, Tree};
use super::{labels_f64, logloss_raw, FittedParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Ordered,
    Leafwise,
    Levelwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Leaf budget for best-first growth; ignored by the other policies.
    pub max_leaves: usize,
    pub l2_reg: f64,
    pub min_child_weight: f64,
    pub min_split_gain: f64,
    pub max_bins: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 300,
            learning_rate: 0.05,
            max_depth: 6,
            max_leaves: 31,
            l2_reg: 1.0,
            min_child_weight: 1e-3,
            min_split_gain: 0.0,
            max_bins: tree::DEFAULT_MAX_BINS,
        }
    }
}

impl GbdtConfig {
    pub fn ordered_default() -> Self {
        Self { max_depth: 4, ..Self::default() }
    }

    pub fn leafwise_default() -> Self {
        Self { max_leaves: 15, max_depth: 8, ..Self::default() }
    }

    pub fn levelwise_default() -> Self {
        Self { max_depth: 4, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::Config("n_rounds must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be finite and >= 0", self.learning_rate)));
        }
        if !(self.l2_reg >= 0.0 && self.min_child_weight >= 0.0 && self.min_split_gain >= 0.0) {
            return Err(Error::Config("regularization parameters must be >= 0".into()));
        }
        Ok(())
    }

    fn growth(&self, v: Variant) -> Growth {
        match v {
            Variant::Ordered => Growth::Oblivious { depth: self.max_depth },
            Variant::Leafwise => Growth::LeafWise { max_leaves: self.max_leaves, max_depth: self.max_depth },
            Variant::Levelwise => Growth::LevelWise { max_depth: self.max_depth },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub base_score: f64,
    /// Leaf values already include the learning rate.
    pub trees: Vec<Tree>,
}

impl GbdtParams {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

fn grad_hess(f: f64, y: f64) -> (f64, f64) {
    let p = stats::sigmoid(f);
    (p - y, (p * (1.0 - p)).max(1e-16))
}

/// Raw-score updates from a tree given each row's leaf position.
fn apply(f: &mut [f64], leaf_of: &[usize], values: &[f64], scale: f64) {
    for (fi, &k) in f.iter_mut().zip(leaf_of) {
        *fi += scale * values[k];
    }
}

/// Train a boosted ensemble. The training loss trace starts with the loss of
/// the constant base score and has one entry per round after it; a step that
/// would raise the loss is halved until it does not.
pub fn train(data: &Dataset, variant: Variant, cfg: &GbdtConfig, seed: u64) -> Result<(FittedParams, Vec<f64>)> {
    cfg.validate()?;
    data.require_both_classes()?;
    let n = data.n_rows();
    let y = labels_f64(data);
    let mapper = BinMapper::fit(data, cfg.max_bins)?;
    let bins = mapper.bin_dataset(data);
    let base = stats::logit(stats::mean(&y));
    let growth = cfg.growth(variant);
    let split = SplitParams { l2_reg: cfg.l2_reg, min_child_weight: cfg.min_child_weight, min_split_gain: cfg.min_split_gain };

    let mut f = vec![base; n];
    let mut loss = logloss_raw(&f, &y);
    let mut trace = vec![loss];
    let mut trees = Vec::with_capacity(cfg.n_rounds);

    // Ordered boosting state: position of each row in a random permutation and
    // supporting models fitted on permutation prefixes of length 2^j.
    let mut position = vec![0usize; n];
    let mut support: Vec<Vec<f64>> = Vec::new();
    if variant == Variant::Ordered {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut stream(seed, "ordered_permutation", 0));
        for (p, &i) in perm.iter().enumerate() {
            position[i] = p;
        }
        let n_support = if n > 1 { (usize::BITS - (n - 1).leading_zeros()) as usize } else { 0 };
        support = vec![vec![base; n]; n_support];
    }
    // supporting model used for the residual of the row at position p
    let support_of = |p: usize| -> Option<usize> {
        if p == 0 {
            None
        } else {
            Some((usize::BITS - 1 - p.leading_zeros()) as usize)
        }
    };

    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut g_struct = vec![0.0; n];
    let mut h_struct = vec![0.0; n];
    for _ in 0..cfg.n_rounds {
        for i in 0..n {
            (g[i], h[i]) = grad_hess(f[i], y[i]);
        }
        let (gs, hs) = if variant == Variant::Ordered {
            for i in 0..n {
                let fi = support_of(position[i]).map_or(base, |j| support[j][i]);
                (g_struct[i], h_struct[i]) = grad_hess(fi, y[i]);
            }
            (&g_struct, &h_struct)
        } else {
            (&g, &h)
        };

        let mut grown = tree::grow(&bins, &mapper, gs, hs, (0..n).collect(), growth, split);
        let leaf_of = grown.leaf_of_rows(n);
        let mut values: Vec<f64> = grown
            .newton_values(&g, &h, cfg.l2_reg, |_| true)
            .into_iter()
            .map(|v| v * cfg.learning_rate)
            .collect();

        // step-halving safeguard
        let mut scale = 1.0;
        let mut candidate = f.clone();
        loop {
            candidate.copy_from_slice(&f);
            apply(&mut candidate, &leaf_of, &values, scale);
            let new_loss = logloss_raw(&candidate, &y);
            if new_loss <= loss {
                loss = new_loss;
                break;
            }
            scale *= 0.5;
            if scale < 1e-6 {
                scale = 0.0;
                candidate.copy_from_slice(&f);
                break;
            }
        }
        f = candidate;
        values.iter_mut().for_each(|v| *v *= scale);
        grown.set_leaf_values(&values);

        if variant == Variant::Ordered {
            for (j, fj) in support.iter_mut().enumerate() {
                let prefix = 1usize << j;
                // rows that model j is fitted on or predicts for
                let reach = (prefix << 1).min(n);
                let mut gj = vec![0.0; n];
                let mut hj = vec![0.0; n];
                for i in 0..n {
                    if position[i] < reach {
                        (gj[i], hj[i]) = grad_hess(fj[i], y[i]);
                    }
                }
                let vj = grown.newton_values(&gj, &hj, cfg.l2_reg, |i| position[i] < prefix);
                for i in 0..n {
                    if position[i] < reach {
                        fj[i] += cfg.learning_rate * vj[leaf_of[i]];
                    }
                }
            }
        }
        trace.push(loss);
        trees.push(grown.tree);
    }

    Ok((FittedParams::Gbdt(GbdtParams { base_score: base, trees }), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMeta;
    use crate::models::tree::Node;
    use crate::models::{train as train_model, ModelConfig};

    fn xor() -> Dataset {
        Dataset::from_rows(
            &[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![false, true, true, false],
            vec![FeatureMeta::continuous("a"), FeatureMeta::continuous("b")],
        )
        .unwrap()
    }

    fn noisy(n: usize) -> Dataset {
        let mut rng = stream(5, "test", 0);
        use rand::Rng as _;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random(), rng.random()]).collect();
        let labels = rows.iter().map(|r| r[0] + 0.5 * r[1] + 0.3 * rng.random::<f64>() > 0.9).collect();
        let meta = (0..3).map(|j| FeatureMeta::continuous(format!("x{j}"))).collect();
        Dataset::from_rows(&rows, labels, meta).unwrap()
    }

    #[test]
    fn zero_learning_rate_predicts_base_rate() {
        let d = noisy(200);
        let cfg = GbdtConfig { n_rounds: 1, learning_rate: 0.0, ..Default::default() };
        let m = train_model(&ModelConfig::GbdtLevelwise(cfg), &d, 0).unwrap();
        for p in m.predict_proba(&d).unwrap() {
            assert!((p - d.prevalence()).abs() < 1e-12);
        }
    }

    #[test]
    fn xor_is_learned_by_every_variant() {
        let d = xor();
        let cfg = GbdtConfig { n_rounds: 50, max_depth: 2, max_leaves: 4, ..Default::default() };
        for mc in [
            ModelConfig::GbdtOrdered(cfg.clone()),
            ModelConfig::GbdtLeafwise(cfg.clone()),
            ModelConfig::GbdtLevelwise(cfg.clone()),
        ] {
            let m = train_model(&mc, &d, 1).unwrap();
            let p = m.predict_proba(&d).unwrap();
            for (pi, &yi) in p.iter().zip(d.labels()) {
                assert_eq!(*pi >= 0.5, yi, "{:?}", mc.family());
            }
        }
    }

    #[test]
    fn loss_trace_never_increases() {
        let d = noisy(500);
        for v in [Variant::Ordered, Variant::Leafwise, Variant::Levelwise] {
            let cfg = GbdtConfig { n_rounds: 60, learning_rate: 0.5, ..Default::default() };
            let (_, trace) = train(&d, v, &cfg, 2).unwrap();
            assert_eq!(trace.len(), 61);
            assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{v:?}");
            assert!(trace[60] < trace[0]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let d = noisy(300);
        let cfg = GbdtConfig { n_rounds: 20, ..Default::default() };
        let a = train(&d, Variant::Ordered, &cfg, 7).unwrap();
        let b = train(&d, Variant::Ordered, &cfg, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn manual_tree_walk_matches_prediction() {
        let t1 = Tree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, cover: 2.0 },
                Node::Leaf { value: -0.4, cover: 1.0 },
                Node::Leaf { value: 0.6, cover: 1.0 },
            ],
        };
        let t2 = Tree {
            nodes: vec![
                Node::Split { feature: 1, threshold: 2.0, left: 1, right: 2, cover: 2.0 },
                Node::Leaf { value: 0.1, cover: 1.0 },
                Node::Leaf { value: -0.3, cover: 1.0 },
            ],
        };
        let p = GbdtParams { base_score: 0.2, trees: vec![t1, t2] };
        assert!((p.raw_score(&[0.7, 1.0]) - (0.2 + 0.6 + 0.1)).abs() < 1e-15);
        assert!((p.raw_score(&[0.5, 3.0]) - (0.2 - 0.4 - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn bad_config_is_rejected() {
        let d = xor();
        let cfg = GbdtConfig { n_rounds: 0, ..Default::default() };
        assert!(matches!(train(&d, Variant::Levelwise, &cfg, 0), Err(Error::Config(_))));
        let cfg = GbdtConfig { learning_rate: -0.1, ..Default::default() };
        assert!(matches!(train(&d, Variant::Levelwise, &cfg, 0), Err(Error::Config(_))));
    }
}
