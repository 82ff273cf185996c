//! Single-hidden-layer perceptron: ReLU hidden units, sigmoid output,
//! cross-entropy loss, Adam, inverted dropout on the hidden layer.
//!
//! Parameters live in one flat vector laid out as
//! `[W1 (hidden x inputs, row-major), b1, w2, b2]`. With zero hidden units
//! `w2` acts on the inputs directly and the model is a logistic regression.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{labels_f64, softplus, FittedParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden_units: usize,
    /// Probability of dropping a hidden unit during training.
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight decay `(l2 / 2) * |W|^2` on both weight layers.
    pub l2: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden_units: 32, dropout: 0.1, learning_rate: 0.005, batch_size: 64, epochs: 60, l2: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, opt: &Adam, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - opt.beta1.powi(self.t);
        let c2 = 1.0 - opt.beta2.powi(self.t);
        for k in 0..theta.len() {
            self.m[k] = opt.beta1 * self.m[k] + (1.0 - opt.beta1) * grad[k];
            self.v[k] = opt.beta2 * self.v[k] + (1.0 - opt.beta2) * grad[k] * grad[k];
            theta[k] -= opt.learning_rate * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + opt.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub n_inputs: usize,
    pub hidden_units: usize,
    pub theta: Vec<f64>,
}

impl MlpParams {
    pub fn n_params(n_inputs: usize, hidden: usize) -> usize {
        if hidden == 0 {
            n_inputs + 1
        } else {
            hidden * n_inputs + hidden + hidden + 1
        }
    }

    fn layout(&self) -> (usize, usize, usize) {
        let (d, h) = (self.n_inputs, self.hidden_units);
        // offsets of b1, w2, b2
        (h * d, h * d + h, h * d + h + if h == 0 { d } else { h })
    }

    pub fn raw_score(&self, x: &[f64]) -> f64 {
        forward(self, x, None).0
    }
}

/// Raw score and hidden activations (after dropout scaling when a mask is given).
fn forward(p: &MlpParams, x: &[f64], mask: Option<&[f64]>) -> (f64, Vec<f64>) {
    let (d, h) = (p.n_inputs, p.hidden_units);
    let (ob1, ow2, ob2) = p.layout();
    let t = &p.theta;
    if h == 0 {
        let s = t[ob2] + t[ow2..ow2 + d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        return (s, Vec::new());
    }
    let mut a = vec![0.0; h];
    for k in 0..h {
        let z = t[ob1 + k] + t[k * d..(k + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        a[k] = z.max(0.0) * mask.map_or(1.0, |m| m[k]);
    }
    let s = t[ob2] + t[ow2..ow2 + h].iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
    (s, a)
}

fn weight_penalty(p: &MlpParams, l2: f64) -> f64 {
    let (ob1, ow2, ob2) = p.layout();
    let sq: f64 = p.theta[..ob1].iter().chain(&p.theta[ow2..ob2]).map(|w| w * w).sum();
    0.5 * l2 * sq
}

/// Mean cross-entropy plus weight decay, without dropout.
pub fn objective(p: &MlpParams, x: &[f64], y: &[f64], l2: f64) -> f64 {
    let n = y.len();
    let bce: f64 = x
        .chunks(p.n_inputs)
        .zip(y)
        .map(|(r, &yi)| {
            let s = forward(p, r, None).0;
            softplus(s) - yi * s
        })
        .sum();
    bce / n as f64 + weight_penalty(p, l2)
}

/// Gradient of the objective over the rows in `rows`, with optional
/// per-row dropout masks (already scaled by `1 / (1 - rate)`).
pub fn gradient(p: &MlpParams, x: &[f64], y: &[f64], rows: &[usize], l2: f64, masks: Option<&[Vec<f64>]>) -> Vec<f64> {
    let (d, h) = (p.n_inputs, p.hidden_units);
    let (ob1, ow2, ob2) = p.layout();
    let t = &p.theta;
    let mut g = vec![0.0; t.len()];
    let inv_n = 1.0 / rows.len() as f64;
    for (r_k, &i) in rows.iter().enumerate() {
        let xi = &x[i * d..(i + 1) * d];
        let mask = masks.map(|m| m[r_k].as_slice());
        let (s, a) = forward(p, xi, mask);
        let e = (stats::sigmoid(s) - y[i]) * inv_n;
        g[ob2] += e;
        if h == 0 {
            for (gk, &v) in g[ow2..ow2 + d].iter_mut().zip(xi) {
                *gk += e * v;
            }
            continue;
        }
        for k in 0..h {
            g[ow2 + k] += e * a[k];
            if a[k] > 0.0 {
                // a_k = relu(z_k) * m_k, so da/dz = m_k on the active side
                let back = e * t[ow2 + k] * mask.map_or(1.0, |m| m[k]);
                g[ob1 + k] += back;
                for (gk, &v) in g[k * d..(k + 1) * d].iter_mut().zip(xi) {
                    *gk += back * v;
                }
            }
        }
    }
    for k in (0..ob1).chain(ow2..ob2) {
        g[k] += l2 * t[k];
    }
    g
}

fn init(d: usize, h: usize, prior: f64, seed: u64) -> MlpParams {
    let mut rng = stream(seed, "mlp_init", 0);
    let mut p = MlpParams { n_inputs: d, hidden_units: h, theta: vec![0.0; MlpParams::n_params(d, h)] };
    let (ob1, ow2, ob2) = p.layout();
    if h > 0 {
        let he = Normal::new(0.0, (2.0 / d.max(1) as f64).sqrt()).expect("positive sd");
        for w in &mut p.theta[..ob1] {
            *w = he.sample(&mut rng);
        }
        let out = Normal::new(0.0, (1.0 / h as f64).sqrt()).expect("positive sd");
        for w in &mut p.theta[ow2..ob2] {
            *w = out.sample(&mut rng);
        }
    }
    p.theta[ob2] = stats::logit(prior.clamp(1e-6, 1.0 - 1e-6));
    p
}

pub(super) fn train(data: &Dataset, cfg: &MlpConfig, seed: u64) -> Result<(FittedParams, Vec<f64>)> {
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::Config(format!("dropout {} outside [0, 1)", cfg.dropout)));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("batch_size, epochs and learning_rate must be positive".into()));
    }
    data.require_both_classes()?;
    let (n, d, h) = (data.n_rows(), data.n_cols(), cfg.hidden_units);
    let x = data.values();
    let y = labels_f64(data);
    let mut p = init(d, h, stats::mean(&y), seed);
    let opt = Adam { learning_rate: cfg.learning_rate, ..Adam::default() };
    let mut state = AdamState::new(p.theta.len());
    let keep = 1.0 - cfg.dropout;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = stream(seed, "mlp_epoch", epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let masks: Option<Vec<Vec<f64>>> = (h > 0 && cfg.dropout > 0.0).then(|| {
                batch
                    .iter()
                    .map(|_| (0..h).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect())
                    .collect()
            });
            let g = gradient(&p, x, &y, batch, cfg.l2, masks.as_deref());
            state.step(&opt, &mut p.theta, &g);
        }
        let loss = objective(&p, x, &y, cfg.l2);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        trace.push(loss);
    }
    Ok((FittedParams::Mlp(p), trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_parabola() {
        let opt = Adam::default();
        let mut s = AdamState::new(1);
        let mut w = [1.0];
        let mut reached = None;
        for step in 1..=500 {
            let g = [2.0 * w[0]];
            s.step(&opt, &mut w, &g);
            if w[0].abs() < 1e-3 {
                reached = Some(step);
                break;
            }
        }
        assert!(reached.is_some(), "final w {}", w[0]);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = stream(11, "mlp_fd", 0);
        let (d, h, n) = (4, 3, 10);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let p = init(d, h, 0.5, 3);
        let rows: Vec<usize> = (0..n).collect();
        let g = gradient(&p, &x, &y, &rows, 0.01, None);
        let eps = 1e-6;
        for k in 0..p.theta.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a.theta[k] += eps;
            b.theta[k] -= eps;
            let fd = (objective(&a, &x, &y, 0.01) - objective(&b, &x, &y, 0.01)) / (2.0 * eps);
            assert!((fd - g[k]).abs() <= 1e-4 * g[k].abs().max(1e-4), "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn diverging_learning_rate_is_reported() {
        let x = vec![1e300, -1e300, 1e300, -1e300];
        let ds = Dataset::new(
            x,
            vec![true, false, false, true],
            vec![crate::dataset::FeatureMeta::continuous("x")],
        )
        .unwrap();
        let cfg = MlpConfig { learning_rate: 1e10, epochs: 5, ..Default::default() };
        assert!(matches!(train(&ds, &cfg, 0), Err(Error::Diverged { .. })));
    }
}
