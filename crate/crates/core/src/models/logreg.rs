//! Penalized logistic regression. The ridge problem is smooth and is solved
//! by damped Newton steps; the lasso problem uses accelerated proximal
//! gradient descent with backtracking. The intercept is never penalized.

use serde::{Deserialize, Serialize};

use super::{labels_f64, softplus, FittedParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogregConfig {
    pub penalty: Penalty,
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogregConfig {
    fn default() -> Self {
        Self { penalty: Penalty::L2, lambda: 1e-3, max_iter: 2000, tol: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogregParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LogregParams {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Dense problem view: row-major features and 0/1 targets.
pub struct Problem<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub d: usize,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn scores(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.x.chunks(self.d).map(|r| b + r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>()).collect()
    }

    /// Mean cross-entropy.
    pub fn bce(&self, w: &[f64], b: f64) -> f64 {
        let s = self.scores(w, b);
        s.iter().zip(self.y).map(|(&f, &y)| softplus(f) - y * f).sum::<f64>() / self.n() as f64
    }

    /// Mean cross-entropy plus `(l2 / 2) * |w|^2`.
    pub fn smooth_objective(&self, w: &[f64], b: f64, l2: f64) -> f64 {
        self.bce(w, b) + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Gradient of [`Problem::smooth_objective`] as (d/dw, d/db).
    pub fn smooth_gradient(&self, w: &[f64], b: f64, l2: f64) -> (Vec<f64>, f64) {
        let n = self.n() as f64;
        let mut gw: Vec<f64> = w.iter().map(|v| l2 * v).collect();
        let mut gb = 0.0;
        for (r, &y) in self.x.chunks(self.d).zip(self.y) {
            let f = b + r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            let e = (stats::sigmoid(f) - y) / n;
            gb += e;
            for (g, &a) in gw.iter_mut().zip(r) {
                *g += e * a;
            }
        }
        (gw, gb)
    }
}

/// Full penalized objective.
pub fn objective(p: &Problem, w: &[f64], b: f64, penalty: Penalty, lambda: f64) -> f64 {
    match penalty {
        Penalty::L2 => p.smooth_objective(w, b, lambda),
        Penalty::L1 => p.bce(w, b) + lambda * w.iter().map(|v| v.abs()).sum::<f64>(),
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn fit(p: &Problem, cfg: &LogregConfig) -> Result<LogregParams> {
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::Config(format!("lambda {} must be finite and >= 0", cfg.lambda)));
    }
    if cfg.max_iter == 0 {
        return Err(Error::Config("max_iter must be positive".into()));
    }
    match cfg.penalty {
        Penalty::L2 => fit_newton(p, cfg),
        Penalty::L1 => fit_fista(p, cfg),
    }
}

/// Damped Newton on the ridge objective with an Armijo backtracking search.
fn fit_newton(p: &Problem, cfg: &LogregConfig) -> Result<LogregParams> {
    let d = p.d;
    let k = d + 1;
    let n = p.n() as f64;
    let prior = stats::mean(p.y).clamp(1e-12, 1.0 - 1e-12);
    // theta = [w, b]
    let mut theta = vec![0.0; k];
    theta[d] = stats::logit(prior);
    let obj = |t: &[f64]| p.smooth_objective(&t[..d], t[d], cfg.lambda);
    let mut f = obj(&theta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let mut g = nalgebra::DVector::<f64>::zeros(k);
        let mut h = nalgebra::DMatrix::<f64>::zeros(k, k);
        for (r, &y) in p.x.chunks(d).zip(p.y) {
            let s = theta[d] + r.iter().zip(&theta).map(|(a, c)| a * c).sum::<f64>();
            let pr = stats::sigmoid(s);
            let (e, wgt) = ((pr - y) / n, pr * (1.0 - pr) / n);
            for a in 0..k {
                let xa = if a < d { r[a] } else { 1.0 };
                g[a] += e * xa;
                for c in 0..=a {
                    let xc = if c < d { r[c] } else { 1.0 };
                    h[(a, c)] += wgt * xa * xc;
                }
            }
        }
        for a in 0..k {
            for c in 0..a {
                h[(c, a)] = h[(a, c)];
            }
            if a < d {
                g[a] += cfg.lambda * theta[a];
                h[(a, a)] += cfg.lambda;
            }
        }
        let mut jitter = 0.0;
        let step = loop {
            let mut hj = h.clone();
            for a in 0..k {
                hj[(a, a)] += jitter;
            }
            if let Some(ch) = hj.cholesky() {
                break ch.solve(&g);
            }
            jitter = if jitter == 0.0 { 1e-10 * (h.trace() / k as f64).max(1e-12) } else { jitter * 10.0 };
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let next = loop {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let fc = obj(&cand);
            if fc <= f - 1e-4 * t * slope || t < 1e-10 {
                break (cand, fc);
            }
            t *= 0.5;
        };
        let change = theta.iter().zip(&next.0).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        theta = next.0;
        f = next.1;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("logistic regression stopped after {iterations} Newton iterations");
    }
    Ok(LogregParams { intercept: theta[d], weights: theta[..d].to_vec(), iterations, converged })
}

/// FISTA with backtracking and function-value restarts.
fn fit_fista(p: &Problem, cfg: &LogregConfig) -> Result<LogregParams> {
    let d = p.d;
    let l2 = if cfg.penalty == Penalty::L2 { cfg.lambda } else { 0.0 };
    let l1 = if cfg.penalty == Penalty::L1 { cfg.lambda } else { 0.0 };
    let prior = stats::mean(p.y).clamp(1e-12, 1.0 - 1e-12);

    let mut w = vec![0.0; d];
    let mut b = stats::logit(prior);
    let (mut zw, mut zb) = (w.clone(), b);
    let mut t = 1.0f64;
    let mut step_l = 1.0f64;
    let mut obj = objective(p, &w, b, cfg.penalty, cfg.lambda);
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let (gw, gb) = p.smooth_gradient(&zw, zb, l2);
        let fz = p.smooth_objective(&zw, zb, l2);
        let (nw, nb) = loop {
            let nw: Vec<f64> = zw.iter().zip(&gw).map(|(z, g)| soft_threshold(z - g / step_l, l1 / step_l)).collect();
            let nb = zb - gb / step_l;
            // sufficient decrease for the smooth part
            let dw: Vec<f64> = nw.iter().zip(&zw).map(|(a, c)| a - c).collect();
            let db = nb - zb;
            let lin = dw.iter().zip(&gw).map(|(a, g)| a * g).sum::<f64>() + db * gb;
            let sq = dw.iter().map(|v| v * v).sum::<f64>() + db * db;
            if p.smooth_objective(&nw, nb, l2) <= fz + lin + 0.5 * step_l * sq + 1e-15 * fz.abs() {
                break (nw, nb);
            }
            step_l *= 2.0;
            if step_l > 1e20 {
                return Err(Error::Config("logistic regression line search failed".into()));
            }
        };
        let new_obj = objective(p, &nw, nb, cfg.penalty, cfg.lambda);
        let change = nw.iter().zip(&w).map(|(a, c)| (a - c).abs()).fold((nb - b).abs(), f64::max);
        if new_obj > obj {
            // restart momentum from the last iterate
            t = 1.0;
            zw.clone_from(&w);
            zb = b;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        zw = nw.iter().zip(&w).map(|(a, c)| a + mom * (a - c)).collect();
        zb = nb + mom * (nb - b);
        t = t_next;
        w = nw;
        b = nb;
        obj = new_obj;
        // let the step size grow back slowly
        step_l = (step_l * 0.9).max(1e-6);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        let (gw, gb) = p.smooth_gradient(&w, b, l2);
        let norm = (gw.iter().map(|v| v * v).sum::<f64>() + gb * gb).sqrt();
        log::warn!("logistic regression stopped after {iterations} iterations; gradient norm {norm:.3e}");
    }
    Ok(LogregParams { weights: w, intercept: b, iterations, converged })
}

pub(super) fn train(data: &Dataset, cfg: &LogregConfig) -> Result<(FittedParams, Vec<f64>)> {
    data.require_both_classes()?;
    let y = labels_f64(data);
    let p = Problem { x: data.values(), y: &y, d: data.n_cols() };
    let fitted = fit(&p, cfg)?;
    let loss = objective(&p, &fitted.weights, fitted.intercept, cfg.penalty, cfg.lambda);
    Ok((FittedParams::Logreg(fitted), vec![loss]))
}
