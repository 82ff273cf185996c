//! Differential-evolution adaptive Metropolis.
//!
//! Chains advance in synchronized generations. A proposal for chain `i`
//! perturbs a random subset of coordinates (each kept with the crossover
//! probability) by a scaled sum of differences between other chains' states
//! from the previous generation, plus a small jitter.

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Generations per chain, burn-in included.
    pub n_iterations: usize,
    pub burn_in_fraction: f64,
    pub crossover: f64,
    /// Numerator of the jump rate `jump_scale / sqrt(2 * pairs * d')`.
    pub jump_scale: f64,
    /// Every this-many generations the jump rate is 1 to allow mode hopping; 0 disables.
    pub unit_jump_every: usize,
    /// Chain pairs whose differences are summed per proposal.
    pub n_pairs: usize,
    /// Half-width of the multiplicative jitter on the difference vector.
    pub jitter: f64,
    /// Standard deviation of the additive proposal noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 38,
            n_iterations: 2000,
            burn_in_fraction: 0.5,
            crossover: 0.9,
            jump_scale: 2.38,
            unit_jump_every: 5,
            n_pairs: 1,
            jitter: 0.05,
            noise: 1e-6,
            seed: 20_240_501,
        }
    }
}

impl SamplerConfig {
    pub fn burn_in(&self) -> usize {
        (self.n_iterations as f64 * self.burn_in_fraction).floor() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.n_chains < 2 * self.n_pairs + 1 || self.n_pairs == 0 {
            return Err(Error::Config(format!(
                "{} chains cannot supply {} distinct difference pairs",
                self.n_chains, self.n_pairs
            )));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config("burn_in_fraction must be in [0, 1)".into()));
        }
        if !(self.crossover > 0.0 && self.crossover <= 1.0) {
            return Err(Error::Config("crossover must be in (0, 1]".into()));
        }
        if self.n_iterations <= self.burn_in() {
            return Err(Error::Config("no iterations left after burn-in".into()));
        }
        if !(self.jump_scale > 0.0) || self.jitter < 0.0 || self.noise < 0.0 {
            return Err(Error::Config("jump_scale must be positive, jitter and noise nonnegative".into()));
        }
        Ok(())
    }
}

/// Retained draws and convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DreamOutput {
    pub dim: usize,
    pub n_chains: usize,
    /// Retained draws per chain.
    pub n_retained: usize,
    /// `samples[c][t * dim + j]` is coordinate `j` of retained draw `t` of chain `c`.
    pub samples: Vec<Vec<f64>>,
    /// Acceptance rate over the retained generations.
    pub acceptance_rate: f64,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    /// Set when fewer than 1% of post-burn-in proposals were accepted.
    pub stagnant: bool,
}

impl DreamOutput {
    /// Trace of coordinate `j` in chain `c`.
    pub fn trace(&self, c: usize, j: usize) -> Vec<f64> {
        self.samples[c].iter().skip(j).step_by(self.dim).copied().collect()
    }

    pub fn traces(&self, j: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains).map(|c| self.trace(c, j)).collect()
    }

    /// Every retained draw, chain by chain.
    pub fn draws(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().flat_map(move |s| s.chunks(self.dim))
    }

    pub fn pooled_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        let n = (self.n_chains * self.n_retained) as f64;
        for x in self.draws() {
            for (a, v) in m.iter_mut().zip(x) {
                *a += v / n;
            }
        }
        m
    }
}

fn accept(rng: &mut crate::rng::Rng, proposed: f64, current: f64) -> bool {
    if proposed.is_nan() || proposed == f64::NEG_INFINITY {
        return false;
    }
    proposed >= current || rng.random::<f64>().ln() < proposed - current
}

/// Run the sampler from the given starting states, one per chain.
pub fn dream_sample<F>(log_density: F, initial: Vec<Vec<f64>>, cfg: &SamplerConfig) -> Result<DreamOutput>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if initial.len() != cfg.n_chains {
        return Err(Error::Config(format!("{} initial states for {} chains", initial.len(), cfg.n_chains)));
    }
    let dim = initial.first().map_or(0, Vec::len);
    if dim == 0 || initial.iter().any(|s| s.len() != dim) {
        return Err(Error::Config("initial states must share a positive dimension".into()));
    }
    if cfg.n_chains < 2 * dim {
        log::warn!("{} chains for {} dimensions; at least {} are recommended", cfg.n_chains, dim, 2 * dim);
    }
    let mut states = initial;
    let mut logp: Vec<f64> = states.iter().map(|s| log_density(s)).collect();
    if let Some(c) = logp.iter().position(|l| !l.is_finite()) {
        return Err(Error::Sampler(format!("log density is not finite at the initial state of chain {c}")));
    }
    let burn = cfg.burn_in();
    let n_keep = cfg.n_iterations - burn;
    let n = cfg.n_chains;
    let mut samples: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(n_keep * dim)).collect();
    let mut accepted_after_burn = 0usize;

    for gen in 0..cfg.n_iterations {
        let unit = cfg.unit_jump_every > 0 && (gen + 1) % cfg.unit_jump_every == 0;
        let prev = &states;
        let moves: Vec<(Vec<f64>, f64, bool)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(cfg.seed, "dream", (gen * n + i) as u64);
                // 2 * n_pairs distinct partners, none equal to i
                let partners: Vec<usize> = sample(&mut rng, n - 1, 2 * cfg.n_pairs)
                    .into_iter()
                    .map(|k| if k >= i { k + 1 } else { k })
                    .collect();
                let mut mask: Vec<bool> = (0..dim).map(|_| rng.random::<f64>() < cfg.crossover).collect();
                if !mask.iter().any(|&m| m) {
                    mask[rng.random_range(0..dim)] = true;
                }
                let d_eff = mask.iter().filter(|&&m| m).count();
                let gamma = if unit { 1.0 } else { cfg.jump_scale / (2.0 * cfg.n_pairs as f64 * d_eff as f64).sqrt() };
                let mut x = prev[i].clone();
                for j in 0..dim {
                    if !mask[j] {
                        continue;
                    }
                    let diff: f64 = partners.chunks(2).map(|p| prev[p[0]][j] - prev[p[1]][j]).sum();
                    let e = cfg.jitter * (2.0 * rng.random::<f64>() - 1.0);
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    x[j] += (1.0 + e) * gamma * diff + cfg.noise * eps;
                }
                let lp = log_density(&x);
                let ok = accept(&mut rng, lp, logp[i]);
                (x, lp, ok)
            })
            .collect();
        for (i, (x, lp, ok)) in moves.into_iter().enumerate() {
            if ok {
                states[i] = x;
                logp[i] = lp;
                if gen >= burn {
                    accepted_after_burn += 1;
                }
            }
            if gen >= burn {
                samples[i].extend_from_slice(&states[i]);
            }
        }
    }

    let acceptance_rate = accepted_after_burn as f64 / (n * n_keep) as f64;
    let stagnant = acceptance_rate < 0.01;
    if stagnant {
        log::warn!("sampler stagnated: post-burn-in acceptance rate {acceptance_rate:.4}");
    }
    let mut out = DreamOutput {
        dim,
        n_chains: n,
        n_retained: n_keep,
        samples,
        acceptance_rate,
        rhat: Vec::new(),
        ess: Vec::new(),
        stagnant,
    };
    let (rhat, ess): (Vec<f64>, Vec<f64>) = (0..dim)
        .into_par_iter()
        .map(|j| {
            let t = out.traces(j);
            (split_rhat(&t), effective_sample_size(&t))
        })
        .unzip();
    out.rhat = rhat;
    out.ess = ess;
    Ok(out)
}

fn within_between(chains: &[Vec<f64>]) -> (f64, f64, usize) {
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(c)).collect();
    let w = chains.iter().map(|c| stats::sample_variance(c)).sum::<f64>() / chains.len() as f64;
    let b = n as f64 * stats::sample_variance(&means);
    (w, b, n)
}

/// Split R-hat: each chain is halved and the halves are compared as chains.
/// Returns 1 for traces with no variation at all.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if chains.is_empty() || half < 2 {
        return f64::NAN;
    }
    let split: Vec<Vec<f64>> =
        chains.iter().flat_map(|c| [c[..half].to_vec(), c[c.len() - half..].to_vec()]).collect();
    let (w, b, n) = within_between(&split);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    (var_plus / w).sqrt()
}

/// Multi-chain effective sample size from autocorrelations truncated by
/// Geyer's initial monotone positive sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(c)).collect();
    let acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| (0..n - lag).map(|t| (c[t] - mu) * (c[t + lag] - mu)).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let owned: Vec<Vec<f64>> = chains.iter().map(|c| c.to_vec()).collect();
    let (w, b, _) = within_between(&owned);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    if var_plus <= 0.0 {
        return (m * n) as f64;
    }
    let rho = |lag: usize| 1.0 - (w * (n as f64 - 1.0) / n as f64 - acov(lag)) / var_plus;
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let total = (m * n) as f64;
    // same floor on tau as Stan, which caps ESS at M*N*log10(M*N)
    total / tau.max(1.0 / total.log10().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    fn normal_init(n: usize, dim: usize, sd: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream(seed, "init", 0);
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| (0..dim).map(|_| d.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn one_dimensional_gaussian_moments() {
        let cfg = SamplerConfig { seed: 4, ..Default::default() };
        let target = |x: &[f64]| -0.5 * ((x[0] - 3.0) / 2.0).powi(2);
        let out = dream_sample(target, normal_init(38, 1, 2.0, 1).into_iter().map(|v| vec![v[0] + 3.0]).collect(), &cfg)
            .unwrap();
        let xs: Vec<f64> = out.draws().map(|x| x[0]).collect();
        assert!((stats::mean(&xs) - 3.0).abs() < 0.02 * 3.0, "mean {}", stats::mean(&xs));
        assert!((stats::sample_variance(&xs) / 4.0 - 1.0).abs() < 0.02, "var {}", stats::sample_variance(&xs));
        assert!(out.rhat[0] < 1.05);
    }

    #[test]
    fn narrow_target_concentrates() {
        let cfg = SamplerConfig { n_iterations: 1000, ..Default::default() };
        let target = |x: &[f64]| -0.5 * (x[0] / 1e-3).powi(2) - 0.5 * (x[1] / 1e-3).powi(2);
        let out = dream_sample(target, normal_init(38, 2, 1e-3, 2), &cfg).unwrap();
        let xs: Vec<f64> = out.draws().map(|x| x[0]).collect();
        assert!(stats::sample_variance(&xs) < 1.0);
        assert!(stats::mean(&xs).abs() < 1e-3);
    }

    #[test]
    fn same_seed_same_draws() {
        let cfg = SamplerConfig { n_iterations: 200, ..Default::default() };
        let t = |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let a = dream_sample(t, normal_init(38, 3, 1.0, 3), &cfg).unwrap();
        let b = dream_sample(t, normal_init(38, 3, 1.0, 3), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_start_is_rejected() {
        let t = |x: &[f64]| if x[0] > 0.0 { 0.0 } else { f64::NEG_INFINITY };
        let init = (0..38).map(|i| vec![i as f64 - 1.0]).collect();
        assert!(matches!(dream_sample(t, init, &SamplerConfig::default()), Err(Error::Sampler(_))));
    }

    #[test]
    fn rhat_flags_separated_chains() {
        let a: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 50.0).collect();
        assert!(split_rhat(&[a.clone(), b]) > 2.0);
        assert!(split_rhat(&[a.clone(), a]) < 1.1);
    }

    #[test]
    fn ess_of_independent_draws_is_near_total() {
        let mut rng = stream(9, "ess", 0);
        let chains: Vec<Vec<f64>> =
            (0..4).map(|_| (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let e = effective_sample_size(&chains);
        assert!(e > 3000.0 && e < 5500.0, "ess {e}");
    }
}
