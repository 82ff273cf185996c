//! Posterior risk distributions by sampling patient feature profiles.
//!
//! The published posterior formula averages model outputs over sampled
//! "parameters" while the text insists the classifier is never retrained.
//! Here the sampled quantity is the patient's feature vector: profiles are
//! drawn by [`dream_sample`] from a prior built from group-conditional
//! feature statistics (by default the creatinine-elevation group), and each
//! draw is pushed through the fixed trained model. The resulting spread of
//! predicted risk is the reported posterior.

mod sampler;

pub use sampler::{dream_sample, effective_sample_size, split_rhat, DreamOutput, SamplerConfig};

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::risk::RiskModel;
use crate::stats;
use crate::synth::{FeatureSpec, GroupStats, Marginal};

pub const POSTERIOR_SCHEMA_VERSION: u32 = 1;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// One feature's prior within one mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorMarginal {
    /// `N(mu, sigma²)` restricted to `[lo, hi]`; a missing bound is open.
    TruncatedNormal { mu: f64, sigma: f64, lo: Option<f64>, hi: Option<f64> },
    /// `ln x ~ N(mu, sigma²)`. The sampled coordinate is `ln x`, which keeps
    /// random-walk proposals efficient on the long right tail.
    LogNormal { mu: f64, sigma: f64 },
    /// A 0/1 feature carried by a latent coordinate `u`: the feature is 1
    /// when `u > 0`, and `u` has density `2 * rate * phi(u)` on the positive
    /// side and `2 * (1 - rate) * phi(u)` on the other.
    Bernoulli { rate: f64 },
}

impl PriorMarginal {
    /// Fit to a target mean and standard deviation the same way the cohort
    /// generator does, so prior and training support agree.
    pub fn fit(id: &str, marginal: Marginal, s: GroupStats) -> Result<Self> {
        Ok(match marginal {
            Marginal::Bernoulli => {
                if !(0.0..=1.0).contains(&s.mean) {
                    return Err(Error::InvalidSpec(format!("`{id}`: rate {} outside [0, 1]", s.mean)));
                }
                PriorMarginal::Bernoulli { rate: s.mean }
            }
            Marginal::LogNormal => {
                if !(s.mean > 0.0 && s.sd > 0.0) {
                    return Err(Error::InvalidSpec(format!("`{id}`: lognormal needs positive mean and sd")));
                }
                let sigma2 = (1.0 + (s.sd / s.mean).powi(2)).ln();
                PriorMarginal::LogNormal { mu: s.mean.ln() - sigma2 / 2.0, sigma: sigma2.sqrt() }
            }
            Marginal::TruncatedNormal { lo, hi } => {
                let (l, h) = (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY));
                let (mu, sigma) = if l.is_infinite() && h.is_infinite() {
                    (s.mean, s.sd)
                } else {
                    stats::match_truncated_normal(s.mean, s.sd, l, h).ok_or_else(|| {
                        Error::InvalidSpec(format!("`{id}`: no truncated normal has mean {} and sd {}", s.mean, s.sd))
                    })?
                };
                PriorMarginal::TruncatedNormal { mu, sigma, lo, hi }
            }
        })
    }

    fn bounds(lo: Option<f64>, hi: Option<f64>) -> (f64, f64) {
        (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))
    }

    /// Normalized log density of the sampled coordinate (`ln x` for
    /// lognormal features, the latent coordinate for binary ones).
    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            PriorMarginal::TruncatedNormal { mu, sigma, lo, hi } => {
                let (l, h) = Self::bounds(lo, hi);
                if x < l || x > h {
                    return f64::NEG_INFINITY;
                }
                let z = (x - mu) / sigma;
                let mass = stats::normal_interval_mass((l - mu) / sigma, (h - mu) / sigma);
                -0.5 * z * z - LN_SQRT_2PI - sigma.ln() - mass.ln()
            }
            PriorMarginal::LogNormal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - LN_SQRT_2PI - sigma.ln()
            }
            PriorMarginal::Bernoulli { rate } => {
                let side = if x > 0.0 { rate } else { 1.0 - rate };
                (2.0 * side).ln() - 0.5 * x * x - LN_SQRT_2PI
            }
        }
    }

    /// Draw a sampled coordinate.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            PriorMarginal::TruncatedNormal { mu, sigma, lo, hi } => {
                let (l, h) = Self::bounds(lo, hi);
                let n = Normal::new(mu, sigma).expect("positive sigma");
                loop {
                    let x = n.sample(rng);
                    if x >= l && x <= h {
                        return x;
                    }
                }
            }
            PriorMarginal::LogNormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + sigma * z
            }
            PriorMarginal::Bernoulli { rate } => {
                let z: f64 = StandardNormal.sample(rng);
                if rng.random::<f64>() < rate {
                    z.abs().max(f64::MIN_POSITIVE)
                } else {
                    -z.abs()
                }
            }
        }
    }

    /// Map a sampled coordinate to a feature value.
    pub fn feature_value(&self, x: f64) -> f64 {
        match self {
            PriorMarginal::Bernoulli { .. } => f64::from(u8::from(x > 0.0)),
            PriorMarginal::LogNormal { .. } => x.exp(),
            PriorMarginal::TruncatedNormal { .. } => x,
        }
    }

    /// Mean and standard deviation of the sampled coordinate.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            PriorMarginal::TruncatedNormal { mu, sigma, lo, hi } => {
                let (l, h) = Self::bounds(lo, hi);
                stats::truncated_normal_moments(mu, sigma, l, h)
            }
            PriorMarginal::LogNormal { mu, sigma } => (mu, sigma),
            // E[u] = sqrt(2/pi) * (2 rate - 1), E[u²] = 1
            PriorMarginal::Bernoulli { rate } => {
                let m = (2.0 / std::f64::consts::PI).sqrt() * (2.0 * rate - 1.0);
                (m, (1.0 - m * m).sqrt())
            }
        }
    }

    /// The same family with its scale parameter multiplied by `factor`.
    pub fn widened(&self, factor: f64) -> Self {
        match *self {
            PriorMarginal::TruncatedNormal { mu, sigma, lo, hi } => {
                PriorMarginal::TruncatedNormal { mu, sigma: sigma * factor, lo, hi }
            }
            PriorMarginal::LogNormal { mu, sigma } => PriorMarginal::LogNormal { mu, sigma: sigma * factor },
            b @ PriorMarginal::Bernoulli { .. } => b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorComponent {
    pub weight: f64,
    pub marginals: Vec<PriorMarginal>,
}

/// Which group statistics a prior is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Elevation,
    NonElevation,
    /// Prevalence-weighted mixture of both groups.
    Cohort,
}

/// Independent-feature prior, possibly a mixture of components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePrior {
    pub feature_names: Vec<String>,
    pub components: Vec<PriorComponent>,
}

impl FeaturePrior {
    pub fn from_specs(specs: &[FeatureSpec], kind: PriorKind, prevalence: f64) -> Result<Self> {
        let group = |elev: bool| -> Result<Vec<PriorMarginal>> {
            specs
                .iter()
                .map(|f| PriorMarginal::fit(&f.id, f.marginal, if elev { f.elevation } else { f.non_elevation }))
                .collect()
        };
        let components = match kind {
            PriorKind::Elevation => vec![PriorComponent { weight: 1.0, marginals: group(true)? }],
            PriorKind::NonElevation => vec![PriorComponent { weight: 1.0, marginals: group(false)? }],
            PriorKind::Cohort => {
                if !(prevalence > 0.0 && prevalence < 1.0) {
                    return Err(Error::Config(format!("prevalence {prevalence} outside (0, 1)")));
                }
                vec![
                    PriorComponent { weight: prevalence, marginals: group(true)? },
                    PriorComponent { weight: 1.0 - prevalence, marginals: group(false)? },
                ]
            }
        };
        Ok(Self { feature_names: specs.iter().map(|f| f.id.clone()).collect(), components })
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Restrict (and reorder) to the named features.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.feature_names.iter().position(|f| f == n).ok_or_else(|| Error::UnknownFeature(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            feature_names: names.to_vec(),
            components: self
                .components
                .iter()
                .map(|c| PriorComponent { weight: c.weight, marginals: idx.iter().map(|&j| c.marginals[j]).collect() })
                .collect(),
        })
    }

    pub fn widened(&self, factor: f64) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            components: self
                .components
                .iter()
                .map(|c| PriorComponent {
                    weight: c.weight,
                    marginals: c.marginals.iter().map(|m| m.widened(factor)).collect(),
                })
                .collect(),
        }
    }

    /// Mixture mean and sd of every coordinate, used to standardize the
    /// sampler's working space.
    fn standardization(&self) -> (Vec<f64>, Vec<f64>) {
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        (0..self.dim())
            .map(|j| {
                let (mut m1, mut m2) = (0.0, 0.0);
                for c in &self.components {
                    let (m, s) = c.marginals[j].moments();
                    m1 += c.weight / total * m;
                    m2 += c.weight / total * (s * s + m * m);
                }
                let sd = (m2 - m1 * m1).max(0.0).sqrt();
                (m1, if sd > 0.0 { sd } else { 1.0 })
            })
            .unzip()
    }

    fn log_density_raw(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.marginals.iter().zip(x).map(|(m, &v)| m.log_pdf(v)).sum::<f64>())
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return top;
        }
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    }

    fn sample_raw(&self, rng: &mut Rng) -> Vec<f64> {
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        let mut u = rng.random::<f64>() * total;
        let mut comp = &self.components[self.components.len() - 1];
        for c in &self.components {
            if u < c.weight {
                comp = c;
                break;
            }
            u -= c.weight;
        }
        comp.marginals.iter().map(|m| m.sample(rng)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.dim() == 0 {
            return Err(Error::Config("prior has no components or no features".into()));
        }
        if self.components.iter().any(|c| c.marginals.len() != self.dim() || !(c.weight > 0.0)) {
            return Err(Error::Config("prior components must cover every feature with positive weight".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub n_chains: usize,
    pub n_iterations: usize,
    pub n_samples: usize,
    pub mean: f64,
    pub median: f64,
    pub cri_level: f64,
    pub cri_low: f64,
    pub cri_high: f64,
    pub histogram: Histogram,
    pub acceptance_rate: f64,
    /// Split R-hat of each sampled coordinate, in feature order.
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub rhat_risk: f64,
    pub ess_risk: f64,
}

/// Retained risks per chain plus their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorRisk {
    pub summary: PosteriorSummary,
    pub chain_risks: Vec<Vec<f64>>,
    pub draws: DreamOutput,
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

/// Summary statistics of pooled risk draws. The result does not depend on
/// the order of chains or draws.
pub fn summarize_risks(risks: &[f64], level: f64, n_bins: usize) -> Result<(f64, f64, f64, f64, Histogram)> {
    if risks.is_empty() {
        return Err(Error::TooFewValues { need: 1, got: 0 });
    }
    if risks.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::Sampler("risk outside [0, 1]".into()));
    }
    let mut s = risks.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mean = s.iter().sum::<f64>() / n as f64;
    let tail = (1.0 - level) / 2.0;
    // order statistics rather than interpolated quantiles
    let at = |q: f64| s[((q * (n - 1) as f64).round() as usize).min(n - 1)];
    let mut counts = vec![0usize; n_bins];
    for &r in &s {
        counts[((r * n_bins as f64) as usize).min(n_bins - 1)] += 1;
    }
    let edges = (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect();
    Ok((mean.clamp(s[0], s[n - 1]), at(0.5), at(tail), at(1.0 - tail), Histogram { edges, counts }))
}

/// Sample feature profiles from `prior` and push them through `risk`.
pub fn posterior_risk_fn<F>(risk: F, prior: &FeaturePrior, cfg: &SamplerConfig) -> Result<PosteriorRisk>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    prior.validate()?;
    let (center, scale) = prior.standardization();
    let to_raw = |y: &[f64]| -> Vec<f64> { y.iter().zip(center.iter().zip(&scale)).map(|(v, (c, s))| c + s * v).collect() };
    let to_features = |raw: &[f64]| -> Vec<f64> {
        raw.iter().zip(&prior.components[0].marginals).map(|(&v, m)| m.feature_value(v)).collect()
    };
    let init: Vec<Vec<f64>> = (0..cfg.n_chains)
        .map(|c| {
            let mut rng = stream(cfg.seed, "dream_init", c as u64);
            let raw = prior.sample_raw(&mut rng);
            raw.iter().zip(center.iter().zip(&scale)).map(|(v, (m, s))| (v - m) / s).collect()
        })
        .collect();
    let draws = dream_sample(|y| prior.log_density_raw(&to_raw(y)), init, cfg)?;
    let chain_risks: Vec<Vec<f64>> = draws
        .samples
        .par_iter()
        .map(|chain| chain.chunks(draws.dim).map(|y| risk(&to_features(&to_raw(y)))).collect())
        .collect();
    let pooled: Vec<f64> = chain_risks.iter().flatten().copied().collect();
    let (mean, median, low, high, histogram) = summarize_risks(&pooled, 0.95, DEFAULT_HISTOGRAM_BINS)?;
    let summary = PosteriorSummary {
        schema_version: POSTERIOR_SCHEMA_VERSION,
        feature_names: prior.feature_names.clone(),
        n_chains: cfg.n_chains,
        n_iterations: cfg.n_iterations,
        n_samples: pooled.len(),
        mean,
        median,
        cri_level: 0.95,
        cri_low: low,
        cri_high: high,
        histogram,
        acceptance_rate: draws.acceptance_rate,
        rhat: draws.rhat.clone(),
        ess: draws.ess.clone(),
        rhat_risk: split_rhat(&chain_risks),
        ess_risk: effective_sample_size(&chain_risks),
    };
    Ok(PosteriorRisk { summary, chain_risks, draws })
}

/// Posterior risk of a trained model under a feature prior. The prior must
/// cover exactly the model's features (in any order).
pub fn posterior_risk(model: &RiskModel, prior: &FeaturePrior, cfg: &SamplerConfig) -> Result<PosteriorRisk> {
    let names = model.feature_names().to_vec();
    let mut a = prior.feature_names.clone();
    let mut b = names.clone();
    a.sort();
    b.sort();
    if a != b {
        return Err(Error::WidthMismatch { expected: names.len(), got: prior.dim() });
    }
    let prior = prior.select(&names)?;
    posterior_risk_fn(|x| model.predict_raw(x).unwrap_or(f64::NAN), &prior, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::default_feature_specs;

    #[test]
    fn marginal_densities_integrate_to_one() {
        let ms = [
            PriorMarginal::TruncatedNormal { mu: 1.0, sigma: 2.0, lo: Some(0.0), hi: Some(4.0) },
            PriorMarginal::LogNormal { mu: 0.3, sigma: 0.5 },
            PriorMarginal::Bernoulli { rate: 0.7 },
        ];
        for m in ms {
            let h = 1e-3;
            let total: f64 = (-20_000..20_000).map(|k| (m.log_pdf((k as f64 + 0.5) * h)).exp() * h).sum();
            assert!((total - 1.0).abs() < 1e-4, "{m:?}: {total}");
        }
    }

    #[test]
    fn lognormal_feature_values_match_targets() {
        let m = PriorMarginal::fit("ast", Marginal::LogNormal, GroupStats { mean: 80.0, sd: 120.0 }).unwrap();
        let mut rng = stream(2, "lognormal", 0);
        let xs: Vec<f64> = (0..400_000).map(|_| m.feature_value(m.sample(&mut rng))).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        assert!((stats::mean(&xs) / 80.0 - 1.0).abs() < 0.01, "{}", stats::mean(&xs));
        assert!((stats::sample_sd(&xs) / 120.0 - 1.0).abs() < 0.05, "{}", stats::sample_sd(&xs));
    }

    #[test]
    fn latent_binary_hits_rate() {
        let m = PriorMarginal::Bernoulli { rate: 0.71 };
        let mut rng = stream(1, "latent", 0);
        let ones = (0..20_000).filter(|_| m.feature_value(m.sample(&mut rng)) == 1.0).count();
        assert!((ones as f64 / 20_000.0 - 0.71).abs() < 0.015);
        let (mean, sd) = m.moments();
        let xs: Vec<f64> = (0..50_000).map(|_| m.sample(&mut rng)).collect();
        assert!((stats::mean(&xs) - mean).abs() < 0.02);
        assert!((stats::sample_sd(&xs) - sd).abs() < 0.02);
    }

    #[test]
    fn constant_model_gives_point_mass() {
        let prior = FeaturePrior::from_specs(&default_feature_specs(), PriorKind::Elevation, 0.282).unwrap();
        let cfg = SamplerConfig { n_iterations: 200, ..Default::default() };
        let r = posterior_risk_fn(|_| 0.5, &prior, &cfg).unwrap();
        assert_eq!((r.summary.mean, r.summary.cri_low, r.summary.cri_high), (0.5, 0.5, 0.5));
        assert_eq!(r.summary.histogram.counts.iter().sum::<usize>(), r.summary.n_samples);
    }

    #[test]
    fn summary_ignores_draw_order() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let mut ys = xs.clone();
        ys.reverse();
        let a = summarize_risks(&xs, 0.95, 20).unwrap();
        let b = summarize_risks(&ys, 0.95, 20).unwrap();
        assert_eq!(a, b);
        assert!(a.2 <= a.0 && a.0 <= a.3);
    }

    #[test]
    fn prior_recovers_group_means() {
        let specs = default_feature_specs();
        let prior = FeaturePrior::from_specs(&specs, PriorKind::Elevation, 0.282).unwrap();
        let cfg = SamplerConfig { n_iterations: 1000, seed: 5, ..Default::default() };
        let r = posterior_risk_fn(|x| stats::sigmoid(x[7] - 4.0), &prior, &cfg).unwrap();
        let j = prior.feature_names.iter().position(|f| f == "phosphate").unwrap();
        let (c, s) = prior.standardization();
        let m = c[j] + s[j] * r.draws.pooled_mean()[j];
        assert!((m - 4.13).abs() < 0.15, "phosphate mean {m}");
    }
}
