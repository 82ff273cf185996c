//! Synthetic ICU cohorts calibrated to published group-conditional feature
//! statistics.
//!
//! Each stay is assigned a latent outcome group, draws its pre-dose features
//! independently from that group's marginals, and receives a creatinine
//! trajectory constructed so the KDIGO labeler recovers the group exactly.
//! Heavy-tailed laboratory values use moment-matched lognormals; bounded
//! values use truncated normals whose truncated moments equal the targets.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{AdmissionFeatures, ClinicalEvent, EventKind, PatientTimeline};
use crate::dataset::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::eval::welch_ttest;
use crate::rng::{stream, Rng};
use crate::schema::{self, Source, CREATININE, VANCOMYCIN};
use crate::stats;

pub const DEFAULT_PREVALENCE: f64 = 0.282;
pub const DEFAULT_N_PATIENTS: usize = 10_288;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mean: f64,
    pub sd: f64,
}

/// Shape of a feature's within-group distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Marginal {
    /// Normal truncated to `[lo, hi]`, fitted so the truncated mean and sd hit
    /// the targets. A missing bound is unbounded.
    TruncatedNormal { lo: Option<f64>, hi: Option<f64> },
    /// Lognormal with the target mean and sd.
    LogNormal,
    /// Bernoulli with the target mean as the rate.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub id: String,
    pub source: Source,
    pub marginal: Marginal,
    pub non_elevation: GroupStats,
    pub elevation: GroupStats,
}

impl FeatureSpec {
    pub fn kind(&self) -> FeatureKind {
        match self.marginal {
            Marginal::Bernoulli => FeatureKind::Binary,
            _ => FeatureKind::Continuous,
        }
    }

    pub fn is_admission(&self) -> bool {
        self.source == Source::Admission
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub n_patients: usize,
    pub prevalence: f64,
    pub seed: u64,
    pub features: Vec<FeatureSpec>,
    /// Probability that an event-derived feature has no pre-dose measurement.
    pub missing_rate: f64,
    /// Fraction of negative stays with no post-dose creatinine at all.
    pub no_post_creatinine_rate: f64,
    /// Extra chart items with identical group distributions, used to give
    /// feature selection something to discard.
    pub noise_features: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n_patients: DEFAULT_N_PATIENTS,
            prevalence: DEFAULT_PREVALENCE,
            seed: 20_240_501,
            features: default_feature_specs(),
            missing_rate: 0.02,
            no_post_creatinine_rate: 0.03,
            noise_features: 0,
        }
    }
}

fn default_marginal(id: &str, kind: FeatureKind) -> Marginal {
    if kind == FeatureKind::Binary {
        return Marginal::Bernoulli;
    }
    match id {
        "ast" | "total_bilirubin" | "ed_duration" | "lactate" | "wbc" => Marginal::LogNormal,
        "arterial_base_excess" => Marginal::TruncatedNormal { lo: None, hi: None },
        "richmond_ras" => Marginal::TruncatedNormal { lo: Some(-5.0), hi: Some(4.0) },
        "braden_mobility" => Marginal::TruncatedNormal { lo: Some(1.0), hi: Some(4.0) },
        "age" => Marginal::TruncatedNormal { lo: Some(18.0), hi: Some(80.0) },
        _ => Marginal::TruncatedNormal { lo: Some(0.0), hi: None },
    }
}

/// The nineteen schema features with their published group statistics.
pub fn default_feature_specs() -> Vec<FeatureSpec> {
    schema::FEATURES
        .iter()
        .map(|f| FeatureSpec {
            id: f.id.to_string(),
            source: f.source,
            marginal: default_marginal(f.id, f.kind),
            non_elevation: GroupStats { mean: f.non_elevation.0, sd: f.non_elevation.1 },
            elevation: GroupStats { mean: f.elevation.0, sd: f.elevation.1 },
        })
        .collect()
}

pub fn noise_feature_id(j: usize) -> String {
    format!("noise_{j:02}")
}

impl GeneratorSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::InvalidSpec(format!("prevalence {} outside (0, 1)", self.prevalence)));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidSpec(format!("missing_rate {} outside [0, 1)", self.missing_rate)));
        }
        if !(0.0..1.0).contains(&self.no_post_creatinine_rate) {
            return Err(Error::InvalidSpec(format!(
                "no_post_creatinine_rate {} outside [0, 1)",
                self.no_post_creatinine_rate
            )));
        }
        let mut ids: Vec<&str> = self.features.iter().map(|f| f.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.features.len() {
            return Err(Error::InvalidSpec("duplicate feature ids".into()));
        }
        let age = self.features.iter().find(|f| f.id == "age");
        if age.is_none_or(|f| !f.is_admission()) {
            return Err(Error::InvalidSpec("an admission-level `age` feature is required".into()));
        }
        for f in &self.features {
            if f.is_admission() && !schema::is_admission(&f.id) {
                return Err(Error::InvalidSpec(format!("`{}` is not an admission-level field", f.id)));
            }
            for (g, s) in [("non_elevation", f.non_elevation), ("elevation", f.elevation)] {
                if !(s.sd > 0.0 && s.sd.is_finite() && s.mean.is_finite()) {
                    return Err(Error::InvalidSpec(format!("`{}` {g}: sd must be positive and finite", f.id)));
                }
                if f.marginal == Marginal::Bernoulli && !(0.0..=1.0).contains(&s.mean) {
                    return Err(Error::InvalidSpec(format!("`{}` {g}: rate {} outside [0, 1]", f.id, s.mean)));
                }
                if f.marginal == Marginal::LogNormal && s.mean <= 0.0 {
                    return Err(Error::InvalidSpec(format!("`{}` {g}: lognormal mean must be positive", f.id)));
                }
            }
        }
        Ok(())
    }

    /// Feature ids the generated cohort carries, schema features first.
    pub fn feature_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.features.iter().map(|f| f.id.clone()).collect();
        ids.extend((0..self.noise_features).map(noise_feature_id));
        ids
    }

    /// Number of positive stays: the nearest integer to `n * prevalence`.
    pub fn n_positive(&self) -> usize {
        (self.n_patients as f64 * self.prevalence).round() as usize
    }
}

#[derive(Debug, Clone, Copy)]
enum Sampler {
    Truncated { mu: f64, sigma: f64, lo: f64, hi: f64 },
    LogNormal(LogNormal<f64>),
    Bernoulli(f64),
}

impl Sampler {
    fn fit(id: &str, marginal: Marginal, s: GroupStats) -> Result<Self> {
        Ok(match marginal {
            Marginal::Bernoulli => Sampler::Bernoulli(s.mean),
            Marginal::LogNormal => {
                let sigma2 = (1.0 + (s.sd / s.mean).powi(2)).ln();
                let mu = s.mean.ln() - sigma2 / 2.0;
                Sampler::LogNormal(LogNormal::new(mu, sigma2.sqrt()).expect("positive sigma"))
            }
            Marginal::TruncatedNormal { lo, hi } => {
                let lo = lo.unwrap_or(f64::NEG_INFINITY);
                let hi = hi.unwrap_or(f64::INFINITY);
                if lo.is_infinite() && hi.is_infinite() {
                    Sampler::Truncated { mu: s.mean, sigma: s.sd, lo, hi }
                } else {
                    let (mu, sigma) = stats::match_truncated_normal(s.mean, s.sd, lo, hi).ok_or_else(|| {
                        Error::InvalidSpec(format!(
                            "`{id}`: no normal truncated to [{lo}, {hi}] has mean {} and sd {}",
                            s.mean, s.sd
                        ))
                    })?;
                    Sampler::Truncated { mu, sigma, lo, hi }
                }
            }
        })
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            Sampler::Bernoulli(p) => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            Sampler::LogNormal(d) => d.sample(rng),
            Sampler::Truncated { mu, sigma, lo, hi } => {
                let n = Normal::new(mu, sigma).expect("positive sigma");
                for _ in 0..10_000 {
                    let x = n.sample(rng);
                    if x >= lo && x <= hi {
                        return x;
                    }
                }
                // inverse-cdf fallback for very thin truncation windows
                let (a, b) = (stats::normal_cdf((lo - mu) / sigma), stats::normal_cdf((hi - mu) / sigma));
                let u = a + (b - a) * rng.random::<f64>();
                (mu + sigma * inverse_normal_cdf(u)).clamp(lo, hi)
            }
        }
    }
}

fn inverse_normal_cdf(p: f64) -> f64 {
    // bisection on the cdf; only used on the rare fallback path
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if stats::normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct FittedFeature {
    id: String,
    source: Source,
    kind: EventKind,
    samplers: [Sampler; 2],
}

fn fit_features(spec: &GeneratorSpec) -> Result<Vec<FittedFeature>> {
    let mut out = Vec::with_capacity(spec.features.len() + spec.noise_features);
    for f in &spec.features {
        out.push(FittedFeature {
            id: f.id.clone(),
            source: f.source,
            kind: match f.source {
                Source::Chart => EventKind::Chart,
                Source::Procedure => EventKind::Procedure,
                Source::Lab | Source::Admission => EventKind::Lab,
            },
            samplers: [
                Sampler::fit(&f.id, f.marginal, f.non_elevation)?,
                Sampler::fit(&f.id, f.marginal, f.elevation)?,
            ],
        });
    }
    for j in 0..spec.noise_features {
        let s = Sampler::Truncated { mu: 0.0, sigma: 1.0, lo: f64::NEG_INFINITY, hi: f64::INFINITY };
        out.push(FittedFeature { id: noise_feature_id(j), source: Source::Chart, kind: EventKind::Chart, samplers: [s, s] });
    }
    Ok(out)
}

/// Per-stay attributes that the attrition population overrides.
#[derive(Debug, Clone)]
struct StayOverrides {
    patient_id: String,
    stay_index: u32,
    malignant: bool,
    age: Option<f64>,
    vanco: bool,
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn generate_stay(
    spec: &GeneratorSpec,
    fitted: &[FittedFeature],
    positive: bool,
    ov: &StayOverrides,
    rng: &mut Rng,
) -> Result<PatientTimeline> {
    let g = usize::from(positive);
    let t_v = uniform(rng, 6.0, 48.0);
    let mut events = Vec::with_capacity(4 * fitted.len() + 8);
    let mut admission = AdmissionFeatures::default();

    for f in fitted {
        let value = f.samplers[g].sample(rng);
        if f.source == Source::Admission {
            match f.id.as_str() {
                "age" => admission.age = value,
                "ed_duration" => admission.ed_duration = Some(value),
                "charlson" => admission.charlson = Some(value),
                "apsiii" => admission.apsiii = Some(value),
                _ => unreachable!("validated admission field"),
            }
            continue;
        }
        // optional earlier reading, superseded by the latest one
        if rng.random::<f64>() < 0.5 {
            let t = uniform(rng, 0.0, 0.5 * t_v);
            events.push(ClinicalEvent::new(t, f.kind, f.id.clone(), f.samplers[g].sample(rng)));
        }
        if rng.random::<f64>() >= spec.missing_rate {
            let t = t_v - uniform(rng, 0.05, 0.45 * t_v);
            events.push(ClinicalEvent::new(t, f.kind, f.id.clone(), value));
        }
        // post-dose readings never enter the snapshot
        if rng.random::<f64>() < 0.5 {
            let t = t_v + uniform(rng, 0.0, 72.0);
            events.push(ClinicalEvent::new(t, f.kind, f.id.clone(), f.samplers[1 - g].sample(rng)));
        }
    }
    if let Some(age) = ov.age {
        admission.age = age;
    }

    if ov.vanco {
        events.push(ClinicalEvent::new(t_v, EventKind::DrugDose, VANCOMYCIN, 1000.0));
        for k in 1..=2 {
            events.push(ClinicalEvent::new(t_v + 12.0 * k as f64, EventKind::DrugDose, VANCOMYCIN, 1000.0));
        }
    }
    creatinine_trajectory(spec, positive, t_v, rng, &mut events);

    PatientTimeline::new(ov.patient_id.clone(), ov.stay_index, ov.malignant, admission, events)
}

/// Baseline creatinine plus post-dose readings that cross a KDIGO threshold
/// for positives and stay clear of both thresholds for negatives.
fn creatinine_trajectory(
    spec: &GeneratorSpec,
    positive: bool,
    t_v: f64,
    rng: &mut Rng,
    events: &mut Vec<ClinicalEvent>,
) {
    let lab = |t: f64, v: f64| ClinicalEvent::new(t, EventKind::Lab, CREATININE, v);
    let base_sampler = Sampler::Truncated { mu: 1.0, sigma: 0.35, lo: 0.4, hi: 4.0 };
    let b = base_sampler.sample(rng);
    if rng.random::<f64>() < 0.6 {
        events.push(lab(uniform(rng, 0.0, 0.4 * t_v), base_sampler.sample(rng)));
    }
    events.push(lab(t_v - uniform(rng, 0.1, 0.5 * t_v), b));

    // largest value that trips neither criterion, with a margin
    let ceiling = (b + 0.3).min(1.5 * b) - 0.01;
    let quiet = |rng: &mut Rng| uniform(rng, 0.7 * b, ceiling);

    if positive {
        if rng.random::<f64>() < 0.6 {
            let dt = uniform(rng, 1.0, 48.0);
            if rng.random::<f64>() < 0.5 {
                events.push(lab(t_v + uniform(rng, 0.0, dt), quiet(rng)));
            }
            events.push(lab(t_v + dt, b + 0.3 + uniform(rng, 0.02, 1.2)));
        } else {
            let dt = uniform(rng, 48.5, 168.0);
            events.push(lab(t_v + uniform(rng, 0.0, 48.0), quiet(rng)));
            events.push(lab(t_v + dt, 1.5 * b + b * uniform(rng, 0.02, 0.8)));
        }
    } else {
        if rng.random::<f64>() < spec.no_post_creatinine_rate {
            return;
        }
        let n_post = rng.random_range(1..=3);
        for _ in 0..n_post {
            events.push(lab(t_v + uniform(rng, 0.0, 168.0), quiet(rng)));
        }
    }
    // a late reading outside every window
    if rng.random::<f64>() < 0.3 {
        events.push(lab(t_v + uniform(rng, 170.0, 300.0), b * uniform(rng, 0.8, 3.0)));
    }
}

fn latent_groups(spec: &GeneratorSpec) -> Vec<bool> {
    let n_pos = spec.n_positive();
    let mut groups: Vec<bool> = (0..spec.n_patients).map(|i| i < n_pos).collect();
    groups.shuffle(&mut stream(spec.seed, "latent_groups", 0));
    groups
}

fn patient_id(i: usize) -> String {
    format!("P{:06}", i + 1)
}

/// Generate eligible stays along with each stay's latent outcome group.
pub fn generate_cohort_with_groups(spec: &GeneratorSpec) -> Result<(Vec<PatientTimeline>, Vec<bool>)> {
    spec.validate()?;
    let fitted = fit_features(spec)?;
    let groups = latent_groups(spec);
    let timelines = groups
        .par_iter()
        .enumerate()
        .map(|(i, &pos)| {
            let ov = StayOverrides { patient_id: patient_id(i), stay_index: 1, malignant: false, age: None, vanco: true };
            generate_stay(spec, &fitted, pos, &ov, &mut stream(spec.seed, "patient", i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((timelines, groups))
}

/// Generate `n_patients` eligible first ICU stays. Exactly
/// `round(n_patients * prevalence)` of them belong to the elevation group.
pub fn generate_cohort(spec: &GeneratorSpec) -> Result<Vec<PatientTimeline>> {
    generate_cohort_with_groups(spec).map(|(t, _)| t)
}

/// Stage counts for an engineered screening population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttritionTargets {
    /// Stays screened, including those without vancomycin.
    pub screened: usize,
    pub with_vancomycin: usize,
    pub aged_18_to_80: usize,
    pub without_malignancy: usize,
    pub first_stays: usize,
}

impl Default for AttritionTargets {
    /// Counts from the published cohort flow diagram.
    fn default() -> Self {
        Self {
            screened: 25_916,
            with_vancomycin: 25_916,
            aged_18_to_80: 21_925,
            without_malignancy: 19_205,
            first_stays: 10_288,
        }
    }
}

/// A screening population whose inclusion filters remove exactly the
/// requested number of stays at each stage. The eligible stays are those of
/// [`generate_cohort`] with `n_patients = first_stays`; repeat stays reuse
/// their patient ids.
pub fn generate_attrition_population(
    spec: &GeneratorSpec,
    targets: &AttritionTargets,
) -> Result<Vec<PatientTimeline>> {
    let t = targets;
    if !(t.screened >= t.with_vancomycin
        && t.with_vancomycin >= t.aged_18_to_80
        && t.aged_18_to_80 >= t.without_malignancy
        && t.without_malignancy >= t.first_stays)
    {
        return Err(Error::InvalidSpec("attrition targets must be nonincreasing".into()));
    }
    if t.first_stays == 0 && t.without_malignancy > 0 {
        return Err(Error::InvalidSpec("repeat stays need at least one first stay".into()));
    }
    let eligible_spec = GeneratorSpec { n_patients: t.first_stays, ..spec.clone() };
    let mut population = generate_cohort(&eligible_spec)?;
    let fitted = fit_features(spec)?;

    enum Exclusion {
        RepeatStay,
        Malignant,
        Age,
        NoVanco,
    }
    let mut plan = Vec::new();
    plan.extend((0..t.without_malignancy - t.first_stays).map(|_| Exclusion::RepeatStay));
    plan.extend((0..t.aged_18_to_80 - t.without_malignancy).map(|_| Exclusion::Malignant));
    plan.extend((0..t.with_vancomycin - t.aged_18_to_80).map(|_| Exclusion::Age));
    plan.extend((0..t.screened - t.with_vancomycin).map(|_| Exclusion::NoVanco));

    let excluded = plan
        .par_iter()
        .enumerate()
        .map(|(k, why)| {
            let mut rng = stream(spec.seed, "excluded_stay", k as u64);
            let positive = rng.random::<f64>() < spec.prevalence;
            let fresh_id = format!("X{:06}", k + 1);
            let ov = match why {
                Exclusion::RepeatStay => StayOverrides {
                    patient_id: patient_id(k % t.first_stays),
                    stay_index: 2 + (k / t.first_stays) as u32,
                    malignant: false,
                    age: None,
                    vanco: true,
                },
                Exclusion::Malignant => {
                    StayOverrides { patient_id: fresh_id, stay_index: 1, malignant: true, age: None, vanco: true }
                }
                Exclusion::Age => {
                    let age = if rng.random::<f64>() < 0.2 {
                        uniform(&mut rng, 0.0, 17.99)
                    } else {
                        uniform(&mut rng, 80.01, 100.0)
                    };
                    StayOverrides { patient_id: fresh_id, stay_index: 1, malignant: false, age: Some(age), vanco: true }
                }
                Exclusion::NoVanco => {
                    StayOverrides { patient_id: fresh_id, stay_index: 1, malignant: false, age: None, vanco: false }
                }
            };
            generate_stay(spec, &fitted, positive, &ov, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    population.extend(excluded);
    // interleave so the filters cannot rely on position
    population.shuffle(&mut stream(spec.seed, "population_order", 0));
    Ok(population)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub feature: String,
    pub n_non_elevation: usize,
    pub mean_non_elevation: f64,
    pub sd_non_elevation: f64,
    pub n_elevation: usize,
    pub mean_elevation: f64,
    pub sd_elevation: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Per-feature group means, sample standard deviations and Welch test.
/// Missing values are skipped.
pub fn summarize_groups(data: &Dataset) -> Result<Vec<GroupComparison>> {
    let (neg, pos) = data.class_indices();
    if neg.is_empty() {
        return Err(Error::EmptyGroup("non_elevation".into()));
    }
    if pos.is_empty() {
        return Err(Error::EmptyGroup("elevation".into()));
    }
    (0..data.n_cols())
        .map(|j| {
            let pick = |idx: &[usize]| -> Vec<f64> {
                idx.iter().map(|&i| data.get(i, j)).filter(|v| !v.is_nan()).collect()
            };
            let (a, b) = (pick(&neg), pick(&pos));
            let w = welch_ttest(&a, &b)?;
            Ok(GroupComparison {
                feature: data.meta()[j].name.clone(),
                n_non_elevation: a.len(),
                mean_non_elevation: stats::mean(&a),
                sd_non_elevation: stats::sample_sd(&a),
                n_elevation: b.len(),
                mean_elevation: stats::mean(&b),
                sd_elevation: stats::sample_sd(&b),
                t: w.t,
                df: w.df,
                p_value: w.p_value,
            })
        })
        .collect()
}
