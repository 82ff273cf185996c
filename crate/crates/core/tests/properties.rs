//! Cross-module invariants, mostly as property tests.

use proptest::prelude::*;

use vancorisk::cohort::{
    apply_inclusion_filters, build_cohort, extract_feature_snapshot, label_kdigo, AdmissionFeatures, ClinicalEvent,
    EventKind, PatientTimeline,
};
use vancorisk::eval::auroc;
use vancorisk::models::{self, GbdtConfig, LogregConfig, MlpConfig, ModelConfig, ModelFamily};
use vancorisk::preprocess::{fit_params, stratified_split, transform};
use vancorisk::select::{anova_f, gini_importance, two_stage_select, ForestConfig, SelectionConfig};
use vancorisk::synth::{generate_cohort, generate_cohort_with_groups, noise_feature_id, GeneratorSpec, Marginal};
use vancorisk::uq::{posterior_risk_fn, FeaturePrior, PriorKind, SamplerConfig};
use vancorisk::{Dataset, FeatureMeta};

fn timeline(creat: &[(f64, f64)], t_v: f64, age: f64, stay: u32, malignant: bool) -> PatientTimeline {
    let mut events: Vec<ClinicalEvent> =
        creat.iter().map(|&(t, v)| ClinicalEvent::new(t, EventKind::Lab, "creatinine", v)).collect();
    events.push(ClinicalEvent::new(t_v, EventKind::DrugDose, "vancomycin", 1.0));
    PatientTimeline::new("p", stay, malignant, AdmissionFeatures { age, ..Default::default() }, events).unwrap()
}

fn small_spec(n: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec { n_patients: n, seed, ..GeneratorSpec::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn extra_post_dose_creatinine_never_clears_a_label(
        base in 0.3f64..3.0,
        post in prop::collection::vec((0.0f64..200.0, 0.3f64..5.0), 0..6),
        extra in (0.0f64..200.0, 0.3f64..5.0),
    ) {
        let t_v = 10.0;
        let mut creat = vec![(5.0, base)];
        creat.extend(post.iter().map(|&(dt, v)| (t_v + dt, v)));
        let before = label_kdigo(&timeline(&creat, t_v, 50.0, 1, false)).unwrap();
        creat.push((t_v + extra.0, extra.1));
        let after = label_kdigo(&timeline(&creat, t_v, 50.0, 1, false)).unwrap();
        prop_assert!(!before.positive || after.positive);
    }

    #[test]
    fn inclusion_filters_are_idempotent(
        stays in prop::collection::vec((0.0f64..100.0, 1u32..4, any::<bool>(), any::<bool>()), 0..40),
    ) {
        let timelines: Vec<PatientTimeline> = stays
            .iter()
            .map(|&(age, stay, malignant, dosed)| {
                if dosed {
                    timeline(&[(1.0, 1.0)], 5.0, age, stay, malignant)
                } else {
                    PatientTimeline::new("p", stay, malignant, AdmissionFeatures { age, ..Default::default() }, vec![]).unwrap()
                }
            })
            .collect();
        let (once, _) = apply_inclusion_filters(timelines);
        let (twice, report) = apply_inclusion_filters(once.clone());
        prop_assert_eq!(&once, &twice);
        prop_assert!(report.rows.iter().all(|r| r.input == r.output));
    }

    #[test]
    fn anova_f_ignores_affine_rescaling(
        a in prop::collection::vec(-50.0f64..50.0, 3..30),
        b in prop::collection::vec(-50.0f64..50.0, 3..30),
        scale in 0.01f64..100.0,
        shift in -1e3f64..1e3,
    ) {
        let (f0, _) = anova_f(&a, &b);
        let t = |v: &[f64]| v.iter().map(|x| scale * x + shift).collect::<Vec<_>>();
        let (f1, _) = anova_f(&t(&a), &t(&b));
        prop_assert!((f0 - f1).abs() <= 1e-9 * f0.abs().max(1.0), "{} vs {}", f0, f1);
    }

    #[test]
    fn auroc_ignores_monotone_transforms(
        pairs in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..80),
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        prop_assume!(labels.iter().any(|&y| y) && labels.iter().any(|&y| !y));
        let a = auroc(&scores, &labels).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + s.powi(3)).collect();
        prop_assert_eq!(a, auroc(&warped, &labels).unwrap());
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[0] < w[1]) {
            let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert!((a + auroc(&negated, &labels).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn imputed_data_is_unchanged_by_identity_scaling(
        rows in prop::collection::vec(prop::collection::vec(prop::option::of(-10.0f64..10.0), 3), 4..30),
    ) {
        let flat: Vec<f64> = rows.iter().flatten().map(|v| v.unwrap_or(f64::NAN)).collect();
        let labels = (0..rows.len()).map(|i| i % 2 == 0).collect();
        let meta = (0..3).map(|j| FeatureMeta::continuous(format!("c{j}"))).collect();
        let raw = Dataset::new(flat, labels, meta).unwrap();
        prop_assume!((0..3).all(|j| raw.column(j).any(|v| !v.is_nan())));
        let once = transform(&raw, &fit_params(&raw).unwrap()).unwrap();
        let mut identity = fit_params(&once).unwrap();
        for c in &mut identity.columns {
            c.min = 0.0;
            c.max = 1.0;
        }
        let twice = transform(&once, &identity).unwrap();
        prop_assert_eq!(once.values(), twice.values());
    }
}

fn random_dataset(n: usize, seed: u64) -> Dataset {
    use rand::Rng as _;
    let mut rng = vancorisk::rng::stream(seed, "properties", 0);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let labels = rows.iter().map(|r| r[0] - r[1] + rng.random_range(-1.0..1.0) > 0.0).collect();
    let meta = (0..4).map(|j| FeatureMeta::continuous(format!("x{j}"))).collect();
    Dataset::from_rows(&rows, labels, meta).unwrap()
}

#[test]
fn predictions_are_probabilities_for_every_family() {
    let data = random_dataset(300, 1);
    let probe: Vec<f64> = [-1e6, -50.0, -1.0, 0.0, 1.0, 50.0, 1e6].iter().flat_map(|&v| [v; 4]).collect();
    for family in ModelFamily::ALL {
        let cfg = match ModelConfig::default_for(family) {
            ModelConfig::Mlp(c) => ModelConfig::Mlp(MlpConfig { epochs: 10, ..c }),
            c => c,
        };
        let m = models::train(&cfg, &data, 2).unwrap();
        for p in m.predict_proba(&data).unwrap().into_iter().chain(m.predict_rows(&probe).unwrap()) {
            assert!((0.0..=1.0).contains(&p), "{family}: {p}");
        }
    }
}

#[test]
fn fitting_is_deterministic_per_seed() {
    let data = random_dataset(200, 3);
    for cfg in [
        ModelConfig::GbdtOrdered(GbdtConfig { n_rounds: 20, ..GbdtConfig::ordered_default() }),
        ModelConfig::Logreg(LogregConfig::default()),
        ModelConfig::Mlp(MlpConfig { epochs: 5, ..MlpConfig::default() }),
    ] {
        assert_eq!(models::train(&cfg, &data, 9).unwrap(), models::train(&cfg, &data, 9).unwrap());
    }
}

#[test]
fn snapshots_of_generated_stays_precede_the_dose() {
    let spec = small_spec(2000, 4);
    let ids = spec.feature_ids();
    for t in generate_cohort(&spec).unwrap() {
        let t_v = t.first_vanco_time().unwrap();
        let snap = extract_feature_snapshot(&t, &ids).unwrap();
        assert!(snap.source_times.iter().flatten().all(|&s| s < t_v), "{}", t.patient_id);
    }
}

#[test]
fn generator_is_seeded() {
    let a = generate_cohort(&small_spec(300, 1)).unwrap();
    assert_eq!(a, generate_cohort(&small_spec(300, 1)).unwrap());
    assert_ne!(a, generate_cohort(&small_spec(300, 2)).unwrap());
}

#[test]
fn generated_group_means_are_calibrated() {
    let spec = small_spec(6000, 5);
    let (timelines, groups) = generate_cohort_with_groups(&spec).unwrap();
    let cohort = build_cohort(timelines, &spec.feature_ids()).unwrap();
    let data = cohort.to_dataset().unwrap();
    assert_eq!(data.labels(), groups.as_slice(), "labels recover the latent groups");
    for (j, f) in spec.features.iter().enumerate() {
        for (elev, target) in [(false, f.non_elevation), (true, f.elevation)] {
            let vals: Vec<f64> =
                (0..data.n_rows()).filter(|&i| data.labels()[i] == elev).map(|i| data.get(i, j)).filter(|v| !v.is_nan()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let se = target.sd / (vals.len() as f64).sqrt();
            assert!((mean - target.mean).abs() < 3.0 * se, "{} elevation={elev}: {mean} vs {}", f.id, target.mean);
        }
    }
}

#[test]
fn selection_stays_inside_stage_one_and_admission_features() {
    let spec = GeneratorSpec { noise_features: 6, ..small_spec(1500, 6) };
    let data = build_cohort(generate_cohort(&spec).unwrap(), &spec.feature_ids()).unwrap().to_dataset().unwrap();
    let data = transform(&data, &fit_params(&data).unwrap()).unwrap();
    let admission: Vec<String> = vancorisk::schema::ADMISSION_FEATURES.iter().map(|s| s.to_string()).collect();
    let cfg = SelectionConfig {
        stage1_k: 12,
        stage2_k: 8,
        forest: ForestConfig { n_trees: 30, ..ForestConfig::default() },
        ..SelectionConfig::default()
    };
    let r = two_stage_select(&data, &admission, &cfg, 1).unwrap();
    for f in &r.features {
        assert!(r.stage1.contains(f) || admission.contains(f), "{f}");
    }
    assert!(r.stage1.len() == 12 && r.stage1.iter().all(|f| !admission.contains(f)));
    assert!((0..6).any(|j| !r.features.contains(&noise_feature_id(j))));

    let imp = gini_importance(&data, &cfg.forest, 2).unwrap();
    assert!(imp.iter().all(|&v| v >= 0.0));
    assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn widening_the_prior_does_not_narrow_the_credible_interval() {
    let spec = small_spec(3000, 7);
    let raw = build_cohort(generate_cohort(&spec).unwrap(), &spec.feature_ids()).unwrap().to_dataset().unwrap();
    let (train, _) = stratified_split(&raw, 0.3, 1).unwrap();
    let params = fit_params(&train).unwrap();
    let model = models::train(
        &ModelConfig::GbdtOrdered(GbdtConfig { n_rounds: 100, ..GbdtConfig::ordered_default() }),
        &transform(&train, &params).unwrap(),
        1,
    )
    .unwrap();
    let risk = |x: &[f64]| model.predict_one(&params.transform_row(x).unwrap()).unwrap();
    let prior = FeaturePrior::from_specs(&spec.features, PriorKind::Elevation, 0.282).unwrap();
    let wide = prior.widened(2.0);
    assert!(spec.features.iter().any(|f| matches!(f.marginal, Marginal::LogNormal)));
    for seed in 0..5 {
        let cfg = SamplerConfig { n_chains: 38, n_iterations: 600, seed, ..SamplerConfig::default() };
        let narrow = posterior_risk_fn(risk, &prior, &cfg).unwrap().summary;
        let widened = posterior_risk_fn(risk, &wide, &cfg).unwrap().summary;
        let width = |s: &vancorisk::uq::PosteriorSummary| s.cri_high - s.cri_low;
        assert!(width(&widened) >= width(&narrow), "seed {seed}: {} < {}", width(&widened), width(&narrow));
    }
}
