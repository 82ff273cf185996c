use crate::cohort::{
    build_cohort, read_events_csv, read_labeled_cohort_csv, write_admissions_csv, write_attrition_json,
    write_events_csv, write_labeled_cohort_csv, AttritionReport,
};
use crate::dataset::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::eval::{evaluate_scores, grid_search, roc_curve, CvConfig, EvalConfig};
use crate::interpret::{ablation, model_ale, shap_summary};
use crate::models::{train, ModelFamily};
use crate::preprocess::{fit_params, smote, stratified_split, transform, PreprocessParams};
use crate::risk::RiskModel;
use crate::schema::{self, ADMISSION_FEATURES};
use crate::select::{two_stage_select, SelectionResult};
use crate::stats;
use crate::synth::{
    default_feature_specs, generate_attrition_population, generate_cohort, summarize_groups, FeatureSpec,
};
use crate::uq::{posterior_risk, FeaturePrior};

use super::artifacts::*;
use super::config::InputConfig;
use super::{report, Ctx, Stage};

/// Run one step. Returns `false` when the step is disabled by configuration.
pub(super) fn run(ctx: &mut Ctx, stage: Stage) -> Result<bool> {
    match stage {
        Stage::Generate => generate(ctx).map(|_| true),
        Stage::Label => label(ctx).map(|_| true),
        Stage::Preprocess => preprocess(ctx).map(|_| true),
        Stage::Select => select(ctx).map(|_| true),
        Stage::Train => train_models(ctx).map(|_| true),
        Stage::Evaluate => evaluate(ctx).map(|_| true),
        Stage::Explain => explain(ctx),
        Stage::Uq => uq(ctx),
        Stage::Report => report::write(ctx).map(|_| true),
    }
}

fn generate(ctx: &mut Ctx) -> Result<()> {
    let timelines = match &ctx.cfg.input {
        InputConfig::Synthetic { generator, attrition: Some(t) } => generate_attrition_population(generator, t)?,
        InputConfig::Synthetic { generator, attrition: None } => generate_cohort(generator)?,
        InputConfig::Files { events, admissions } => {
            ctx.external(events);
            ctx.external(admissions);
            read_events_csv(events, admissions)?
        }
    };
    write_events_csv(&timelines, &ctx.output(EVENTS)?)?;
    write_admissions_csv(&timelines, &ctx.output(ADMISSIONS)?)?;
    Ok(())
}

/// Feature ids extracted from the timelines.
fn feature_ids(ctx: &Ctx) -> Vec<String> {
    match &ctx.cfg.input {
        InputConfig::Synthetic { generator, .. } => generator.feature_ids(),
        InputConfig::Files { .. } => schema::all_feature_ids().into_iter().map(String::from).collect(),
    }
}

/// Marginal specifications the posterior prior is built from.
fn prior_specs(ctx: &Ctx) -> Vec<FeatureSpec> {
    match &ctx.cfg.input {
        InputConfig::Synthetic { generator, .. } => generator.features.clone(),
        InputConfig::Files { .. } => default_feature_specs(),
    }
}

fn label(ctx: &mut Ctx) -> Result<()> {
    let events = ctx.input(EVENTS)?;
    let admissions = ctx.input(ADMISSIONS)?;
    let timelines = read_events_csv(&events, &admissions)?;
    let cohort = build_cohort(timelines, &feature_ids(ctx))?;
    log::info!("cohort: {} stays, {} with creatinine elevation", cohort.rows.len(), cohort.n_positive());
    write_labeled_cohort_csv(&cohort, &ctx.output(COHORT)?)?;
    write_attrition_json(&cohort.attrition, &ctx.output(ATTRITION)?)?;
    let groups = summarize_groups(&cohort.to_dataset()?)?;
    write_rows(&ctx.output(GROUP_COMPARISON)?, &groups)
}

fn preprocess(ctx: &mut Ctx) -> Result<()> {
    let cohort = read_labeled_cohort_csv(&ctx.input(COHORT)?)?;
    let data = cohort.to_dataset()?;
    let (train_raw, test_raw) = stratified_split(&data, ctx.cfg.test_fraction, ctx.seed("split", 0))?;
    train_raw.write_csv(&ctx.dataset_output(TRAIN_RAW)?)?;
    test_raw.write_csv(&ctx.dataset_output(TEST_RAW)?)?;

    // group = test membership, so the two-group summary compares the splits
    let mut values = train_raw.values().to_vec();
    values.extend_from_slice(test_raw.values());
    let mut labels = vec![false; train_raw.n_rows()];
    labels.extend(vec![true; test_raw.n_rows()]);
    let split = summarize_groups(&Dataset::new(values, labels, train_raw.meta().to_vec())?)?;
    let rows: Vec<SplitComparisonRow> = split
        .into_iter()
        .map(|g| SplitComparisonRow {
            feature: g.feature,
            n_train: g.n_non_elevation,
            mean_train: g.mean_non_elevation,
            sd_train: g.sd_non_elevation,
            n_test: g.n_elevation,
            mean_test: g.mean_elevation,
            sd_test: g.sd_elevation,
            t: g.t,
            df: g.df,
            p_value: g.p_value,
        })
        .collect();
    write_rows(&ctx.output(SPLIT_COMPARISON)?, &rows)?;

    let params = fit_params(&train_raw)?;
    std::fs::write(ctx.output(PREPROCESS)?, params.to_json()? + "\n")?;
    transform(&train_raw, &params)?.write_csv(&ctx.dataset_output(TRAIN_PROCESSED)?)
}

fn select(ctx: &mut Ctx) -> Result<()> {
    let train = Dataset::read_csv(&ctx.dataset_input(TRAIN_PROCESSED)?)?;
    let names = train.feature_names();
    let admission: Vec<String> =
        ADMISSION_FEATURES.iter().map(|s| s.to_string()).filter(|a| names.contains(a)).collect();
    let result = two_stage_select(&train, &admission, &ctx.cfg.selection, ctx.seed("select", 0))?;
    log::info!("selected {} features: {}", result.features.len(), result.features.join(", "));
    write_rows(&ctx.output(FEATURES)?, &result.rows)?;
    write_json(&ctx.output(SELECTION)?, &result)
}

fn family_index(f: ModelFamily) -> u64 {
    ModelFamily::ALL.iter().position(|&g| g == f).unwrap_or(0) as u64
}

fn load_selection(ctx: &mut Ctx) -> Result<SelectionResult> {
    read_json(&ctx.input(SELECTION)?)
}

fn train_models(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let selection = load_selection(ctx)?;
    let features = &selection.features;
    let train_raw = Dataset::read_csv(&ctx.dataset_input(TRAIN_RAW)?)?.select_columns(features)?;
    let params = PreprocessParams::from_json(&std::fs::read_to_string(ctx.input(PREPROCESS)?)?)?.select(features)?;
    let cv = CvConfig {
        n_folds: cfg.cv.n_folds,
        smote: Some(cfg.smote),
        eval: EvalConfig { n_boot: 0, ..cfg.eval },
    };
    let processed = transform(&train_raw, &params)?;
    let oversampled = smote(&processed, cfg.smote, ctx.seed("final_smote", 0))?;

    let mut grids = Vec::new();
    let mut cv_rows = Vec::new();
    for &family in &cfg.families {
        let fi = family_index(family);
        let candidates = cfg.candidates(family);
        let (best, results) = grid_search(&train_raw, &candidates, &cv, ctx.seed("cv", fi))?;
        log::info!("{family}: best candidate {best}, mean CV AUROC {:.4}", results[best].mean_auroc);
        for (c, r) in results.iter().enumerate() {
            for (k, &a) in r.fold_auroc.iter().enumerate() {
                cv_rows.push(CvRow { family, candidate: c, fold: k, auroc: a, selected: c == best });
            }
        }
        let mut model = train(&results[best].config, &oversampled, ctx.seed("final_model", fi))?;
        // undo the class-prior shift introduced by oversampling
        model.set_prior_correction(processed.prevalence(), oversampled.prevalence());
        RiskModel::new(params.clone(), model)?.save(&ctx.output(&model_path(family))?)?;
        grids.push(FamilyGrid {
            family,
            best,
            candidates: results
                .into_iter()
                .map(|r| GridCandidate { config: r.config, mean_auroc: r.mean_auroc, fold_auroc: r.fold_auroc })
                .collect(),
        });
    }
    write_rows(&ctx.output(CV)?, &cv_rows)?;
    write_json(
        &ctx.output(GRID)?,
        &GridFile { schema_version: ARTIFACT_SCHEMA_VERSION, n_folds: cfg.cv.n_folds, families: grids },
    )
}

fn evaluate(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let test = Dataset::read_csv(&ctx.dataset_input(TEST_RAW)?)?;
    let grid: GridFile = read_json(&ctx.input(GRID)?)?;
    let mut models = Vec::new();
    let mut roc_rows = Vec::new();
    for &family in &cfg.families {
        let rm = RiskModel::load(&ctx.input(&model_path(family))?)?;
        let scores = rm.predict_dataset(&test)?;
        let report = evaluate_scores(&scores, test.labels(), &cfg.eval, ctx.seed("eval", family_index(family)))?;
        let fg = grid
            .families
            .iter()
            .find(|g| g.family == family)
            .ok_or_else(|| Error::Schema(format!("{GRID} has no entry for {family}")))?;
        let folds = &fg.candidates[fg.best].fold_auroc;
        models.push(ModelMetrics {
            family,
            cv_mean_auroc: stats::mean(folds),
            cv_sd_auroc: stats::sample_sd(folds),
            test: report,
        });
        roc_rows.extend(
            roc_curve(&scores, test.labels())?
                .into_iter()
                .map(|p| RocRow { family, threshold: p.threshold, fpr: p.fpr, tpr: p.tpr }),
        );
    }
    write_rows(&ctx.output(ROC)?, &roc_rows)?;
    let metrics = MetricsFile {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        primary_family: cfg.primary_family,
        n_test: test.n_rows(),
        test_prevalence: test.prevalence(),
        models,
    };
    write_json(&ctx.output(METRICS)?, &metrics)
}

fn explain(ctx: &mut Ctx) -> Result<bool> {
    let cfg = ctx.cfg;
    if !cfg.interpret.enabled {
        return Ok(false);
    }
    let rm = RiskModel::load(&ctx.input(&model_path(cfg.primary_family))?)?;
    let features = rm.feature_names().to_vec();
    let test_raw = Dataset::read_csv(&ctx.dataset_input(TEST_RAW)?)?.select_columns(&features)?;
    let train_raw = Dataset::read_csv(&ctx.dataset_input(TRAIN_RAW)?)?.select_columns(&features)?;
    let test = transform(&test_raw, &rm.preprocess)?;
    let train_set = transform(&train_raw, &rm.preprocess)?;

    let shap = shap_summary(&rm.model, &test, cfg.interpret.shap_rows)?;
    let mut shap_rows = Vec::with_capacity(shap.rows.len() * features.len());
    for (phi, &i) in shap.phi.iter().zip(&shap.rows) {
        for (j, name) in features.iter().enumerate() {
            let raw = test_raw.get(i, j);
            shap_rows.push(ShapRow {
                row: i,
                feature: name.clone(),
                value: test.get(i, j),
                raw_value: (!raw.is_nan()).then_some(raw),
                phi: phi[j],
            });
        }
    }
    write_rows(&ctx.output(SHAP)?, &shap_rows)?;
    let summary: Vec<ShapSummaryRow> = shap
        .ranking
        .iter()
        .enumerate()
        .map(|(r, &j)| ShapSummaryRow {
            rank: r + 1,
            feature: features[j].clone(),
            mean_abs_phi: shap.mean_abs[j],
            share: shap.share(j),
        })
        .collect();
    write_rows(&ctx.output(SHAP_SUMMARY)?, &summary)?;

    let mut ale_rows = Vec::new();
    for name in &cfg.interpret.ale_features {
        let Some(j) = test.column_index(name) else {
            log::warn!("ALE feature `{name}` was not selected; skipped");
            continue;
        };
        if test.meta()[j].kind != FeatureKind::Continuous {
            log::warn!("ALE feature `{name}` is binary; skipped");
            continue;
        }
        let curve = model_ale(&rm.model, &test, name, cfg.interpret.ale_bins)?;
        for (k, (&e, &v)) in curve.edges.iter().zip(&curve.values).enumerate() {
            ale_rows.push(AleRow {
                feature: name.clone(),
                edge: e,
                edge_raw: rm.preprocess.unscale(j, e),
                ale: v,
                bin_count: curve.bin_counts.get(k).copied(),
            });
        }
    }
    write_rows(&ctx.output(ALE)?, &ale_rows)?;

    let abl = ablation(&train_set, &test, &features, &cfg.interpret.ablation, ctx.seed("ablation", 0))?;
    let ranking = abl.ranking();
    let rows: Vec<AblationCsvRow> = abl
        .rows
        .iter()
        .map(|r| AblationCsvRow {
            rank: ranking.iter().position(|&f| f == r.feature).map_or(0, |p| p + 1),
            feature: r.feature.clone(),
            baseline_auroc: abl.baseline_auroc,
            auroc_without: r.auroc_without,
            delta_auroc: r.delta_auroc,
            boot_mean: r.boot_mean,
            boot_sd: r.boot_sd,
            boot_low: r.boot_low,
            boot_high: r.boot_high,
        })
        .collect();
    write_rows(&ctx.output(ABLATION)?, &rows)?;
    Ok(true)
}

fn uq(ctx: &mut Ctx) -> Result<bool> {
    let cfg = ctx.cfg;
    if !cfg.uq.enabled {
        return Ok(false);
    }
    let rm = RiskModel::load(&ctx.input(&model_path(cfg.primary_family))?)?;
    let train_raw = Dataset::read_csv(&ctx.dataset_input(TRAIN_RAW)?)?;
    let specs = prior_specs(ctx);
    for name in rm.feature_names() {
        if !specs.iter().any(|s| &s.id == name) {
            return Err(Error::Schema(format!("no prior specification for feature `{name}`")));
        }
    }
    let prior = FeaturePrior::from_specs(&specs, cfg.uq.prior, train_raw.prevalence())?.select(rm.feature_names())?;
    if cfg.uq.sampler.n_chains < 2 * prior.dim() {
        log::warn!(
            "{} chains for {} sampled features; at least twice the dimension is recommended",
            cfg.uq.sampler.n_chains,
            prior.dim()
        );
    }
    let post = posterior_risk(&rm, &prior, &cfg.uq.sampler)?;
    let s = &post.summary;
    log::info!("posterior risk mean {:.3}, 95% CrI [{:.3}, {:.3}]", s.mean, s.cri_low, s.cri_high);
    write_json(&ctx.output(POSTERIOR)?, s)?;
    let hist: Vec<HistogramRow> = s
        .histogram
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| HistogramRow { bin_low: s.histogram.edges[k], bin_high: s.histogram.edges[k + 1], count: c })
        .collect();
    write_rows(&ctx.output(POSTERIOR_HIST)?, &hist)?;
    Ok(true)
}

/// Attrition report as written by the label step.
pub(super) fn read_attrition(path: &std::path::Path) -> Result<AttritionReport> {
    #[derive(serde::Deserialize)]
    struct File {
        stages: Vec<crate::cohort::AttritionRow>,
    }
    let f: File = read_json(path)?;
    Ok(AttritionReport { rows: f.stages })
}
