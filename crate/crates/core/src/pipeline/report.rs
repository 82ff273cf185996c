use std::fmt::Write as _;

use crate::error::Result;
use crate::models::ModelFamily;
use crate::select::SelectionResult;
use crate::uq::PosteriorSummary;

use super::artifacts::*;
use super::plots::{self, Series};
use super::stages::read_attrition;
use super::Ctx;

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{:.1}%", 100.0 * x))
}

fn family_label(f: ModelFamily) -> &'static str {
    match f {
        ModelFamily::GbdtOrdered => "GBDT (ordered, symmetric trees)",
        ModelFamily::GbdtLeafwise => "GBDT (leaf-wise)",
        ModelFamily::GbdtLevelwise => "GBDT (level-wise)",
        ModelFamily::Logreg => "Logistic regression",
        ModelFamily::GaussianNb => "Gaussian naive Bayes",
        ModelFamily::Mlp => "Neural network",
    }
}

/// Write `report.md` and the SVG figures from the artifacts of earlier steps.
pub(super) fn write(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let mut md = String::new();
    let _ = writeln!(md, "# Creatinine elevation risk: run report\n");
    let _ = writeln!(md, "- Seed: {}", cfg.seed);
    let _ = writeln!(md, "- Configuration hash: `{}`\n", cfg.hash()?);

    let attrition = read_attrition(&ctx.input(ATTRITION)?)?;
    let _ = writeln!(md, "## Cohort\n\n| Stage | Input | Retained |\n|---|---:|---:|");
    for r in &attrition.rows {
        let _ = writeln!(md, "| {} | {} | {} |", r.stage, r.input, r.output);
    }

    let selection: SelectionResult = read_json(&ctx.input(SELECTION)?)?;
    let _ = writeln!(md, "\n## Selected features ({})\n\n{}\n", selection.features.len(), selection.features.join(", "));

    let metrics: MetricsFile = read_json(&ctx.input(METRICS)?)?;
    let target = metrics.models.first().map_or(cfg.eval.target_sensitivity, |m| m.test.target_sensitivity);
    let _ = writeln!(
        md,
        "## Test-set performance\n\n{} test stays, prevalence {}. Thresholds are set for sensitivity of at least {:.3}.\n",
        metrics.n_test,
        pct(Some(metrics.test_prevalence)),
        target
    );
    let _ = writeln!(md, "| Model | AUC (95% CI) | Accuracy | F1 | Sensitivity | Specificity | PPV | NPV |");
    let _ = writeln!(md, "|---|---|---:|---:|---:|---:|---:|---:|");
    for m in &metrics.models {
        let t = &m.test;
        let ci = match (t.auroc_ci_low, t.auroc_ci_high) {
            (Some(l), Some(h)) => format!("{:.3} ({l:.3}-{h:.3})", t.auroc),
            _ => format!("{:.3}", t.auroc),
        };
        let _ = writeln!(
            md,
            "| {} | {ci} | {} | {} | {} | {} | {} | {} |",
            family_label(m.family),
            pct(t.accuracy),
            pct(t.f1),
            pct(t.sensitivity),
            pct(t.specificity),
            pct(t.ppv),
            pct(t.npv)
        );
    }
    let _ = writeln!(md, "\n| Model | CV AUROC (mean +/- sd) |\n|---|---|");
    for m in &metrics.models {
        let _ = writeln!(md, "| {} | {:.3} +/- {:.3} |", family_label(m.family), m.cv_mean_auroc, m.cv_sd_auroc);
    }

    let roc: Vec<RocRow> = read_rows(&ctx.input(ROC)?)?;
    let series: Vec<Series> = metrics
        .models
        .iter()
        .map(|m| Series {
            name: format!("{} ({:.3})", m.family, m.test.auroc),
            points: roc.iter().filter(|r| r.family == m.family).map(|r| (r.fpr, r.tpr)).collect(),
        })
        .collect();
    std::fs::write(ctx.output(ROC_SVG)?, plots::roc(&series))?;
    let mut figures = vec![ROC_SVG.to_string()];

    if cfg.interpret.enabled {
        let summary: Vec<ShapSummaryRow> = read_rows(&ctx.input(SHAP_SUMMARY)?)?;
        let ablation: Vec<AblationCsvRow> = read_rows(&ctx.input(ABLATION)?)?;
        let _ = writeln!(
            md,
            "\n## Explanations ({})\n\n| Rank | SHAP feature (mean abs) | Share | Ablation feature (AUROC drop) |\n|---:|---|---:|---|",
            cfg.primary_family
        );
        let mut by_delta = ablation.clone();
        by_delta.sort_by_key(|r| r.rank);
        for (s, a) in summary.iter().zip(&by_delta).take(10) {
            let _ = writeln!(
                md,
                "| {} | {} ({:.4}) | {:.1}% | {} ({:+.4}) |",
                s.rank,
                s.feature,
                s.mean_abs_phi,
                100.0 * s.share,
                a.feature,
                a.delta_auroc
            );
        }

        let shap: Vec<ShapRow> = read_rows(&ctx.input(SHAP)?)?;
        let top: Vec<(String, Vec<(f64, f64)>)> = summary
            .iter()
            .take(10)
            .map(|s| {
                let pts = shap.iter().filter(|r| r.feature == s.feature).map(|r| (r.phi, r.value)).collect();
                (s.feature.clone(), pts)
            })
            .collect();
        std::fs::write(ctx.output(SHAP_SVG)?, plots::beeswarm(&top))?;
        figures.push(SHAP_SVG.into());

        let items: Vec<(String, f64, Option<(f64, f64)>)> = by_delta
            .iter()
            .map(|r| (r.feature.clone(), r.delta_auroc, r.boot_low.zip(r.boot_high)))
            .collect();
        std::fs::write(
            ctx.output(ABLATION_SVG)?,
            plots::bars("Leave-one-feature-out ablation", "AUROC drop without the feature", &items),
        )?;
        figures.push(ABLATION_SVG.into());

        let ale: Vec<AleRow> = read_rows(&ctx.input(ALE)?)?;
        let mut names: Vec<&str> = Vec::new();
        for r in &ale {
            if !names.contains(&r.feature.as_str()) {
                names.push(&r.feature);
            }
        }
        for name in names {
            let pts: Vec<(f64, f64)> = ale.iter().filter(|r| r.feature == name).map(|r| (r.edge_raw, r.ale)).collect();
            let file = ale_svg(name);
            std::fs::write(
                ctx.output(&file)?,
                plots::line(&format!("Accumulated local effect of {name}"), name, "Effect on predicted risk", &pts),
            )?;
            figures.push(file);
        }
    }

    if cfg.uq.enabled {
        let p: PosteriorSummary = read_json(&ctx.input(POSTERIOR)?)?;
        let max_rhat = p.rhat.iter().cloned().fold(p.rhat_risk, f64::max);
        let min_ess = p.ess.iter().cloned().fold(p.ess_risk, f64::min);
        let _ = writeln!(
            md,
            "\n## Posterior risk ({:?} prior)\n\n- Mean {}, median {}\n- {:.0}% credible interval {} to {}\n- {} draws from {} chains, acceptance rate {:.3}\n- Largest R-hat {:.3}, smallest effective sample size {:.0}",
            cfg.uq.prior,
            pct(Some(p.mean)),
            pct(Some(p.median)),
            100.0 * p.cri_level,
            pct(Some(p.cri_low)),
            pct(Some(p.cri_high)),
            p.n_samples,
            p.n_chains,
            p.acceptance_rate,
            max_rhat,
            min_ess
        );
        std::fs::write(
            ctx.output(POSTERIOR_SVG)?,
            plots::histogram(
                "Posterior distribution of predicted risk",
                "Predicted risk",
                &p.histogram.edges,
                &p.histogram.counts,
                &[("mean", p.mean), ("2.5%", p.cri_low), ("97.5%", p.cri_high)],
            ),
        )?;
        figures.push(POSTERIOR_SVG.into());
    }

    let _ = writeln!(md, "\n## Figures\n");
    for f in &figures {
        let _ = writeln!(md, "- [{f}]({f})");
    }
    std::fs::write(ctx.output(REPORT)?, md)?;
    Ok(())
}
