use std::collections::BTreeMap;
use std::path::Path;

use tempfile::TempDir;
use vancorisk::pipeline::{
    run_pipeline, run_stage, Manifest, MetricsFile, RunConfig, Stage, ALE, ATTRITION, COHORT, CONFIG, FEATURES,
    MANIFEST, METRICS, POSTERIOR, POSTERIOR_HIST, POSTERIOR_SVG, REPORT, ROC, SHAP, ABLATION, TEST_RAW,
};

/// A configuration small enough to run in a few seconds.
fn small_config(dir: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_json(&format!(
        r#"{{
            "seed": {seed},
            "input": {{ "type": "synthetic", "generator": {{ "n_patients": 1200 }}, "attrition": null }},
            "cv": {{ "n_folds": 3 }},
            "grid": [
                {{ "family": "gbdt_ordered", "n_rounds": 40, "max_depth": 3 }},
                {{ "family": "gbdt_leafwise", "n_rounds": 40, "max_leaves": 7 }},
                {{ "family": "gbdt_levelwise", "n_rounds": 40, "max_depth": 3 }},
                {{ "family": "logreg" }},
                {{ "family": "gaussian_nb" }},
                {{ "family": "mlp", "hidden_units": 8, "epochs": 5 }}
            ],
            "eval": {{ "n_boot": 50 }},
            "interpret": {{ "shap_rows": 100, "ablation": {{ "n_boot": 2 }} }},
            "uq": {{ "sampler": {{ "n_chains": 8, "n_iterations": 200 }} }}
        }}"#
    ))
    .unwrap();
    cfg.out_dir = dir.to_path_buf();
    cfg
}

/// Every artifact except the run-specific config copy and manifest (which
/// carries the output path and wall times).
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, d: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
                continue;
            }
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            if rel != MANIFEST && rel != CONFIG {
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn assert_same(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) {
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in a {
        assert!(bytes == &b[name], "{name} differs");
    }
}

#[test]
fn full_run_writes_the_documented_artifacts() {
    let dir = TempDir::new().unwrap();
    run_pipeline(&small_config(dir.path(), 1)).unwrap();
    for name in [
        ATTRITION, FEATURES, METRICS, ROC, SHAP, ALE, ABLATION, POSTERIOR, POSTERIOR_HIST, REPORT, MANIFEST,
        "roc.svg", "ablation.svg", "shap_beeswarm.svg", POSTERIOR_SVG,
    ] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    for name in [METRICS, POSTERIOR] {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join(name)).unwrap()).unwrap();
        assert!(v["schema_version"].is_u64(), "{name} lacks schema_version");
    }
    let report = std::fs::read_to_string(dir.path().join(REPORT)).unwrap();
    assert!(report.contains("| Model | AUC (95% CI) | Accuracy | F1 | Sensitivity | Specificity | PPV | NPV |"));
}

#[test]
fn stage_by_stage_equals_end_to_end() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    run_pipeline(&small_config(a.path(), 2)).unwrap();
    let cfg = small_config(b.path(), 2);
    for stage in Stage::ALL {
        run_stage(&cfg, stage).unwrap();
    }
    assert_same(&artifacts(a.path()), &artifacts(b.path()));
    let (ma, mb) = (Manifest::load(&a.path().join(MANIFEST)).unwrap(), Manifest::load(&b.path().join(MANIFEST)).unwrap());
    assert_eq!(ma.config_hash, mb.config_hash);
    assert_eq!(ma.steps.iter().map(|s| s.step).collect::<Vec<_>>(), mb.steps.iter().map(|s| s.step).collect::<Vec<_>>());
}

#[test]
fn thread_cap_does_not_change_artifacts() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut one = small_config(a.path(), 3);
    one.threads = Some(1);
    let mut three = small_config(b.path(), 3);
    three.threads = Some(3);
    run_pipeline(&one).unwrap();
    run_pipeline(&three).unwrap();
    assert_same(&artifacts(a.path()), &artifacts(b.path()));
}

#[test]
fn steps_only_read_what_earlier_steps_wrote() {
    let dir = TempDir::new().unwrap();
    let m = run_pipeline(&small_config(dir.path(), 4)).unwrap();
    let mut written: Vec<&str> = Vec::new();
    for s in &m.steps {
        for r in &s.reads {
            assert!(written.contains(&r.as_str()), "{} reads {r} before it is written", s.step);
        }
        for w in &s.writes {
            assert!(!written.contains(&w.as_str()), "{} rewrites {w}", s.step);
        }
        written.extend(s.writes.iter().map(String::as_str));
    }
    assert_eq!(m.steps.iter().map(|s| s.step).collect::<Vec<_>>(), Stage::ALL.to_vec());
}

#[test]
fn disabling_uq_only_removes_posterior_artifacts() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    run_pipeline(&small_config(a.path(), 5)).unwrap();
    let mut cfg = small_config(b.path(), 5);
    cfg.uq.enabled = false;
    let m = run_pipeline(&cfg).unwrap();
    assert!(m.steps.iter().any(|s| s.step == Stage::Uq && s.skipped));

    let with = artifacts(a.path());
    let without = artifacts(b.path());
    let posterior = |n: &str| n.starts_with("posterior");
    assert!(without.keys().all(|n| !posterior(n)));
    assert!(with.keys().any(|n| posterior(n)));
    for (name, bytes) in with.iter().filter(|(n, _)| !posterior(n) && n.as_str() != REPORT) {
        assert!(without.get(name) == Some(bytes), "{name} changed");
    }
}

#[test]
fn rerunning_a_stage_reproduces_its_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), 6);
    run_pipeline(&cfg).unwrap();
    let before = artifacts(dir.path());
    run_stage(&cfg, Stage::Label).unwrap();
    run_stage(&cfg, Stage::Evaluate).unwrap();
    let after = artifacts(dir.path());
    for name in [COHORT, METRICS, ROC] {
        assert!(before[name] == after[name], "{name} changed on rerun");
    }
}

#[test]
fn a_stage_without_its_inputs_names_itself() {
    let dir = TempDir::new().unwrap();
    let err = run_stage(&small_config(dir.path(), 7), Stage::Evaluate).unwrap_err();
    assert_eq!(err.step, "evaluate");
    let rec = err.record();
    assert_eq!(rec["error"]["step"], "evaluate");
    assert!(rec["error"]["message"].as_str().unwrap().contains("missing upstream artifact"));
}

#[test]
fn schema_mismatch_names_the_column() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), 8);
    run_pipeline(&cfg).unwrap();
    let path = dir.path().join(TEST_RAW);
    let text = std::fs::read_to_string(&path).unwrap().replacen("phosphate", "phosphorus", 1);
    std::fs::write(&path, text).unwrap();
    let err = run_stage(&cfg, Stage::Evaluate).unwrap_err();
    let msg = err.to_string();
    assert_eq!(err.step, "evaluate");
    assert!(msg.contains("`phosphorus`"), "{msg}");
    assert_eq!(err.record()["error"]["kind"], "schema_mismatch");
}

#[test]
fn sensitivity_target_holds_for_every_family() {
    let dir = TempDir::new().unwrap();
    run_pipeline(&small_config(dir.path(), 9)).unwrap();
    let m: MetricsFile = vancorisk::pipeline::read_json(&dir.path().join(METRICS)).unwrap();
    assert_eq!(m.models.len(), 6);
    for model in &m.models {
        assert!(model.test.sensitivity.unwrap() >= 0.8, "{}", model.family);
    }
}
