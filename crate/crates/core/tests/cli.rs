use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use vancorisk::pipeline::{RunConfig, ATTRITION, COHORT, ENV_OUT, ENV_THREADS};

fn cli() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vancorisk"));
    c.env_remove(ENV_OUT).env_remove(ENV_THREADS).env("RUST_LOG", "warn");
    c
}

fn error_record(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().expect("stderr is empty");
    serde_json::from_str(last).unwrap_or_else(|e| panic!("not a JSON record: {last} ({e})"))
}

fn effective(out: &Output) -> RunConfig {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    RunConfig::from_json(&String::from_utf8_lossy(&out.stdout)).unwrap()
}

#[test]
fn missing_seed_is_a_config_error() {
    let rec = error_record(&cli().arg("generate").output().unwrap());
    assert_eq!(rec["error"]["step"], "config");
    assert_eq!(rec["error"]["kind"], "config");
}

#[test]
fn unknown_stage_is_rejected() {
    let rec = error_record(&cli().args(["run", "--seed", "1", "--stage", "bogus"]).output().unwrap());
    assert!(rec["error"]["message"].as_str().unwrap().contains("bogus"));
}

#[test]
fn flags_override_environment_override_file() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("run.json");
    std::fs::write(&file, r#"{ "seed": 11, "out_dir": "from_file", "threads": 1 }"#).unwrap();
    let file = file.to_str().unwrap();

    let c = effective(&cli().args(["config", "--config", file]).output().unwrap());
    assert_eq!((c.seed, c.out_dir.as_path(), c.threads), (11, Path::new("from_file"), Some(1)));

    let c = effective(&cli().args(["config", "--config", file]).env(ENV_OUT, "from_env").env(ENV_THREADS, "2").output().unwrap());
    assert_eq!((c.out_dir.as_path(), c.threads), (Path::new("from_env"), Some(2)));

    let c = effective(
        &cli()
            .args(["config", "--config", file, "--seed", "12", "--out", "from_flag", "--threads", "3"])
            .env(ENV_OUT, "from_env")
            .env(ENV_THREADS, "2")
            .output()
            .unwrap(),
    );
    assert_eq!((c.seed, c.out_dir.as_path(), c.threads), (12, Path::new("from_flag"), Some(3)));
}

#[test]
fn bad_thread_variable_is_reported() {
    let rec = error_record(&cli().args(["config", "--seed", "1"]).env(ENV_THREADS, "many").output().unwrap());
    assert!(rec["error"]["message"].as_str().unwrap().contains(ENV_THREADS));
}

#[test]
fn printed_config_has_resolved_seeds() {
    let a = effective(&cli().args(["config", "--seed", "5"]).output().unwrap());
    let b = effective(&cli().args(["config", "--seed", "6"]).output().unwrap());
    assert_ne!(a.uq.sampler.seed, b.uq.sampler.seed);
    assert_eq!(a, effective(&cli().args(["config", "--seed", "5"]).output().unwrap()));
}

#[test]
fn subcommands_chain_through_the_artifact_directory() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("run.json");
    std::fs::write(
        &file,
        r#"{ "seed": 3, "input": { "type": "synthetic", "generator": { "n_patients": 400 }, "attrition": null } }"#,
    )
    .unwrap();
    let out = dir.path().join("artifacts");
    for step in ["generate", "label"] {
        let o = cli().args([step, "--config", file.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
        assert!(o.status.success(), "{step}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(out.join(COHORT).is_file() && out.join(ATTRITION).is_file());

    // preprocess before label in a fresh directory fails and names its step
    let fresh = dir.path().join("fresh");
    let rec = error_record(
        &cli().args(["preprocess", "--config", file.to_str().unwrap(), "--out", fresh.to_str().unwrap()]).output().unwrap(),
    );
    assert_eq!(rec["error"]["step"], "preprocess");
}
