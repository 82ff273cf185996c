use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::OnceLock;

use tempfile::TempDir;
use vancorisk::pipeline::{model_path, run_stage, RunConfig, Stage, TEST_RAW};
use vancorisk::{Dataset, ModelFamily, RiskModel};
use vancorisk_ffi::*;

/// Trains a small run once and returns its artifact directory.
fn trained() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let mut cfg = RunConfig::from_json(
            r#"{
                "seed": 21,
                "input": { "type": "synthetic", "generator": { "n_patients": 800 }, "attrition": null },
                "cv": { "n_folds": 3 },
                "grid": [
                    { "family": "gbdt_ordered", "n_rounds": 30, "max_depth": 3 },
                    { "family": "logreg" }
                ]
            }"#,
        )
        .unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        for stage in [Stage::Generate, Stage::Label, Stage::Preprocess, Stage::Select, Stage::Train] {
            run_stage(&cfg, stage).unwrap();
        }
        dir
    })
    .path()
}

fn model_file(family: ModelFamily) -> PathBuf {
    trained().join(model_path(family))
}

fn load(path: &Path) -> *mut VancoriskModel {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { vancorisk_model_load(c.as_ptr(), &mut h) }, VancoriskStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> Option<String> {
    let p = vancorisk_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn name(p: *const c_char) -> String {
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

#[test]
fn predictions_match_the_library() {
    for family in [ModelFamily::GbdtOrdered, ModelFamily::Logreg] {
        let path = model_file(family);
        let rm = RiskModel::load(&path).unwrap();
        let h = load(&path);

        let n = unsafe { vancorisk_model_n_features(h) };
        assert_eq!(n, rm.feature_names().len());
        for (i, want) in rm.feature_names().iter().enumerate() {
            assert_eq!(&name(unsafe { vancorisk_model_feature_name(h, i) }), want);
        }
        assert!(unsafe { vancorisk_model_feature_name(h, n) }.is_null());

        let test = Dataset::read_csv(&trained().join(TEST_RAW)).unwrap().select_columns(rm.feature_names()).unwrap();
        let want = rm.predict_dataset(&test).unwrap();
        let mut got = vec![f64::NAN; test.n_rows()];
        let status = unsafe { vancorisk_model_predict_batch(h, test.values().as_ptr(), test.n_rows(), n, got.as_mut_ptr()) };
        assert_eq!(status, VancoriskStatus::Ok);
        assert_eq!(got, want, "{family}");

        let mut one = f64::NAN;
        assert_eq!(unsafe { vancorisk_model_predict(h, test.row(0).as_ptr(), n, &mut one) }, VancoriskStatus::Ok);
        assert_eq!(one, want[0]);
        assert!(last_error().is_none());
        unsafe { vancorisk_model_free(h) };
    }
}

#[test]
fn json_text_loads_the_same_model() {
    let text = std::fs::read_to_string(model_file(ModelFamily::Logreg)).unwrap();
    let c = CString::new(text).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { vancorisk_model_from_json(c.as_ptr(), &mut h) }, VancoriskStatus::Ok);
    let a = load(&model_file(ModelFamily::Logreg));
    let n = unsafe { vancorisk_model_n_features(h) };
    let row = vec![f64::NAN; n];
    let (mut x, mut y) = (0.0, 1.0);
    unsafe {
        assert_eq!(vancorisk_model_predict(h, row.as_ptr(), n, &mut x), VancoriskStatus::Ok);
        assert_eq!(vancorisk_model_predict(a, row.as_ptr(), n, &mut y), VancoriskStatus::Ok);
        vancorisk_model_free(h);
        vancorisk_model_free(a);
    }
    assert_eq!(x, y);
    assert!((0.0..=1.0).contains(&x));
}

#[test]
fn errors_report_a_status_and_message() {
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(vancorisk_model_load(ptr::null(), &mut h), VancoriskStatus::NullPointer);
        assert!(h.is_null());
        assert!(last_error().unwrap().contains("path"));

        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(vancorisk_model_load(missing.as_ptr(), &mut h), VancoriskStatus::Io);

        let bad = CString::new("{ \"schema_version\": 1 }").unwrap();
        assert_eq!(vancorisk_model_from_json(bad.as_ptr(), &mut h), VancoriskStatus::Parse);
        assert!(h.is_null());

        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(vancorisk_model_from_json(invalid.as_ptr().cast(), &mut h), VancoriskStatus::InvalidUtf8);
        assert_eq!(vancorisk_model_from_json(bad.as_ptr(), ptr::null_mut()), VancoriskStatus::NullPointer);

        let h = load(&model_file(ModelFamily::GbdtOrdered));
        let n = vancorisk_model_n_features(h);
        let row = vec![0.0; n + 1];
        let mut out = 0.0;
        assert_eq!(vancorisk_model_predict(h, row.as_ptr(), n + 1, &mut out), VancoriskStatus::WidthMismatch);
        assert!(last_error().is_some());
        assert_eq!(vancorisk_model_predict(h, ptr::null(), n, &mut out), VancoriskStatus::NullPointer);
        assert_eq!(vancorisk_model_predict(h, row.as_ptr(), n, ptr::null_mut()), VancoriskStatus::NullPointer);
        assert_eq!(vancorisk_model_predict(ptr::null(), row.as_ptr(), n, &mut out), VancoriskStatus::NullPointer);
        assert_eq!(vancorisk_model_predict_batch(h, ptr::null(), 0, n, ptr::null_mut()), VancoriskStatus::Ok);
        assert!(last_error().is_none());

        assert_eq!(vancorisk_model_n_features(ptr::null()), 0);
        assert!(vancorisk_model_feature_name(ptr::null(), 0).is_null());
        vancorisk_model_free(h);
        vancorisk_model_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_exported_functions() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vancorisk.h")).unwrap();
    for f in [
        "vancorisk_model_load",
        "vancorisk_model_from_json",
        "vancorisk_model_free",
        "vancorisk_model_n_features",
        "vancorisk_model_feature_name",
        "vancorisk_model_predict",
        "vancorisk_model_predict_batch",
        "vancorisk_last_error_message",
        "vancorisk_version",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct VancoriskModel VancoriskModel;"));
    assert_eq!(name(vancorisk_version()), env!("CARGO_PKG_VERSION"));
}
