use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::{
    AdmissionFeatures, AttritionReport, ClinicalEvent, CohortRow, DataQuality, EventKind,
    LabeledCohort, OutcomeLabel, PatientTimeline, Trigger,
};
use crate::dataset::{fmt_value, parse_value};
use crate::error::{Error, Result};

const EVENT_HEADER: [&str; 6] = ["patient_id", "stay_index", "timestamp_hours", "kind", "item_id", "value"];
const ADMISSION_HEADER: [&str; 7] =
    ["patient_id", "stay_index", "age", "malignancy", "ed_duration", "charlson", "apsiii"];
const LABEL_COLUMNS: [&str; 6] = [
    "label",
    "trigger",
    "trigger_time",
    "baseline_creatinine",
    "peak_post_creatinine",
    "data_quality_flag",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_value)
}

fn column_map(path: &Path, header: &csv::StringRecord, required: &[&str]) -> Result<BTreeMap<String, usize>> {
    let map: BTreeMap<String, usize> =
        header.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
    for r in required {
        if !map.contains_key(*r) {
            return Err(Error::Schema(format!("{}: missing column `{r}`", path.display())));
        }
    }
    Ok(map)
}

fn field<'a>(rec: &'a csv::StringRecord, cols: &BTreeMap<String, usize>, name: &str) -> &'a str {
    rec.get(cols[name]).unwrap_or("")
}

fn parse_f64(path: &Path, line: usize, col: &str, s: &str) -> Result<f64> {
    parse_value(s)
        .map_err(|_| Error::Schema(format!("{}: row {line}: column `{col}`: cannot parse `{s}`", path.display())))
}

fn parse_opt(path: &Path, line: usize, col: &str, s: &str) -> Result<Option<f64>> {
    let v = parse_f64(path, line, col, s)?;
    Ok(if v.is_nan() { None } else { Some(v) })
}

fn parse_bool(path: &Path, line: usize, col: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(Error::Schema(format!(
            "{}: row {line}: column `{col}`: expected 0/1, got `{other}`",
            path.display()
        ))),
    }
}

/// Write the event table and the admission table for a set of timelines.
pub fn write_events_csv(timelines: &[PatientTimeline], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EVENT_HEADER)?;
    for t in timelines {
        let stay = t.stay_index.to_string();
        for e in t.events() {
            w.write_record([
                t.patient_id.as_str(),
                stay.as_str(),
                &fmt_value(e.timestamp),
                e.kind.as_str(),
                e.item_id.as_str(),
                &fmt_value(e.value),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_admissions_csv(timelines: &[PatientTimeline], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ADMISSION_HEADER)?;
    for t in timelines {
        let a = &t.admission;
        w.write_record([
            t.patient_id.clone(),
            t.stay_index.to_string(),
            fmt_value(a.age),
            if t.has_active_malignancy { "1".into() } else { "0".into() },
            opt(a.ed_duration),
            opt(a.charlson),
            opt(a.apsiii),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Admission rows keyed by (patient_id, stay_index), in file order.
pub fn read_admissions_csv(path: &Path) -> Result<Vec<(String, u32, bool, AdmissionFeatures)>> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = column_map(path, r.headers()?, &ADMISSION_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        let stay = field(&rec, &cols, "stay_index");
        let stay: u32 = stay.trim().parse().map_err(|_| {
            Error::Schema(format!("{}: row {line}: column `stay_index`: cannot parse `{stay}`", path.display()))
        })?;
        let age = parse_f64(path, line, "age", field(&rec, &cols, "age"))?;
        if age.is_nan() {
            return Err(Error::Schema(format!("{}: row {line}: column `age` is empty", path.display())));
        }
        out.push((
            field(&rec, &cols, "patient_id").to_string(),
            stay,
            parse_bool(path, line, "malignancy", field(&rec, &cols, "malignancy"))?,
            AdmissionFeatures {
                age,
                ed_duration: parse_opt(path, line, "ed_duration", field(&rec, &cols, "ed_duration"))?,
                charlson: parse_opt(path, line, "charlson", field(&rec, &cols, "charlson"))?,
                apsiii: parse_opt(path, line, "apsiii", field(&rec, &cols, "apsiii"))?,
            },
        ));
    }
    Ok(out)
}

/// Join the event and admission tables into timelines, in admission-file order.
/// Events for a stay missing from the admission table are a schema error.
pub fn read_events_csv(events_path: &Path, admissions_path: &Path) -> Result<Vec<PatientTimeline>> {
    let admissions = read_admissions_csv(admissions_path)?;
    let mut events: BTreeMap<(String, u32), Vec<ClinicalEvent>> = BTreeMap::new();
    for (pid, stay, ..) in &admissions {
        if events.insert((pid.clone(), *stay), Vec::new()).is_some() {
            return Err(Error::Schema(format!(
                "{}: duplicate admission row for patient `{pid}` stay {stay}",
                admissions_path.display()
            )));
        }
    }

    let mut r = csv::Reader::from_path(events_path)?;
    let cols = column_map(events_path, r.headers()?, &EVENT_HEADER)?;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        let pid = field(&rec, &cols, "patient_id").to_string();
        let stay_s = field(&rec, &cols, "stay_index");
        let stay: u32 = stay_s.trim().parse().map_err(|_| {
            Error::Schema(format!("{}: row {line}: column `stay_index`: cannot parse `{stay_s}`", events_path.display()))
        })?;
        let kind_s = field(&rec, &cols, "kind");
        let kind = EventKind::parse(kind_s).ok_or_else(|| {
            Error::Schema(format!("{}: row {line}: column `kind`: unknown kind `{kind_s}`", events_path.display()))
        })?;
        let timestamp = parse_f64(events_path, line, "timestamp_hours", field(&rec, &cols, "timestamp_hours"))?;
        let value = parse_f64(events_path, line, "value", field(&rec, &cols, "value"))?;
        let item = field(&rec, &cols, "item_id").to_string();
        let bucket = events.get_mut(&(pid.clone(), stay)).ok_or_else(|| {
            Error::Schema(format!(
                "{}: row {line}: patient `{pid}` stay {stay} has no admission row",
                events_path.display()
            ))
        })?;
        bucket.push(ClinicalEvent { timestamp, kind, item_id: item, value });
    }

    admissions
        .into_iter()
        .map(|(pid, stay, malignant, adm)| {
            let ev = events.remove(&(pid.clone(), stay)).unwrap_or_default();
            PatientTimeline::new(pid, stay, malignant, adm, ev)
        })
        .collect()
}

/// One row per patient: patient_id, features, then label and trigger metadata.
pub fn write_labeled_cohort_csv(cohort: &LabeledCohort, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["patient_id".to_string()];
    header.extend(cohort.feature_ids.iter().cloned());
    header.extend(LABEL_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in &cohort.rows {
        let mut rec = vec![r.patient_id.clone()];
        rec.extend(r.features.iter().map(|v| opt(*v)));
        let l = &r.label;
        rec.push(if l.positive { "1".into() } else { "0".into() });
        rec.push(l.trigger.as_str().into());
        rec.push(opt(l.trigger_time));
        rec.push(fmt_value(l.baseline_creatinine));
        rec.push(opt(l.peak_post_creatinine));
        rec.push(l.data_quality_flag.as_str().into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a labeled cohort. Every column between `patient_id` and `label` is a feature.
/// The attrition report is not part of this file and comes back empty.
pub fn read_labeled_cohort_csv(path: &Path) -> Result<LabeledCohort> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let mut required = vec!["patient_id"];
    required.extend(LABEL_COLUMNS);
    let cols = column_map(path, &header, &required)?;
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| {
            let h = &header[c];
            h != "patient_id" && !LABEL_COLUMNS.contains(&h)
        })
        .collect();
    let feature_ids: Vec<String> = feature_cols.iter().map(|&c| header[c].to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        let features = feature_cols
            .iter()
            .map(|&c| parse_opt(path, line, &header[c], rec.get(c).unwrap_or("")))
            .collect::<Result<Vec<_>>>()?;
        let trig_s = field(&rec, &cols, "trigger");
        let trigger = Trigger::parse(trig_s).ok_or_else(|| {
            Error::Schema(format!("{}: row {line}: column `trigger`: unknown value `{trig_s}`", path.display()))
        })?;
        let flag = match field(&rec, &cols, "data_quality_flag") {
            "ok" => DataQuality::Ok,
            "no_post_creatinine" => DataQuality::NoPostCreatinine,
            other => {
                return Err(Error::Schema(format!(
                    "{}: row {line}: column `data_quality_flag`: unknown value `{other}`",
                    path.display()
                )))
            }
        };
        let label = OutcomeLabel {
            positive: parse_bool(path, line, "label", field(&rec, &cols, "label"))?,
            trigger,
            trigger_time: parse_opt(path, line, "trigger_time", field(&rec, &cols, "trigger_time"))?,
            baseline_creatinine: parse_f64(path, line, "baseline_creatinine", field(&rec, &cols, "baseline_creatinine"))?,
            peak_post_creatinine: parse_opt(
                path,
                line,
                "peak_post_creatinine",
                field(&rec, &cols, "peak_post_creatinine"),
            )?,
            data_quality_flag: flag,
        };
        rows.push(CohortRow { patient_id: field(&rec, &cols, "patient_id").to_string(), features, label });
    }
    Ok(LabeledCohort { feature_ids, rows, attrition: AttritionReport::default() })
}

#[derive(Serialize)]
struct AttritionFile<'a> {
    schema_version: u32,
    stages: &'a [super::AttritionRow],
    final_count: usize,
}

pub fn write_attrition_json(report: &AttritionReport, path: &Path) -> Result<()> {
    let file = AttritionFile { schema_version: 1, stages: &report.rows, final_count: report.final_count() };
    std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{CREATININE, VANCOMYCIN};

    fn sample() -> Vec<PatientTimeline> {
        let adm = AdmissionFeatures { age: 55.5, ed_duration: Some(3.25), charlson: None, apsiii: Some(41.0) };
        vec![
            PatientTimeline::new(
                "a",
                1,
                false,
                adm.clone(),
                vec![
                    ClinicalEvent::new(0.5, EventKind::Lab, CREATININE, 1.1),
                    ClinicalEvent::new(2.0, EventKind::DrugDose, VANCOMYCIN, 1000.0),
                    ClinicalEvent::new(20.0, EventKind::Lab, CREATININE, 1.45),
                ],
            )
            .unwrap(),
            PatientTimeline::new("b", 2, true, adm, vec![]).unwrap(),
        ]
    }

    #[test]
    fn timelines_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let (ev, adm) = (dir.path().join("events.csv"), dir.path().join("admissions.csv"));
        let t = sample();
        write_events_csv(&t, &ev).unwrap();
        write_admissions_csv(&t, &adm).unwrap();
        assert_eq!(read_events_csv(&ev, &adm).unwrap(), t);
    }

    #[test]
    fn orphan_event_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (ev, adm) = (dir.path().join("events.csv"), dir.path().join("admissions.csv"));
        let t = sample();
        write_events_csv(&t, &ev).unwrap();
        write_admissions_csv(&t[1..], &adm).unwrap();
        let err = read_events_csv(&ev, &adm).unwrap_err().to_string();
        assert!(err.contains("`a`"), "{err}");
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let adm = dir.path().join("admissions.csv");
        std::fs::write(&adm, "patient_id,stay_index,age\nx,1,40\n").unwrap();
        let err = read_admissions_csv(&adm).unwrap_err().to_string();
        assert!(err.contains("malignancy"), "{err}");
    }

    #[test]
    fn labeled_cohort_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cohort.csv");
        let ids = vec!["age".to_string(), "charlson".to_string()];
        let cohort = super::super::build_cohort(sample(), &ids).unwrap();
        write_labeled_cohort_csv(&cohort, &path).unwrap();
        let back = read_labeled_cohort_csv(&path).unwrap();
        assert_eq!(back.rows, cohort.rows);
        assert_eq!(back.feature_ids, ids);
    }
}
