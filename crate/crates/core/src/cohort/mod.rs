//! Cohort construction: inclusion filters, outcome labeling and pre-dose
//! feature snapshots.
//!
//! All operations are pure functions over immutable timelines. Times are
//! hours since ICU admission.

mod io;

pub use io::{
    read_admissions_csv, read_events_csv, read_labeled_cohort_csv, write_admissions_csv,
    write_attrition_json, write_events_csv, write_labeled_cohort_csv,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind, FeatureMeta};
use crate::error::{Error, Result};
use crate::schema::{self, CREATININE, VANCOMYCIN};

/// Absolute creatinine rise (mg/dL) that marks elevation within the short window.
pub const ABSOLUTE_RISE: f64 = 0.3;
/// Ratio to baseline that marks elevation within the long window.
pub const RELATIVE_RISE: f64 = 1.5;
pub const ABSOLUTE_WINDOW_HOURS: f64 = 48.0;
pub const RELATIVE_WINDOW_HOURS: f64 = 168.0;
/// Slack for threshold comparisons on decimal lab values (1.1 -> 1.4 is a 0.3 rise).
pub const THRESHOLD_SLACK: f64 = 1e-9;

pub const MIN_AGE: f64 = 18.0;
pub const MAX_AGE: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Lab,
    Chart,
    Procedure,
    DrugDose,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Lab => "lab",
            EventKind::Chart => "chart",
            EventKind::Procedure => "procedure",
            EventKind::DrugDose => "drug_dose",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lab" => Some(EventKind::Lab),
            "chart" => Some(EventKind::Chart),
            "procedure" => Some(EventKind::Procedure),
            "drug_dose" => Some(EventKind::DrugDose),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalEvent {
    pub timestamp: f64,
    pub kind: EventKind,
    pub item_id: String,
    pub value: f64,
}

impl ClinicalEvent {
    pub fn new(timestamp: f64, kind: EventKind, item_id: impl Into<String>, value: f64) -> Self {
        Self { timestamp, kind, item_id: item_id.into(), value }
    }

    fn is_vanco_dose(&self) -> bool {
        self.kind == EventKind::DrugDose && self.item_id == VANCOMYCIN
    }

    fn is_creatinine(&self) -> bool {
        self.kind == EventKind::Lab && self.item_id == CREATININE
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmissionFeatures {
    pub age: f64,
    pub ed_duration: Option<f64>,
    pub charlson: Option<f64>,
    pub apsiii: Option<f64>,
}

impl AdmissionFeatures {
    pub fn get(&self, id: &str) -> Option<f64> {
        match id {
            "age" => Some(self.age),
            "ed_duration" => self.ed_duration,
            "charlson" => self.charlson,
            "apsiii" => self.apsiii,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTimeline {
    pub patient_id: String,
    /// 1 for the first ICU stay.
    pub stay_index: u32,
    pub has_active_malignancy: bool,
    pub admission: AdmissionFeatures,
    events: Vec<ClinicalEvent>,
    first_vanco_time: Option<f64>,
}

impl PatientTimeline {
    /// Build a timeline. Events are validated, sorted by timestamp (stable) and
    /// the first vancomycin time is derived from them.
    pub fn new(
        patient_id: impl Into<String>,
        stay_index: u32,
        has_active_malignancy: bool,
        admission: AdmissionFeatures,
        mut events: Vec<ClinicalEvent>,
    ) -> Result<Self> {
        let patient_id = patient_id.into();
        for e in &events {
            if !(e.timestamp.is_finite() && e.timestamp >= 0.0) {
                return Err(Error::Schema(format!(
                    "patient {patient_id}: event `{}` has invalid timestamp {}",
                    e.item_id, e.timestamp
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::Schema(format!(
                    "patient {patient_id}: event `{}` has non-finite value",
                    e.item_id
                )));
            }
            if let Some(def) = schema::feature_def(&e.item_id) {
                if def.kind == FeatureKind::Binary && e.value != 0.0 && e.value != 1.0 {
                    return Err(Error::Schema(format!(
                        "patient {patient_id}: binary item `{}` has value {}",
                        e.item_id, e.value
                    )));
                }
            }
        }
        if stay_index == 0 {
            return Err(Error::Schema(format!("patient {patient_id}: stay_index must be >= 1")));
        }
        events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let first_vanco_time = events.iter().find(|e| e.is_vanco_dose()).map(|e| e.timestamp);
        Ok(Self { patient_id, stay_index, has_active_malignancy, admission, events, first_vanco_time })
    }

    pub fn events(&self) -> &[ClinicalEvent] {
        &self.events
    }

    pub fn first_vanco_time(&self) -> Option<f64> {
        self.first_vanco_time
    }

    pub fn age(&self) -> f64 {
        self.admission.age
    }

    fn require_vanco(&self) -> Result<f64> {
        self.first_vanco_time
            .ok_or_else(|| Error::MissingVancoTime { patient_id: self.patient_id.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Absolute48h,
    Relative7d,
    None,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::Absolute48h => "absolute_48h",
            Trigger::Relative7d => "relative_7d",
            Trigger::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "absolute_48h" => Some(Trigger::Absolute48h),
            "relative_7d" => Some(Trigger::Relative7d),
            "none" => Some(Trigger::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataQuality {
    Ok,
    NoPostCreatinine,
}

impl DataQuality {
    pub fn as_str(self) -> &'static str {
        match self {
            DataQuality::Ok => "ok",
            DataQuality::NoPostCreatinine => "no_post_creatinine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub positive: bool,
    pub trigger: Trigger,
    pub trigger_time: Option<f64>,
    pub baseline_creatinine: f64,
    /// Highest post-dose creatinine within the long window; absent without post-dose values.
    pub peak_post_creatinine: Option<f64>,
    pub data_quality_flag: DataQuality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttritionRow {
    pub stage: String,
    pub input: usize,
    pub output: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttritionReport {
    pub rows: Vec<AttritionRow>,
}

impl AttritionReport {
    pub fn final_count(&self) -> usize {
        self.rows.last().map_or(0, |r| r.output)
    }

    fn push(&mut self, stage: &str, input: usize, output: usize) {
        self.rows.push(AttritionRow { stage: stage.to_string(), input, output });
    }
}

pub const STAGE_VANCOMYCIN: &str = "received_vancomycin";
pub const STAGE_AGE: &str = "age_18_to_80";
pub const STAGE_MALIGNANCY: &str = "no_active_malignancy";
pub const STAGE_FIRST_STAY: &str = "first_icu_stay";
pub const STAGE_BASELINE: &str = "pre_dose_creatinine_available";

/// Apply the four inclusion filters in order: vancomycin exposure, age
/// 18-80 inclusive, no active malignancy, first ICU stay.
pub fn apply_inclusion_filters(
    timelines: Vec<PatientTimeline>,
) -> (Vec<PatientTimeline>, AttritionReport) {
    let mut report = AttritionReport::default();
    let mut current = timelines;

    type Keep = fn(&PatientTimeline) -> bool;
    let filters: [(&str, Keep); 4] = [
        (STAGE_VANCOMYCIN, |t| t.first_vanco_time.is_some()),
        (STAGE_AGE, |t| t.age() >= MIN_AGE && t.age() <= MAX_AGE),
        (STAGE_MALIGNANCY, |t| !t.has_active_malignancy),
        (STAGE_FIRST_STAY, |t| t.stay_index == 1),
    ];
    for (stage, keep) in filters {
        let input = current.len();
        current.retain(keep);
        report.push(stage, input, current.len());
    }
    (current, report)
}

/// Most recent creatinine strictly before the first vancomycin dose.
pub fn baseline_creatinine(timeline: &PatientTimeline) -> Result<Option<f64>> {
    let t_v = timeline.require_vanco()?;
    Ok(timeline
        .events
        .iter()
        .rfind(|e| e.is_creatinine() && e.timestamp < t_v)
        .map(|e| e.value))
}

/// Label the stay. Positive when, after the first dose, creatinine rises by at
/// least 0.3 mg/dL within 48 h or reaches 1.5x baseline within 168 h (both
/// windows closed). An event exactly at the dose time counts as post-dose.
pub fn label_kdigo(timeline: &PatientTimeline) -> Result<OutcomeLabel> {
    let t_v = timeline.require_vanco()?;
    let baseline = baseline_creatinine(timeline)?
        .ok_or_else(|| Error::MissingBaseline { patient_id: timeline.patient_id.clone() })?;

    let post: Vec<&ClinicalEvent> = timeline
        .events
        .iter()
        .filter(|e| e.is_creatinine() && e.timestamp >= t_v)
        .collect();
    if post.is_empty() {
        return Ok(OutcomeLabel {
            positive: false,
            trigger: Trigger::None,
            trigger_time: None,
            baseline_creatinine: baseline,
            peak_post_creatinine: None,
            data_quality_flag: DataQuality::NoPostCreatinine,
        });
    }

    let peak = post
        .iter()
        .filter(|e| e.timestamp - t_v <= RELATIVE_WINDOW_HOURS)
        .map(|e| e.value)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));

    let mut trigger = Trigger::None;
    let mut trigger_time = None;
    for e in &post {
        let dt = e.timestamp - t_v;
        let absolute =
            dt <= ABSOLUTE_WINDOW_HOURS && e.value - baseline >= ABSOLUTE_RISE - THRESHOLD_SLACK;
        let relative = dt <= RELATIVE_WINDOW_HOURS
            && e.value >= RELATIVE_RISE * baseline - THRESHOLD_SLACK;
        if absolute || relative {
            trigger = if absolute { Trigger::Absolute48h } else { Trigger::Relative7d };
            trigger_time = Some(e.timestamp);
            break;
        }
    }

    Ok(OutcomeLabel {
        positive: trigger != Trigger::None,
        trigger,
        trigger_time,
        baseline_creatinine: baseline,
        peak_post_creatinine: peak,
        data_quality_flag: DataQuality::Ok,
    })
}

/// Per-feature latest pre-dose value with the timestamp it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSnapshot {
    pub feature_ids: Vec<String>,
    pub values: Vec<Option<f64>>,
    /// Timestamp of the contributing event; `None` for admission-level
    /// features and for missing values.
    pub source_times: Vec<Option<f64>>,
}

/// Snapshot the requested features as of the first vancomycin dose. Only
/// events strictly before the dose contribute; admission-level features are
/// copied from the admission record.
pub fn extract_feature_snapshot(
    timeline: &PatientTimeline,
    feature_schema: &[String],
) -> Result<FeatureSnapshot> {
    let t_v = timeline.require_vanco()?;
    let mut values = Vec::with_capacity(feature_schema.len());
    let mut source_times = Vec::with_capacity(feature_schema.len());
    for id in feature_schema {
        if schema::is_admission(id) {
            values.push(timeline.admission.get(id));
            source_times.push(None);
            continue;
        }
        let latest = timeline
            .events
            .iter()
            .rfind(|e| e.timestamp < t_v && &e.item_id == id && e.kind != EventKind::DrugDose);
        values.push(latest.map(|e| e.value));
        source_times.push(latest.map(|e| e.timestamp));
    }
    Ok(FeatureSnapshot { feature_ids: feature_schema.to_vec(), values, source_times })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortRow {
    pub patient_id: String,
    pub features: Vec<Option<f64>>,
    pub label: OutcomeLabel,
}

/// A labeled, feature-snapshotted cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCohort {
    pub feature_ids: Vec<String>,
    pub rows: Vec<CohortRow>,
    pub attrition: AttritionReport,
}

impl LabeledCohort {
    pub fn n_positive(&self) -> usize {
        self.rows.iter().filter(|r| r.label.positive).count()
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        let meta: Vec<FeatureMeta> =
            self.feature_ids.iter().map(|id| FeatureMeta::for_feature(id)).collect();
        let mut values = Vec::with_capacity(self.rows.len() * meta.len());
        for r in &self.rows {
            values.extend(r.features.iter().map(|v| v.unwrap_or(f64::NAN)));
        }
        Dataset::new(values, self.rows.iter().map(|r| r.label.positive).collect(), meta)
    }
}

/// Filter, label and snapshot. Stays without a pre-dose creatinine cannot be
/// labeled; they are dropped and counted in an extra attrition row.
pub fn build_cohort(timelines: Vec<PatientTimeline>, feature_schema: &[String]) -> Result<LabeledCohort> {
    let (kept, mut attrition) = apply_inclusion_filters(timelines);
    let input = kept.len();
    let results: Vec<Result<Option<CohortRow>>> = kept
        .par_iter()
        .map(|t| match label_kdigo(t) {
            Ok(label) => {
                let snap = extract_feature_snapshot(t, feature_schema)?;
                Ok(Some(CohortRow { patient_id: t.patient_id.clone(), features: snap.values, label }))
            }
            Err(Error::MissingBaseline { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut rows = Vec::with_capacity(input);
    for r in results {
        if let Some(row) = r? {
            rows.push(row);
        }
    }
    attrition.push(STAGE_BASELINE, input, rows.len());
    Ok(LabeledCohort { feature_ids: feature_schema.to_vec(), rows, attrition })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn timeline(id: &str, age: f64, events: Vec<ClinicalEvent>) -> PatientTimeline {
        PatientTimeline::new(
            id,
            1,
            false,
            AdmissionFeatures { age, ed_duration: Some(2.0), charlson: Some(3.0), apsiii: Some(40.0) },
            events,
        )
        .unwrap()
    }

    fn vanco(t: f64) -> ClinicalEvent {
        ClinicalEvent::new(t, EventKind::DrugDose, VANCOMYCIN, 1000.0)
    }

    fn cr(t: f64, v: f64) -> ClinicalEvent {
        ClinicalEvent::new(t, EventKind::Lab, CREATININE, v)
    }

    #[test]
    fn baseline_is_latest_strictly_before_dose() {
        let t = timeline("p", 50.0, vec![cr(1.0, 1.0), cr(5.0, 1.2), vanco(6.0), cr(6.0, 3.0)]);
        assert_eq!(baseline_creatinine(&t).unwrap(), Some(1.2));
        let t = timeline("p", 50.0, vec![cr(10.0, 1.0), vanco(6.0)]);
        assert_eq!(baseline_creatinine(&t).unwrap(), None);
        let t = timeline("p", 50.0, vec![cr(1.0, 1.0)]);
        assert!(matches!(baseline_creatinine(&t), Err(Error::MissingVancoTime { .. })));
    }

    #[test]
    fn absolute_rise_within_48h() {
        let t = timeline("p", 50.0, vec![cr(0.0, 1.0), vanco(2.0), cr(26.0, 1.35)]);
        let l = label_kdigo(&t).unwrap();
        assert!(l.positive);
        assert_eq!(l.trigger, Trigger::Absolute48h);
        assert_eq!(l.trigger_time, Some(26.0));
    }

    #[test]
    fn relative_rise_within_7d() {
        let t = timeline("p", 50.0, vec![cr(0.0, 1.0), vanco(2.0), cr(122.0, 1.55)]);
        let l = label_kdigo(&t).unwrap();
        assert!(l.positive);
        assert_eq!(l.trigger, Trigger::Relative7d);
    }

    #[test]
    fn below_both_thresholds_is_negative() {
        let t = timeline("p", 50.0, vec![cr(0.0, 1.0), vanco(2.0), cr(26.0, 1.2), cr(122.0, 1.4)]);
        let l = label_kdigo(&t).unwrap();
        assert!(!l.positive);
        assert_eq!(l.trigger, Trigger::None);
        assert_eq!(l.peak_post_creatinine, Some(1.4));
        assert_eq!(l.data_quality_flag, DataQuality::Ok);
    }

    #[test]
    fn no_post_creatinine_is_flagged_negative() {
        let t = timeline("p", 50.0, vec![cr(0.0, 1.0), vanco(2.0)]);
        let l = label_kdigo(&t).unwrap();
        assert!(!l.positive);
        assert_eq!(l.data_quality_flag, DataQuality::NoPostCreatinine);
    }

    #[test]
    fn window_edges_are_closed() {
        let t = timeline("p", 50.0, vec![cr(0.0, 1.0), vanco(2.0), cr(50.0, 1.3)]);
        assert_eq!(label_kdigo(&t).unwrap().trigger, Trigger::Absolute48h);
        let t = timeline("p", 50.0, vec![cr(0.0, 1.0), vanco(2.0), cr(50.0 + 1e-6, 1.3)]);
        assert!(!label_kdigo(&t).unwrap().positive);
        let t = timeline("p", 50.0, vec![cr(0.0, 1.0), vanco(2.0), cr(170.0, 1.5)]);
        assert_eq!(label_kdigo(&t).unwrap().trigger, Trigger::Relative7d);
        let t = timeline("p", 50.0, vec![cr(0.0, 1.0), vanco(2.0), cr(171.0, 9.0)]);
        assert!(!label_kdigo(&t).unwrap().positive);
    }

    #[test]
    fn decimal_threshold_is_not_lost_to_rounding() {
        // 1.4 - 1.1 evaluates to 0.29999999999999982 in binary floating point
        let t = timeline("p", 50.0, vec![cr(0.0, 1.1), vanco(2.0), cr(3.0, 1.4)]);
        assert!(label_kdigo(&t).unwrap().positive);
    }

    #[test]
    fn simultaneous_criteria_report_absolute() {
        let t = timeline("p", 50.0, vec![cr(0.0, 0.5), vanco(2.0), cr(10.0, 0.9)]);
        let l = label_kdigo(&t).unwrap();
        assert_eq!(l.trigger, Trigger::Absolute48h);
    }

    #[test]
    fn missing_baseline_is_an_error() {
        let t = timeline("p", 50.0, vec![vanco(2.0), cr(10.0, 0.9)]);
        assert!(matches!(label_kdigo(&t), Err(Error::MissingBaseline { .. })));
    }

    #[test]
    fn snapshot_uses_latest_pre_dose_value_only() {
        let ev = |t, v| ClinicalEvent::new(t, EventKind::Lab, "phosphate", v);
        let t = timeline("p", 50.0, vec![ev(2.0, 3.0), ev(4.0, 4.1), vanco(5.0), ev(5.0, 9.9), ev(7.0, 8.0)]);
        let ids = vec!["phosphate".to_string(), "lactate".to_string(), "age".to_string()];
        let s = extract_feature_snapshot(&t, &ids).unwrap();
        assert_eq!(s.values, vec![Some(4.1), None, Some(50.0)]);
        assert_eq!(s.source_times, vec![Some(4.0), None, None]);
    }

    #[test]
    fn filters_remove_each_case_at_its_stage() {
        let mk = |id: &str, age: f64, malignant: bool, stay: u32, vanc: bool| {
            let mut ev = vec![cr(0.0, 1.0)];
            if vanc {
                ev.push(vanco(1.0));
            }
            PatientTimeline::new(
                id,
                stay,
                malignant,
                AdmissionFeatures { age, ..Default::default() },
                ev,
            )
            .unwrap()
        };
        let input = vec![
            mk("novanco", 50.0, false, 1, false),
            mk("young", 17.0, false, 1, true),
            mk("old", 81.0, false, 1, true),
            mk("cancer", 50.0, true, 1, true),
            mk("second", 50.0, false, 2, true),
        ];
        let (kept, report) = apply_inclusion_filters(input);
        assert!(kept.is_empty());
        let counts: Vec<(usize, usize)> = report.rows.iter().map(|r| (r.input, r.output)).collect();
        assert_eq!(counts, vec![(5, 4), (4, 2), (2, 1), (1, 0)]);
        let stages: Vec<&str> = report.rows.iter().map(|r| r.stage.as_str()).collect();
        assert_eq!(stages, vec![STAGE_VANCOMYCIN, STAGE_AGE, STAGE_MALIGNANCY, STAGE_FIRST_STAY]);
    }

    #[test]
    fn age_bounds_are_inclusive() {
        let mk = |age| timeline("p", age, vec![vanco(1.0)]);
        let (kept, _) = apply_inclusion_filters(vec![mk(18.0), mk(80.0), mk(80.01)]);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn empty_input_gives_zero_report() {
        let (kept, report) = apply_inclusion_filters(vec![]);
        assert!(kept.is_empty());
        assert_eq!(report.rows.len(), 4);
        assert!(report.rows.iter().all(|r| r.input == 0 && r.output == 0));
    }

    #[test]
    fn timeline_rejects_bad_events() {
        let bad = PatientTimeline::new(
            "p",
            1,
            false,
            AdmissionFeatures::default(),
            vec![ClinicalEvent::new(-1.0, EventKind::Lab, CREATININE, 1.0)],
        );
        assert!(bad.is_err());
        let bad = PatientTimeline::new(
            "p",
            1,
            false,
            AdmissionFeatures::default(),
            vec![ClinicalEvent::new(1.0, EventKind::Procedure, "arterial_line", 0.5)],
        );
        assert!(bad.is_err());
    }
}
