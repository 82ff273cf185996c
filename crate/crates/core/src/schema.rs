//! The nineteen-feature model schema and its published group statistics.
//!
//! Fifteen features are pre-dose event measurements (bedside chart values,
//! one procedure indicator, laboratory results); four are admission-level
//! characteristics that bypass feature selection. Magnesium is modeled once,
//! as a laboratory value, and the acute physiology score is treated as an
//! admission characteristic.

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureKind;

pub const CREATININE: &str = "creatinine";
pub const VANCOMYCIN: &str = "vancomycin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Chart,
    Procedure,
    Lab,
    Admission,
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureDef {
    pub id: &'static str,
    pub display: &'static str,
    pub unit: &'static str,
    pub kind: FeatureKind,
    pub source: Source,
    /// (mean, sd) in the non-elevation group; for binary features sd is the Bernoulli sd.
    pub non_elevation: (f64, f64),
    /// (mean, sd) in the elevation group.
    pub elevation: (f64, f64),
}

const fn cont(
    id: &'static str,
    display: &'static str,
    unit: &'static str,
    source: Source,
    non_elevation: (f64, f64),
    elevation: (f64, f64),
) -> FeatureDef {
    FeatureDef { id, display, unit, kind: FeatureKind::Continuous, source, non_elevation, elevation }
}

pub const FEATURES: [FeatureDef; 19] = [
    cont("richmond_ras", "Richmond-RAS Scale", "score", Source::Chart, (-1.17, 1.26), (-1.65, 1.50)),
    cont("total_bilirubin", "Total Bilirubin", "mg/dL", Source::Chart, (1.99, 3.15), (3.28, 6.08)),
    cont("arterial_base_excess", "Arterial Base Excess", "mmol/L", Source::Chart, (-0.99, 3.57), (-2.21, 3.96)),
    cont("ast", "AST", "U/L", Source::Chart, (250.16, 758.82), (496.48, 1427.11)),
    cont("braden_mobility", "Braden Mobility", "score", Source::Chart, (2.44, 0.58), (2.25, 0.59)),
    cont("mean_airway_pressure", "Mean Airway Pressure", "cmH2O", Source::Chart, (10.24, 3.07), (11.17, 3.69)),
    FeatureDef {
        id: "arterial_line",
        display: "Arterial Line",
        unit: "binary",
        kind: FeatureKind::Binary,
        source: Source::Procedure,
        non_elevation: (0.57, 0.50),
        elevation: (0.71, 0.45),
    },
    cont("phosphate", "Phosphate", "mg/dL", Source::Lab, (3.40, 1.07), (4.13, 1.31)),
    cont("anion_gap", "Anion Gap", "mmol/L", Source::Lab, (13.75, 3.34), (15.23, 3.96)),
    cont("magnesium", "Magnesium", "mg/dL", Source::Lab, (2.06, 0.28), (2.16, 0.32)),
    cont("lactate", "Lactate", "mmol/L", Source::Lab, (2.05, 1.26), (2.58, 1.83)),
    cont("ptt", "PTT", "sec", Source::Lab, (38.65, 15.22), (43.62, 17.64)),
    cont("platelet_count", "Platelet Count", "10^3/uL", Source::Lab, (202.85, 106.86), (183.31, 110.30)),
    cont("wbc", "White Blood Cells", "10^3/uL", Source::Lab, (12.83, 9.72), (13.52, 7.72)),
    cont("glucose", "Glucose", "mg/dL", Source::Lab, (142.96, 48.24), (149.55, 52.59)),
    cont("age", "Age", "years", Source::Admission, (60.80, 14.53), (62.47, 13.55)),
    cont("ed_duration", "ED Duration", "hours", Source::Admission, (3.51, 4.09), (3.36, 5.68)),
    cont("charlson", "Charlson Comorbidity Index", "score", Source::Admission, (4.37, 2.72), (5.24, 2.75)),
    cont("apsiii", "APS III", "score", Source::Admission, (48.66, 21.05), (60.44, 23.89)),
];

pub const ADMISSION_FEATURES: [&str; 4] = ["age", "ed_duration", "charlson", "apsiii"];

/// Features the ALE analysis looks at by default.
pub const ALE_DEFAULT_FEATURES: [&str; 4] = ["phosphate", "apsiii", "magnesium", "total_bilirubin"];

pub fn feature_def(id: &str) -> Option<&'static FeatureDef> {
    FEATURES.iter().find(|f| f.id == id)
}

pub fn is_admission(id: &str) -> bool {
    ADMISSION_FEATURES.contains(&id)
}

/// Ids of the event-derived (non-admission) features, in schema order.
pub fn event_feature_ids() -> Vec<&'static str> {
    FEATURES.iter().filter(|f| f.source != Source::Admission).map(|f| f.id).collect()
}

pub fn all_feature_ids() -> Vec<&'static str> {
    FEATURES.iter().map(|f| f.id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_shape() {
        assert_eq!(FEATURES.len(), 19);
        assert_eq!(event_feature_ids().len(), 15);
        for id in ADMISSION_FEATURES {
            assert_eq!(feature_def(id).unwrap().source, Source::Admission);
        }
        let mut ids = all_feature_ids();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 19);
    }
}
