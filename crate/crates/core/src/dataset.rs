//! Tabular dataset: a dense row-major feature matrix with `NaN` as the
//! missing marker, binary outcome labels and per-column metadata.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
    pub unit: String,
}

impl FeatureMeta {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: FeatureKind::Continuous, unit: String::new() }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: FeatureKind::Binary, unit: "binary".into() }
    }

    /// Metadata for a schema feature, falling back to an untyped continuous column.
    pub fn for_feature(name: &str) -> Self {
        match crate::schema::feature_def(name) {
            Some(def) => Self { name: name.to_string(), kind: def.kind, unit: def.unit.to_string() },
            None => Self::continuous(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    labels: Vec<bool>,
    meta: Vec<FeatureMeta>,
}

impl Dataset {
    pub fn new(values: Vec<f64>, labels: Vec<bool>, meta: Vec<FeatureMeta>) -> Result<Self> {
        let d = meta.len();
        if d == 0 && !values.is_empty() {
            return Err(Error::Schema("values given for a dataset without columns".into()));
        }
        let expected = labels.len() * d;
        if values.len() != expected {
            return Err(Error::Schema(format!(
                "{} values for {} rows x {} columns",
                values.len(),
                labels.len(),
                d
            )));
        }
        for (j, m) in meta.iter().enumerate() {
            if m.kind == FeatureKind::Binary {
                for i in 0..labels.len() {
                    let v = values[i * d + j];
                    if !(v.is_nan() || v == 0.0 || v == 1.0) {
                        return Err(Error::Schema(format!(
                            "binary column `{}` holds {v} at row {i}",
                            m.name
                        )));
                    }
                }
            }
        }
        Ok(Self { values, labels, meta })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<bool>, meta: Vec<FeatureMeta>) -> Result<Self> {
        let d = meta.len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::WidthMismatch { expected: d, got: r.len() })
                    .map_err(|e| Error::Schema(format!("row {i}: {e}")));
            }
            values.extend_from_slice(r);
        }
        Self::new(values, labels, meta)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.meta.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn meta(&self) -> &[FeatureMeta] {
        &self.meta
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.meta.iter().map(|m| m.name.clone()).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let d = self.n_cols();
        self.values.iter().skip(j).step_by(d.max(1)).copied()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.name == name)
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y).count()
    }

    pub fn prevalence(&self) -> f64 {
        self.n_positive() as f64 / self.n_rows() as f64
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    pub fn require_both_classes(&self) -> Result<()> {
        let pos = self.n_positive();
        if pos == 0 || pos == self.n_rows() {
            Err(Error::SingleClass)
        } else {
            Ok(())
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let d = self.n_cols();
        let mut values = Vec::with_capacity(idx.len() * d);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset { values, labels, meta: self.meta.clone() }
    }

    pub fn select_columns(&self, names: &[String]) -> Result<Dataset> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::UnknownFeature(n.clone())))
            .collect::<Result<_>>()?;
        Ok(self.select_column_indices(&idx))
    }

    pub fn select_column_indices(&self, idx: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(self.n_rows() * idx.len());
        for i in 0..self.n_rows() {
            let r = self.row(i);
            values.extend(idx.iter().map(|&j| r[j]));
        }
        Dataset {
            values,
            labels: self.labels.clone(),
            meta: idx.iter().map(|&j| self.meta[j].clone()).collect(),
        }
    }

    pub fn drop_column(&self, j: usize) -> Dataset {
        let keep: Vec<usize> = (0..self.n_cols()).filter(|&c| c != j).collect();
        self.select_column_indices(&keep)
    }

    /// Append rows produced elsewhere (e.g. synthetic minority rows).
    pub fn append_rows(&mut self, values: &[f64], labels: &[bool]) {
        assert_eq!(values.len(), labels.len() * self.n_cols());
        self.values.extend_from_slice(values);
        self.labels.extend_from_slice(labels);
    }

    /// Split row indices by class: (negatives, positives).
    pub fn class_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let mut neg = Vec::new();
        let mut pos = Vec::new();
        for (i, &y) in self.labels.iter().enumerate() {
            if y {
                pos.push(i);
            } else {
                neg.push(i);
            }
        }
        (neg, pos)
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<bool>, Vec<FeatureMeta>) {
        (self.values, self.labels, self.meta)
    }

    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Dataset {
        let d = self.n_cols();
        let values = self.values.iter().enumerate().map(|(k, &v)| f(k % d, v)).collect();
        Dataset { values, labels: self.labels.clone(), meta: self.meta.clone() }
    }

    /// Write as CSV (feature columns then `label`) plus a `<stem>.schema.json` sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.meta.iter().map(|m| m.name.as_str()).collect();
        header.push("label");
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.row(i).iter().map(|&v| fmt_value(v)).collect();
            rec.push(if self.labels[i] { "1".into() } else { "0".into() });
            w.write_record(&rec)?;
        }
        w.flush()?;
        let schema = DatasetSchema { schema_version: 1, features: self.meta.clone() };
        std::fs::write(schema_path(path), serde_json::to_string_pretty(&schema)? + "\n")?;
        Ok(())
    }

    /// Read a CSV written by [`Dataset::write_csv`]. Column metadata comes from the
    /// sidecar when present, otherwise from the built-in feature schema.
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let label_col = header
            .iter()
            .position(|h| h == "label")
            .ok_or_else(|| Error::Schema(format!("{}: missing column `label`", path.display())))?;
        let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_col).collect();
        let sidecar = schema_path(path);
        let meta: Vec<FeatureMeta> = if sidecar.exists() {
            let s: DatasetSchema = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)?;
            let by_name: HashMap<&str, &FeatureMeta> =
                s.features.iter().map(|m| (m.name.as_str(), m)).collect();
            feature_cols
                .iter()
                .map(|&c| {
                    by_name.get(header[c].as_str()).map(|m| (*m).clone()).ok_or_else(|| {
                        Error::Schema(format!("column `{}` not described in {}", header[c], sidecar.display()))
                    })
                })
                .collect::<Result<_>>()?
        } else {
            feature_cols.iter().map(|&c| FeatureMeta::for_feature(&header[c])).collect()
        };
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            for &c in &feature_cols {
                values.push(parse_value(&rec[c]).map_err(|_| {
                    Error::Schema(format!("row {}: column `{}`: cannot parse `{}`", line + 1, header[c], &rec[c]))
                })?);
            }
            labels.push(match &rec[label_col] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Schema(format!("row {}: column `label`: expected 0/1, got `{other}`", line + 1)))
                }
            });
        }
        Dataset::new(values, labels, meta)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetSchema {
    schema_version: u32,
    features: Vec<FeatureMeta>,
}

fn schema_path(csv_path: &Path) -> std::path::PathBuf {
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    csv_path.with_file_name(format!("{stem}.schema.json"))
}

/// Shortest round-trip decimal representation; empty for missing.
pub fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

pub fn parse_value(s: &str) -> std::result::Result<f64, std::num::ParseFloatError> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s == "NA" {
        Ok(f64::NAN)
    } else {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::from_rows(
            &[vec![1.0, 0.0], vec![f64::NAN, 1.0], vec![0.1 + 0.2, 1.0]],
            vec![false, true, true],
            vec![FeatureMeta::continuous("a"), FeatureMeta::binary("b")],
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_binary_values_in_binary_column() {
        let err = Dataset::from_rows(
            &[vec![0.5]],
            vec![true],
            vec![FeatureMeta::binary("flag")],
        )
        .unwrap_err();
        assert!(err.to_string().contains("flag"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        let d = toy();
        d.write_csv(&path).unwrap();
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(back.meta(), d.meta());
        assert_eq!(back.labels(), d.labels());
        for (a, b) in back.values().iter().zip(d.values()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn column_selection() {
        let d = toy();
        let s = d.select_columns(&["b".to_string()]).unwrap();
        assert_eq!(s.values(), &[0.0, 1.0, 1.0]);
        assert!(d.select_columns(&["zzz".to_string()]).is_err());
        assert_eq!(d.drop_column(0).feature_names(), vec!["b".to_string()]);
    }
}
