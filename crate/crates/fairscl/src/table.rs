//! Delimited-table ingestion and emission.
//!
//! Input: comma-separated UTF-8 with a header row; a [`TableSchema`] names
//! the id column, the binary label column, the group columns, and the
//! feature columns. Emission writes columns in a stable order (id, label,
//! groups sorted by attribute name, features `f0..fk`) and prints floats
//! with 17 significant digits, so feature values survive a round-trip
//! bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};

/// Column-role mapping for [`ingest_table`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSchema {
    pub id: String,
    pub label: String,
    pub groups: Vec<String>,
    pub features: Vec<String>,
}

impl TableSchema {
    /// Infer column roles from a file's header: `id` and `label` by name,
    /// `f<digits>` columns are features (ordered numerically), everything
    /// else is a group attribute. This is exactly the header layout
    /// [`emit_table_dataset`] writes, so emitted files re-ingest without an
    /// explicit schema.
    pub fn infer(path: &Path) -> Result<TableSchema> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = reader.headers()?.clone();
        let mut groups = Vec::new();
        let mut features: Vec<(usize, String)> = Vec::new();
        let mut saw_id = false;
        let mut saw_label = false;
        for h in headers.iter() {
            if h == "id" {
                saw_id = true;
            } else if h == "label" {
                saw_label = true;
            } else if let Some(k) = h
                .strip_prefix('f')
                .filter(|r| !r.is_empty() && r.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|r| r.parse::<usize>().ok())
            {
                features.push((k, h.to_string()));
            } else {
                groups.push(h.to_string());
            }
        }
        if !saw_id || !saw_label {
            return Err(Error::Data(format!(
                "cannot infer a schema for {}: header must contain `id` and `label` columns",
                path.display()
            )));
        }
        features.sort();
        Ok(TableSchema {
            id: "id".into(),
            label: "label".into(),
            groups,
            features: features.into_iter().map(|(_, name)| name).collect(),
        })
    }

    /// The schema under which [`emit_table_dataset`] writes `ds`, suitable
    /// for re-ingesting the emitted file.
    pub fn for_dataset(ds: &Dataset) -> TableSchema {
        TableSchema {
            id: "id".into(),
            label: "label".into(),
            groups: ds.attributes().keys().cloned().collect(),
            features: (0..ds.feature_dim()).map(|j| format!("f{j}")).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Config("schema needs at least one group column".into()));
        }
        if self.features.is_empty() {
            return Err(Error::Config("schema needs at least one feature column".into()));
        }
        Ok(())
    }
}

/// Read and validate a dataset from a delimited file. Row order is preserved.
pub fn ingest_table(path: &Path, schema: &TableSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;

    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!(
                "schema: column '{name}' not found in header {:?}",
                headers.iter().collect::<Vec<_>>()
            ))
        })
    };
    let id_col = col(&schema.id)?;
    let label_col = col(&schema.label)?;
    let group_cols: Vec<(String, usize)> = schema
        .groups
        .iter()
        .map(|g| col(g).map(|i| (g.clone(), i)))
        .collect::<Result<_>>()?;
    let feature_cols: Vec<(String, usize)> = schema
        .features
        .iter()
        .map(|f| col(f).map(|i| (f.clone(), i)))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut bad_labels: Vec<String> = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");

        let label = match field(label_col) {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                bad_labels.push(format!("line {line} (value '{other}')"));
                0
            }
        };
        let mut features = Vec::with_capacity(feature_cols.len());
        for (name, i) in &feature_cols {
            let raw = field(*i);
            let value: f64 = raw.parse().map_err(|_| {
                Error::Data(format!(
                    "feature column '{name}' at line {line}: cannot parse '{raw}' as a number"
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::Data(format!(
                    "feature column '{name}' at line {line}: non-finite value '{raw}'"
                )));
            }
            features.push(value);
        }
        let mut groups = std::collections::BTreeMap::new();
        for (name, i) in &group_cols {
            let v = field(*i);
            if v.is_empty() {
                return Err(Error::Data(format!(
                    "group column '{name}' at line {line} is empty; records with missing \
                     group values are rejected"
                )));
            }
            groups.insert(name.clone(), v.to_string());
        }
        let id = field(id_col).to_string();
        if id.is_empty() {
            return Err(Error::Data(format!("id column is empty at line {line}")));
        }
        records.push(Record { id, label, groups, features });
    }
    if !bad_labels.is_empty() {
        let shown: Vec<_> = bad_labels.iter().take(8).cloned().collect();
        return Err(Error::Data(format!(
            "label column '{}' must contain 0 or 1; {} offending row(s): {}{}",
            schema.label,
            bad_labels.len(),
            shown.join(", "),
            if bad_labels.len() > 8 { ", ..." } else { "" }
        )));
    }
    Dataset::new(records)
}

/// Format a float with 17 significant digits — enough for an exact `f64`
/// round-trip through text.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a dataset as CSV text in the stable column order.
pub fn dataset_to_csv(ds: &Dataset) -> String {
    let attrs: Vec<&String> = ds.attributes().keys().collect();
    let mut out = String::new();
    out.push_str("id,label");
    for a in &attrs {
        let _ = write!(out, ",{a}");
    }
    for j in 0..ds.feature_dim() {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for r in ds.records() {
        let _ = write!(out, "{},{}", csv_escape(&r.id), r.label);
        for a in &attrs {
            let _ = write!(out, ",{}", csv_escape(&r.groups[*a]));
        }
        for v in &r.features {
            let _ = write!(out, ",{}", format_float(*v));
        }
        out.push('\n');
    }
    out
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Write `ds` to `path` as CSV; the inverse of [`ingest_table`] under
/// [`TableSchema::for_dataset`].
pub fn emit_table_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, dataset_to_csv(ds))?;
    Ok(())
}
