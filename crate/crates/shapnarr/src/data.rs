//! Tabular CSV ingestion under a declared per-column encoding schema.
//!
//! The dialect is fixed: comma-separated, double-quote quoting, UTF-8, one
//! header row (unless told otherwise). Each column is declared `numeric` or
//! `categorical` with an ordered category map; empty cells become the
//! explicit missing state under `as_missing` and an error under `reject`.
//! Columns present in the file but absent from the schema are ignored, so a
//! source CSV may carry label or id columns alongside the features.

use crate::model::FeatureVector;
use crate::shap::BackgroundSet;
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid schema for column {column:?}: {reason}")]
    SchemaInvalid { column: String, reason: String },
    #[error("row {row}, column {column:?}: unknown category {value:?}")]
    UnknownCategory {
        row: u64,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    BadNumeric {
        row: u64,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: empty cell not allowed (missing policy is reject)")]
    MissingRejected { row: u64, column: String },
    #[error("row {row}: expected {expected} fields, found {actual}")]
    RowLength {
        row: u64,
        expected: usize,
        actual: usize,
    },
    #[error("background size {k} out of range 1..={n_rows}")]
    BackgroundOutOfRange { k: usize, n_rows: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// What an empty cell means for a column. `reject` unless declared
/// otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    AsMissing,
    #[default]
    Reject,
}

/// Encoding rule for one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Ordered category-to-code map; required (non-empty, injective) for
    /// categorical columns, ignored for numeric ones.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub category_map: IndexMap<String, f64>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
}

impl ColumnSchema {
    pub fn numeric(name: &str, missing_policy: MissingPolicy) -> Self {
        ColumnSchema {
            name: name.to_string(),
            kind: ColumnKind::Numeric,
            category_map: IndexMap::new(),
            missing_policy,
        }
    }

    pub fn categorical<I: IntoIterator<Item = (&'static str, f64)>>(
        name: &str,
        categories: I,
        missing_policy: MissingPolicy,
    ) -> Self {
        ColumnSchema {
            name: name.to_string(),
            kind: ColumnKind::Categorical,
            category_map: categories
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            missing_policy,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.kind == ColumnKind::Categorical {
            if self.category_map.is_empty() {
                return Err(DataError::SchemaInvalid {
                    column: self.name.clone(),
                    reason: "categorical column with empty category map".to_string(),
                });
            }
            let mut codes = HashSet::new();
            for code in self.category_map.values() {
                if !codes.insert(code.to_bits()) {
                    return Err(DataError::SchemaInvalid {
                        column: self.name.clone(),
                        reason: format!("duplicate category code {code}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Load a column schema list from its JSON file form: an array of objects
/// mirroring [`ColumnSchema`].
pub fn load_schema<R: Read>(reader: R) -> Result<Vec<ColumnSchema>, DataError> {
    let schema: Vec<ColumnSchema> =
        serde_json::from_reader(reader).map_err(|e| DataError::Schema(e.to_string()))?;
    for column in &schema {
        column.validate()?;
    }
    Ok(schema)
}

pub fn load_schema_file<P: AsRef<Path>>(path: P) -> Result<Vec<ColumnSchema>, DataError> {
    load_schema(std::fs::File::open(path)?)
}

/// Encoded rows plus the schema that produced them. Immutable after load.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Vec<ColumnSchema>,
    pub rows: Vec<FeatureVector>,
    /// 1-based line number of each row in the source file (the header, when
    /// present, is line 1).
    pub source_row_numbers: Vec<u64>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema.iter().map(|c| c.name.clone()).collect()
    }
}

fn encode_cell(cell: &str, column: &ColumnSchema, row: u64) -> Result<Option<f64>, DataError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return match column.missing_policy {
            MissingPolicy::AsMissing => Ok(None),
            MissingPolicy::Reject => Err(DataError::MissingRejected {
                row,
                column: column.name.clone(),
            }),
        };
    }
    match column.kind {
        ColumnKind::Numeric => match cell.parse::<f64>() {
            // Missing is an explicit state, never an in-band float.
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(DataError::BadNumeric {
                row,
                column: column.name.clone(),
                value: cell.to_string(),
            }),
        },
        ColumnKind::Categorical => {
            column
                .category_map
                .get(cell)
                .copied()
                .map(Some)
                .ok_or_else(|| DataError::UnknownCategory {
                    row,
                    column: column.name.clone(),
                    value: cell.to_string(),
                })
        }
    }
}

/// Load and encode a CSV source. With a header, columns are matched to the
/// schema by name (order-insensitive, reordered to schema order); without
/// one, columns are positional and the field count must equal the schema
/// length.
pub fn load_csv<R: Read>(
    source: R,
    schema: &[ColumnSchema],
    has_header: bool,
) -> Result<Dataset, DataError> {
    for column in schema {
        column.validate()?;
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(source);

    // Position of each schema column within a CSV record.
    let positions: Vec<usize> = if has_header {
        let headers = reader.headers()?.clone();
        let mut seen = HashSet::new();
        for name in headers.iter() {
            if !seen.insert(name) {
                return Err(DataError::Schema(format!(
                    "duplicate header column {name:?}"
                )));
            }
        }
        schema
            .iter()
            .map(|column| {
                headers
                    .iter()
                    .position(|h| h == column.name)
                    .ok_or_else(|| {
                        DataError::Schema(format!(
                            "schema column {:?} not found in header [{}]",
                            column.name,
                            headers.iter().collect::<Vec<_>>().join(", ")
                        ))
                    })
            })
            .collect::<Result<_, _>>()?
    } else {
        (0..schema.len()).collect()
    };

    let mut rows = Vec::new();
    let mut source_row_numbers = Vec::new();
    for (record_index, record) in reader.records().enumerate() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(record_index as u64 + 1);
        let min_fields = positions.iter().copied().max().map_or(0, |m| m + 1);
        if record.len() < min_fields || (!has_header && record.len() != schema.len()) {
            return Err(DataError::RowLength {
                row: line,
                expected: if has_header { min_fields } else { schema.len() },
                actual: record.len(),
            });
        }
        let mut values = Vec::with_capacity(schema.len());
        for (column, &pos) in schema.iter().zip(&positions) {
            values.push(encode_cell(&record[pos], column, line)?);
        }
        rows.push(FeatureVector(values));
        source_row_numbers.push(line);
    }

    Ok(Dataset {
        schema: schema.to_vec(),
        rows,
        source_row_numbers,
    })
}

pub fn load_csv_file<P: AsRef<Path>>(
    path: P,
    schema: &[ColumnSchema],
    has_header: bool,
) -> Result<Dataset, DataError> {
    load_csv(std::fs::File::open(path)?, schema, has_header)
}

/// Select `k` rows without replacement using a seeded deterministic RNG.
/// Selected rows keep their original dataset order; `k = n_rows` returns
/// every row. `k` outside `1..=n_rows` is an error, never clamped.
pub fn select_background(data: &Dataset, k: usize, seed: u64) -> Result<BackgroundSet, DataError> {
    let n = data.n_rows();
    if k == 0 || k > n {
        return Err(DataError::BackgroundOutOfRange { k, n_rows: n });
    }
    let indices: Vec<usize> = if k == n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
        picked.sort_unstable();
        picked
    };
    let rows = indices.iter().map(|&i| data.rows[i].clone()).collect();
    Ok(BackgroundSet::new(rows).expect("k >= 1 guarantees a non-empty selection"))
}

/// The seven-column passenger schema committed with the fixtures.
pub fn titanic_schema() -> Vec<ColumnSchema> {
    vec![
        ColumnSchema::numeric("Pclass", MissingPolicy::Reject),
        ColumnSchema::categorical(
            "Sex",
            [("female", 0.0), ("male", 1.0)],
            MissingPolicy::Reject,
        ),
        ColumnSchema::numeric("Age", MissingPolicy::AsMissing),
        ColumnSchema::numeric("SibSp", MissingPolicy::Reject),
        ColumnSchema::numeric("Parch", MissingPolicy::Reject),
        ColumnSchema::numeric("Fare", MissingPolicy::Reject),
        ColumnSchema::categorical(
            "Embarked",
            [("C", 0.0), ("Q", 1.0), ("S", 2.0)],
            MissingPolicy::AsMissing,
        ),
    ]
}
