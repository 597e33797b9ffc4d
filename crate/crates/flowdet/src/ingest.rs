//! NetFlow-format CSV ingestion.
//!
//! Parses comma-delimited flow exports (UTF-8, header row, optional quoted
//! fields) into validated records with a binary label: 0 = benign,
//! 1 = malicious. The schema is fully configurable; the default follows the
//! NF-BoT-IoT v1 NetFlow layout with the IP address columns excluded from
//! the feature set.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Column layout of a flow CSV.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FlowSchema {
    /// Candidate feature columns, in order.
    pub feature_columns: Vec<String>,
    /// Binary label column (0 = benign, 1 = malicious).
    pub label_column: String,
    /// Optional attack-category column, carried through as a string.
    pub attack_column: Option<String>,
    /// Columns excluded from the feature vector (identifiers such as IP
    /// addresses).
    pub drop_columns: Vec<String>,
}

impl FlowSchema {
    /// NF-BoT-IoT v1 NetFlow layout. IP addresses are dropped from the
    /// features: they identify endpoints rather than describe behaviour.
    pub fn nf_bot_iot_v1() -> Self {
        let cols = [
            "IPV4_SRC_ADDR",
            "L4_SRC_PORT",
            "IPV4_DST_ADDR",
            "L4_DST_PORT",
            "PROTOCOL",
            "L7_PROTO",
            "IN_BYTES",
            "OUT_BYTES",
            "IN_PKTS",
            "OUT_PKTS",
            "TCP_FLAGS",
            "FLOW_DURATION_MILLISECONDS",
        ];
        FlowSchema {
            feature_columns: cols.iter().map(|s| s.to_string()).collect(),
            label_column: "Label".into(),
            attack_column: Some("Attack".into()),
            drop_columns: vec!["IPV4_SRC_ADDR".into(), "IPV4_DST_ADDR".into()],
        }
    }

    /// Byte/packet counter columns that get a log1p transform by default.
    pub fn default_log1p_columns() -> Vec<String> {
        ["IN_BYTES", "OUT_BYTES", "IN_PKTS", "OUT_PKTS"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    /// Feature columns actually used, i.e. `feature_columns` minus
    /// `drop_columns`, preserving order.
    pub fn active_features(&self) -> Vec<&str> {
        self.feature_columns
            .iter()
            .filter(|c| !self.drop_columns.contains(c))
            .map(String::as_str)
            .collect()
    }

    pub fn feature_count(&self) -> usize {
        self.active_features().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_columns.is_empty() {
            return Err(Error::Config("schema has no feature columns".into()));
        }
        if self.feature_count() == 0 {
            return Err(Error::Config(
                "all feature columns are listed in drop_columns".into(),
            ));
        }
        let mut seen = HashSet::new();
        let mut all: Vec<&str> = self.feature_columns.iter().map(String::as_str).collect();
        all.push(&self.label_column);
        if let Some(a) = &self.attack_column {
            all.push(a);
        }
        for c in all {
            if !seen.insert(c) {
                return Err(Error::Config(format!("duplicate column `{c}` in schema")));
            }
        }
        Ok(())
    }
}

/// One parsed flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    /// Active feature values, in schema order.
    pub features: Vec<f64>,
    /// 0 = benign, 1 = malicious.
    pub label: u8,
    /// Attack category, when the schema names an attack column.
    pub attack: Option<String>,
    /// Ordinal position of the data row in the source file (0-based).
    pub row_index: usize,
}

/// Parsed dataset in file order.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub records: Vec<FlowRecord>,
    pub schema: FlowSchema,
    pub source_path: String,
}

/// Whether a malformed row aborts the parse or is skipped and counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

struct ColumnPlan {
    feature_idx: Vec<(usize, String)>,
    label_idx: Option<usize>,
    attack_idx: Option<usize>,
}

fn plan_columns(
    headers: &csv::StringRecord,
    schema: &FlowSchema,
    require_label: bool,
) -> Result<ColumnPlan> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let mut feature_idx = Vec::new();
    for name in schema.active_features() {
        match find(name) {
            Some(i) => feature_idx.push((i, name.to_string())),
            None => return Err(Error::MissingColumn(name.to_string())),
        }
    }
    let label_idx = find(&schema.label_column);
    if require_label && label_idx.is_none() {
        return Err(Error::MissingColumn(schema.label_column.clone()));
    }
    let attack_idx = match &schema.attack_column {
        Some(name) => {
            let idx = find(name);
            if require_label && idx.is_none() {
                return Err(Error::MissingColumn(name.clone()));
            }
            idx
        }
        None => None,
    };
    Ok(ColumnPlan {
        feature_idx,
        label_idx,
        attack_idx,
    })
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_row(
    record: &csv::StringRecord,
    plan: &ColumnPlan,
    row_index: usize,
) -> Result<FlowRecord> {
    let line = record_line(record);
    let mut features = Vec::with_capacity(plan.feature_idx.len());
    for (idx, name) in &plan.feature_idx {
        let raw = record.get(*idx).unwrap_or("").trim();
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => features.push(v),
            _ => {
                return Err(Error::MalformedRow {
                    line,
                    column: name.clone(),
                    value: raw.to_string(),
                })
            }
        }
    }
    let label = match plan.label_idx {
        Some(idx) => {
            let raw = record.get(idx).unwrap_or("").trim();
            let parsed = raw.parse::<f64>().unwrap_or(f64::NAN);
            if parsed == 0.0 {
                0
            } else if parsed == 1.0 {
                1
            } else {
                return Err(Error::InvalidLabel {
                    line,
                    value: raw.to_string(),
                });
            }
        }
        None => 0,
    };
    let attack = plan
        .attack_idx
        .and_then(|idx| record.get(idx))
        .map(|s| s.to_string());
    Ok(FlowRecord {
        features,
        label,
        attack,
        row_index,
    })
}

fn parse_inner(
    path: &Path,
    schema: &FlowSchema,
    mode: ParseMode,
    require_label: bool,
) -> Result<(RawDataset, usize)> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(map_csv_error)?;
    let headers = reader.headers().map_err(map_csv_error)?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyFile(path.display().to_string()));
    }
    let plan = plan_columns(&headers, schema, require_label)?;

    let mut records = Vec::new();
    let mut rejected = 0usize;
    let mut row_index = 0usize;
    for row in reader.records() {
        let row = row.map_err(map_csv_error)?;
        match parse_row(&row, &plan, row_index) {
            Ok(rec) => records.push(rec),
            Err(e) => match mode {
                ParseMode::Strict => return Err(e),
                ParseMode::Lenient => rejected += 1,
            },
        }
        row_index += 1;
    }
    if row_index == 0 {
        return Err(Error::EmptyFile(path.display().to_string()));
    }
    Ok((
        RawDataset {
            records,
            schema: schema.clone(),
            source_path: path.display().to_string(),
        },
        rejected,
    ))
}

fn map_csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv error: {other:?}")),
    }
}

/// Parse a flow CSV, aborting on the first malformed row.
pub fn parse_netflow_csv(path: impl AsRef<Path>, schema: &FlowSchema) -> Result<RawDataset> {
    parse_inner(path.as_ref(), schema, ParseMode::Strict, true).map(|(ds, _)| ds)
}

/// Parse a flow CSV, skipping malformed rows; returns the dataset and the
/// number of rejected rows.
pub fn parse_netflow_csv_lenient(
    path: impl AsRef<Path>,
    schema: &FlowSchema,
) -> Result<(RawDataset, usize)> {
    parse_inner(path.as_ref(), schema, ParseMode::Lenient, true)
}

/// Parse a flow CSV whose label (and attack) column may be absent; missing
/// labels default to 0. Used for scoring unlabeled traffic.
pub fn parse_feature_csv(path: impl AsRef<Path>, schema: &FlowSchema) -> Result<RawDataset> {
    parse_inner(path.as_ref(), schema, ParseMode::Strict, false).map(|(ds, _)| ds)
}

/// Class composition of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSummary {
    pub benign: usize,
    pub malicious: usize,
}

impl LabelSummary {
    pub fn total(&self) -> usize {
        self.benign + self.malicious
    }

    pub fn benign_frac(&self) -> f64 {
        self.benign as f64 / self.total() as f64
    }

    pub fn malicious_frac(&self) -> f64 {
        self.malicious as f64 / self.total() as f64
    }

    /// `{"total": N, "benign": k, "malicious": m, "benign_frac": f}`
    pub fn to_json(&self) -> String {
        format!(
            "{{\"total\": {}, \"benign\": {}, \"malicious\": {}, \"benign_frac\": {}}}",
            self.total(),
            self.benign,
            self.malicious,
            self.benign_frac()
        )
    }
}

/// Count records per class.
pub fn summarize_labels(ds: &RawDataset) -> Result<LabelSummary> {
    if ds.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let malicious = ds.records.iter().filter(|r| r.label == 1).count();
    Ok(LabelSummary {
        benign: ds.records.len() - malicious,
        malicious,
    })
}
