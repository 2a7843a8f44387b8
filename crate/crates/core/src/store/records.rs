//! Raw per-document results and their flattened one-row-per-field form.

use std::collections::BTreeMap;
use std::io;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::extract::{DocumentExtraction, FieldExtraction};
use crate::fields::FieldKind;
use crate::money::YearMonth;
use crate::normalize::{normalize_field, render_canonical};

/// What the extractor returned for one field, as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadField {
    pub value: Option<String>,
    pub confidence: f64,
    pub line_index: Option<usize>,
}

/// One persisted extraction. The `uri`, `doc_id` and `model_version`
/// together link a result back to its source statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResultRecord {
    pub run_id: String,
    pub doc_id: String,
    pub customer_id: String,
    pub period: Option<YearMonth>,
    pub uri: String,
    pub model_version: String,
    pub payload: BTreeMap<FieldKind, PayloadField>,
    pub read_error: Option<String>,
    pub extracted_at: DateTime<Utc>,
    pub persisted_at: DateTime<Utc>,
}

impl RawResultRecord {
    pub fn from_extraction(ext: &DocumentExtraction, run_id: &str, persisted_at: DateTime<Utc>) -> Self {
        RawResultRecord {
            run_id: run_id.to_string(),
            doc_id: ext.doc_id.clone(),
            customer_id: ext.customer_id.clone(),
            period: ext.period,
            uri: ext.uri.clone(),
            model_version: ext.model_version.clone(),
            payload: ext
                .fields
                .iter()
                .map(|(k, f)| {
                    (*k, PayloadField { value: f.raw_text.clone(), confidence: f.confidence, line_index: f.line_index })
                })
                .collect(),
            read_error: ext.read_error.clone(),
            extracted_at: ext.extracted_at,
            persisted_at,
        }
    }

    pub fn to_extraction(&self) -> DocumentExtraction {
        DocumentExtraction {
            doc_id: self.doc_id.clone(),
            customer_id: self.customer_id.clone(),
            period: self.period,
            uri: self.uri.clone(),
            fields: self
                .payload
                .iter()
                .map(|(k, p)| {
                    (
                        *k,
                        FieldExtraction {
                            raw_text: p.value.clone(),
                            confidence: p.confidence,
                            line_index: p.line_index,
                        },
                    )
                })
                .collect(),
            model_version: self.model_version.clone(),
            extracted_at: self.extracted_at,
            read_error: self.read_error.clone(),
        }
    }
}

/// One (document, field) row. Absent values have an empty `raw_value` and
/// zero confidence; `error_reason` is set when the raw value does not
/// normalize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatRow {
    pub run_id: String,
    pub doc_id: String,
    pub customer_id: String,
    pub period: Option<YearMonth>,
    pub uri: String,
    pub field_kind: FieldKind,
    /// Distinguishes an absent field from an empty extracted string.
    pub found: bool,
    pub raw_value: String,
    pub canonical_value: String,
    pub error_reason: String,
    pub confidence: f64,
    pub line_index: Option<usize>,
    pub model_version: String,
}

pub fn flatten_record(record: &RawResultRecord) -> Vec<FlatRow> {
    record
        .payload
        .iter()
        .map(|(kind, field)| {
            let (canonical_value, error_reason) = match normalize_field(kind.value_type(), field.value.as_deref()) {
                Ok(v) => (render_canonical(&v.canonical), String::new()),
                Err(e) => (String::new(), e.reason.as_str().to_string()),
            };
            FlatRow {
                run_id: record.run_id.clone(),
                doc_id: record.doc_id.clone(),
                customer_id: record.customer_id.clone(),
                period: record.period,
                uri: record.uri.clone(),
                field_kind: *kind,
                found: field.value.is_some(),
                raw_value: field.value.clone().unwrap_or_default(),
                canonical_value,
                error_reason,
                confidence: field.confidence,
                line_index: field.line_index,
                model_version: record.model_version.clone(),
            }
        })
        .collect()
}

/// The document-level part of a record that flat rows carry.
#[derive(Debug, Clone, PartialEq)]
pub struct RebuiltPayload {
    pub run_id: String,
    pub doc_id: String,
    pub customer_id: String,
    pub period: Option<YearMonth>,
    pub uri: String,
    pub model_version: String,
    pub payload: BTreeMap<FieldKind, PayloadField>,
}

impl RebuiltPayload {
    pub fn of(record: &RawResultRecord) -> Self {
        RebuiltPayload {
            run_id: record.run_id.clone(),
            doc_id: record.doc_id.clone(),
            customer_id: record.customer_id.clone(),
            period: record.period,
            uri: record.uri.clone(),
            model_version: record.model_version.clone(),
            payload: record.payload.clone(),
        }
    }
}

/// Groups rows by document and rebuilds each payload, in `doc_id` order.
pub fn unflatten(rows: &[FlatRow]) -> Vec<RebuiltPayload> {
    let mut by_doc: BTreeMap<&str, RebuiltPayload> = BTreeMap::new();
    for row in rows {
        let entry = by_doc.entry(row.doc_id.as_str()).or_insert_with(|| RebuiltPayload {
            run_id: row.run_id.clone(),
            doc_id: row.doc_id.clone(),
            customer_id: row.customer_id.clone(),
            period: row.period,
            uri: row.uri.clone(),
            model_version: row.model_version.clone(),
            payload: BTreeMap::new(),
        });
        entry.payload.insert(
            row.field_kind,
            PayloadField {
                value: row.found.then(|| row.raw_value.clone()),
                confidence: row.confidence,
                line_index: row.line_index,
            },
        );
    }
    by_doc.into_values().collect()
}

pub fn write_flat_csv<W: io::Write>(writer: W, rows: &[FlatRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(io::Error::other)?;
    }
    w.flush()
}

pub fn read_flat_csv<R: io::Read>(reader: R) -> io::Result<Vec<FlatRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<Result<Vec<FlatRow>, _>>()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
