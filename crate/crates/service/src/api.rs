//! Wire types. Money is integer cents, dates are `YYYY-MM-DD`, confidences
//! are plain decimals.

use std::collections::BTreeMap;

use assurance_core::corpus::SourceRecord;
use assurance_core::reconcile::{AuditException, ExceptionStatus};
use assurance_core::store::RunManifest;
use assurance_core::{CanonicalValue, FieldKind, YearMonth};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionView {
    #[serde(flatten)]
    pub exception: AuditException,
    /// The statement line the extracted value came from.
    pub excerpt: Option<String>,
    pub source_record: Option<SourceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionPage {
    pub items: Vec<ExceptionView>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub pages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayField {
    /// `false` when the extractor found nothing.
    pub found: bool,
    pub raw_value: Option<String>,
    pub canonical_value: Option<CanonicalValue>,
    pub confidence: f64,
    pub line_index: Option<usize>,
    pub source_value: Option<CanonicalValue>,
    pub exception_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementView {
    pub doc_id: String,
    pub customer_id: String,
    pub uri: String,
    pub lines: Vec<String>,
    pub run_id: Option<String>,
    pub model_version: Option<String>,
    pub fields: BTreeMap<FieldKind, OverlayField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfidenceView {
    pub mean: Option<f64>,
    pub count: usize,
    pub absent: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrendPoint {
    pub period: Option<YearMonth>,
    pub field_kind: FieldKind,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryView {
    pub latest_run_id: Option<String>,
    pub runs: usize,
    pub documents_processed: usize,
    pub confidence: BTreeMap<FieldKind, FieldConfidenceView>,
    pub overall_mean_confidence: Option<f64>,
    pub exceptions_total: usize,
    pub exceptions_by_field: BTreeMap<FieldKind, usize>,
    pub exceptions_by_status: BTreeMap<ExceptionStatus, usize>,
    pub trend: Vec<TrendPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsView {
    pub runs: Vec<RunManifest>,
}

/// Body of `POST /api/exceptions/{id}/status`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusRequest {
    pub new_status: Option<String>,
    pub actor: Option<String>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, message: message.into() }
    }
    pub fn conflict(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::CONFLICT, message: message.into() }
    }
    pub fn unprocessable(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, message: message.into() }
    }
    pub fn internal(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: message.into() }
    }

    pub fn code(&self) -> &'static str {
        match self.status {
            StatusCode::BAD_REQUEST => "bad_request",
            StatusCode::NOT_FOUND => "not_found",
            StatusCode::CONFLICT => "conflict",
            StatusCode::UNPROCESSABLE_ENTITY => "unprocessable",
            _ => "internal",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code().to_string(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}
