//! HTTP triage API over an evidence store.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/exceptions` | filtered, paged exception views |
//! | GET | `/api/exceptions/{id}` | one exception view |
//! | POST | `/api/exceptions/{id}/status` | disposition update |
//! | GET | `/api/statements/{doc_id}` | statement text with extraction overlay |
//! | GET | `/api/summary` | run and ledger summary |
//! | GET | `/api/runs` | run manifests |
//!
//! Errors are `{"code": ..., "message": ...}` with status 400, 404, 409 or
//! 422.

pub mod api;
mod params;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use assurance_core::corpus::SourceRecord;
use assurance_core::metrics::ConfidenceSummary;
use assurance_core::normalize::normalize_field;
use assurance_core::reconcile::{AuditException, ExceptionStatus};
use assurance_core::store::records::RawResultRecord;
use assurance_core::store::{EvidenceStore, StoreError};
use assurance_core::{FieldKind, YearMonth};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};

use crate::api::*;
pub use crate::params::parse_query;

/// Store plus the source-of-truth table used for drill-down.
pub struct AppState {
    pub store: RwLock<EvidenceStore>,
    truth: Vec<SourceRecord>,
}

impl AppState {
    pub fn new(store: EvidenceStore) -> Result<Arc<Self>, StoreError> {
        let truth = store.truth()?;
        Ok(Arc::new(AppState { store: RwLock::new(store), truth }))
    }

    /// Same join rule as reconciliation: customer, plus period when known.
    fn source_for(&self, customer_id: &str, period: Option<YearMonth>) -> Option<&SourceRecord> {
        let mut hits =
            self.truth.iter().filter(|r| r.customer_id == customer_id && period.is_none_or(|p| r.period == p));
        let first = hits.next();
        if hits.next().is_some() {
            None
        } else {
            first
        }
    }
}

type Shared = Arc<AppState>;

pub fn app(state: Shared) -> Router {
    Router::new()
        .route("/api/exceptions", get(list_exceptions))
        .route("/api/exceptions/{id}", get(get_exception))
        .route("/api/exceptions/{id}/status", post(update_status))
        .route("/api/statements/{doc_id}", get(get_statement))
        .route("/api/summary", get(summary))
        .route("/api/runs", get(runs))
        .with_state(state)
}

pub async fn serve(state: Shared, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app(state)).await
}

fn read_store(state: &AppState) -> Result<std::sync::RwLockReadGuard<'_, EvidenceStore>, ApiError> {
    state.store.read().map_err(|_| ApiError::internal("store lock poisoned"))
}

fn view(state: &AppState, store: &EvidenceStore, exception: AuditException) -> ExceptionView {
    let excerpt = exception
        .line_index
        .and_then(|i| store.stage().load_by_id(&exception.doc_id).ok().and_then(|doc| doc.lines.get(i).cloned()));
    let source_record = state.source_for(&exception.customer_id, exception.period).cloned();
    ExceptionView { exception, excerpt, source_record }
}

async fn list_exceptions(
    State(state): State<Shared>,
    Query(pairs): Query<Vec<(String, String)>>,
) -> Result<Json<ExceptionPage>, ApiError> {
    let query = parse_query(&pairs).map_err(ApiError::bad_request)?;
    let store = read_store(&state)?;
    let page = store.query(&query).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(ExceptionPage {
        items: page.items.into_iter().map(|e| view(&state, &store, e)).collect(),
        total: page.total,
        page: page.page,
        page_size: page.page_size,
        pages: page.pages,
    }))
}

async fn get_exception(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<ExceptionView>, ApiError> {
    let store = read_store(&state)?;
    let exception =
        store.exception(&id).cloned().ok_or_else(|| ApiError::not_found(format!("unknown exception {id}")))?;
    Ok(Json(view(&state, &store, exception)))
}

async fn update_status(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ExceptionView>, ApiError> {
    let request: StatusRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))?;
    let actor = request.actor.as_deref().map(str::trim).filter(|a| !a.is_empty());
    let Some(actor) = actor else {
        return Err(ApiError::unprocessable("actor is required"));
    };
    let new_status: ExceptionStatus = request
        .new_status
        .as_deref()
        .ok_or_else(|| ApiError::unprocessable("new_status is required"))?
        .parse()
        .map_err(ApiError::unprocessable)?;
    let updated = {
        let mut store = state.store.write().map_err(|_| ApiError::internal("store lock poisoned"))?;
        store.update_status(&id, new_status, actor, request.note.as_deref().unwrap_or("")).map_err(|e| match e {
            StoreError::UnknownException(_) => ApiError::not_found(e.to_string()),
            StoreError::IllegalTransition { .. } => ApiError::conflict(e.to_string()),
            StoreError::MissingActor => ApiError::unprocessable(e.to_string()),
            other => ApiError::internal(other.to_string()),
        })?
    };
    let store = read_store(&state)?;
    Ok(Json(view(&state, &store, updated)))
}

#[derive(serde::Deserialize)]
struct StatementParams {
    run_id: Option<String>,
}

fn latest_record<'a>(store: &'a EvidenceStore, doc_id: &str, run_id: Option<&str>) -> Option<&'a RawResultRecord> {
    let runs = store.runs();
    runs.iter()
        .rev()
        .filter(|r| run_id.is_none_or(|id| r.run_id == id))
        .find_map(|r| store.raw_records(&r.run_id)?.iter().find(|rec| rec.doc_id == doc_id))
}

async fn get_statement(
    State(state): State<Shared>,
    Path(doc_id): Path<String>,
    Query(params): Query<StatementParams>,
) -> Result<Json<StatementView>, ApiError> {
    let store = read_store(&state)?;
    if let Some(id) = &params.run_id {
        if store.run(id).is_none() {
            return Err(ApiError::not_found(format!("unknown run {id}")));
        }
    }
    let doc = store.stage().load_by_id(&doc_id).map_err(ApiError::not_found)?;
    let record = latest_record(&store, &doc_id, params.run_id.as_deref());
    let period = record.and_then(|r| r.period);
    let source = state.source_for(&doc.customer_id, period);
    let exceptions: BTreeMap<FieldKind, String> = store
        .exceptions()
        .filter(|e| e.doc_id == doc_id && record.is_some_and(|r| r.run_id == e.run_id))
        .map(|e| (e.field_kind, e.exception_id.clone()))
        .collect();
    let kinds: Vec<FieldKind> = match record {
        Some(r) => r.payload.keys().copied().collect(),
        None => FieldKind::ALL.to_vec(),
    };
    let fields = kinds
        .into_iter()
        .map(|kind| {
            let slot = record.and_then(|r| r.payload.get(&kind));
            let raw = slot.and_then(|s| s.value.clone());
            let canonical = normalize_field(kind.value_type(), raw.as_deref()).ok().map(|v| v.canonical);
            let overlay = OverlayField {
                found: raw.is_some(),
                raw_value: raw,
                canonical_value: canonical,
                confidence: slot.map_or(0.0, |s| s.confidence),
                line_index: slot.and_then(|s| s.line_index),
                source_value: source.map(|s| s.value(kind)),
                exception_id: exceptions.get(&kind).cloned(),
            };
            (kind, overlay)
        })
        .collect();
    Ok(Json(StatementView {
        doc_id: doc.doc_id,
        customer_id: doc.customer_id,
        uri: doc.uri,
        lines: doc.lines,
        run_id: record.map(|r| r.run_id.clone()),
        model_version: record.map(|r| r.model_version.clone()),
        fields,
    }))
}

/// Builds the summary from store state alone.
pub fn summarize(store: &EvidenceStore) -> SummaryView {
    let latest = store.latest_run();
    let (documents_processed, confidence) = match latest.and_then(|r| store.raw_records(&r.run_id)) {
        Some(records) => {
            let extractions: Vec<_> = records.iter().map(RawResultRecord::to_extraction).collect();
            let fields = latest.map(|r| r.fields.clone()).unwrap_or_default();
            (records.len(), ConfidenceSummary::from_extractions(&extractions, &fields))
        }
        None => (0, ConfidenceSummary::from_extractions(&[], &[])),
    };
    let mut by_field: BTreeMap<FieldKind, usize> = FieldKind::ALL.iter().map(|f| (*f, 0)).collect();
    let mut by_status: BTreeMap<ExceptionStatus, usize> = ExceptionStatus::ALL.iter().map(|s| (*s, 0)).collect();
    let mut trend: BTreeMap<(Option<YearMonth>, FieldKind), usize> = BTreeMap::new();
    let mut total = 0;
    for e in store.exceptions() {
        total += 1;
        *by_field.entry(e.field_kind).or_default() += 1;
        *by_status.entry(e.status).or_default() += 1;
        let period = e.period.or_else(|| Some(YearMonth::of(e.created_at.date_naive())));
        *trend.entry((period, e.field_kind)).or_default() += 1;
    }
    SummaryView {
        latest_run_id: latest.map(|r| r.run_id.clone()),
        runs: store.runs().len(),
        documents_processed,
        confidence: confidence
            .per_field
            .iter()
            .map(|(k, c)| (*k, FieldConfidenceView { mean: c.mean, count: c.count, absent: c.absent }))
            .collect(),
        overall_mean_confidence: confidence.overall_mean,
        exceptions_total: total,
        exceptions_by_field: by_field,
        exceptions_by_status: by_status,
        trend: trend
            .into_iter()
            .map(|((period, field_kind), count)| TrendPoint { period, field_kind, count })
            .collect(),
    }
}

async fn summary(State(state): State<Shared>) -> Result<Json<SummaryView>, ApiError> {
    let store = read_store(&state)?;
    Ok(Json(summarize(&store)))
}

async fn runs(State(state): State<Shared>) -> Result<Json<RunsView>, ApiError> {
    let store = read_store(&state)?;
    Ok(Json(RunsView { runs: store.runs().into_iter().cloned().collect() }))
}
