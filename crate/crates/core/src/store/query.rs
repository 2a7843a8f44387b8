//! Filtering, sorting and paging the exception ledger.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::fields::FieldKind;
use crate::reconcile::{AuditException, ExceptionCategory, ExceptionStatus};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    #[default]
    Materiality,
    Confidence,
    DocId,
    Field,
    CreatedAt,
    UpdatedAt,
}

impl std::str::FromStr for SortKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown sort key {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExceptionQuery {
    /// Empty means any.
    pub statuses: Vec<ExceptionStatus>,
    pub fields: Vec<FieldKind>,
    pub categories: Vec<ExceptionCategory>,
    pub min_materiality: Option<u64>,
    pub min_confidence: Option<f64>,
    pub max_confidence: Option<f64>,
    pub customer_id: Option<String>,
    pub doc_id: Option<String>,
    pub run_id: Option<String>,
    pub sort: SortKey,
    pub descending: bool,
    /// 1-based.
    pub page: usize,
    pub page_size: usize,
}

impl Default for ExceptionQuery {
    fn default() -> Self {
        ExceptionQuery {
            statuses: Vec::new(),
            fields: Vec::new(),
            categories: Vec::new(),
            min_materiality: None,
            min_confidence: None,
            max_confidence: None,
            customer_id: None,
            doc_id: None,
            run_id: None,
            sort: SortKey::Materiality,
            descending: true,
            page: 1,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid query: {0}")]
pub struct InvalidQuery(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub pages: usize,
}

impl ExceptionQuery {
    pub fn validate(&self) -> Result<(), InvalidQuery> {
        for (name, bound) in [("min_confidence", self.min_confidence), ("max_confidence", self.max_confidence)] {
            if let Some(b) = bound {
                if !(0.0..=1.0).contains(&b) {
                    return Err(InvalidQuery(format!("{name} {b} is outside [0, 1]")));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.min_confidence, self.max_confidence) {
            if lo > hi {
                return Err(InvalidQuery(format!("min_confidence {lo} exceeds max_confidence {hi}")));
            }
        }
        if self.page == 0 {
            return Err(InvalidQuery("page numbers start at 1".into()));
        }
        if self.page_size == 0 || self.page_size > MAX_PAGE_SIZE {
            return Err(InvalidQuery(format!("page_size must be between 1 and {MAX_PAGE_SIZE}")));
        }
        Ok(())
    }

    pub fn matches(&self, e: &AuditException) -> bool {
        (self.statuses.is_empty() || self.statuses.contains(&e.status))
            && (self.fields.is_empty() || self.fields.contains(&e.field_kind))
            && (self.categories.is_empty() || self.categories.contains(&e.category))
            && self.min_materiality.is_none_or(|m| e.materiality >= m)
            && self.min_confidence.is_none_or(|c| e.confidence >= c)
            && self.max_confidence.is_none_or(|c| e.confidence <= c)
            && self.customer_id.as_ref().is_none_or(|c| &e.customer_id == c)
            && self.doc_id.as_ref().is_none_or(|d| &e.doc_id == d)
            && self.run_id.as_ref().is_none_or(|r| &e.run_id == r)
    }

    fn compare(&self, a: &AuditException, b: &AuditException) -> Ordering {
        let primary = match self.sort {
            SortKey::Materiality => a.materiality.cmp(&b.materiality),
            SortKey::Confidence => a.confidence.total_cmp(&b.confidence),
            SortKey::DocId => a.doc_id.cmp(&b.doc_id).then(a.field_kind.cmp(&b.field_kind)),
            SortKey::Field => a.field_kind.cmp(&b.field_kind),
            SortKey::CreatedAt => a.created_at.cmp(&b.created_at),
            SortKey::UpdatedAt => a.updated_at.cmp(&b.updated_at),
        };
        let primary = if self.descending { primary.reverse() } else { primary };
        primary.then_with(|| a.exception_id.cmp(&b.exception_id))
    }

    /// Filters, sorts and pages. Ties always break on `exception_id`.
    pub fn apply<'a>(
        &self,
        ledger: impl IntoIterator<Item = &'a AuditException>,
    ) -> Result<Page<AuditException>, InvalidQuery> {
        self.validate()?;
        let mut hits: Vec<&AuditException> = ledger.into_iter().filter(|e| self.matches(e)).collect();
        hits.sort_by(|a, b| self.compare(a, b));
        let total = hits.len();
        let items = hits.into_iter().skip((self.page - 1) * self.page_size).take(self.page_size).cloned().collect();
        Ok(Page { items, total, page: self.page, page_size: self.page_size, pages: total.div_ceil(self.page_size) })
    }
}
