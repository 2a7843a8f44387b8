//! Field-by-field reconciliation of extracted statement values against the
//! source of truth.
//!
//! Matching is exact equality of canonical values after normalization:
//! equal cents for amounts, the same calendar day for dates. Anything else
//! becomes an [`AuditException`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;
use crate::corpus::SourceRecord;
use crate::extract::{DocumentExtraction, FieldExtraction};
use crate::fields::{CanonicalValue, FieldKind, ValueType};
use crate::money::YearMonth;
use crate::normalize::{normalize_field, NormalizeReason, POLICY_VERSION};

/// Materiality assigned to missing and unparsable values so that they rank
/// above any real difference. Equal to 2^53 - 1, the largest integer every
/// JSON consumer represents exactly.
pub const MATERIALITY_SENTINEL: u64 = (1 << 53) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonPolicy {
    pub version: String,
}

impl Default for ComparisonPolicy {
    fn default() -> Self {
        ComparisonPolicy { version: format!("exact-match-v1/{POLICY_VERSION}") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExceptionCategory {
    Mismatch,
    Missing,
    Unparsable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExceptionStatus {
    Open,
    Confirmed,
    FalsePositive,
    Remediated,
}

impl ExceptionStatus {
    pub const ALL: [ExceptionStatus; 4] = [
        ExceptionStatus::Open,
        ExceptionStatus::Confirmed,
        ExceptionStatus::FalsePositive,
        ExceptionStatus::Remediated,
    ];

    /// `open -> confirmed | false_positive`, `confirmed -> remediated`.
    pub fn can_transition_to(self, next: ExceptionStatus) -> bool {
        use ExceptionStatus::*;
        matches!((self, next), (Open, Confirmed) | (Open, FalsePositive) | (Confirmed, Remediated))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExceptionStatus::Open => "open",
            ExceptionStatus::Confirmed => "confirmed",
            ExceptionStatus::FalsePositive => "false_positive",
            ExceptionStatus::Remediated => "remediated",
        }
    }
}

impl fmt::Display for ExceptionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExceptionStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExceptionStatus::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown status {s:?}"))
    }
}

/// A field-level discrepancy before it is given an identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub field_kind: FieldKind,
    pub category: ExceptionCategory,
    pub source_value: Option<CanonicalValue>,
    pub extracted_raw: Option<String>,
    pub extracted_canonical: Option<CanonicalValue>,
    pub extracted_error: Option<NormalizeReason>,
    pub confidence: f64,
    pub materiality: u64,
    pub line_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditException {
    pub exception_id: String,
    pub run_id: String,
    pub doc_id: String,
    pub customer_id: String,
    pub period: Option<YearMonth>,
    pub field_kind: FieldKind,
    pub source_value: Option<CanonicalValue>,
    pub extracted_raw: Option<String>,
    pub extracted_canonical: Option<CanonicalValue>,
    pub extracted_error: Option<NormalizeReason>,
    pub confidence: f64,
    pub materiality: u64,
    pub category: ExceptionCategory,
    pub line_index: Option<usize>,
    pub status: ExceptionStatus,
    pub disposition_note: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl AuditException {
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.category == ExceptionCategory::Mismatch
            && (self.extracted_canonical.is_none() || self.extracted_canonical == self.source_value)
        {
            return Err(format!("{}: mismatch without a differing extracted value", self.exception_id));
        }
        if self.updated_at < self.created_at {
            return Err(format!("{}: updated_at before created_at", self.exception_id));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("{}: confidence {} out of range", self.exception_id, self.confidence));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cannot compare a {left:?} value with a {right:?} value")]
pub struct KindMismatch {
    pub left: ValueType,
    pub right: ValueType,
}

/// Magnitude of a difference: cents for amounts, days for dates.
pub fn materiality(extracted: &CanonicalValue, source: &CanonicalValue) -> Result<u64, KindMismatch> {
    match (extracted, source) {
        (CanonicalValue::Amount(a), CanonicalValue::Amount(b)) => Ok(a.abs_diff(*b)),
        (CanonicalValue::Date(a), CanonicalValue::Date(b)) => Ok((*a - *b).num_days().unsigned_abs()),
        (a, b) => Err(KindMismatch { left: a.value_type(), right: b.value_type() }),
    }
}

/// Compares one extracted slot with its source value. `None` means a clean
/// match.
pub fn compare_field(
    field: FieldKind,
    extracted: &FieldExtraction,
    source: &CanonicalValue,
    _policy: &ComparisonPolicy,
) -> Option<Finding> {
    let mut finding = Finding {
        field_kind: field,
        category: ExceptionCategory::Missing,
        source_value: Some(*source),
        extracted_raw: extracted.raw_text.clone(),
        extracted_canonical: None,
        extracted_error: None,
        confidence: extracted.confidence,
        materiality: MATERIALITY_SENTINEL,
        line_index: extracted.line_index,
    };
    match normalize_field(field.value_type(), extracted.raw_text.as_deref()) {
        Ok(v) if v.canonical == *source => None,
        Ok(v) => {
            finding.category = ExceptionCategory::Mismatch;
            finding.materiality = materiality(&v.canonical, source).unwrap_or(MATERIALITY_SENTINEL);
            finding.extracted_canonical = Some(v.canonical);
            Some(finding)
        }
        Err(e) => {
            finding.extracted_error = Some(e.reason);
            if extracted.raw_text.is_some() && e.reason != NormalizeReason::Empty {
                finding.category = ExceptionCategory::Unparsable;
            }
            Some(finding)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationReport {
    pub run_id: String,
    pub model_version: String,
    pub policy_version: String,
    pub population: usize,
    pub fields_tested: Vec<FieldKind>,
    pub exceptions: Vec<AuditException>,
    pub exception_counts: BTreeMap<FieldKind, usize>,
    pub clean_counts: BTreeMap<FieldKind, usize>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl ReconciliationReport {
    pub fn check_invariants(&self) -> Result<(), String> {
        let per_field: usize = self.exception_counts.values().sum();
        if per_field != self.exceptions.len() {
            return Err(format!("per-field counts sum to {per_field}, list has {}", self.exceptions.len()));
        }
        let clean: usize = self.clean_counts.values().sum();
        if clean + per_field != self.population * self.fields_tested.len() {
            return Err(format!(
                "{clean} clean + {per_field} exceptions != {} documents x {} fields",
                self.population,
                self.fields_tested.len()
            ));
        }
        self.exceptions.iter().try_for_each(AuditException::check_invariants)
    }

    /// Human-readable summary block.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("run: {}\n", self.run_id));
        out.push_str(&format!("model: {}\n", self.model_version));
        out.push_str(&format!("policy: {}\n", self.policy_version));
        out.push_str(&format!("documents: {}\n", self.population));
        out.push_str(&format!("exceptions: {}\n", self.exceptions.len()));
        for field in &self.fields_tested {
            out.push_str(&format!(
                "  {:<18} exceptions {:>4}  clean {:>6}\n",
                field.as_str(),
                self.exception_counts.get(field).copied().unwrap_or(0),
                self.clean_counts.get(field).copied().unwrap_or(0)
            ));
        }
        out
    }

    /// Writes `report.jsonl` (one exception per line) and `summary.txt`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = io::BufWriter::new(std::fs::File::create(dir.join("report.jsonl"))?);
        for e in &self.exceptions {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        std::fs::write(dir.join("summary.txt"), self.summary_text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReconcileError {
    #[error("source of truth has duplicate key customer {customer_id} period {period}")]
    DuplicateKey { customer_id: String, period: YearMonth },
}

pub fn exception_id(run_id: &str, doc_id: &str, field: FieldKind) -> String {
    let digest = Sha256::digest(format!("{run_id}\u{1f}{doc_id}\u{1f}{field}").as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("EX-{hex}")
}

/// Source-of-truth index keyed by customer and period.
struct TruthIndex<'a> {
    by_customer: HashMap<&'a str, Vec<&'a SourceRecord>>,
}

impl<'a> TruthIndex<'a> {
    fn build(truth: &'a [SourceRecord]) -> Result<Self, ReconcileError> {
        let mut by_customer: HashMap<&str, Vec<&SourceRecord>> = HashMap::new();
        for r in truth {
            let entry = by_customer.entry(r.customer_id.as_str()).or_default();
            if entry.iter().any(|o| o.period == r.period) {
                return Err(ReconcileError::DuplicateKey { customer_id: r.customer_id.clone(), period: r.period });
            }
            entry.push(r);
        }
        Ok(TruthIndex { by_customer })
    }

    /// Matches on customer and, when the statement carries one, period. A
    /// customer with several periods and a statement without one does not
    /// resolve.
    fn resolve(&self, customer_id: &str, period: Option<YearMonth>) -> Option<&'a SourceRecord> {
        let candidates = self.by_customer.get(customer_id)?;
        match period {
            Some(p) => candidates.iter().copied().find(|r| r.period == p),
            None if candidates.len() == 1 => Some(candidates[0]),
            None => None,
        }
    }
}

pub fn reconcile_population(
    run_id: &str,
    model_version: &str,
    extractions: &[DocumentExtraction],
    truth: &[SourceRecord],
    fields: &[FieldKind],
    policy: &ComparisonPolicy,
    clock: &dyn Clock,
) -> Result<ReconciliationReport, ReconcileError> {
    let started_at = clock.now();
    let index = TruthIndex::build(truth)?;
    let mut fields_tested = fields.to_vec();
    fields_tested.sort();
    fields_tested.dedup();

    let mut ordered: Vec<&DocumentExtraction> = extractions.iter().collect();
    ordered.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let mut exceptions = Vec::new();
    let mut exception_counts: BTreeMap<FieldKind, usize> = fields_tested.iter().map(|f| (*f, 0)).collect();
    let mut clean_counts = exception_counts.clone();
    let now = clock.now();

    for ext in &ordered {
        let record = index.resolve(&ext.customer_id, ext.period);
        for &field in &fields_tested {
            let slot = ext.field(field);
            let finding = match record {
                Some(r) => compare_field(field, &slot, &r.value(field), policy),
                None => Some(Finding {
                    field_kind: field,
                    category: ExceptionCategory::Missing,
                    source_value: None,
                    extracted_raw: slot.raw_text.clone(),
                    extracted_canonical: None,
                    extracted_error: None,
                    confidence: slot.confidence,
                    materiality: MATERIALITY_SENTINEL,
                    line_index: slot.line_index,
                }),
            };
            match finding {
                None => *clean_counts.get_mut(&field).expect("tested field") += 1,
                Some(f) => {
                    *exception_counts.get_mut(&field).expect("tested field") += 1;
                    exceptions.push(AuditException {
                        exception_id: exception_id(run_id, &ext.doc_id, field),
                        run_id: run_id.to_string(),
                        doc_id: ext.doc_id.clone(),
                        customer_id: ext.customer_id.clone(),
                        period: record.map(|r| r.period).or(ext.period),
                        field_kind: field,
                        source_value: f.source_value,
                        extracted_raw: f.extracted_raw,
                        extracted_canonical: f.extracted_canonical,
                        extracted_error: f.extracted_error,
                        confidence: f.confidence,
                        materiality: f.materiality,
                        category: f.category,
                        line_index: f.line_index,
                        status: ExceptionStatus::Open,
                        disposition_note: String::new(),
                        created_at: now,
                        updated_at: now,
                    });
                }
            }
        }
    }

    Ok(ReconciliationReport {
        run_id: run_id.to_string(),
        model_version: model_version.to_string(),
        policy_version: policy.version.clone(),
        population: ordered.len(),
        fields_tested,
        exceptions,
        exception_counts,
        clean_counts,
        started_at,
        finished_at: clock.now(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::money::Cents;
    use chrono::NaiveDate;

    fn slot(raw: Option<&str>) -> FieldExtraction {
        FieldExtraction {
            raw_text: raw.map(str::to_string),
            confidence: if raw.is_some() { 0.9 } else { 0.0 },
            line_index: raw.map(|_| 3),
        }
    }

    fn amount(c: i64) -> CanonicalValue {
        CanonicalValue::Amount(Cents(c))
    }

    fn date(y: i32, m: u32, d: u32) -> CanonicalValue {
        CanonicalValue::Date(NaiveDate::from_ymd_opt(y, m, d).unwrap())
    }

    #[test]
    fn compare_examples() {
        let p = ComparisonPolicy::default();
        assert_eq!(compare_field(FieldKind::MinimumPayment, &slot(Some("$25.00")), &amount(2500), &p), None);

        let f = compare_field(FieldKind::MinimumPayment, &slot(Some("$35.00")), &amount(2500), &p).unwrap();
        assert_eq!((f.category, f.materiality), (ExceptionCategory::Mismatch, 1000));

        let f = compare_field(FieldKind::DueDate, &slot(None), &date(2024, 3, 5), &p).unwrap();
        assert_eq!((f.category, f.materiality), (ExceptionCategory::Missing, MATERIALITY_SENTINEL));

        let f = compare_field(FieldKind::DueDate, &slot(Some("02/30/2024")), &date(2024, 3, 5), &p).unwrap();
        assert_eq!(f.category, ExceptionCategory::Unparsable);
        assert_eq!(f.extracted_error, Some(NormalizeReason::InvalidCalendarDate));
    }

    #[test]
    fn materiality_examples() {
        assert_eq!(materiality(&amount(124456), &amount(123456)), Ok(1000));
        assert_eq!(materiality(&date(2024, 3, 5), &date(2024, 3, 5)), Ok(0));
        assert_eq!(materiality(&date(2024, 3, 15), &date(2024, 3, 5)), Ok(10));
        assert_eq!(materiality(&date(2024, 3, 5), &date(2024, 3, 15)), Ok(10));
        assert!(materiality(&amount(1), &date(2024, 3, 5)).is_err());
    }

    #[test]
    fn transition_table() {
        use ExceptionStatus::*;
        let legal: Vec<_> = ExceptionStatus::ALL
            .iter()
            .flat_map(|a| ExceptionStatus::ALL.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_transition_to(*b))
            .collect();
        assert_eq!(legal, vec![(Open, Confirmed), (Open, FalsePositive), (Confirmed, Remediated)]);
    }

    fn extraction(doc: &str, customer: &str, period: Option<YearMonth>, mp: Option<&str>) -> DocumentExtraction {
        DocumentExtraction {
            doc_id: doc.into(),
            customer_id: customer.into(),
            period,
            uri: format!("stage/{doc}.txt"),
            fields: BTreeMap::from([
                (FieldKind::MinimumPayment, slot(mp)),
                (FieldKind::DueDate, slot(Some("04/25/2024"))),
                (FieldKind::StatementBalance, slot(Some("$1,234.56"))),
            ]),
            model_version: "m".into(),
            extracted_at: FixedClock::epoch().0,
            read_error: None,
        }
    }

    fn record(customer: &str, period: &str) -> SourceRecord {
        SourceRecord {
            customer_id: customer.into(),
            account_number: "4".into(),
            minimum_payment: Cents(25_00),
            due_date: NaiveDate::from_ymd_opt(2024, 4, 25).unwrap(),
            statement_balance: Cents(1234_56),
            period: period.parse().unwrap(),
        }
    }

    #[test]
    fn population_report_counts() {
        let truth = vec![record("A", "2024-03"), record("B", "2024-03")];
        let ext = vec![
            extraction("stmt_B", "B", None, Some("$26.00")),
            extraction("stmt_A", "A", None, Some("$25.00")),
            extraction("stmt_Z", "Z", None, Some("$25.00")),
        ];
        let report = reconcile_population(
            "r1",
            "m",
            &ext,
            &truth,
            &FieldKind::ALL,
            &ComparisonPolicy::default(),
            &FixedClock::epoch(),
        )
        .unwrap();
        report.check_invariants().unwrap();
        assert_eq!(report.population, 3);
        assert_eq!(report.exceptions.len(), 4);
        assert_eq!(report.exceptions[0].doc_id, "stmt_B");
        let joins: Vec<_> = report.exceptions.iter().filter(|e| e.source_value.is_none()).collect();
        assert_eq!(joins.len(), 3);
        assert!(joins.iter().all(|e| e.category == ExceptionCategory::Missing && e.doc_id == "stmt_Z"));
    }

    #[test]
    fn duplicate_truth_key_is_fatal() {
        let truth = vec![record("A", "2024-03"), record("A", "2024-03")];
        let err = reconcile_population(
            "r",
            "m",
            &[],
            &truth,
            &FieldKind::ALL,
            &ComparisonPolicy::default(),
            &FixedClock::epoch(),
        );
        assert!(matches!(err, Err(ReconcileError::DuplicateKey { .. })));
    }

    #[test]
    fn period_disambiguates_multi_cycle_truth() {
        let mut april = record("A", "2024-04");
        april.minimum_payment = Cents(30_00);
        let truth = vec![record("A", "2024-03"), april];
        let ext = vec![extraction("stmt_A_2024-04", "A", "2024-04".parse().ok(), Some("$30.00"))];
        let clock = FixedClock::epoch();
        let report =
            reconcile_population("r", "m", &ext, &truth, &FieldKind::ALL, &ComparisonPolicy::default(), &clock)
                .unwrap();
        assert!(report.exceptions.is_empty());
        let ext = vec![extraction("stmt_A", "A", None, Some("$30.00"))];
        let report =
            reconcile_population("r", "m", &ext, &truth, &FieldKind::ALL, &ComparisonPolicy::default(), &clock)
                .unwrap();
        assert_eq!(report.exceptions.len(), 3);
    }

    #[test]
    fn exception_ids_are_stable() {
        assert_eq!(exception_id("r", "d", FieldKind::DueDate), exception_id("r", "d", FieldKind::DueDate));
        assert_ne!(exception_id("r", "d", FieldKind::DueDate), exception_id("r", "d", FieldKind::MinimumPayment));
        assert!(exception_id("r", "d", FieldKind::DueDate).starts_with("EX-"));
    }
}
