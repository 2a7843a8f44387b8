//! Seeded synthetic statement populations.
//!
//! Every artifact here is a pure function of its inputs and a 64-bit seed.
//! Randomness comes from ChaCha8 seeded through [`rng_for`], which mixes
//! the user seed with a per-purpose stream label so that, for example,
//! changing the injection plan never perturbs the truth table.

mod inject;
mod io;
mod label;
mod render;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fields::{CanonicalValue, FieldKind};
use crate::money::{Cents, YearMonth};

pub use inject::{inject_discrepancies, DiscrepancyPlan, ExpectedException, Injection, MutationKind};
pub use io::{read_jsonl, read_truth_csv, write_jsonl, write_truth_csv, CorpusFiles, GroundTruthRow};
pub use label::{emit_labeled_corpus, find_label, Label, LabeledDocument};
pub use render::{
    amount_surface_forms, date_surface_forms, render_statement, surface_forms, DEFAULT_TEMPLATE, TEMPLATE_IDS,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("population size must be at least 1")]
    EmptyPopulation,
    #[error("invalid {what} range: min {min} > max {max}")]
    InvalidRange { what: &'static str, min: String, max: String },
    #[error("statement balance minimum must be at least 0.01, got {0}")]
    NonPositiveBalance(Cents),
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("injection count {count} for {field} exceeds population size {size}")]
    InjectionExceedsPopulation { field: FieldKind, count: usize, size: usize },
    #[error("plan allows no mutation kind applicable to {0}")]
    NoApplicableMutation(FieldKind),
    #[error("requested {requested} labeled documents but only {available} clean documents exist")]
    NotEnoughCleanDocuments { requested: usize, available: usize },
    #[error("labeled corpus needs at least one document")]
    EmptyLabeledCorpus,
    #[error("document {doc_id} has no unique rendering of {field}")]
    LabelNotFound { doc_id: String, field: FieldKind },
    #[error("no source record for document {0}")]
    UnknownDocument(String),
}

/// One authoritative system-of-record row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub customer_id: String,
    pub account_number: String,
    pub minimum_payment: Cents,
    pub due_date: NaiveDate,
    pub statement_balance: Cents,
    pub period: YearMonth,
}

impl SourceRecord {
    pub fn value(&self, field: FieldKind) -> CanonicalValue {
        match field {
            FieldKind::MinimumPayment => CanonicalValue::Amount(self.minimum_payment),
            FieldKind::DueDate => CanonicalValue::Date(self.due_date),
            FieldKind::StatementBalance => CanonicalValue::Amount(self.statement_balance),
        }
    }

    /// Replaces one field value. Panics if the value type does not match
    /// the field.
    pub fn set_value(&mut self, field: FieldKind, value: CanonicalValue) {
        match (field, value) {
            (FieldKind::MinimumPayment, CanonicalValue::Amount(c)) => self.minimum_payment = c,
            (FieldKind::StatementBalance, CanonicalValue::Amount(c)) => self.statement_balance = c,
            (FieldKind::DueDate, CanonicalValue::Date(d)) => self.due_date = d,
            (f, v) => panic!("value {v} does not fit field {f}"),
        }
    }

    pub fn doc_id(&self) -> String {
        doc_id_for(&self.customer_id)
    }

    /// Checks the record-level invariants that generated truth must satisfy.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.minimum_payment < Cents::ZERO {
            return Err(format!("{}: negative minimum payment", self.customer_id));
        }
        if self.statement_balance >= Cents::ZERO && self.minimum_payment > self.statement_balance {
            return Err(format!("{}: minimum payment exceeds balance", self.customer_id));
        }
        if !(self.period.contains(self.due_date) || self.period.next().contains(self.due_date)) {
            return Err(format!("{}: due date {} outside period {}", self.customer_id, self.due_date, self.period));
        }
        Ok(())
    }
}

pub fn doc_id_for(customer_id: &str) -> String {
    format!("stmt_{customer_id}")
}

pub fn uri_for(doc_id: &str) -> String {
    format!("stage/{doc_id}.txt")
}

/// One customer statement as rendered text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementDocument {
    pub doc_id: String,
    pub customer_id: String,
    pub lines: Vec<String>,
    /// Known for generated statements; documents loaded from a stage carry
    /// no template information.
    pub template_id: Option<String>,
    pub uri: String,
}

impl StatementDocument {
    pub fn text(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    pub size: usize,
    pub period: YearMonth,
    pub balance_min: Cents,
    pub balance_max: Cents,
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig {
            size: 500,
            period: YearMonth::new(2024, 3).expect("valid"),
            balance_min: Cents(50_00),
            balance_max: Cents(12_000_00),
        }
    }
}

/// Stream labels for [`rng_for`].
pub(crate) mod stream {
    pub const TRUTH: u64 = 1;
    pub const INJECT: u64 = 2;
    pub const VARIATION: u64 = 3;
}

/// ChaCha8 generator for `(seed, stream)`.
pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-document variation seed derived from the population seed.
pub fn variation_seed(seed: u64, index: usize) -> u64 {
    let mut rng = rng_for(seed, stream::VARIATION);
    rng.set_word_pos(index as u128 * 2);
    rng.random()
}

/// Minimum payment rule: half the balance for small balances, otherwise
/// the greater of $25.00 and 2% of the balance (rounded down to the cent).
/// Always strictly below a positive balance.
pub fn minimum_payment_for(balance: Cents) -> Cents {
    if balance.0 <= 50_00 {
        Cents(balance.0 / 2)
    } else {
        Cents((balance.0 * 2 / 100).max(25_00))
    }
}

pub fn generate_truth(config: &TruthConfig, seed: u64) -> Result<Vec<SourceRecord>, CorpusError> {
    if config.size == 0 {
        return Err(CorpusError::EmptyPopulation);
    }
    if config.balance_min > config.balance_max {
        return Err(CorpusError::InvalidRange {
            what: "statement balance",
            min: config.balance_min.to_string(),
            max: config.balance_max.to_string(),
        });
    }
    if config.balance_min.0 < 1 {
        return Err(CorpusError::NonPositiveBalance(config.balance_min));
    }

    let mut rng = rng_for(seed, stream::TRUTH);
    let due_month = config.period.next();
    let width = config.size.to_string().len().max(5);
    let records = (0..config.size)
        .map(|i| {
            let account: String = (0..15).map(|_| char::from(b'0' + rng.random_range(0..10u8))).collect();
            let balance = Cents(rng.random_range(config.balance_min.0..=config.balance_max.0));
            let day = rng.random_range(1..=28);
            SourceRecord {
                customer_id: format!("C{:0width$}", i + 1),
                account_number: format!("4{account}"),
                minimum_payment: minimum_payment_for(balance),
                due_date: NaiveDate::from_ymd_opt(due_month.year(), due_month.month(), day).expect("day <= 28"),
                statement_balance: balance,
                period: config.period,
            }
        })
        .collect();
    Ok(records)
}

/// A complete generated population: truth, statement-side values, rendered
/// statements, the expected exception list and the labeled training subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub truth: Vec<SourceRecord>,
    pub statement_records: Vec<SourceRecord>,
    pub documents: Vec<StatementDocument>,
    pub expected: Vec<ExpectedException>,
    pub labeled: Vec<LabeledDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    #[serde(flatten)]
    pub truth: TruthConfig,
    pub template_id: String,
    pub labeled_count: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { truth: TruthConfig::default(), template_id: DEFAULT_TEMPLATE.to_string(), labeled_count: 20 }
    }
}

pub fn generate_corpus(config: &CorpusConfig, plan: &DiscrepancyPlan, seed: u64) -> Result<Corpus, CorpusError> {
    let truth = generate_truth(&config.truth, seed)?;
    let injection = inject_discrepancies(&truth, plan)?;
    let documents = injection
        .statement_records
        .iter()
        .enumerate()
        .map(|(i, rec)| render_statement(rec, &config.template_id, variation_seed(seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let labeled = if config.labeled_count == 0 {
        Vec::new()
    } else {
        emit_labeled_corpus(&truth, &documents, &injection.expected, config.labeled_count)?
    };
    Ok(Corpus {
        truth,
        statement_records: injection.statement_records,
        documents,
        expected: injection.expected,
        labeled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn truth_population_is_unique_and_valid() {
        let cfg = TruthConfig::default();
        let records = generate_truth(&cfg, 42).unwrap();
        assert_eq!(records.len(), 500);
        let ids: BTreeSet<_> = records.iter().map(|r| &r.customer_id).collect();
        assert_eq!(ids.len(), 500);
        for r in &records {
            r.check_invariants().unwrap();
        }
    }

    #[test]
    fn single_record_population() {
        let cfg = TruthConfig { size: 1, ..TruthConfig::default() };
        let records = generate_truth(&cfg, 0).unwrap();
        assert_eq!(records.len(), 1);
        records[0].check_invariants().unwrap();
    }

    #[test]
    fn truth_is_deterministic() {
        let cfg = TruthConfig::default();
        let a = serde_json::to_string(&generate_truth(&cfg, 42).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_truth(&cfg, 42).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&generate_truth(&cfg, 43).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_configuration() {
        let inverted = TruthConfig { balance_min: Cents(100), balance_max: Cents(50), ..TruthConfig::default() };
        assert!(matches!(generate_truth(&inverted, 1), Err(CorpusError::InvalidRange { .. })));
        let empty = TruthConfig { size: 0, ..TruthConfig::default() };
        assert_eq!(generate_truth(&empty, 1), Err(CorpusError::EmptyPopulation));
        let zero = TruthConfig { balance_min: Cents(0), ..TruthConfig::default() };
        assert!(matches!(generate_truth(&zero, 1), Err(CorpusError::NonPositiveBalance(_))));
    }

    #[test]
    fn minimum_payment_stays_below_balance() {
        for b in [1, 2, 99, 50_00, 50_01, 1_250_00, 1_250_01, 12_000_00] {
            let mp = minimum_payment_for(Cents(b));
            assert!(mp.0 >= 0 && mp.0 < b, "{b} -> {mp}");
        }
    }

    #[test]
    fn variation_seeds_differ_by_index() {
        let seeds: BTreeSet<_> = (0..100).map(|i| variation_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_eq!(variation_seed(7, 3), variation_seed(7, 3));
    }
}
