//! Statement-side discrepancy injection.
//!
//! The source-of-truth records are never touched. Injection produces a
//! second, statement-side copy of each record in which a planned number of
//! field values are mutated, plus the exact list of exceptions a correct
//! reconciliation must report.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rng_for, stream, CorpusError, SourceRecord};
use crate::fields::{CanonicalValue, FieldKind, ValueType};
use crate::money::Cents;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    AmountDelta,
    DateShift,
    DigitTransposition,
}

impl MutationKind {
    fn applies_to(self, value_type: ValueType) -> bool {
        match self {
            MutationKind::AmountDelta => value_type == ValueType::Currency,
            MutationKind::DateShift => value_type == ValueType::Date,
            MutationKind::DigitTransposition => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscrepancyPlan {
    pub counts: BTreeMap<FieldKind, usize>,
    pub kinds: Vec<MutationKind>,
    pub seed: u64,
    /// Inclusive bounds on the absolute amount delta.
    pub amount_delta: (Cents, Cents),
    /// Inclusive bounds on the absolute date shift, in days.
    pub date_shift_days: (i64, i64),
}

impl DiscrepancyPlan {
    pub fn new(minimum_payment: usize, due_date: usize, statement_balance: usize, seed: u64) -> Self {
        DiscrepancyPlan {
            counts: BTreeMap::from([
                (FieldKind::MinimumPayment, minimum_payment),
                (FieldKind::DueDate, due_date),
                (FieldKind::StatementBalance, statement_balance),
            ]),
            kinds: vec![MutationKind::AmountDelta, MutationKind::DateShift, MutationKind::DigitTransposition],
            seed,
            amount_delta: (Cents(1_00), Cents(50_00)),
            date_shift_days: (1, 10),
        }
    }

    pub fn none(seed: u64) -> Self {
        Self::new(0, 0, 0, seed)
    }

    pub fn count(&self, field: FieldKind) -> usize {
        self.counts.get(&field).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// One exception that reconciliation is expected to find.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExpectedException {
    pub doc_id: String,
    pub customer_id: String,
    pub field: FieldKind,
    pub source_value: CanonicalValue,
    pub statement_value: CanonicalValue,
    pub mutation: MutationKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    /// Statement-side copy of each record, in population order.
    pub statement_records: Vec<SourceRecord>,
    /// Sorted by `(doc_id, field)`.
    pub expected: Vec<ExpectedException>,
}

pub fn inject_discrepancies(records: &[SourceRecord], plan: &DiscrepancyPlan) -> Result<Injection, CorpusError> {
    if plan.amount_delta.0 > plan.amount_delta.1 || plan.amount_delta.0 .0 < 1 {
        return Err(CorpusError::InvalidRange {
            what: "amount delta",
            min: plan.amount_delta.0.to_string(),
            max: plan.amount_delta.1.to_string(),
        });
    }
    if plan.date_shift_days.0 > plan.date_shift_days.1 || plan.date_shift_days.0 < 1 {
        return Err(CorpusError::InvalidRange {
            what: "date shift",
            min: plan.date_shift_days.0.to_string(),
            max: plan.date_shift_days.1.to_string(),
        });
    }
    for field in FieldKind::ALL {
        let count = plan.count(field);
        if count > records.len() {
            return Err(CorpusError::InjectionExceedsPopulation { field, count, size: records.len() });
        }
        if count > 0 && !plan.kinds.iter().any(|k| k.applies_to(field.value_type())) {
            return Err(CorpusError::NoApplicableMutation(field));
        }
    }

    let mut rng = rng_for(plan.seed, stream::INJECT);
    let mut statement = records.to_vec();
    let mut expected = Vec::with_capacity(plan.total());

    for field in FieldKind::ALL {
        let count = plan.count(field);
        if count == 0 {
            continue;
        }
        let mut picks = index::sample(&mut rng, records.len(), count).into_vec();
        picks.sort_unstable();
        let kinds: Vec<MutationKind> =
            plan.kinds.iter().copied().filter(|k| k.applies_to(field.value_type())).collect();
        for i in picks {
            let source = records[i].value(field);
            let kind = kinds[rng.random_range(0..kinds.len())];
            let (mutated, applied) = mutate(&mut rng, plan, field, &statement[i], kind);
            statement[i].set_value(field, mutated);
            expected.push(ExpectedException {
                doc_id: records[i].doc_id(),
                customer_id: records[i].customer_id.clone(),
                field,
                source_value: source,
                statement_value: mutated,
                mutation: applied,
            });
        }
    }
    expected.sort_by(|a, b| (&a.doc_id, a.field).cmp(&(&b.doc_id, b.field)));
    Ok(Injection { statement_records: statement, expected })
}

/// Picks a mutated value that differs from the current one, stays
/// non-negative, and does not coincide with another amount field of the
/// same statement (which would make its rendering ambiguous).
fn mutate(
    rng: &mut ChaCha8Rng,
    plan: &DiscrepancyPlan,
    field: FieldKind,
    record: &SourceRecord,
    kind: MutationKind,
) -> (CanonicalValue, MutationKind) {
    let current = record.value(field);
    let clashes = |v: &CanonicalValue| {
        *v == current
            || FieldKind::ALL.iter().any(|other| *other != field && record.value(*other) == *v)
            || v.as_amount().is_some_and(|c| c.0 < 0)
    };
    let mut kind = kind;
    for _ in 0..64 {
        let candidate = match (kind, current) {
            (MutationKind::DigitTransposition, CanonicalValue::Amount(c)) => {
                transpose_amount(rng, c).map(CanonicalValue::Amount)
            }
            (MutationKind::DigitTransposition, CanonicalValue::Date(d)) => transpose_date(d).map(CanonicalValue::Date),
            (_, CanonicalValue::Amount(c)) => Some(CanonicalValue::Amount(shift_amount(rng, plan, c))),
            (_, CanonicalValue::Date(d)) => Some(CanonicalValue::Date(shift_date(rng, plan, d))),
        };
        match candidate {
            Some(v) if !clashes(&v) => return (v, kind),
            Some(_) => {}
            None => {
                kind = match current {
                    CanonicalValue::Amount(_) => MutationKind::AmountDelta,
                    CanonicalValue::Date(_) => MutationKind::DateShift,
                };
            }
        }
    }
    // A +delta on an amount or a +shift on a date can only clash with the
    // one other amount field, so stepping past it always terminates.
    let mut v = current;
    loop {
        v = match v {
            CanonicalValue::Amount(c) => CanonicalValue::Amount(Cents(c.0 + plan.amount_delta.1 .0)),
            CanonicalValue::Date(d) => CanonicalValue::Date(d + Duration::days(plan.date_shift_days.1)),
        };
        if !clashes(&v) {
            let kind = if v.as_amount().is_some() { MutationKind::AmountDelta } else { MutationKind::DateShift };
            return (v, kind);
        }
    }
}

fn shift_amount(rng: &mut ChaCha8Rng, plan: &DiscrepancyPlan, c: Cents) -> Cents {
    let delta = rng.random_range(plan.amount_delta.0 .0..=plan.amount_delta.1 .0);
    if rng.random_bool(0.5) && c.0 >= delta {
        Cents(c.0 - delta)
    } else {
        Cents(c.0 + delta)
    }
}

fn shift_date(rng: &mut ChaCha8Rng, plan: &DiscrepancyPlan, d: NaiveDate) -> NaiveDate {
    let days = rng.random_range(plan.date_shift_days.0..=plan.date_shift_days.1);
    let days = if rng.random_bool(0.5) { -days } else { days };
    d + Duration::days(days)
}

/// Swaps one random pair of adjacent, differing digits of the cent value.
fn transpose_amount(rng: &mut ChaCha8Rng, c: Cents) -> Option<Cents> {
    let digits: Vec<u8> = format!("{:03}", c.0.unsigned_abs()).into_bytes();
    let spots: Vec<usize> = (0..digits.len() - 1).filter(|&i| digits[i] != digits[i + 1]).collect();
    if spots.is_empty() {
        return None;
    }
    let i = spots[rng.random_range(0..spots.len())];
    let mut swapped = digits;
    swapped.swap(i, i + 1);
    let value: i64 = std::str::from_utf8(&swapped).ok()?.parse().ok()?;
    Some(Cents(value))
}

/// Swaps the two digits of the day, or failing that of the month.
fn transpose_date(d: NaiveDate) -> Option<NaiveDate> {
    let swap = |n: u32| (n % 10) * 10 + n / 10;
    let by_day = NaiveDate::from_ymd_opt(d.year(), d.month(), swap(d.day())).filter(|x| *x != d);
    by_day.or_else(|| NaiveDate::from_ymd_opt(d.year(), swap(d.month()), d.day()).filter(|x| *x != d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_truth, TruthConfig};
    use std::collections::BTreeSet;

    fn truth() -> Vec<SourceRecord> {
        generate_truth(&TruthConfig::default(), 42).unwrap()
    }

    #[test]
    fn two_per_field_yields_six() {
        let inj = inject_discrepancies(&truth(), &DiscrepancyPlan::new(2, 2, 2, 42)).unwrap();
        assert_eq!(inj.expected.len(), 6);
        for field in FieldKind::ALL {
            let of_field: Vec<_> = inj.expected.iter().filter(|e| e.field == field).collect();
            assert_eq!(of_field.len(), 2);
            let docs: BTreeSet<_> = of_field.iter().map(|e| &e.doc_id).collect();
            assert_eq!(docs.len(), 2);
        }
    }

    #[test]
    fn empty_plan_is_identity() {
        let t = truth();
        let inj = inject_discrepancies(&t, &DiscrepancyPlan::none(1)).unwrap();
        assert!(inj.expected.is_empty());
        assert_eq!(inj.statement_records, t);
    }

    #[test]
    fn soundness_listed_pairs_differ_and_others_agree() {
        let t = truth();
        let inj = inject_discrepancies(&t, &DiscrepancyPlan::new(20, 20, 20, 3)).unwrap();
        let listed: BTreeSet<_> = inj.expected.iter().map(|e| (e.doc_id.clone(), e.field)).collect();
        assert_eq!(listed.len(), 60);
        for (src, stmt) in t.iter().zip(&inj.statement_records) {
            for field in FieldKind::ALL {
                let differs = src.value(field) != stmt.value(field);
                assert_eq!(differs, listed.contains(&(src.doc_id(), field)));
            }
            assert!(stmt.minimum_payment.0 >= 0 && stmt.statement_balance.0 >= 0);
            assert_ne!(stmt.minimum_payment, stmt.statement_balance);
        }
    }

    #[test]
    fn amount_delta_arithmetic() {
        let mut plan = DiscrepancyPlan::new(0, 0, 1, 0);
        plan.kinds = vec![MutationKind::AmountDelta];
        plan.amount_delta = (Cents(10_00), Cents(10_00));
        let mut rec = truth()[0].clone();
        rec.statement_balance = Cents(1234_56);
        let inj = inject_discrepancies(std::slice::from_ref(&rec), &plan).unwrap();
        let e = &inj.expected[0];
        assert_eq!(e.source_value, CanonicalValue::Amount(Cents(1234_56)));
        let diff = e.statement_value.as_amount().unwrap().0 - 1234_56;
        assert_eq!(diff.abs(), 10_00);
    }

    #[test]
    fn rejects_over_population_counts() {
        let t = &truth()[..3];
        assert!(matches!(
            inject_discrepancies(t, &DiscrepancyPlan::new(4, 0, 0, 0)),
            Err(CorpusError::InjectionExceedsPopulation { count: 4, size: 3, .. })
        ));
    }

    #[test]
    fn transpositions() {
        assert_eq!(transpose_date(NaiveDate::from_ymd_opt(2024, 4, 12).unwrap()), NaiveDate::from_ymd_opt(2024, 4, 21));
        assert_eq!(transpose_date(NaiveDate::from_ymd_opt(2024, 10, 5).unwrap()), NaiveDate::from_ymd_opt(2024, 1, 5));
        assert_eq!(transpose_date(NaiveDate::from_ymd_opt(2024, 4, 11).unwrap()), None);
        let mut rng = rng_for(0, 0);
        assert_eq!(transpose_amount(&mut rng, Cents(111)), None);
        let t = transpose_amount(&mut rng, Cents(1234_56)).unwrap();
        assert_ne!(t, Cents(1234_56));
    }
}
