//! Field-level evaluation metrics and confidence summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::extract::DocumentExtraction;
use crate::fields::{CanonicalValue, FieldKind};
use crate::normalize::normalize_field;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMetrics {
    pub field_kind: FieldKind,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No values were extracted; precision is reported as 1.0.
    pub precision_undefined: bool,
    /// No positives exist; recall is reported as 1.0.
    pub recall_undefined: bool,
}

impl FieldMetrics {
    pub fn from_counts(field_kind: FieldKind, tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { (1.0, true) } else { (num as f64 / den as f64, false) };
        let (precision, precision_undefined) = ratio(tp, tp + fp);
        let (recall, recall_undefined) = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        FieldMetrics { field_kind, tp, fp, fn_, precision, recall, f1, precision_undefined, recall_undefined }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no ground truth for document {doc_id} field {field}")]
    MissingGroundTruth { doc_id: String, field: FieldKind },
}

pub type GroundTruth = BTreeMap<String, BTreeMap<FieldKind, CanonicalValue>>;

/// Counts each (document, field) once: a normalized match is a true
/// positive, a parsed but different value a false positive, and a missing
/// or unparsable value a false negative.
pub fn field_metrics(
    extractions: &[DocumentExtraction],
    ground_truth: &GroundTruth,
    fields: &[FieldKind],
) -> Result<Vec<FieldMetrics>, MetricsError> {
    let mut out = Vec::with_capacity(fields.len());
    for &field in fields {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for ext in extractions {
            let truth = ground_truth
                .get(&ext.doc_id)
                .and_then(|m| m.get(&field))
                .ok_or_else(|| MetricsError::MissingGroundTruth { doc_id: ext.doc_id.clone(), field })?;
            match normalize_field(field.value_type(), ext.field(field).raw_text.as_deref()) {
                Ok(v) if v.canonical == *truth => tp += 1,
                Ok(_) => fp += 1,
                Err(_) => fn_ += 1,
            }
        }
        out.push(FieldMetrics::from_counts(field, tp, fp, fn_));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfidence {
    /// Present extractions contributing to the mean.
    pub count: usize,
    /// Absent extractions, excluded from the mean.
    pub absent: usize,
    /// `None` when `count` is zero.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSummary {
    pub per_field: BTreeMap<FieldKind, FieldConfidence>,
    pub overall_mean: Option<f64>,
    pub count: usize,
}

impl ConfidenceSummary {
    pub fn from_extractions(extractions: &[DocumentExtraction], fields: &[FieldKind]) -> Self {
        let aggregates = fields.iter().map(|&field| {
            let (mut sum, mut count, mut absent) = (0.0, 0, 0);
            for ext in extractions {
                let slot = ext.field(field);
                if slot.is_present() {
                    sum += slot.confidence;
                    count += 1;
                } else {
                    absent += 1;
                }
            }
            (field, count, if count == 0 { 0.0 } else { sum / count as f64 }, absent)
        });
        Self::build(aggregates)
    }

    /// Builds a summary from `(field, count, mean)` triples.
    pub fn from_aggregates(aggregates: &[(FieldKind, usize, f64)]) -> Self {
        Self::build(aggregates.iter().map(|&(f, c, m)| (f, c, m, 0)))
    }

    fn build(aggregates: impl Iterator<Item = (FieldKind, usize, f64, usize)>) -> Self {
        let mut per_field = BTreeMap::new();
        let (mut weighted, mut count) = (0.0, 0);
        for (field, n, mean, absent) in aggregates {
            weighted += mean * n as f64;
            count += n;
            per_field.insert(field, FieldConfidence { count: n, absent, mean: (n > 0).then_some(mean) });
        }
        let overall_mean = (count > 0).then(|| weighted / count as f64);
        ConfidenceSummary { per_field, overall_mean, count }
    }

    pub fn mean(&self, field: FieldKind) -> Option<f64> {
        self.per_field.get(&field).and_then(|f| f.mean)
    }
}

/// Rounds half away from zero to three decimals, as reported.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::extract::FieldExtraction;
    use crate::money::Cents;

    fn ext(doc: &str, raw: Option<&str>, confidence: f64) -> DocumentExtraction {
        DocumentExtraction {
            doc_id: doc.into(),
            customer_id: doc.into(),
            period: None,
            uri: String::new(),
            fields: BTreeMap::from([(
                FieldKind::MinimumPayment,
                FieldExtraction { raw_text: raw.map(str::to_string), confidence, line_index: raw.map(|_| 0) },
            )]),
            model_version: "m".into(),
            extracted_at: FixedClock::epoch().0,
            read_error: None,
        }
    }

    fn truth(n: usize) -> GroundTruth {
        (0..n)
            .map(|i| {
                (format!("d{i}"), BTreeMap::from([(FieldKind::MinimumPayment, CanonicalValue::Amount(Cents(2500)))]))
            })
            .collect()
    }

    #[test]
    fn one_mismatch_in_ten() {
        let mut batch: Vec<_> = (0..10).map(|i| ext(&format!("d{i}"), Some("$25.00"), 0.9)).collect();
        batch[3] = ext("d3", Some("$26.00"), 0.9);
        let m = &field_metrics(&batch, &truth(10), &[FieldKind::MinimumPayment]).unwrap()[0];
        assert_eq!((m.tp, m.fp, m.fn_), (9, 1, 0));
        assert!((m.precision - 0.9).abs() < 1e-12);
        assert_eq!(m.recall, 1.0);
        // 2 * 0.9 * 1.0 / 1.9
        assert!((m.f1 - 0.947_368_421_052_631_6).abs() < 1e-12);
    }

    #[test]
    fn all_missing_is_degenerate() {
        let batch: Vec<_> = (0..4).map(|i| ext(&format!("d{i}"), None, 0.0)).collect();
        let m = &field_metrics(&batch, &truth(4), &[FieldKind::MinimumPayment]).unwrap()[0];
        assert!(m.precision_undefined);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 0.0, 0.0));
    }

    #[test]
    fn unparsable_counts_as_false_negative() {
        let batch = vec![ext("d0", Some("$25..00"), 0.4)];
        let m = &field_metrics(&batch, &truth(1), &[FieldKind::MinimumPayment]).unwrap()[0];
        assert_eq!((m.tp, m.fp, m.fn_), (0, 0, 1));
    }

    #[test]
    fn ground_truth_gap_names_document() {
        let batch = vec![ext("zz", Some("$25.00"), 0.9)];
        let err = field_metrics(&batch, &truth(1), &[FieldKind::MinimumPayment]).unwrap_err();
        assert_eq!(err, MetricsError::MissingGroundTruth { doc_id: "zz".into(), field: FieldKind::MinimumPayment });
    }

    #[test]
    fn confidence_examples() {
        let s = ConfidenceSummary::from_aggregates(&[
            (FieldKind::MinimumPayment, 500, 0.89),
            (FieldKind::DueDate, 500, 0.675),
            (FieldKind::StatementBalance, 500, 0.779),
        ]);
        assert!((s.overall_mean.unwrap() - 0.781_333).abs() < 1e-6);
        assert_eq!(round3(s.overall_mean.unwrap()), 0.781);

        let s = ConfidenceSummary::from_extractions(&[ext("d0", Some("$1.00"), 0.5)], &[FieldKind::MinimumPayment]);
        assert_eq!((s.mean(FieldKind::MinimumPayment), s.overall_mean), (Some(0.5), Some(0.5)));

        let s = ConfidenceSummary::from_extractions(&[], &FieldKind::ALL);
        assert_eq!((s.count, s.overall_mean), (0, None));
        assert!(s.per_field.values().all(|f| f.mean.is_none()));
    }

    #[test]
    fn absent_fields_are_excluded_from_means() {
        let batch = vec![ext("d0", Some("$1.00"), 0.8), ext("d1", None, 0.0)];
        let s = ConfidenceSummary::from_extractions(&batch, &[FieldKind::MinimumPayment]);
        let f = &s.per_field[&FieldKind::MinimumPayment];
        assert_eq!((f.count, f.absent, f.mean), (1, 1, Some(0.8)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn counts_match_brute_force(outcomes in proptest::collection::vec(0u8..4, 0..60)) {
                // 0 match, 1 other amount, 2 absent, 3 unparsable
                let batch: Vec<_> = outcomes.iter().enumerate().map(|(i, o)| {
                    let raw = match o { 0 => Some("$25.00"), 1 => Some("$9.99"), 2 => None, _ => Some("$2,5.00") };
                    ext(&format!("d{i}"), raw, 0.5)
                }).collect();
                let m = &field_metrics(&batch, &truth(outcomes.len()), &[FieldKind::MinimumPayment]).unwrap()[0];
                let count = |k: u8| outcomes.iter().filter(|o| **o == k).count();
                prop_assert_eq!(m.tp, count(0));
                prop_assert_eq!(m.fp, count(1));
                prop_assert_eq!(m.fn_, count(2) + count(3));
                prop_assert_eq!(m.total(), outcomes.len());
                prop_assert!((0.0..=1.0).contains(&m.f1));
            }

            #[test]
            fn overall_mean_is_invariant_under_equal_regrouping(means in proptest::collection::vec(0.0f64..1.0, 6), n in 1usize..50) {
                let all = ConfidenceSummary::from_aggregates(&[
                    (FieldKind::MinimumPayment, 2 * n, (means[0] + means[1]) / 2.0),
                    (FieldKind::DueDate, 2 * n, (means[2] + means[3]) / 2.0),
                    (FieldKind::StatementBalance, 2 * n, (means[4] + means[5]) / 2.0),
                ]);
                let flat: f64 = means.iter().sum::<f64>() / 6.0;
                prop_assert!((all.overall_mean.unwrap() - flat).abs() < 1e-12);
            }
        }
    }
}
