use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::render::surface_forms;
use super::{CorpusError, ExpectedException, SourceRecord, StatementDocument};
use crate::fields::{CanonicalValue, FieldKind, FieldSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub raw_text: String,
    pub canonical: CanonicalValue,
}

/// A training document with auditor-supplied ground truth and prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub document: StatementDocument,
    pub labels: BTreeMap<FieldKind, Label>,
    pub prompts: BTreeMap<FieldKind, String>,
}

/// Finds the single surface rendering of `value` in the document and the
/// index of the line holding it.
pub fn find_label(doc: &StatementDocument, value: &CanonicalValue) -> Option<(Label, usize)> {
    let mut found = None;
    for form in surface_forms(value) {
        for (i, line) in doc.lines.iter().enumerate() {
            for _ in line.matches(form.as_str()) {
                if found.is_some() {
                    return None;
                }
                found = Some((Label { raw_text: form.clone(), canonical: *value }, i));
            }
        }
    }
    found
}

/// Layout features of one labeled field, used to spread the training
/// subset across the template's variations.
fn features(doc: &StatementDocument, field: FieldKind, label: &Label, line: usize) -> Vec<String> {
    let text = &doc.lines[line];
    let wrapped = text.trim() == label.raw_text;
    let context = if wrapped { doc.lines[..line].iter().rev().find(|l| !l.trim().is_empty()) } else { Some(text) };
    let label_words: String = context
        .map(|c| c.replace(&label.raw_text, " "))
        .unwrap_or_default()
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    let shape_class: String = match label.canonical {
        CanonicalValue::Date(_) if label.raw_text.contains('/') => "slash".into(),
        CanonicalValue::Date(_) if label.raw_text.contains('-') => "iso".into(),
        CanonicalValue::Date(_) => "long".into(),
        CanonicalValue::Amount(_) => label.raw_text.chars().filter(|c| !c.is_ascii_digit()).collect(),
    };
    vec![
        format!("{field}:format:{shape_class}"),
        format!("{field}:label:{label_words}"),
        format!("{field}:wrapped:{wrapped}"),
    ]
}

/// Selects `n` clean documents (none of whose fields were mutated) and
/// labels every target field.
///
/// Selection walks documents in population order, first taking any
/// document that contributes a layout feature not yet covered, then filling
/// up in order. The result is sorted in population order.
pub fn emit_labeled_corpus(
    truth: &[SourceRecord],
    documents: &[StatementDocument],
    expected: &[ExpectedException],
    n: usize,
) -> Result<Vec<LabeledDocument>, CorpusError> {
    if n == 0 {
        return Err(CorpusError::EmptyLabeledCorpus);
    }
    let mutated: BTreeSet<&str> = expected.iter().map(|e| e.doc_id.as_str()).collect();
    let by_customer: BTreeMap<&str, &SourceRecord> = truth.iter().map(|r| (r.customer_id.as_str(), r)).collect();
    let prompts: BTreeMap<FieldKind, String> =
        FieldSpec::defaults().into_iter().map(|s| (s.field_kind, s.prompt)).collect();

    let mut clean = Vec::new();
    for (idx, doc) in documents.iter().enumerate() {
        if mutated.contains(doc.doc_id.as_str()) {
            continue;
        }
        let record = by_customer
            .get(doc.customer_id.as_str())
            .ok_or_else(|| CorpusError::UnknownDocument(doc.doc_id.clone()))?;
        let mut labels = BTreeMap::new();
        let mut feats = Vec::new();
        for field in FieldKind::ALL {
            let (label, line) = find_label(doc, &record.value(field))
                .ok_or_else(|| CorpusError::LabelNotFound { doc_id: doc.doc_id.clone(), field })?;
            feats.extend(features(doc, field, &label, line));
            labels.insert(field, label);
        }
        clean.push((idx, labels, feats));
    }
    if n > clean.len() {
        return Err(CorpusError::NotEnoughCleanDocuments { requested: n, available: clean.len() });
    }

    let mut covered: BTreeSet<String> = BTreeSet::new();
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    for (pos, (_, _, feats)) in clean.iter().enumerate() {
        if chosen.len() == n {
            break;
        }
        if feats.iter().any(|f| !covered.contains(f)) {
            covered.extend(feats.iter().cloned());
            chosen.insert(pos);
        }
    }
    for pos in 0..clean.len() {
        if chosen.len() == n {
            break;
        }
        chosen.insert(pos);
    }

    Ok(chosen
        .into_iter()
        .map(|pos| {
            let (idx, labels, _) = &clean[pos];
            LabeledDocument { document: documents[*idx].clone(), labels: labels.clone(), prompts: prompts.clone() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusConfig, DiscrepancyPlan};
    use crate::normalize::normalize_field;

    #[test]
    fn twenty_labels_span_formats() {
        let corpus = generate_corpus(&CorpusConfig::default(), &DiscrepancyPlan::new(2, 2, 2, 42), 42).unwrap();
        assert_eq!(corpus.labeled.len(), 20);
        let mutated: BTreeSet<_> = corpus.expected.iter().map(|e| e.doc_id.clone()).collect();
        for field in FieldKind::ALL {
            let shapes: BTreeSet<String> = corpus
                .labeled
                .iter()
                .map(|l| {
                    let raw = &l.labels[&field].raw_text;
                    raw.chars().filter(|c| !c.is_ascii_digit()).collect::<String>()
                })
                .collect();
            assert!(shapes.len() >= 2, "{field}: {shapes:?}");
        }
        for l in &corpus.labeled {
            assert!(!mutated.contains(&l.document.doc_id));
            assert_eq!(l.labels.len(), 3);
            assert_eq!(l.prompts[&FieldKind::MinimumPayment], "What is the minimum payment due?");
        }
    }

    #[test]
    fn labels_round_trip_through_normalizer() {
        let corpus = generate_corpus(&CorpusConfig::default(), &DiscrepancyPlan::new(2, 2, 2, 42), 42).unwrap();
        for l in &corpus.labeled {
            for (field, label) in &l.labels {
                let n = normalize_field(field.value_type(), Some(&label.raw_text)).unwrap();
                assert_eq!(n.canonical, label.canonical);
                let hits: usize =
                    l.document.lines.iter().map(|line| line.matches(label.raw_text.as_str()).count()).sum();
                assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn single_labeled_document() {
        let config = CorpusConfig { labeled_count: 1, ..CorpusConfig::default() };
        let corpus = generate_corpus(&config, &DiscrepancyPlan::none(0), 1).unwrap();
        assert_eq!(corpus.labeled.len(), 1);
        assert_eq!(corpus.labeled[0].labels.len(), 3);
    }

    #[test]
    fn too_many_requested() {
        let mut config = CorpusConfig::default();
        config.truth.size = 10;
        config.labeled_count = 9;
        let err = generate_corpus(&config, &DiscrepancyPlan::new(2, 0, 0, 0), 1).unwrap_err();
        assert_eq!(err, CorpusError::NotEnoughCleanDocuments { requested: 9, available: 8 });
    }
}
