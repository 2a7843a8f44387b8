use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;

use super::model::{FieldModel, TrainedModel};
use super::{score_confidence, FieldExtraction, FieldExtractor, CONFIDENCE_FLOOR, MIN_SPREAD, PARTIAL_PATTERN_SCORE};
use crate::corpus::StatementDocument;
use crate::fields::{FieldKind, ValueType};

static CURRENCY_FINDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:USD ?|\$ ?)?\d[\d,]*\.\d{2}").expect("valid regex"));

static DATE_FINDER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\d{1,2}/\d{1,2}/\d{4}|\d{4}-\d{2}-\d{2}|(?:January|February|March|April|May|June|July|August|September|October|November|December) \d{1,2}, \d{4}",
    )
    .expect("valid regex")
});

/// One value-shaped match on one line.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub line_index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

fn clean_boundary(line: &str, start: usize, end: usize) -> bool {
    let before = line[..start].chars().next_back();
    let mut after = line[end..].chars();
    let (next, next2) = (after.next(), after.next());
    let before_ok = before.is_none_or(|c| !(c.is_alphanumeric() || ".,$-/".contains(c)));
    let after_ok = match next {
        None => true,
        Some(c) if c.is_ascii_digit() || c == ',' || c == '-' || c == '/' => false,
        Some('.') => next2.is_none_or(|c| !c.is_ascii_digit()),
        Some(c) => !c.is_alphanumeric(),
    };
    before_ok && after_ok
}

/// All currency- or date-shaped matches in the document, in line order.
pub fn find_candidates(doc: &StatementDocument, value_type: ValueType) -> Vec<Candidate> {
    let finder = match value_type {
        ValueType::Currency => &*CURRENCY_FINDER,
        ValueType::Date => &*DATE_FINDER,
    };
    doc.lines
        .iter()
        .enumerate()
        .flat_map(|(line_index, line)| {
            finder.find_iter(line).filter(|m| clean_boundary(line, m.start(), m.end())).map(move |m| Candidate {
                line_index,
                start: m.start(),
                end: m.end(),
                text: m.as_str().to_string(),
            })
        })
        .collect()
}

/// Lowercased alphabetic tokens of two or more letters, in first-seen order.
pub fn keywords(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| w.len() >= 2)
        .map(str::to_ascii_lowercase)
        .filter(|w| seen.insert(w.clone()))
        .collect()
}

/// The label text associated with a candidate: the candidate's own line
/// with the value cut out, or, when the value sits alone on its line, the
/// nearest non-blank line above it.
pub(crate) fn context_text(lines: &[String], line_index: usize, start: usize, end: usize) -> String {
    let line = &lines[line_index];
    if line.trim() == &line[start..end] {
        return lines[..line_index].iter().rev().find(|l| !l.trim().is_empty()).cloned().unwrap_or_default();
    }
    format!("{} {}", &line[..start], &line[end..])
}

pub(crate) fn normalized_position(line_index: usize, line_count: usize) -> f64 {
    if line_count <= 1 {
        0.0
    } else {
        line_index as f64 / (line_count - 1) as f64
    }
}

impl FieldModel {
    pub fn anchor_score(&self, context_keywords: &BTreeSet<String>) -> f64 {
        self.anchors
            .iter()
            .map(|a| {
                let hits = a.keywords.iter().filter(|k| context_keywords.contains(*k)).count();
                hits as f64 / a.keywords.len().max(1) as f64
            })
            .fold(0.0, f64::max)
    }

    pub fn pattern_score(&self, text: &str) -> f64 {
        if self.value_pattern.matches(text) {
            1.0
        } else {
            PARTIAL_PATTERN_SCORE
        }
    }

    pub fn position_score(&self, position: f64) -> f64 {
        let spread = self.position.spread.max(MIN_SPREAD);
        (-(position - self.position.mean).abs() / spread).exp().clamp(0.0, 1.0)
    }

    /// Scores every candidate; returns `(candidate, anchor, confidence)`.
    pub fn score_candidates(&self, doc: &StatementDocument) -> Vec<(Candidate, f64, f64)> {
        find_candidates(doc, self.value_type)
            .into_iter()
            .map(|c| {
                let ctx: BTreeSet<String> =
                    keywords(&context_text(&doc.lines, c.line_index, c.start, c.end)).into_iter().collect();
                let anchor = self.anchor_score(&ctx);
                let pattern = self.pattern_score(&c.text);
                let position = self.position_score(normalized_position(c.line_index, doc.lines.len()));
                let confidence = score_confidence(anchor, pattern, position).expect("component scores are in [0, 1]");
                (c, anchor, confidence)
            })
            .collect()
    }

    pub fn extract(&self, doc: &StatementDocument) -> FieldExtraction {
        let best = self.score_candidates(doc).into_iter().filter(|(_, anchor, _)| *anchor > 0.0).min_by(
            |(a, _, ca), (b, _, cb)| {
                cb.partial_cmp(ca)
                    .unwrap_or(Ordering::Equal)
                    .then(a.line_index.cmp(&b.line_index))
                    .then(a.start.cmp(&b.start))
            },
        );
        match best {
            Some((c, _, confidence)) if confidence >= CONFIDENCE_FLOOR => {
                FieldExtraction { raw_text: Some(c.text), confidence, line_index: Some(c.line_index) }
            }
            _ => FieldExtraction::absent(),
        }
    }
}

impl FieldExtractor for TrainedModel {
    fn model_version(&self) -> &str {
        &self.model_version
    }

    fn field_kinds(&self) -> Vec<FieldKind> {
        self.fields.keys().copied().collect()
    }

    fn extract_fields(&self, doc: &StatementDocument) -> BTreeMap<FieldKind, FieldExtraction> {
        self.fields.iter().map(|(kind, model)| (*kind, model.extract(doc))).collect()
    }
}
