//! Field extraction from statement text.
//!
//! A [`TrainedModel`] is learned from a handful of labeled statements. For
//! each target field it keeps the label phrases seen next to the value
//! (anchors), the surface formats the value was written in (value pattern),
//! and where in the document the value tends to sit (positional prior).
//!
//! At inference every line with a currency or date match is a candidate.
//! A candidate's confidence is
//!
//! ```text
//! 0.5 * anchor + 0.3 * pattern + 0.2 * position
//! ```
//!
//! where `anchor` is the best fraction of an anchor phrase's keywords found
//! on the line (or on the label line above, when the value was wrapped onto
//! a line of its own), `pattern` is 1.0 for a learned surface format and 0.5
//! for any other currency/date shape, and `position` is
//! `exp(-|pos - mean| / max(spread, 0.05))` on the normalized line position.
//! The best candidate wins; ties go to the lowest line index. Candidates with
//! no anchor keyword at all, or with confidence below [`CONFIDENCE_FLOOR`],
//! are not accepted and the field is reported absent.

mod batch;
mod infer;
mod model;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::StatementDocument;
use crate::fields::FieldKind;

pub use batch::{batch_extract, BatchSummary, ExtractionBatch};
pub use infer::{find_candidates, keywords, Candidate};
pub use model::{
    train, AnchorPhrase, FieldModel, ModelFileError, PositionalPrior, SurfaceClass, TrainError, TrainedModel,
    TrainingManifest, ValuePattern, MODEL_FORMAT_VERSION,
};

pub const ANCHOR_WEIGHT: f64 = 0.5;
pub const PATTERN_WEIGHT: f64 = 0.3;
pub const POSITION_WEIGHT: f64 = 0.2;

/// Extractions below this confidence are reported as absent.
pub const CONFIDENCE_FLOOR: f64 = 0.2;

/// Lower bound on the positional prior's spread.
pub const MIN_SPREAD: f64 = 0.05;

/// Pattern score for a value shape not seen during training.
pub const PARTIAL_PATTERN_SCORE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("{name} score {value} outside [0, 1]")]
pub struct ScoreOutOfRange {
    pub name: &'static str,
    pub value: f64,
}

/// Combines the three component scores into a confidence in `[0, 1]`.
pub fn score_confidence(anchor: f64, pattern: f64, position: f64) -> Result<f64, ScoreOutOfRange> {
    for (name, value) in [("anchor", anchor), ("pattern", pattern), ("position", position)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(ScoreOutOfRange { name, value });
        }
    }
    Ok((ANCHOR_WEIGHT * anchor + PATTERN_WEIGHT * pattern + POSITION_WEIGHT * position).clamp(0.0, 1.0))
}

/// What the extractor read for one field of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldExtraction {
    pub raw_text: Option<String>,
    pub confidence: f64,
    pub line_index: Option<usize>,
}

impl FieldExtraction {
    pub fn absent() -> Self {
        FieldExtraction { raw_text: None, confidence: 0.0, line_index: None }
    }

    pub fn is_present(&self) -> bool {
        self.raw_text.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentExtraction {
    pub doc_id: String,
    /// Taken from the stage file name, not read from the statement text.
    pub customer_id: String,
    pub period: Option<crate::money::YearMonth>,
    pub uri: String,
    pub fields: BTreeMap<FieldKind, FieldExtraction>,
    pub model_version: String,
    pub extracted_at: DateTime<Utc>,
    /// Set when the staged file could not be read; all fields are absent.
    pub read_error: Option<String>,
}

impl DocumentExtraction {
    pub fn field(&self, kind: FieldKind) -> FieldExtraction {
        self.fields.get(&kind).cloned().unwrap_or_else(FieldExtraction::absent)
    }
}

/// Anything that can read target fields off a statement. [`TrainedModel`]
/// is the built-in implementation; a learned model can stand in for it.
pub trait FieldExtractor: Sync {
    fn model_version(&self) -> &str;
    fn field_kinds(&self) -> Vec<FieldKind>;
    fn extract_fields(&self, doc: &StatementDocument) -> BTreeMap<FieldKind, FieldExtraction>;
}

pub fn extract_document(
    extractor: &dyn FieldExtractor,
    doc: &StatementDocument,
    period: Option<crate::money::YearMonth>,
    extracted_at: DateTime<Utc>,
) -> DocumentExtraction {
    DocumentExtraction {
        doc_id: doc.doc_id.clone(),
        customer_id: doc.customer_id.clone(),
        period,
        uri: doc.uri.clone(),
        fields: extractor.extract_fields(doc),
        model_version: extractor.model_version().to_string(),
        extracted_at,
        read_error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_examples() {
        assert_eq!(score_confidence(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(score_confidence(0.0, 0.0, 0.0).unwrap(), 0.0);
        assert!((score_confidence(1.0, 1.0, 0.5).unwrap() - 0.90).abs() < 1e-12);
    }

    #[test]
    fn confidence_rejects_out_of_range() {
        assert!(score_confidence(1.1, 0.0, 0.0).is_err());
        assert!(score_confidence(0.0, -0.1, 0.0).is_err());
        assert!(score_confidence(0.0, 0.0, f64::NAN).is_err());
    }

    proptest::proptest! {
        #[test]
        fn confidence_bounded_and_monotone(a in 0.0..=1.0f64, p in 0.0..=1.0f64, s in 0.0..=1.0f64, d in 0.0..=1.0f64) {
            let base = score_confidence(a, p, s).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&base));
            proptest::prop_assert!(score_confidence((a + d).min(1.0), p, s).unwrap() >= base);
            proptest::prop_assert!(score_confidence(a, (p + d).min(1.0), s).unwrap() >= base);
            proptest::prop_assert!(score_confidence(a, p, (s + d).min(1.0)).unwrap() >= base);
        }
    }
}
