use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_document, DocumentExtraction, FieldExtraction, FieldExtractor};
use crate::clock::Clock;
use crate::store::stage::DocumentStage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatchSummary {
    pub documents: usize,
    pub read_errors: usize,
}

/// One extraction per staged document, sorted by `doc_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionBatch {
    pub model_version: String,
    pub extractions: Vec<DocumentExtraction>,
    pub summary: BatchSummary,
}

/// Runs the extractor over every statement in the stage.
///
/// Only an unreadable stage root is fatal. A statement that cannot be read
/// yields an all-absent extraction carrying the read error.
pub fn batch_extract(
    extractor: &dyn FieldExtractor,
    stage: &DocumentStage,
    clock: &dyn Clock,
) -> io::Result<ExtractionBatch> {
    let staged = stage.list()?;
    let at = clock.now();
    let kinds = extractor.field_kinds();
    let extractions: Vec<DocumentExtraction> = staged
        .par_iter()
        .map(|entry| match stage.load(entry) {
            Ok(doc) => extract_document(extractor, &doc, entry.period, at),
            Err(reason) => DocumentExtraction {
                doc_id: entry.doc_id.clone(),
                customer_id: entry.customer_id.clone(),
                period: entry.period,
                uri: entry.uri.clone(),
                fields: kinds.iter().map(|k| (*k, FieldExtraction::absent())).collect(),
                model_version: extractor.model_version().to_string(),
                extracted_at: at,
                read_error: Some(reason),
            },
        })
        .collect();
    let summary = BatchSummary {
        documents: extractions.len(),
        read_errors: extractions.iter().filter(|e| e.read_error.is_some()).count(),
    };
    Ok(ExtractionBatch { model_version: extractor.model_version().to_string(), extractions, summary })
}
