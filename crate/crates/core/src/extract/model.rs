use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::LazyLock;
use std::{fs, io};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::infer::{context_text, keywords, normalized_position};
use super::FieldExtractor;
use crate::corpus::LabeledDocument;
use crate::fields::{FieldKind, FieldSpec, ValueType};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A surface format a value can be written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceClass {
    DollarGrouped,
    DollarPlain,
    UsdGrouped,
    UsdPlain,
    BareGrouped,
    BarePlain,
    SlashDate,
    LongMonthDate,
    IsoDate,
}

static CLASS_PATTERNS: LazyLock<Vec<(SurfaceClass, Regex)>> = LazyLock::new(|| {
    use SurfaceClass::*;
    [
        (DollarGrouped, r"^\$\d{1,3}(?:,\d{3})*\.\d{2}$"),
        (DollarPlain, r"^\$\d+\.\d{2}$"),
        (UsdGrouped, r"^USD \d{1,3}(?:,\d{3})*\.\d{2}$"),
        (UsdPlain, r"^USD \d+\.\d{2}$"),
        (BareGrouped, r"^\d{1,3}(?:,\d{3})*\.\d{2}$"),
        (BarePlain, r"^\d+\.\d{2}$"),
        (SlashDate, r"^\d{1,2}/\d{1,2}/\d{4}$"),
        (
            LongMonthDate,
            r"^(?:January|February|March|April|May|June|July|August|September|October|November|December) \d{1,2}, \d{4}$",
        ),
        (IsoDate, r"^\d{4}-\d{2}-\d{2}$"),
    ]
    .into_iter()
    .map(|(c, p)| (c, Regex::new(p).expect("valid regex")))
    .collect()
});

impl SurfaceClass {
    pub fn value_type(self) -> ValueType {
        match self {
            SurfaceClass::SlashDate | SurfaceClass::LongMonthDate | SurfaceClass::IsoDate => ValueType::Date,
            _ => ValueType::Currency,
        }
    }

    pub fn regex(self) -> &'static Regex {
        &CLASS_PATTERNS.iter().find(|(c, _)| *c == self).expect("every class has a pattern").1
    }

    /// Every class whose pattern fully matches `text`.
    pub fn classify(text: &str) -> Vec<SurfaceClass> {
        CLASS_PATTERNS.iter().filter(|(_, re)| re.is_match(text)).map(|(c, _)| *c).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValuePattern {
    pub classes: Vec<SurfaceClass>,
}

impl ValuePattern {
    pub fn matches(&self, text: &str) -> bool {
        self.classes.iter().any(|c| c.regex().is_match(text))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorPhrase {
    pub phrase: String,
    pub keywords: Vec<String>,
    /// Number of training documents the phrase labeled.
    pub support: usize,
}

/// Normalized line position of a field across the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionalPrior {
    pub mean: f64,
    pub spread: f64,
}

impl PositionalPrior {
    fn fit(mut positions: Vec<f64>) -> Self {
        positions.sort_by(f64::total_cmp);
        let n = positions.len().max(1) as f64;
        let mean = positions.iter().sum::<f64>() / n;
        let var = positions.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        PositionalPrior { mean: mean.clamp(0.0, 1.0), spread: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub value_type: ValueType,
    /// Ranked by support, then phrase.
    pub anchors: Vec<AnchorPhrase>,
    pub value_pattern: ValuePattern,
    pub position: PositionalPrior,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub doc_ids: Vec<String>,
    pub prompts: BTreeMap<FieldKind, String>,
    pub spec_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub model_version: String,
    pub manifest: TrainingManifest,
    pub fields: BTreeMap<FieldKind, FieldModel>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("no field specs given")]
    NoSpecs,
    #[error("field spec for {0} is duplicated or has the wrong value type")]
    BadSpec(FieldKind),
    #[error("document {doc_id} has no label for {field}")]
    MissingLabel { doc_id: String, field: FieldKind },
    #[error("label {raw:?} for {field} not found in document {doc_id}")]
    LabelNotInDocument { doc_id: String, field: FieldKind, raw: String },
    #[error("label {raw:?} for {field} in document {doc_id} is not a recognized {value_type:?} format")]
    UnrecognizedLabel { doc_id: String, field: FieldKind, raw: String, value_type: ValueType },
    #[error("label {raw:?} for {field} in document {doc_id} has no label words next to it")]
    NoAnchor { doc_id: String, field: FieldKind, raw: String },
    #[error("trained model reads {got:?} for {field} in training document {doc_id}, label is {expected:?}")]
    TrainingRecall { doc_id: String, field: FieldKind, expected: String, got: Option<String> },
}

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("model file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("model file is not valid: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model format version {found} is not supported (expected {MODEL_FORMAT_VERSION})")]
    Version { found: u32 },
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Trains a model from labeled statements.
///
/// The result does not depend on the order of `labeled`. After fitting,
/// the model is run over its own training documents and must reproduce
/// every label's raw text.
pub fn train(labeled: &[LabeledDocument], specs: &[FieldSpec]) -> Result<TrainedModel, TrainError> {
    if labeled.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if specs.is_empty() {
        return Err(TrainError::NoSpecs);
    }
    let mut seen = BTreeSet::new();
    for spec in specs {
        if !spec.is_consistent() || !seen.insert(spec.field_kind) {
            return Err(TrainError::BadSpec(spec.field_kind));
        }
    }
    let mut ordered: Vec<&LabeledDocument> = labeled.iter().collect();
    ordered.sort_by(|a, b| a.document.doc_id.cmp(&b.document.doc_id));

    let mut fields = BTreeMap::new();
    for spec in specs {
        let field = spec.field_kind;
        let mut phrase_support: BTreeMap<String, (Vec<String>, usize)> = BTreeMap::new();
        let mut classes = BTreeSet::new();
        let mut positions = Vec::with_capacity(ordered.len());
        for ld in &ordered {
            let doc = &ld.document;
            let label =
                ld.labels.get(&field).ok_or_else(|| TrainError::MissingLabel { doc_id: doc.doc_id.clone(), field })?;
            let raw = label.raw_text.as_str();
            let (line_index, start) = doc
                .lines
                .iter()
                .enumerate()
                .find_map(|(i, l)| l.find(raw).map(|s| (i, s)))
                .filter(|_| !raw.is_empty())
                .ok_or_else(|| TrainError::LabelNotInDocument { doc_id: doc.doc_id.clone(), field, raw: raw.into() })?;

            let label_classes: Vec<_> =
                SurfaceClass::classify(raw).into_iter().filter(|c| c.value_type() == spec.value_type).collect();
            if label_classes.is_empty() {
                return Err(TrainError::UnrecognizedLabel {
                    doc_id: doc.doc_id.clone(),
                    field,
                    raw: raw.into(),
                    value_type: spec.value_type,
                });
            }
            classes.extend(label_classes);

            let kws = keywords(&context_text(&doc.lines, line_index, start, start + raw.len()));
            if kws.is_empty() {
                return Err(TrainError::NoAnchor { doc_id: doc.doc_id.clone(), field, raw: raw.into() });
            }
            phrase_support.entry(kws.join(" ")).or_insert_with(|| (kws, 0)).1 += 1;
            positions.push(normalized_position(line_index, doc.lines.len()));
        }

        let mut anchors: Vec<AnchorPhrase> = phrase_support
            .into_iter()
            .map(|(phrase, (keywords, support))| AnchorPhrase { phrase, keywords, support })
            .collect();
        anchors.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.phrase.cmp(&b.phrase)));

        fields.insert(
            field,
            FieldModel {
                value_type: spec.value_type,
                anchors,
                value_pattern: ValuePattern { classes: classes.into_iter().collect() },
                position: PositionalPrior::fit(positions),
            },
        );
    }

    let mut sorted_specs = specs.to_vec();
    sorted_specs.sort_by_key(|s| s.field_kind);
    let spec_hash = sha256_hex(&serde_json::to_vec(&sorted_specs).expect("specs serialize"));
    let manifest = TrainingManifest {
        doc_ids: ordered.iter().map(|ld| ld.document.doc_id.clone()).collect(),
        prompts: sorted_specs.iter().map(|s| (s.field_kind, s.prompt.clone())).collect(),
        spec_hash,
    };
    let mut model =
        TrainedModel { format_version: MODEL_FORMAT_VERSION, model_version: String::new(), manifest, fields };
    let content = serde_json::to_vec(&(&model.manifest, &model.fields)).expect("model serializes");
    model.model_version = format!("anchor-v{MODEL_FORMAT_VERSION}+{}", &sha256_hex(&content)[..12]);

    for ld in &ordered {
        let extracted = model.extract_fields(&ld.document);
        for spec in specs {
            let expected = &ld.labels[&spec.field_kind].raw_text;
            let got = extracted.get(&spec.field_kind).and_then(|f| f.raw_text.clone());
            if got.as_deref() != Some(expected.as_str()) {
                return Err(TrainError::TrainingRecall {
                    doc_id: ld.document.doc_id.clone(),
                    field: spec.field_kind,
                    expected: expected.clone(),
                    got,
                });
            }
        }
    }
    Ok(model)
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        let model: TrainedModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelFileError::Version { found: model.format_version });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusConfig, DiscrepancyPlan, Label, StatementDocument};
    use crate::fields::CanonicalValue;
    use crate::money::Cents;
    use chrono::NaiveDate;

    fn corpus() -> crate::corpus::Corpus {
        generate_corpus(&CorpusConfig::default(), &DiscrepancyPlan::new(2, 2, 2, 42), 42).unwrap()
    }

    #[test]
    fn trains_and_recovers_training_labels() {
        let c = corpus();
        let model = train(&c.labeled, &FieldSpec::defaults()).unwrap();
        assert_eq!(model.manifest.doc_ids.len(), 20);
        for fm in model.fields.values() {
            assert!(!fm.anchors.is_empty());
            assert!(!fm.value_pattern.classes.is_empty());
            assert!((0.0..=1.0).contains(&fm.position.mean) && fm.position.spread >= 0.0);
        }
        let mut recovered = 0;
        for ld in &c.labeled {
            let got = model.extract_fields(&ld.document);
            for (field, label) in &ld.labels {
                assert_eq!(got[field].raw_text.as_ref(), Some(&label.raw_text));
                recovered += 1;
            }
        }
        assert_eq!(recovered, 60);
    }

    #[test]
    fn training_order_does_not_matter() {
        let c = corpus();
        let a = train(&c.labeled, &FieldSpec::defaults()).unwrap();
        let mut reversed = c.labeled.clone();
        reversed.reverse();
        reversed.rotate_left(7);
        let b = train(&reversed, &FieldSpec::defaults()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn single_document_model() {
        let c = corpus();
        let model = train(&c.labeled[..1], &FieldSpec::defaults()).unwrap();
        for fm in model.fields.values() {
            assert_eq!(fm.anchors.len(), 1);
            assert_eq!(fm.position.spread, 0.0);
        }
    }

    #[test]
    fn missing_label_is_named() {
        let mut c = corpus();
        c.labeled[3].labels.remove(&FieldKind::DueDate);
        let doc_id = c.labeled[3].document.doc_id.clone();
        assert_eq!(
            train(&c.labeled, &FieldSpec::defaults()),
            Err(TrainError::MissingLabel { doc_id, field: FieldKind::DueDate })
        );
        assert_eq!(train(&[], &FieldSpec::defaults()), Err(TrainError::EmptyCorpus));
    }

    #[test]
    fn model_file_round_trip() {
        let c = corpus();
        let model = train(&c.labeled, &FieldSpec::defaults()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        assert_eq!(TrainedModel::load(&path).unwrap(), model);
        let bumped = model.to_json().replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(matches!(TrainedModel::from_json(&bumped), Err(ModelFileError::Version { found: 99 })));
    }

    fn statement(lines: &[&str]) -> StatementDocument {
        StatementDocument {
            doc_id: "stmt_X".into(),
            customer_id: "X".into(),
            lines: lines.iter().map(|s| s.to_string()).collect(),
            template_id: None,
            uri: "stage/stmt_X.txt".into(),
        }
    }

    fn fixed_layout(mp: &str, due: &str, bal: &str) -> Vec<String> {
        vec![
            "Card Statement".into(),
            format!("Statement Balance: {bal}"),
            format!("Minimum Payment Due: {mp}"),
            format!("Payment Due Date: {due}"),
            "Late fee of up to $40.00 if your minimum payment is late.".into(),
        ]
    }

    fn labeled(doc_id: &str, mp: Cents, due: NaiveDate, bal: Cents) -> LabeledDocument {
        let (mp_s, due_s, bal_s) = (format!("${mp}"), due.format("%m/%d/%Y").to_string(), format!("${bal}"));
        let lines = fixed_layout(&mp_s, &due_s, &bal_s);
        LabeledDocument {
            document: StatementDocument {
                doc_id: doc_id.into(),
                customer_id: doc_id.into(),
                lines,
                template_id: None,
                uri: format!("stage/{doc_id}.txt"),
            },
            labels: BTreeMap::from([
                (FieldKind::MinimumPayment, Label { raw_text: mp_s, canonical: CanonicalValue::Amount(mp) }),
                (FieldKind::DueDate, Label { raw_text: due_s, canonical: CanonicalValue::Date(due) }),
                (FieldKind::StatementBalance, Label { raw_text: bal_s, canonical: CanonicalValue::Amount(bal) }),
            ]),
            prompts: BTreeMap::new(),
        }
    }

    fn fixed_model() -> TrainedModel {
        let d = |m, day| NaiveDate::from_ymd_opt(2024, m, day).unwrap();
        let docs = vec![
            labeled("a", Cents(25_00), d(4, 25), Cents(1234_56)),
            labeled("b", Cents(31_20), d(4, 9), Cents(1560_00)),
        ];
        train(&docs, &FieldSpec::defaults()).unwrap()
    }

    /// Confidence on a clean line, checked against the formula evaluated
    /// by hand: the line holds every anchor keyword (1.0), the value is in a
    /// learned format (1.0), and it sits exactly at the prior mean (1.0).
    #[test]
    fn clean_line_confidence() {
        let model = fixed_model();
        let doc = statement(&[
            "Card Statement",
            "Statement Balance: $980.10",
            "Minimum Payment Due: $25.00",
            "Payment Due Date: 04/25/2024",
            "Late fee of up to $40.00 if your minimum payment is late.",
        ]);
        let got = model.extract_fields(&doc);
        let mp = &got[&FieldKind::MinimumPayment];
        assert_eq!(mp.raw_text.as_deref(), Some("$25.00"));
        let expected = 0.5 * 1.0 + 0.3 * 1.0 + 0.2 * 1.0;
        assert!((mp.confidence - expected).abs() < 1e-12 && mp.confidence > 0.9);

        // The late-fee line carries the same anchor words but sits three
        // lines below the prior: position score exp(-(2/4)/0.05).
        let late = model.fields[&FieldKind::MinimumPayment]
            .score_candidates(&doc)
            .into_iter()
            .find(|(c, _, _)| c.text == "$40.00")
            .unwrap();
        let late_expected = 0.5 * (2.0 / 3.0) + 0.3 + 0.2 * (-(0.5f64) / 0.05).exp();
        assert!((late.2 - late_expected).abs() < 1e-12, "{} vs {late_expected}", late.2);
    }

    #[test]
    fn deleted_balance_line_is_absent() {
        let model = fixed_model();
        let doc = statement(&[
            "Card Statement",
            "Minimum Payment Due: $25.00",
            "Payment Due Date: 04/25/2024",
            "Late fee of up to $40.00 if your minimum payment is late.",
        ]);
        let got = model.extract_fields(&doc);
        assert_eq!(got[&FieldKind::StatementBalance], crate::extract::FieldExtraction::absent());
        assert!(got[&FieldKind::MinimumPayment].is_present());
    }

    #[test]
    fn removing_anchor_words_never_raises_confidence() {
        let model = fixed_model();
        let full = statement(&["Card Statement", "Statement Balance: $980.10", "Minimum Payment Due: $25.00"]);
        let partial = statement(&["Card Statement", "Statement Balance: $980.10", "Minimum Due: $25.00"]);
        let fm = &model.fields[&FieldKind::MinimumPayment];
        let score =
            |d: &StatementDocument| fm.score_candidates(d).into_iter().find(|(c, _, _)| c.line_index == 2).unwrap().2;
        assert!(score(&partial) <= score(&full));
    }
}
