//! End-to-end run: generate, train, extract, persist, flatten, reconcile,
//! record and report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::corpus::{
    generate_corpus, read_jsonl, CorpusConfig, CorpusFiles, DiscrepancyPlan, ExpectedException, GroundTruthRow,
    LabeledDocument,
};
use crate::costs::{baseline_comparison, baseline_text, cost_model, CostParams, RunFigures};
use crate::extract::{batch_extract, train, TrainedModel};
use crate::fields::{FieldKind, FieldSpec};
use crate::metrics::{field_metrics, ConfidenceSummary, FieldMetrics, GroundTruth};
use crate::reconcile::{reconcile_population, ComparisonPolicy};
use crate::store::EvidenceStore;

pub const PIPELINE_ACTOR: &str = "pipeline";

/// Discrepancies to plant per field when generating a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionConfig {
    pub minimum_payment: usize,
    pub due_date: usize,
    pub statement_balance: usize,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        InjectionConfig { minimum_payment: 2, due_date: 2, statement_balance: 2 }
    }
}

impl InjectionConfig {
    pub fn plan(&self, seed: u64) -> DiscrepancyPlan {
        DiscrepancyPlan::new(self.minimum_payment, self.due_date, self.statement_balance, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub seed: u64,
    /// Generate a fresh corpus into the data directory before running.
    pub generate: bool,
    pub corpus: CorpusConfig,
    pub injection: InjectionConfig,
    pub fields: Vec<FieldSpec>,
    pub policy: ComparisonPolicy,
    pub costs: CostParams,
    pub cost_years: usize,
    pub port: u16,
    pub run_id: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data_dir: PathBuf::from("data"),
            seed: 42,
            generate: true,
            corpus: CorpusConfig::default(),
            injection: InjectionConfig::default(),
            fields: FieldSpec::defaults(),
            policy: ComparisonPolicy::default(),
            costs: CostParams::default(),
            cost_years: 3,
            port: 8080,
            run_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config = Self::parse_toml(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses without validating, for callers that apply overrides first.
    pub fn parse_toml(text: &str) -> Result<Self, ConfigError> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        // The flattened corpus table cannot deny unknown keys through serde.
        let raw: toml::Table = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        if let Some(toml::Value::Table(corpus)) = raw.get("corpus") {
            let known = toml::Table::try_from(CorpusConfig::default()).expect("corpus config serializes");
            if let Some(key) = corpus.keys().find(|k| !known.contains_key(*k)) {
                return Err(ConfigError(format!("unknown corpus key {key:?}")));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.fields.is_empty() {
            return Err(ConfigError("at least one field spec is required".into()));
        }
        if let Some(bad) = self.fields.iter().find(|s| !s.is_consistent()) {
            return Err(ConfigError(format!("field spec {} has the wrong value type", bad.field_kind)));
        }
        let kinds: BTreeSet<_> = self.fields.iter().map(|s| s.field_kind).collect();
        if kinds.len() != self.fields.len() {
            return Err(ConfigError("field specs repeat a field".into()));
        }
        if let Some(id) = &self.run_id {
            if !crate::store::valid_run_id(id) {
                return Err(ConfigError(format!("run id {id:?} may only use letters, digits, '.', '_' and '-'")));
            }
        }
        if !self.generate && !self.data_dir.is_dir() {
            return Err(ConfigError(format!("data directory {} does not exist", self.data_dir.display())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Train,
    Extract,
    Persist,
    Flatten,
    Reconcile,
    Record,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        f.write_str(&name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{stage} stage failed: {cause}")]
pub struct PipelineError {
    pub stage: Stage,
    pub cause: String,
}

fn at<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError { stage, cause: e.to_string() }
}

/// How the recorded exceptions compare with a planted expectation list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectationCheck {
    pub expected: usize,
    pub found: usize,
    /// Reported but not planted.
    pub unexpected: Vec<(String, FieldKind)>,
    /// Planted but not reported.
    pub missed: Vec<(String, FieldKind)>,
}

impl ExpectationCheck {
    pub fn exact(&self) -> bool {
        self.unexpected.is_empty() && self.missed.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub run_id: String,
    pub model_version: String,
    pub documents: usize,
    pub read_errors: usize,
    pub confidence: ConfidenceSummary,
    pub exceptions: usize,
    pub exceptions_by_field: BTreeMap<FieldKind, usize>,
    pub metrics: Option<Vec<FieldMetrics>>,
    pub expectation: Option<ExpectationCheck>,
}

impl PipelineSummary {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "run {}\nmodel {}\ndocuments processed: {} ({} unreadable)\n",
            self.run_id, self.model_version, self.documents, self.read_errors
        );
        out.push_str("mean confidence:\n");
        for (field, c) in &self.confidence.per_field {
            let mean = c.mean.map_or("n/a".to_string(), |m| format!("{m:.3}"));
            out.push_str(&format!("  {:<18} {mean} ({} absent)\n", field.as_str(), c.absent));
        }
        let overall = self.confidence.overall_mean.map_or("n/a".to_string(), |m| format!("{m:.3}"));
        out.push_str(&format!("  {:<18} {overall}\n", "overall"));
        out.push_str(&format!("exceptions: {}\n", self.exceptions));
        for (field, n) in &self.exceptions_by_field {
            out.push_str(&format!("  {:<18} {n}\n", field.as_str()));
        }
        if let Some(check) = &self.expectation {
            out.push_str(&format!(
                "planted discrepancies: {} expected, {} unexpected, {} missed\n",
                check.expected,
                check.unexpected.len(),
                check.missed.len()
            ));
        }
        out
    }
}

pub fn model_path(data_dir: &Path) -> PathBuf {
    data_dir.join("model.json")
}

/// Trains from `labeled.jsonl` when present, otherwise loads `model.json`.
pub fn obtain_model(data_dir: &Path, specs: &[FieldSpec]) -> Result<TrainedModel, PipelineError> {
    let files = CorpusFiles::new(data_dir);
    let path = model_path(data_dir);
    if files.labeled().exists() {
        let labeled: Vec<LabeledDocument> = read_jsonl(&files.labeled()).map_err(at(Stage::Train))?;
        let model = train(&labeled, specs).map_err(at(Stage::Train))?;
        model.save(&path).map_err(at(Stage::Train))?;
        Ok(model)
    } else if path.exists() {
        TrainedModel::load(&path).map_err(at(Stage::Train))
    } else {
        Err(PipelineError {
            stage: Stage::Train,
            cause: format!("neither {} nor {} exists", files.labeled().display(), path.display()),
        })
    }
}

pub fn load_ground_truth(data_dir: &Path) -> std::io::Result<Option<GroundTruth>> {
    let path = CorpusFiles::new(data_dir).ground_truth();
    if !path.exists() {
        return Ok(None);
    }
    let rows: Vec<GroundTruthRow> = read_jsonl(&path)?;
    Ok(Some(rows.into_iter().map(|r| (r.doc_id, r.values)).collect()))
}

pub fn load_expected(data_dir: &Path) -> std::io::Result<Option<Vec<ExpectedException>>> {
    let path = CorpusFiles::new(data_dir).expected();
    if !path.exists() {
        return Ok(None);
    }
    read_jsonl(&path).map(Some)
}

fn clear_stage(stage: &Path) -> std::io::Result<()> {
    if !stage.is_dir() {
        return Ok(());
    }
    for entry in fs::read_dir(stage)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            fs::remove_file(path)?;
        }
    }
    Ok(())
}

pub fn run_pipeline(config: &PipelineConfig, clock: Arc<dyn Clock>) -> Result<PipelineSummary, PipelineError> {
    let data = config.data_dir.as_path();
    let started = clock.now();

    if config.generate {
        let corpus = generate_corpus(&config.corpus, &config.injection.plan(config.seed), config.seed)
            .map_err(at(Stage::Generate))?;
        let files = CorpusFiles::new(data);
        clear_stage(&files.stage_dir()).map_err(at(Stage::Generate))?;
        files.write(&corpus).map_err(at(Stage::Generate))?;
    }

    let model = obtain_model(data, &config.fields)?;

    let mut store = EvidenceStore::open(data, clock.clone()).map_err(at(Stage::Extract))?;
    let batch = batch_extract(&model, &store.stage(), clock.as_ref()).map_err(at(Stage::Extract))?;

    let run_id = config.run_id.clone().unwrap_or_else(|| format!("run-{:04}", store.runs().len() + 1));
    store.persist_raw(&batch, &run_id, PIPELINE_ACTOR).map_err(at(Stage::Persist))?;
    store.flatten(&run_id, PIPELINE_ACTOR).map_err(at(Stage::Flatten))?;

    let fields: Vec<FieldKind> = config.fields.iter().map(|s| s.field_kind).collect();
    let truth = store.truth().map_err(at(Stage::Reconcile))?;
    let report = reconcile_population(
        &run_id,
        &model.model_version,
        &batch.extractions,
        &truth,
        &fields,
        &config.policy,
        clock.as_ref(),
    )
    .map_err(at(Stage::Reconcile))?;
    store.record_exceptions(&report, PIPELINE_ACTOR).map_err(at(Stage::Record))?;

    let confidence = ConfidenceSummary::from_extractions(&batch.extractions, &fields);
    let metrics = match load_ground_truth(data).map_err(at(Stage::Report))? {
        Some(gt) => Some(field_metrics(&batch.extractions, &gt, &fields).map_err(at(Stage::Report))?),
        None => None,
    };
    let expectation = load_expected(data).map_err(at(Stage::Report))?.map(|expected| {
        let want: BTreeSet<(String, FieldKind)> = expected.iter().map(|e| (e.doc_id.clone(), e.field)).collect();
        let got: BTreeSet<(String, FieldKind)> =
            report.exceptions.iter().map(|e| (e.doc_id.clone(), e.field_kind)).collect();
        ExpectationCheck {
            expected: want.len(),
            found: got.len(),
            unexpected: got.difference(&want).cloned().collect(),
            missed: want.difference(&got).cloned().collect(),
        }
    });

    let run_dir = store.run_dir(&run_id);
    let comparison = cost_model(&config.costs, config.cost_years).map_err(at(Stage::Report))?;
    let runtime = (clock.now() - started).num_milliseconds().max(0) as f64 / 1000.0;
    let figures = RunFigures {
        documents_in_population: batch.summary.documents,
        documents_processed: batch.summary.documents - batch.summary.read_errors,
        field_metrics: metrics.clone().unwrap_or_default(),
        mean_confidence: confidence.overall_mean,
        runtime_seconds: runtime,
        exceptions: report.exceptions.len(),
    };
    let summary = PipelineSummary {
        run_id: run_id.clone(),
        model_version: model.model_version.clone(),
        documents: batch.summary.documents,
        read_errors: batch.summary.read_errors,
        confidence,
        exceptions: report.exceptions.len(),
        exceptions_by_field: report.exception_counts.clone(),
        metrics,
        expectation,
    };
    let write = |name: &str, text: String| fs::write(run_dir.join(name), text).map_err(at(Stage::Report));
    write("costs.txt", comparison.to_text())?;
    write("costs.csv", comparison.to_csv())?;
    write("baseline.txt", baseline_text(&baseline_comparison(&figures, &config.costs)))?;
    write("pipeline.json", serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::corpus::TruthConfig;

    fn small(dir: &Path) -> PipelineConfig {
        PipelineConfig {
            data_dir: dir.to_path_buf(),
            corpus: CorpusConfig {
                truth: TruthConfig { size: 60, ..TruthConfig::default() },
                ..CorpusConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn small_run_finds_planted_discrepancies() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_pipeline(&small(dir.path()), Arc::new(FixedClock::epoch())).unwrap();
        assert_eq!(summary.documents, 60);
        assert_eq!(summary.exceptions, 6);
        assert!(summary.expectation.as_ref().unwrap().exact());
        assert!(summary.to_text().contains("exceptions: 6"));
        assert!(dir.path().join("runs/run-0001/baseline.txt").exists());
    }

    #[test]
    fn rerun_with_same_id_fails_at_persist() {
        let dir = tempfile::tempdir().unwrap();
        let config = PipelineConfig { run_id: Some("fixed".into()), ..small(dir.path()) };
        run_pipeline(&config, Arc::new(FixedClock::epoch())).unwrap();
        let err = run_pipeline(&config, Arc::new(FixedClock::epoch())).unwrap_err();
        assert_eq!(err.stage, Stage::Persist);
    }

    #[test]
    fn empty_stage_without_generation_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let seeded = small(dir.path());
        run_pipeline(&seeded, Arc::new(FixedClock::epoch())).unwrap();

        let empty = tempfile::tempdir().unwrap();
        fs::copy(model_path(dir.path()), model_path(empty.path())).unwrap();
        let config =
            PipelineConfig { generate: false, data_dir: empty.path().to_path_buf(), ..PipelineConfig::default() };
        let summary = run_pipeline(&config, Arc::new(FixedClock::epoch())).unwrap();
        assert_eq!((summary.documents, summary.exceptions), (0, 0));
    }

    #[test]
    fn missing_model_fails_at_train() {
        let dir = tempfile::tempdir().unwrap();
        let config =
            PipelineConfig { generate: false, data_dir: dir.path().to_path_buf(), ..PipelineConfig::default() };
        assert_eq!(run_pipeline(&config, Arc::new(FixedClock::epoch())).unwrap_err().stage, Stage::Train);
    }

    #[test]
    fn config_parsing_and_validation() {
        let config = PipelineConfig::from_toml("seed = 7\ndata_dir = \"/tmp/x\"\n[injection]\ndue_date = 0\n").unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.injection, InjectionConfig { minimum_payment: 2, due_date: 0, statement_balance: 2 });
        assert_eq!(config.fields.len(), 3);
        assert!(PipelineConfig::from_toml("seed = \"x\"").is_err());
        assert!(PipelineConfig::from_toml("fields = []").is_err());
        assert!(PipelineConfig::from_toml("run_id = \"../up\"").is_err());
        for unknown in ["colour = 1", "[costs]\nauditor = 2", "[injection]\nmp = 1", "[corpus]\nsise = 10"] {
            assert!(PipelineConfig::parse_toml(unknown).is_err(), "{unknown}");
        }
        assert_eq!(PipelineConfig::parse_toml("[corpus]\nsize = 10").unwrap().corpus.truth.size, 10);
        let round = toml::to_string(&PipelineConfig::default()).unwrap();
        assert_eq!(PipelineConfig::from_toml(&round).unwrap(), PipelineConfig::default());
    }
}
