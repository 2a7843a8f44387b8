use std::fmt;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use assurance_core::clock::{Clock, FixedClock, SystemClock};
use assurance_core::corpus::{generate_corpus, CorpusConfig, CorpusFiles, TruthConfig};
use assurance_core::costs::{baseline_comparison, baseline_text, cost_model, CostParams, RunFigures};
use assurance_core::extract::{batch_extract, TrainedModel};
use assurance_core::metrics::{field_metrics, round3, ConfidenceSummary};
use assurance_core::pipeline::{
    load_ground_truth, model_path, obtain_model, run_pipeline, InjectionConfig, PipelineConfig, PIPELINE_ACTOR,
};
use assurance_core::reconcile::reconcile_population;
use assurance_core::store::records::RawResultRecord;
use assurance_core::store::{EvidenceStore, RunManifest};
use assurance_core::{FieldKind, FieldSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration. Exit status 2.
    Config(String),
    /// A stage failed. Exit status 1.
    Stage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Stage(m) => f.write_str(m),
        }
    }
}

fn stage<E: fmt::Display>(e: E) -> CliError {
    CliError::Stage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "audit", version, about = "Population-level statement assurance")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthetic statement corpora.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Train the extractor or run it over the stage.
    #[command(subcommand)]
    Extract(ExtractCommand),
    /// Reconcile a persisted run against the source of truth.
    Reconcile(ReconcileArgs),
    /// Evaluation, cost and baseline reports.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Serve the triage API.
    Serve(ServeArgs),
    /// The whole lifecycle in one go.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
}

#[derive(Debug, Subcommand)]
enum CorpusCommand {
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 500)]
    size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Planted discrepancies per field, e.g. `mp=2,dd=2,bal=2`.
    #[arg(long, default_value = "mp=2,dd=2,bal=2")]
    inject: String,
    #[arg(long, default_value_t = 20)]
    labeled: usize,
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum ExtractCommand {
    /// Learn a model from `labeled.jsonl` and write `model.json`.
    Train(DataArgs),
    /// Extract every staged statement, then persist and flatten the run.
    Run(ExtractRunArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long, default_value = "data")]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct ExtractRunArgs {
    #[arg(long, default_value = "data")]
    data: PathBuf,
    /// Defaults to `<data>/model.json`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    /// Stamp records with a fixed instant instead of the wall clock.
    #[arg(long)]
    pin_clock: bool,
}

#[derive(Debug, Args)]
struct ReconcileArgs {
    #[arg(long, default_value = "data")]
    data: PathBuf,
    /// Defaults to the latest run.
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    pin_clock: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum ReportCommand {
    /// Field-level precision, recall and F1 plus confidence means.
    Metrics(RunReportArgs),
    /// Manual versus automated cost table.
    Costs(CostArgs),
    /// Manual baseline against this run.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
struct RunReportArgs {
    #[arg(long, default_value = "data")]
    data: PathBuf,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct CostArgs {
    #[arg(long, default_value_t = 3)]
    years: usize,
    /// Pipeline configuration whose `[costs]` table overrides the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long, default_value = "data")]
    data: PathBuf,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value = "data")]
    data: PathBuf,
}

#[derive(Debug, Subcommand)]
enum PipelineCommand {
    Run(PipelineArgs),
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// TOML pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    run_id: Option<String>,
    /// Use the statements already on the stage.
    #[arg(long)]
    no_generate: bool,
    #[arg(long)]
    pin_clock: bool,
    #[arg(long)]
    json: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Corpus(CorpusCommand::Gen(a)) => corpus_gen(a),
        Command::Extract(ExtractCommand::Train(a)) => extract_train(&a.data),
        Command::Extract(ExtractCommand::Run(a)) => extract_run(a),
        Command::Reconcile(a) => reconcile(a),
        Command::Report(ReportCommand::Metrics(a)) => report_metrics(a),
        Command::Report(ReportCommand::Costs(a)) => report_costs(a),
        Command::Report(ReportCommand::Baseline(a)) => report_baseline(a),
        Command::Serve(a) => serve(a),
        Command::Pipeline(PipelineCommand::Run(a)) => pipeline_run(a),
    }
}

fn clock(pinned: bool) -> Arc<dyn Clock> {
    if pinned {
        Arc::new(FixedClock::epoch())
    } else {
        Arc::new(SystemClock)
    }
}

/// Parses `mp=2,dd=2,bal=2`; fields left out get zero.
fn parse_inject(spec: &str) -> Result<InjectionConfig, CliError> {
    let mut config = InjectionConfig { minimum_payment: 0, due_date: 0, statement_balance: 0 };
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) =
            part.split_once('=').ok_or_else(|| CliError::Config(format!("expected field=count, got {part:?}")))?;
        let field: FieldKind = key.trim().parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let count: usize =
            value.trim().parse().map_err(|_| CliError::Config(format!("invalid count {value:?} for {key}")))?;
        match field {
            FieldKind::MinimumPayment => config.minimum_payment = count,
            FieldKind::DueDate => config.due_date = count,
            FieldKind::StatementBalance => config.statement_balance = count,
        }
    }
    Ok(config)
}

fn corpus_gen(a: GenArgs) -> Result<(), CliError> {
    let injection = parse_inject(&a.inject)?;
    let config = CorpusConfig {
        truth: TruthConfig { size: a.size, ..TruthConfig::default() },
        labeled_count: a.labeled,
        ..CorpusConfig::default()
    };
    let corpus =
        generate_corpus(&config, &injection.plan(a.seed), a.seed).map_err(|e| CliError::Config(e.to_string()))?;
    CorpusFiles::new(&a.out).write(&corpus).map_err(stage)?;
    println!(
        "wrote {} statements, {} labeled, {} planted discrepancies to {}",
        corpus.documents.len(),
        corpus.labeled.len(),
        corpus.expected.len(),
        a.out.display()
    );
    Ok(())
}

fn extract_train(data: &Path) -> Result<(), CliError> {
    let model = obtain_model(data, &FieldSpec::defaults()).map_err(stage)?;
    println!(
        "trained {} on {} documents; wrote {}",
        model.model_version,
        model.manifest.doc_ids.len(),
        model_path(data).display()
    );
    Ok(())
}

fn open_store(data: &Path, clock: Arc<dyn Clock>) -> Result<EvidenceStore, CliError> {
    if !data.is_dir() {
        return Err(CliError::Config(format!("data directory {} does not exist", data.display())));
    }
    EvidenceStore::open(data, clock).map_err(stage)
}

fn extract_run(a: ExtractRunArgs) -> Result<(), CliError> {
    let path = a.model.unwrap_or_else(|| model_path(&a.data));
    let model = TrainedModel::load(&path).map_err(stage)?;
    let clock = clock(a.pin_clock);
    let mut store = open_store(&a.data, clock.clone())?;
    let batch = batch_extract(&model, &store.stage(), clock.as_ref()).map_err(stage)?;
    let run_id = a.run_id.unwrap_or_else(|| format!("run-{:04}", store.runs().len() + 1));
    let persisted = store.persist_raw(&batch, &run_id, PIPELINE_ACTOR).map_err(stage)?;
    let rows = store.flatten(&run_id, PIPELINE_ACTOR).map_err(stage)?;
    println!(
        "run {run_id}: {persisted} documents ({} unreadable), {} flat rows",
        batch.summary.read_errors,
        rows.len()
    );
    Ok(())
}

fn pick_run<'a>(store: &'a EvidenceStore, run_id: Option<&str>) -> Result<&'a RunManifest, CliError> {
    match run_id {
        Some(id) => store.run(id).ok_or_else(|| CliError::Stage(format!("unknown run {id}"))),
        None => store.latest_run().ok_or_else(|| CliError::Stage("the store has no runs".into())),
    }
}

fn reconcile(a: ReconcileArgs) -> Result<(), CliError> {
    let clock = clock(a.pin_clock);
    let mut store = open_store(&a.data, clock.clone())?;
    let run = pick_run(&store, a.run_id.as_deref())?.clone();
    let extractions = run_extractions(&store, &run);
    let truth = store.truth().map_err(stage)?;
    let report = reconcile_population(
        &run.run_id,
        &run.model_version,
        &extractions,
        &truth,
        &run.fields,
        &Default::default(),
        clock.as_ref(),
    )
    .map_err(stage)?;
    store.record_exceptions(&report, PIPELINE_ACTOR).map_err(stage)?;
    print!("{}", report.summary_text());
    Ok(())
}

fn run_extractions(store: &EvidenceStore, run: &RunManifest) -> Vec<assurance_core::extract::DocumentExtraction> {
    store.raw_records(&run.run_id).unwrap_or_default().iter().map(RawResultRecord::to_extraction).collect()
}

fn report_metrics(a: RunReportArgs) -> Result<(), CliError> {
    let store = open_store(&a.data, clock(false))?;
    let run = pick_run(&store, a.run_id.as_deref())?;
    let extractions = run_extractions(&store, run);
    let ground_truth = load_ground_truth(&a.data)
        .map_err(stage)?
        .ok_or_else(|| CliError::Stage(format!("no ground_truth.jsonl in {}", a.data.display())))?;
    let metrics = field_metrics(&extractions, &ground_truth, &run.fields).map_err(stage)?;
    let confidence = ConfidenceSummary::from_extractions(&extractions, &run.fields);
    match a.format {
        Format::Json => {
            let out = serde_json::json!({ "run_id": run.run_id, "metrics": metrics, "confidence": confidence });
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
        }
        Format::Csv => {
            println!("field,tp,fp,fn,precision,recall,f1,mean_confidence");
            for m in &metrics {
                let mean = confidence.mean(m.field_kind).map_or(String::new(), |c| format!("{c:.6}"));
                println!(
                    "{},{},{},{},{:.6},{:.6},{:.6},{mean}",
                    m.field_kind, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
                );
            }
        }
        Format::Text => {
            println!("run {} ({} documents)", run.run_id, extractions.len());
            println!(
                "{:<18}{:>6}{:>6}{:>6}{:>11}{:>8}{:>8}{:>12}",
                "field", "tp", "fp", "fn", "precision", "recall", "f1", "confidence"
            );
            for m in &metrics {
                let mean = confidence.mean(m.field_kind).map_or("n/a".into(), |c| format!("{:.3}", round3(c)));
                let flag = if m.precision_undefined { "*" } else { "" };
                println!(
                    "{:<18}{:>6}{:>6}{:>6}{:>10.4}{flag:1}{:>8.4}{:>8.4}{:>12}",
                    m.field_kind.as_str(),
                    m.tp,
                    m.fp,
                    m.fn_,
                    m.precision,
                    m.recall,
                    m.f1,
                    mean
                );
            }
            let overall = confidence.overall_mean.map_or("n/a".into(), |c| format!("{:.3}", round3(c)));
            println!("overall mean confidence: {overall}");
        }
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            PipelineConfig::parse_toml(&text).map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

fn cost_params(path: Option<&Path>) -> Result<CostParams, CliError> {
    Ok(load_config(path)?.costs)
}

fn report_costs(a: CostArgs) -> Result<(), CliError> {
    let params = cost_params(a.config.as_deref())?;
    let comparison = cost_model(&params, a.years).map_err(|e| CliError::Config(e.to_string()))?;
    match a.format {
        Format::Text => print!("{}", comparison.to_text()),
        Format::Csv => print!("{}", comparison.to_csv()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&comparison).expect("serializable")),
    }
    Ok(())
}

fn report_baseline(a: BaselineArgs) -> Result<(), CliError> {
    let params = cost_params(a.config.as_deref())?;
    let store = open_store(&a.data, clock(false))?;
    let figures = match (a.run_id.as_deref(), store.latest_run()) {
        (None, None) => RunFigures::default(),
        (id, _) => {
            let run = pick_run(&store, id)?;
            let extractions = run_extractions(&store, run);
            let metrics = match load_ground_truth(&a.data).map_err(stage)? {
                Some(gt) => field_metrics(&extractions, &gt, &run.fields).map_err(stage)?,
                None => Vec::new(),
            };
            let runtime =
                run.reconciled_at.map_or(0.0, |t| (t - run.created_at).num_milliseconds().max(0) as f64 / 1000.0);
            RunFigures {
                documents_in_population: run.documents,
                documents_processed: run.documents - run.read_errors,
                field_metrics: metrics,
                mean_confidence: ConfidenceSummary::from_extractions(&extractions, &run.fields).overall_mean,
                runtime_seconds: runtime,
                exceptions: run.exceptions.unwrap_or(0),
            }
        }
    };
    let rows = baseline_comparison(&figures, &params);
    match a.format {
        Format::Text => print!("{}", baseline_text(&rows)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows).expect("serializable")),
        Format::Csv => {
            println!("dimension,manual,automated");
            for r in rows {
                let q = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
                println!("{},{},{}", q(&r.dimension), q(&r.manual), q(&r.automated));
            }
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let store = open_store(&a.data, clock(false))?;
    let state = assurance_service::AppState::new(store).map_err(stage)?;
    let addr = SocketAddr::new(a.host, a.port);
    let runtime = tokio::runtime::Runtime::new().map_err(stage)?;
    eprintln!("serving {} on http://{addr}", a.data.display());
    runtime.block_on(assurance_service::serve(state, addr)).map_err(stage)
}

fn pipeline_run(a: PipelineArgs) -> Result<(), CliError> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(d) = a.data {
        config.data_dir = d;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if a.run_id.is_some() {
        config.run_id = a.run_id;
    }
    if a.no_generate {
        config.generate = false;
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let summary = run_pipeline(&config, clock(a.pin_clock)).map_err(stage)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    } else {
        print!("{}", summary.to_text());
    }
    Ok(())
}
