use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use assurance_core::corpus::{generate_corpus, CorpusConfig, TruthConfig};
use assurance_core::normalize::{normalize_field, render_canonical};
use assurance_core::pipeline::{run_pipeline, InjectionConfig, PipelineConfig};
use assurance_core::reconcile::ExceptionCategory;
use assurance_core::store::EvidenceStore;
use assurance_core::{FieldKind, FixedClock};

fn config(dir: &std::path::Path, size: usize, seed: u64, injection: InjectionConfig) -> PipelineConfig {
    PipelineConfig {
        data_dir: dir.to_path_buf(),
        seed,
        corpus: CorpusConfig { truth: TruthConfig { size, ..TruthConfig::default() }, ..CorpusConfig::default() },
        injection,
        ..PipelineConfig::default()
    }
}

/// Re-derives the exception set by rendering truth and statement values as
/// canonical text and comparing the strings.
#[test]
fn exceptions_match_string_rendering_oracle() {
    for (seed, injection) in [
        (1, InjectionConfig::default()),
        (9, InjectionConfig { minimum_payment: 4, due_date: 0, statement_balance: 3 }),
        (23, InjectionConfig { minimum_payment: 0, due_date: 5, statement_balance: 0 }),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), 120, seed, injection.clone());
        let corpus = generate_corpus(&cfg.corpus, &injection.plan(seed), seed).unwrap();
        let summary = run_pipeline(&cfg, Arc::new(FixedClock::epoch())).unwrap();

        let statement: BTreeMap<&str, _> =
            corpus.statement_records.iter().map(|r| (r.customer_id.as_str(), r)).collect();
        let mut oracle = BTreeSet::new();
        for truth in &corpus.truth {
            let shown = statement[truth.customer_id.as_str()];
            for field in FieldKind::ALL {
                if render_canonical(&truth.value(field)) != render_canonical(&shown.value(field)) {
                    oracle.insert((truth.doc_id(), field));
                }
            }
        }

        let store = EvidenceStore::open(dir.path(), Arc::new(FixedClock::epoch())).unwrap();
        let reported: BTreeSet<_> = store.exceptions().map(|e| (e.doc_id.clone(), e.field_kind)).collect();
        assert_eq!(reported, oracle, "seed {seed}");
        assert_eq!(summary.exceptions, oracle.len());

        // Soundness: every reported value really differs once normalized.
        for e in store.exceptions() {
            assert_eq!(e.category, ExceptionCategory::Mismatch);
            let extracted = normalize_field(e.field_kind.value_type(), e.extracted_raw.as_deref()).unwrap().canonical;
            assert_ne!(Some(extracted), e.source_value);
            assert_eq!(e.extracted_canonical, Some(extracted));
            e.check_invariants().unwrap();
        }
    }
}

#[test]
fn summary_counts_equal_store_contents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 90, 5, InjectionConfig { minimum_payment: 3, due_date: 1, statement_balance: 2 });
    let summary = run_pipeline(&cfg, Arc::new(FixedClock::epoch())).unwrap();
    let store = EvidenceStore::open(dir.path(), Arc::new(FixedClock::epoch())).unwrap();

    let run = store.run(&summary.run_id).unwrap();
    assert_eq!(run.documents, summary.documents);
    assert_eq!(run.exceptions, Some(summary.exceptions));
    assert_eq!(store.raw_records(&summary.run_id).unwrap().len(), summary.documents);
    assert_eq!(store.read_flat(&summary.run_id).unwrap().len(), summary.documents * 3);

    let mut by_field: BTreeMap<FieldKind, usize> = BTreeMap::new();
    for e in store.exceptions() {
        *by_field.entry(e.field_kind).or_default() += 1;
    }
    by_field.retain(|_, n| *n > 0);
    let mut reported = summary.exceptions_by_field.clone();
    reported.retain(|_, n| *n > 0);
    assert_eq!(by_field, reported);
    assert!(summary.expectation.unwrap().exact());
    assert!(store.verify_replay().unwrap());
}

#[test]
fn second_run_over_same_stage_adds_independent_exceptions() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 40, 3, InjectionConfig::default());
    let first = run_pipeline(&cfg, Arc::new(FixedClock::epoch())).unwrap();
    cfg.generate = false;
    let second = run_pipeline(&cfg, Arc::new(FixedClock::epoch())).unwrap();
    assert_eq!((first.run_id.as_str(), second.run_id.as_str()), ("run-0001", "run-0002"));
    assert_eq!(first.exceptions, second.exceptions);

    let store = EvidenceStore::open(dir.path(), Arc::new(FixedClock::epoch())).unwrap();
    let ids: BTreeSet<_> = store.exceptions().map(|e| e.exception_id.clone()).collect();
    assert_eq!(ids.len(), first.exceptions + second.exceptions);
    assert_eq!(store.runs().len(), 2);
}
