use std::path::Path;
use std::process::{Command, Output};

fn audit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_audit")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = audit(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stepwise_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path());
    let out = ok(&["corpus", "gen", "--size", "60", "--seed", "11", "--inject", "mp=1,dd=2,bal=0", "--out", data]);
    assert!(out.contains("60 statements"), "{out}");
    assert!(out.contains("3 planted"), "{out}");

    ok(&["extract", "train", "--data", data]);
    assert!(dir.path().join("model.json").is_file());

    let out = ok(&["extract", "run", "--data", data, "--run-id", "first", "--pin-clock"]);
    assert!(out.contains("180 flat rows"), "{out}");
    assert!(dir.path().join("runs/first/flat.csv").is_file());

    let out = ok(&["reconcile", "--data", data, "--pin-clock"]);
    assert!(out.contains("exceptions: 3"), "{out}");

    let csv = ok(&["report", "metrics", "--data", data, "--format", "csv"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "field,tp,fp,fn,precision,recall,f1,mean_confidence");
    assert_eq!(lines.len(), 4);
    for line in &lines[1..] {
        assert!(line.contains(",60,0,0,1.000000,1.000000,1.000000,"), "{line}");
    }

    let json: serde_json::Value =
        serde_json::from_str(&ok(&["report", "metrics", "--data", data, "--format", "json"])).unwrap();
    assert_eq!(json["run_id"], "first");
    assert_eq!(json["metrics"].as_array().unwrap().len(), 3);

    let baseline = ok(&["report", "baseline", "--data", data]);
    assert!(baseline.contains("Full population (100%)"), "{baseline}");
    assert!(baseline.contains("(3 exceptions)"), "{baseline}");
}

#[test]
fn cost_report_formats() {
    let text = ok(&["report", "costs"]);
    assert!(text.contains("quarterly manual cost: $31,875.00"), "{text}");
    assert!(text.contains("recurring cost reduction: 96.1%"), "{text}");
    assert!(text.contains("payback: 0.88 months"), "{text}");

    let csv = ok(&["report", "costs", "--years", "2", "--format", "csv"]);
    assert_eq!(
        csv,
        "year,manual_cost,automated_cost,savings,cumulative\n\
         0,0.00,9000.00,-9000.00,-9000.00\n\
         1,127500.00,5000.00,122500.00,113500.00\n\
         2,127500.00,5000.00,122500.00,236000.00\n"
    );

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("audit.toml");
    std::fs::write(&config, "[costs]\nauditors = 6\n").unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&ok(&["report", "costs", "--config", path(&config), "--format", "json"])).unwrap();
    assert_eq!(json["quarterly_manual"], "63750");
}

#[test]
fn pipeline_run_with_config_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let config = dir.path().join("audit.toml");
    std::fs::write(
        &config,
        format!("data_dir = {:?}\nseed = 3\n[corpus]\nsize = 80\n[injection]\nminimum_payment = 1\n", path(&data)),
    )
    .unwrap();
    let out = ok(&["pipeline", "run", "--config", path(&config), "--run-id", "cfg-run", "--pin-clock", "--json"]);
    let summary: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["run_id"], "cfg-run");
    assert_eq!(summary["documents"], 80);
    assert_eq!(summary["exceptions"], 5);
    assert_eq!(summary["expectation"]["unexpected"].as_array().unwrap().len(), 0);
    for file in ["costs.txt", "costs.csv", "baseline.txt", "pipeline.json", "report.jsonl", "summary.txt"] {
        assert!(data.join("runs/cfg-run").join(file).is_file(), "{file}");
    }

    // Reusing the staged corpus adds a second run.
    let text = ok(&["pipeline", "run", "--data", path(&data), "--no-generate", "--pin-clock"]);
    assert!(text.starts_with("run run-0002"), "{text}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path());
    let code = |args: &[&str]| audit(args).status.code();

    assert_eq!(code(&["no-such-command"]), Some(2));
    assert_eq!(code(&["corpus", "gen", "--inject", "apr=2", "--out", data]), Some(2));
    assert_eq!(code(&["pipeline", "run", "--data", data, "--run-id", "../escape"]), Some(2));
    assert_eq!(code(&["pipeline", "run", "--data", "/definitely/not/here", "--no-generate"]), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = \"many\"\n").unwrap();
    assert_eq!(code(&["report", "costs", "--config", path(&bad)]), Some(2));
    std::fs::write(&bad, "[costs]\nminutes_per_sample = 20\n").unwrap();
    assert_eq!(code(&["report", "costs", "--config", path(&bad)]), Some(2));

    // Stage failures: nothing to train from, no runs to report on.
    assert_eq!(code(&["extract", "train", "--data", data]), Some(1));
    assert_eq!(code(&["report", "metrics", "--data", data]), Some(1));
    assert_eq!(code(&["reconcile", "--data", data]), Some(1));
    assert_eq!(code(&["pipeline", "run", "--data", data, "--no-generate"]), Some(1));
}
