mod common;

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::write_fixture;
use trajprompt::config::PipelineConfig;
use trajprompt::corpus::load_jsonl;
use trajprompt::pipeline::{Pipeline, RunSpec};
use trajprompt::report::read_report;
use trajprompt::split_io::read_split;
use trajprompt::Error;
use trajprompt_core::Variant;

fn pipeline(dir: &Path, extra: &str) -> Pipeline {
    let cfg = PipelineConfig::load(&write_fixture(dir, extra)).unwrap();
    Pipeline::new(cfg).unwrap()
}

#[test]
fn second_run_recomputes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), "");
    let t = Instant::now();
    let first = p.run_all().unwrap();
    eprintln!("first run {:?}: {:?}", t.elapsed(), first.executed);
    assert!(first.skipped.is_empty());
    assert_eq!(first.executed, ["preprocess", "embed", "retrieve-similarity-b300", "emit-full-b300", "predict-full-b300", "evaluate-full-b300"]);
    let second = p.run_all().unwrap();
    assert!(second.executed.is_empty(), "re-ran {:?}", second.executed);

    // Tampering with an output invalidates exactly the stages downstream of it.
    let corpus = p.layout().corpus_dir("full-b300").join("test.jsonl");
    std::fs::write(&corpus, "").unwrap();
    let third = p.run_all().unwrap();
    assert_eq!(third.executed, ["emit-full-b300"]);
}

#[test]
fn changed_input_reruns_from_preprocess() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), "[corpus]\nbudget_sweep = [50]\n");
    p.run_all().unwrap();
    let csv = dir.path().join("data.csv");
    let mut text = std::fs::read_to_string(&csv).unwrap();
    let last = text.lines().last().unwrap().to_string();
    text.push_str(&last.replace("u", "zz"));
    text.push('\n');
    std::fs::write(&csv, text).unwrap();
    let p = Pipeline::new(PipelineConfig::load(&dir.path().join("config.toml")).unwrap()).unwrap();
    let again = p.run_all().unwrap();
    assert_eq!(again.executed[0], "preprocess");
}

#[test]
fn missing_upstream_names_the_producing_command() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), "");
    let run = p.runs()[0];
    match p.emit(&run) {
        Err(Error::MissingArtifact { command, .. }) => assert_eq!(command, "preprocess"),
        other => panic!("{other:?}"),
    }
    p.preprocess().unwrap();
    match p.retrieve(&run) {
        Err(Error::MissingArtifact { command, .. }) => assert_eq!(command, "embed"),
        other => panic!("{other:?}"),
    }
    match p.emit(&run) {
        Err(Error::MissingArtifact { command, .. }) => assert_eq!(command, "retrieve"),
        other => panic!("{other:?}"),
    }
    match p.predict(&run) {
        Err(Error::MissingArtifact { command, .. }) => assert_eq!(command, "emit"),
        other => panic!("{other:?}"),
    }
    match p.evaluate(&run) {
        Err(Error::MissingArtifact { command, .. }) => assert_eq!(command, "predict"),
        other => panic!("{other:?}"),
    }
    let msg = p.emit(&run).unwrap_err().to_string();
    assert!(msg.contains("trajprompt retrieve"), "{msg}");
}

#[test]
fn no_history_variant_has_empty_history() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), "[prompting]\nvariant = \"no_history\"\n");
    let s = p.run_all().unwrap();
    assert!(!s.executed.iter().any(|x| x == "embed" || x.starts_with("retrieve")));
    for f in ["train.jsonl", "validation.jsonl", "test.jsonl"] {
        let recs = load_jsonl(&p.layout().corpus_dir("no_history").join(f), true).unwrap().records;
        assert!(!recs.is_empty());
        for r in recs {
            assert!(r.meta.history_trajectory_ids.is_empty());
            assert_eq!(r.meta.variant, Variant::NoHistory);
            assert!(!r.question.contains("historical data"));
        }
    }
}

#[test]
fn budget_sweep_gives_one_corpus_and_report_per_budget() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), "[corpus]\nbudget_sweep = [100, 200, 300]\n");
    p.run_all().unwrap();
    let mut fp = None;
    let mut mean_history = Vec::new();
    for b in [100, 200, 300] {
        let tag = format!("full-b{b}");
        let recs = load_jsonl(&p.layout().corpus_dir(&tag).join("test.jsonl"), true).unwrap().records;
        let split = read_split(&p.layout().split_dir()).unwrap();
        let len: HashMap<u64, usize> = split.all_trajectories().map(|t| (t.trajectory_id, t.len())).collect();
        for r in &recs {
            let total: usize = r.meta.history_trajectory_ids.iter().map(|id| len[id]).sum();
            assert!(total <= b || r.meta.history_trajectory_ids.len() == 1, "{tag}: {total} history check-ins");
        }
        mean_history.push(recs.iter().map(|r| r.meta.history_trajectory_ids.len()).sum::<usize>());
        let report = read_report(&p.layout().report_dir(&tag)).unwrap();
        assert_eq!(*fp.get_or_insert(report.test_set_fingerprint.clone()), report.test_set_fingerprint);
    }
    assert!(mean_history[0] <= mean_history[1] && mean_history[1] <= mean_history[2]);
    let summary = std::fs::read_to_string(p.layout().root.join("reports/summary.txt")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn masked_run_gets_its_own_tag() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), "[prompting]\nmask = true\n[corpus]\nbudget_sweep = [60]\n");
    assert_eq!(p.runs(), [RunSpec::new(Variant::Full, 60, true)]);
    p.run_all().unwrap();
    let recs = load_jsonl(&p.layout().corpus_dir("full-masked-b60").join("test.jsonl"), true).unwrap().records;
    assert!(recs.iter().all(|r| r.meta.variant == Variant::MaskedContext));
    assert!(recs.iter().all(|r| !r.question.contains("Coffee Shop")));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_trajprompt")).args(args).output().unwrap()
}

#[test]
fn cli_runs_stages_and_compares_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), "[corpus]\nbudget_sweep = [80]\n");
    let cfg = cfg.to_str().unwrap();
    for cmd in ["preprocess", "embed", "retrieve", "emit", "predict", "evaluate"] {
        let out = cli(&["--config", cfg, "--threads", "2", cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = cli(&["--config", cfg, "--variant", "no-history", "pipeline"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = dir.path().join("out/reports");
    let a = reports.join("full-b80");
    let b = reports.join("no_history");
    let out = cli(&["evaluate", "--compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("overall_acc1"), "{table}");
}

#[test]
fn cli_refuses_cross_test_set_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), "[prompting]\nvariant = \"no_history\"\n[inference]\nlimit = 5\n");
    p.run_all().unwrap();
    let a = p.layout().report_dir("no_history");
    let mut other = read_report(&a).unwrap();
    other.test_set_fingerprint = "different".into();
    let b = dir.path().join("other.json");
    std::fs::write(&b, serde_json::to_vec(&other).unwrap()).unwrap();
    let out = cli(&["evaluate", "--compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn cli_reports_bad_config_with_failure_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let out = cli(&["--config", cfg.to_str().unwrap(), "preprocess"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_key"));
    let out = cli(&["--config", dir.path().join("absent.toml").to_str().unwrap(), "emit"]);
    assert!(!out.status.success());
}
