use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mediaprof_core::eval::{render_report_csv, run_graph_only_baseline, GraphOnlyConfig};
use mediaprof_core::ingest::{AppConfig, Workspace, SCRIPT_FILE};
use mediaprof_core::llm::{Script, ScriptedBackend};
use mediaprof_core::session::{load_session, run_protocol, Schedule, SessionState, SimulatedInteractor};
use serde_json::Value;
use tempfile::TempDir;

fn mediaprof(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mediaprof"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = mediaprof(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

/// Last stderr line of a failing run, parsed.
fn err(args: &[&str]) -> Value {
    let out = mediaprof(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().expect("stderr line")).expect("json error")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic dataset plus a trained workspace.
struct Fixture {
    tmp: TempDir,
    raw: PathBuf,
    work: PathBuf,
}

const SESSION_FLAGS: [&str; 6] = ["--k", "4", "--m", "3", "--fine-tune-epochs", "3"];

fn fixture() -> Fixture {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw");
    let work = tmp.path().join("work");
    ok(&[
        "gen-synth", "--out", s(&raw), "--communities", "3", "--users", "10", "--sources", "4",
        "--feature-dim", "8", "--seed", "1",
    ]);
    ok(&[
        "train", "--data", s(&raw), "--out", s(&work), "--hidden", "8", "--layers", "2", "--epochs",
        "20", "--lr", "0.01",
    ]);
    Fixture { tmp, raw, work }
}

fn run_session(f: &Fixture, name: &str, extra: &[&str]) -> PathBuf {
    let dir = f.tmp.path().join(name);
    let mut args = vec![
        "session", "run", "--work", s(&f.work), "--session", s(&dir), "--interactor", "simulated",
        "--interactions", "1", "--expansions", "2",
    ];
    args.extend(SESSION_FLAGS);
    args.extend(extra);
    ok(&args);
    dir
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn pipeline_smoke_reports_one_interaction() {
    let f = fixture();
    let dir = run_session(&f, "s", &[]);
    let report = read(&dir.join("report.csv"));
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{report}");
    for row in rows {
        assert_eq!(row.split(',').last(), Some("1"), "{row}");
    }
}

#[test]
fn session_run_twice_gives_identical_reports() {
    let f = fixture();
    let a = run_session(&f, "a", &["--seed", "3"]);
    let b = run_session(&f, "b", &["--seed", "3"]);
    assert_eq!(read(&a.join("report.csv")), read(&b.join("report.csv")));
    assert_eq!(read(&a.join("bookkeeping.tsv")), read(&b.join("bookkeeping.tsv")));
}

#[test]
fn session_run_matches_the_library_call() {
    let f = fixture();
    let dir = run_session(&f, "s", &["--seed", "5"]);
    let cfg = AppConfig::load(&dir.join("config.toml")).unwrap();
    assert_eq!(cfg.session.seed, 5);
    assert_eq!(cfg.clustering.k, 4);
    let ws = Workspace::load(&f.work).unwrap();
    let backend = ScriptedBackend::new(Script::load(&f.work.join(SCRIPT_FILE)).unwrap());
    let mut state = SessionState::new(
        ws.graph.clone(),
        ws.model().unwrap().clone(),
        ws.texts.clone(),
        cfg.session_config(),
    )
    .unwrap();
    let mut human = SimulatedInteractor::new(&ws.graph, cfg.session.task);
    let schedule = Schedule {
        interactions: 1,
        expansions: 2,
    };
    let reports = run_protocol(&mut state, schedule, &mut human, &backend, "interactive").unwrap();
    assert_eq!(read(&dir.join("report.csv")), render_report_csv(&reports));
    assert_eq!(load_session(&dir).unwrap().state_hash(), state.state_hash());
}

#[test]
fn graph_only_k_is_propagated() {
    let f = fixture();
    let out = f.tmp.path().join("graph-only");
    let v = ok(&["baseline", "graph-only", "--work", s(&f.work), "--out", s(&out), "--k", "35"]);
    assert_eq!(v["k"], 35);
    let cfg = AppConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(cfg.eval.graph_only_k, 35);

    let ws = Workspace::load(&f.work).unwrap();
    let direct = run_graph_only_baseline(
        &ws.graph,
        ws.model().unwrap(),
        &cfg.session_config(),
        &GraphOnlyConfig {
            k: 35,
            m: cfg.eval.graph_only_m,
            communities: cfg.clustering.communities_per_round,
        },
        "graph-only",
    )
    .unwrap();
    assert_eq!(read(&out.join("report.csv")), render_report_csv(&direct.reports));
    assert_eq!(v["communities"], serde_json::to_value(&direct.communities).unwrap());
}

#[test]
fn llm_only_baseline_counts_no_interactions() {
    let f = fixture();
    let out = f.tmp.path().join("llm-only");
    let mut args = vec![
        "baseline", "llm-only", "--work", s(&f.work), "--out", s(&out), "--interactions", "1",
        "--expansions", "1",
    ];
    args.extend(SESSION_FLAGS);
    let v = ok(&args);
    assert!(v["llm_calls"].as_u64().unwrap() > 0);
    for row in read(&out.join("report.csv")).lines().skip(1) {
        assert_eq!(row.split(',').last(), Some("0"), "{row}");
    }
}

#[test]
fn flags_override_config_file_over_defaults() {
    let f = fixture();
    let config = f.tmp.path().join("run.toml");
    std::fs::write(&config, "[clustering]\nk = 6\nm = 3\n\n[session]\nseed = 9\n").unwrap();
    let start = |name: &str, extra: &[&str]| {
        let dir = f.tmp.path().join(name);
        let mut args = vec!["--config", s(&config), "session", "start", "--work", s(&f.work), "--session", s(&dir)];
        args.extend(extra);
        ok(&args);
        AppConfig::load(&dir.join("config.toml")).unwrap()
    };
    let from_file = start("file", &[]);
    assert_eq!((from_file.clustering.k, from_file.session.seed), (6, 9));
    assert_eq!(from_file.clustering.communities_per_round, 2);
    let flagged = start("flag", &["--k", "5"]);
    assert_eq!((flagged.clustering.k, flagged.session.seed), (5, 9));
    let state = load_session(&f.tmp.path().join("flag")).unwrap();
    assert_eq!(state.config().k, 5);
}

#[test]
fn headless_decide_expand_finalize_export() {
    let f = fixture();
    let dir = f.tmp.path().join("s");
    let mut args = vec!["session", "start", "--work", s(&f.work), "--session", s(&dir)];
    args.extend(SESSION_FLAGS);
    let v = ok(&args);
    assert_eq!(v["status"], "awaiting_decision");
    let first = &v["pending"][0];
    let candidates = first["candidates"].as_array().unwrap().clone();
    let decision = serde_json::json!({ "validation": first["id"], "accepted": candidates });
    let file = f.tmp.path().join("d.json");
    std::fs::write(&file, decision.to_string()).unwrap();

    let before = v["pending"].as_array().unwrap().len();
    let d1 = ok(&["session", "decide", "--session", s(&dir), "--decision", s(&file)]);
    assert_eq!(d1["pending"].as_array().unwrap().len(), before - 1);
    let d2 = ok(&["session", "decide", "--session", s(&dir), "--decision", s(&file)]);
    assert_eq!(d1["outcomes"], d2["outcomes"]);

    let conflicting = serde_json::json!({ "validation": first["id"], "accepted": [] });
    std::fs::write(&file, conflicting.to_string()).unwrap();
    assert_eq!(
        err(&["session", "decide", "--session", s(&dir), "--decision", s(&file)])["error"]["code"],
        "conflict"
    );

    let status = ok(&["session", "status", "--session", s(&dir)]);
    let community = d1["outcomes"][0]["community"].as_u64().unwrap().to_string();
    assert_eq!(status["communities"].as_array().unwrap().len(), 1);
    let ex = mediaprof(&["session", "expand", "--session", s(&dir), "--community", &community]);
    assert!(ex.status.success() || String::from_utf8_lossy(&ex.stderr).contains("precondition"));

    let rest: Vec<Value> = ok(&["session", "status", "--session", s(&dir)])["pending"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| serde_json::json!({ "validation": p["id"], "accepted": p["candidates"] }))
        .collect();
    std::fs::write(&file, Value::Array(rest).to_string()).unwrap();
    ok(&["session", "decide", "--session", s(&dir), "--decision", s(&file)]);

    let fin = ok(&["session", "finalize", "--session", s(&dir)]);
    assert_eq!(fin["status"], "finalized");
    assert!(dir.join("report.csv").exists());
    let out = f.tmp.path().join("export");
    let e = ok(&["export-report", "--session", s(&dir), "--out", s(&out)]);
    assert_eq!(e["finalized"], true);
    for name in ["report.csv", "bookkeeping.tsv", "communities.json", "cohesion.tsv"] {
        assert!(out.join(name).exists(), "{name}");
    }
    assert_eq!(read(&out.join("report.csv")), read(&dir.join("report.csv")));
}

#[test]
fn ingest_then_train_then_eval() {
    let f = fixture();
    let work = f.tmp.path().join("ingested");
    let v = ok(&["ingest", "--data", s(&f.raw), "--out", s(&work)]);
    assert_eq!(v["graph"]["users"], 60);
    assert!(v["warnings"].as_array().unwrap().is_empty());
    ok(&["train", "--data", s(&work), "--hidden", "8", "--layers", "2", "--epochs", "5"]);
    let out = f.tmp.path().join("eval");
    let e = ok(&["eval", "--work", s(&work), "--out", s(&out)]);
    assert_eq!(e["report"].as_array().unwrap().len(), 2);
    assert!(read(&out.join("report.csv")).starts_with("model,task,"));
}

#[test]
fn unknown_command_prints_usage_and_fails() {
    let out = mediaprof(&["frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = mediaprof(&["train", "--bogus"]);
    assert!(!out.status.success());
}

#[test]
fn failures_are_machine_readable() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nothing");
    let e = err(&["session", "status", "--session", s(&missing)]);
    assert_eq!(e["error"]["code"], "io_error");
    let e = err(&["gen-synth", "--out", s(&missing), "--p-in", "0.01", "--p-out", "0.2"]);
    assert_eq!(e["error"]["code"], "invalid_argument");
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nwidth = 3\n").unwrap();
    let e = err(&["--config", s(&bad), "eval", "--work", s(&missing)]);
    assert_eq!(e["error"]["code"], "parse_error");
}
