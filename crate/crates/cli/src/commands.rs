use std::path::Path;

use serde_json::{json, Value};

use mediaprof_core::community::{derive_user_labels, gold_source_classes};
use mediaprof_core::eval::{
    cohesiveness_analysis, evaluate_split, render_cohesion_table, run_graph_only_baseline,
    run_llm_only_baseline, write_report_csv, BaselineRun, GraphOnlyConfig,
};
use mediaprof_core::graph::{NodeKind, Relation, Split, Task};
use mediaprof_core::ingest::{generate_synthetic, ingest_dir, SyntheticConfig, Workspace, SCRIPT_FILE};
use mediaprof_core::session::{
    load_session, run_protocol, save_session, write_exports, Decider, HumanDecision, Interactor,
    LlmInteractor, SessionState, SimulatedInteractor, EVENTS_FILE, REPORT_FILE,
};
use mediaprof_core::{Error, Result};

use crate::settings::Settings;
use crate::{
    BaselineCommand, Cli, Command, EvalArgs, ExportArgs, GenSynthArgs, InteractorKind, SessionCommand,
    SessionFlags, TrainArgs,
};

pub const COMMUNITIES_FILE: &str = "communities.json";
pub const COHESION_FILE: &str = "cohesion.tsv";

fn note(msg: impl AsRef<str>) {
    eprintln!("mediaprof: {}", msg.as_ref());
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(Error::Json)
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(Error::Json)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn run(cli: Cli) -> Result<Value> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Ingest { data, out } => ingest(config, &data, &out),
        Command::GenSynth(a) => gen_synth(&a),
        Command::Train(a) => train(config, &a),
        Command::Session(c) => session(config, c),
        Command::Baseline(c) => baseline(config, c),
        Command::Eval(a) => eval(config, &a),
        Command::ExportReport(a) => export_report(&a),
    }
}

fn gen_synth(a: &GenSynthArgs) -> Result<Value> {
    let d = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        communities: a.communities.unwrap_or(d.communities),
        users_per_community: a.users.unwrap_or(d.users_per_community),
        sources_per_community: a.sources.unwrap_or(d.sources_per_community),
        p_in: a.p_in.unwrap_or(d.p_in),
        p_out: a.p_out.unwrap_or(d.p_out),
        sigma: a.sigma.unwrap_or(d.sigma),
        source_sigma: a.source_sigma.unwrap_or(d.source_sigma),
        feature_dim: a.feature_dim.unwrap_or(d.feature_dim),
        seed: a.seed.unwrap_or(d.seed),
        ..d
    };
    note(format!("generating {} planted communities", cfg.communities));
    let data = generate_synthetic(&cfg)?;
    data.records.write_dir(&a.out)?;
    data.script.save(&a.out.join(SCRIPT_FILE))?;
    let planted = json!({
        "config": to_json(&data.config)?,
        "user_community": data.user_community,
        "source_community": data.source_community,
    });
    write_json(&a.out.join("planted.json"), &planted)?;
    Ok(json!({
        "out": a.out.display().to_string(),
        "sources": data.records.sources.len(),
        "articles": data.records.articles.len(),
        "users": data.records.users.len(),
        "edges": data.records.edges.len(),
    }))
}

fn graph_counts(ws: &Workspace) -> Value {
    json!({
        "sources": ws.graph.count(NodeKind::Source),
        "articles": ws.graph.count(NodeKind::Article),
        "users": ws.graph.count(NodeKind::User),
        "edges": Relation::ALL.iter().map(|&r| ws.graph.edge_count(r)).sum::<usize>(),
        "labels": ws.graph.labels().len(),
    })
}

fn ingest(config: Option<&Path>, data: &Path, out: &Path) -> Result<Value> {
    let settings = Settings::load(config)?;
    let ds = ingest_dir(data, &settings.config.ingest.periods)?;
    let warnings = ds.warnings.clone();
    let mut ws = Workspace::from_dataset(data, ds);
    ws.save(out)?;
    note(format!("workspace written to {}", out.display()));
    Ok(json!({ "out": out.display().to_string(), "graph": graph_counts(&ws), "warnings": warnings }))
}

fn train(config: Option<&Path>, a: &TrainArgs) -> Result<Value> {
    let mut settings = Settings::load(config)?;
    settings.apply_model(&a.model);
    settings.config.validate()?;
    let mut ws = Workspace::open(&a.data, &settings.config.ingest.periods)?;
    let cfg = &settings.config.model;
    note(format!(
        "training {} layers x {} hidden for {} epochs",
        cfg.rgcn.layers, cfg.rgcn.hidden, cfg.epochs
    ));
    let trace = ws.train(cfg)?;
    let out = a.out.as_deref().unwrap_or(&a.data);
    ws.save(out)?;
    settings.save(out)?;
    note(format!("model written to {}", out.display()));
    let reports = evaluate_split(&ws.graph, ws.model()?, Split::Train, "train", cfg.rgcn.seed)?;
    Ok(json!({
        "out": out.display().to_string(),
        "epochs": trace.len(),
        "first_loss": trace.first(),
        "final_loss": trace.last(),
        "train": to_json(&reports)?,
    }))
}

/// Opens a new session over the workspace model and saves it with its
/// effective configuration.
pub fn create_session(settings: &mut Settings, work: &Path, dir: &Path) -> Result<SessionState> {
    if dir.join(EVENTS_FILE).exists() {
        return Err(Error::Precondition(format!("{} already holds a session", dir.display())));
    }
    let ws = Workspace::load(work)?;
    let model = ws.model()?.clone();
    settings.resolve_llm(&ws)?;
    let mut state = SessionState::new(ws.graph, model, ws.texts, settings.config.session_config())?;
    save_session(&mut state, dir)?;
    settings.save(dir)?;
    Ok(state)
}

fn status_json(state: &SessionState) -> Result<Value> {
    let pending: Vec<_> = state.pending().collect();
    let communities: Vec<_> = state.communities().collect();
    Ok(json!({
        "status": to_json(&state.status())?,
        "counters": to_json(state.counters())?,
        "pending": to_json(&pending)?,
        "communities": to_json(&communities)?,
        "report": to_json(&state.finalized().map(|f| &f.reports))?,
        "state_hash": state.state_hash(),
    }))
}

fn read_decisions(path: &Path) -> Result<Vec<HumanDecision>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(Error::Json)?;
    if value.is_array() {
        serde_json::from_value(value).map_err(Error::Json)
    } else {
        serde_json::from_value(value).map(|d| vec![d]).map_err(Error::Json)
    }
}

fn session(config: Option<&Path>, c: SessionCommand) -> Result<Value> {
    match c {
        SessionCommand::Start { work, session, flags } => {
            let (mut state, settings) = if session.join(EVENTS_FILE).exists() {
                if flags_set(&flags) {
                    log::warn!("session exists; creation flags ignored");
                }
                (load_session(&session)?, Settings::load_saved(config, &session)?)
            } else {
                let work = work.ok_or_else(|| {
                    Error::InvalidArgument("--work is required to create a session".into())
                })?;
                let mut settings = Settings::load(config)?;
                settings.apply_session(&flags)?;
                let state = create_session(&mut settings, &work, &session)?;
                (state, settings)
            };
            let backend = settings.backend()?;
            note(format!("starting round {}", state.counters().rounds_started + 1));
            state.start_round(backend.as_ref())?;
            write_exports(&state, &session)?;
            status_json(&state)
        }
        SessionCommand::Status { session } => status_json(&load_session(&session)?),
        SessionCommand::Decide { session, decision } => {
            let mut state = load_session(&session)?;
            let mut outcomes = Vec::new();
            for d in read_decisions(&decision)? {
                outcomes.push(state.apply_decision(&d, Decider::Human)?);
            }
            write_exports(&state, &session)?;
            let mut v = status_json(&state)?;
            v["outcomes"] = to_json(&outcomes)?;
            Ok(v)
        }
        SessionCommand::Expand {
            session,
            community,
            rounds,
        } => {
            let mut state = load_session(&session)?;
            let backend = Settings::load_saved(config, &session)?.backend()?;
            let mut outcomes = Vec::new();
            for r in 0..rounds {
                note(format!("expanding community {community}, round {}", r + 1));
                outcomes.push(state.expand_round(community, backend.as_ref())?);
            }
            write_exports(&state, &session)?;
            let mut v = status_json(&state)?;
            v["outcomes"] = to_json(&outcomes)?;
            Ok(v)
        }
        SessionCommand::Finalize { session, tag } => {
            let mut state = load_session(&session)?;
            note("fine-tuning and evaluating");
            state.finalize(&tag)?;
            write_exports(&state, &session)?;
            status_json(&state)
        }
        SessionCommand::Run {
            work,
            session,
            interactor,
            interactions,
            expansions,
            tag,
            flags,
        } => {
            let mut settings = Settings::load(config)?;
            settings.apply_session(&flags)?;
            if let Some(n) = interactions {
                settings.config.session.interactions = n;
            }
            if let Some(n) = expansions {
                settings.config.session.expansions = n;
            }
            let mut state = create_session(&mut settings, &work, &session)?;
            let backend = settings.backend()?;
            let schedule = settings.config.schedule();
            note(format!(
                "running {} interaction(s) with {} expansion(s) each",
                schedule.interactions, schedule.expansions
            ));
            let (reports, calls) = match interactor {
                InteractorKind::Simulated => {
                    let mut i = SimulatedInteractor::new(state.graph(), state.config().task);
                    let tag = tag.as_deref().unwrap_or("interactive");
                    (run_protocol(&mut state, schedule, &mut i, backend.as_ref(), tag)?, i.calls())
                }
                InteractorKind::Llm => {
                    let mut i = LlmInteractor::new(backend.as_ref());
                    let tag = tag.as_deref().unwrap_or("llm-only");
                    (run_protocol(&mut state, schedule, &mut i, backend.as_ref(), tag)?, i.calls())
                }
            };
            write_exports(&state, &session)?;
            note(format!("report written to {}", session.join(REPORT_FILE).display()));
            let mut v = status_json(&state)?;
            v["report"] = to_json(&reports)?;
            v["interactor_calls"] = json!(calls);
            Ok(v)
        }
    }
}

fn flags_set(f: &SessionFlags) -> bool {
    f.task.is_some()
        || f.k.is_some()
        || f.m.is_some()
        || f.communities_per_round.is_some()
        || f.population.is_some()
        || f.seed.is_some()
        || f.margin.is_some()
        || f.fine_tune_epochs.is_some()
        || f.script.is_some()
}

fn write_baseline(run: &BaselineRun, settings: &Settings, out: &Path) -> Result<()> {
    settings.save(out)?;
    write_report_csv(&run.reports, &out.join(REPORT_FILE))?;
    write_json(&out.join(COMMUNITIES_FILE), &to_json(&run.communities)?)
}

fn baseline(config: Option<&Path>, c: BaselineCommand) -> Result<Value> {
    match c {
        BaselineCommand::GraphOnly { work, out, flags } => {
            let mut settings = Settings::load(config)?;
            let mut rest = flags.clone();
            let (k, m) = (rest.k.take(), rest.m.take());
            settings.apply_session(&rest)?;
            let e = &mut settings.config.eval;
            e.graph_only_k = k.unwrap_or(e.graph_only_k);
            e.graph_only_m = m.unwrap_or(e.graph_only_m);
            settings.config.validate()?;
            let cfg = GraphOnlyConfig {
                k: settings.config.eval.graph_only_k,
                m: settings.config.eval.graph_only_m,
                communities: settings.config.clustering.communities_per_round,
            };
            let ws = Workspace::load(&work)?;
            note(format!("graph-only baseline with k = {}", cfg.k));
            let run = run_graph_only_baseline(
                &ws.graph,
                ws.model()?,
                &settings.config.session_config(),
                &cfg,
                "graph-only",
            )?;
            write_baseline(&run, &settings, &out)?;
            Ok(json!({
                "k": cfg.k,
                "m": cfg.m,
                "communities": run.communities,
                "report": to_json(&run.reports)?,
            }))
        }
        BaselineCommand::LlmOnly {
            work,
            out,
            interactions,
            expansions,
            flags,
        } => {
            let mut settings = Settings::load(config)?;
            settings.apply_session(&flags)?;
            if let Some(n) = interactions {
                settings.config.session.interactions = n;
            }
            if let Some(n) = expansions {
                settings.config.session.expansions = n;
            }
            let ws = Workspace::load(&work)?;
            settings.resolve_llm(&ws)?;
            let backend = settings.backend()?;
            note("llm-only baseline");
            let run = run_llm_only_baseline(
                &ws.graph,
                ws.model()?,
                &ws.texts,
                &settings.config.session_config(),
                backend.as_ref(),
                settings.config.schedule(),
                "llm-only",
            )?;
            write_baseline(&run, &settings, &out)?;
            Ok(json!({
                "communities": run.communities,
                "llm_calls": run.llm_calls,
                "interactor_calls": run.interactor_calls,
                "report": to_json(&run.reports)?,
            }))
        }
    }
}

fn eval(config: Option<&Path>, a: &EvalArgs) -> Result<Value> {
    let settings = Settings::load(config)?;
    let ws = Workspace::load(&a.work)?;
    let seed = a.seed.unwrap_or(settings.config.session.seed);
    let reports = evaluate_split(&ws.graph, ws.model()?, Split::Test, &a.tag, seed)?;
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_report_csv(&reports, &out.join(REPORT_FILE))?;
    }
    Ok(json!({ "report": to_json(&reports)? }))
}

fn export_report(a: &ExportArgs) -> Result<Value> {
    let state = load_session(&a.session)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_exports(&state, &a.out)?;
    let members = state.community_members();
    write_json(&a.out.join(COMMUNITIES_FILE), &to_json(&members)?)?;
    let other = a.compare.as_deref().map(load_session).transpose()?;
    let mut table = String::new();
    let mut cohesion = serde_json::Map::new();
    for task in Task::ALL {
        let rows = |s: &SessionState| {
            let labels = derive_user_labels(s.graph(), &gold_source_classes(s.graph(), task));
            let communities: Vec<Vec<usize>> =
                s.community_members().into_iter().filter(|c| !c.is_empty()).collect();
            cohesiveness_analysis(&communities, &labels)
        };
        let left = rows(&state)?;
        let right = other.as_ref().map(rows).transpose()?.unwrap_or_default();
        let right_name = a.compare.as_ref().map(|p| p.display().to_string()).unwrap_or("-".into());
        table.push_str(&format!("# {task}\n"));
        table.push_str(&render_cohesion_table(
            task,
            (&a.session.display().to_string(), &left),
            (&right_name, &right),
        ));
        cohesion.insert(task.to_string(), to_json(&left)?);
    }
    let path = a.out.join(COHESION_FILE);
    std::fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    Ok(json!({
        "out": a.out.display().to_string(),
        "finalized": state.finalized().is_some(),
        "communities": members,
        "cohesion": cohesion,
    }))
}
