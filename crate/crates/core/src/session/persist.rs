use std::io::BufReader;
use std::path::Path;

use super::{model_sha, read_events, write_event, SessionState};
use crate::error::{Error, Result};
use crate::eval::write_report_csv;
use crate::graph::{load_graph, save_graph};
use crate::ingest::TextStore;
use crate::rgcn::{load_checkpoint, save_checkpoint};

pub const EVENTS_FILE: &str = "events.log";
pub const GRAPH_FILE: &str = "graph.snapshot";
pub const MODEL_FILE: &str = "model.ckpt";
pub const FINAL_MODEL_FILE: &str = "model.final.ckpt";
pub const REPORT_FILE: &str = "report.csv";
pub const BOOKKEEPING_FILE: &str = "bookkeeping.tsv";
pub const PROFILES_FILE: &str = "profiles.txt";
pub const ARTICLES_FILE: &str = "articles.tsv";

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes the base graph and model, the texts, the full event log and the
/// derived exports to `dir`. Later transitions are appended to the log.
pub fn save_session(state: &mut SessionState, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_graph(&state.base_graph, &dir.join(GRAPH_FILE))?;
    save_checkpoint(&state.base_model, &dir.join(MODEL_FILE))?;
    state
        .texts
        .save(&dir.join(PROFILES_FILE), &dir.join(ARTICLES_FILE))?;
    let mut log = Vec::new();
    for (seq, e) in state.events.iter().enumerate() {
        write_event(&mut log, seq, e)?;
    }
    let log_path = dir.join(EVENTS_FILE);
    write_atomic(&log_path, &log)?;
    write_exports(state, dir)?;
    state.log_path = Some(log_path);
    Ok(())
}

/// Exports that are pure functions of the state.
pub fn write_exports(state: &SessionState, dir: &Path) -> Result<()> {
    write_atomic(&dir.join(BOOKKEEPING_FILE), state.render_bookkeeping().as_bytes())?;
    if let Some(f) = &state.finalized {
        write_report_csv(&f.reports, &dir.join(REPORT_FILE))?;
        save_checkpoint(&state.model, &dir.join(FINAL_MODEL_FILE))?;
    }
    Ok(())
}

/// Rebuilds a session from `dir` by replaying its log. Nothing is returned
/// unless every record replays.
pub fn load_session(dir: &Path) -> Result<SessionState> {
    let graph = load_graph(&dir.join(GRAPH_FILE))?;
    let model = load_checkpoint(&dir.join(MODEL_FILE))?;
    let texts = TextStore::load(&dir.join(PROFILES_FILE), &dir.join(ARTICLES_FILE))?;
    let log_path = dir.join(EVENTS_FILE);
    let f = std::fs::File::open(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let events = read_events(BufReader::new(f), &log_path.display().to_string())?;
    let final_path = dir.join(FINAL_MODEL_FILE);
    let final_model = if final_path.exists() {
        Some(load_checkpoint(&final_path)?)
    } else {
        None
    };
    let mut state = SessionState::replay_with(graph, model, texts, events, final_model)?;
    if let Some(f) = &state.finalized {
        debug_assert_eq!(model_sha(&state.model), f.model_sha);
    }
    state.log_path = Some(log_path);
    Ok(state)
}
