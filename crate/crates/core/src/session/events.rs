use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{HumanDecision, PendingValidation, SessionConfig};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::llm::UserSummary;

/// Who made a membership decision. Only human decisions count as
/// interactions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decider {
    Human,
    Llm,
}

/// One state transition. The session state is a fold over these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        version: u32,
        config: SessionConfig,
        /// Users that may join communities.
        population: Vec<usize>,
    },
    RoundStarted {
        round: usize,
        pending: Vec<PendingValidation>,
        warnings: Vec<String>,
    },
    DecisionApplied {
        decision: HumanDecision,
        decider: Decider,
    },
    Expanded {
        community: u64,
        /// Users asked about, one group per prompt.
        queried: Vec<Vec<usize>>,
        /// Summaries generated for this round.
        summaries: Vec<UserSummary>,
        accepted: Vec<usize>,
        rejected: Vec<usize>,
        malformed: usize,
        warnings: Vec<String>,
    },
    Finalized {
        model_tag: String,
        reports: Vec<MetricsReport>,
        /// SHA-256 of the fine-tuned checkpoint.
        model_sha: String,
        inductive_holds: bool,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Created { .. } => "created",
            Event::RoundStarted { .. } => "round_started",
            Event::DecisionApplied { .. } => "decision_applied",
            Event::Expanded { .. } => "expanded",
            Event::Finalized { .. } => "finalized",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    seq: usize,
    #[serde(flatten)]
    event: Event,
}

pub fn write_event<W: Write>(out: &mut W, seq: usize, event: &Event) -> Result<()> {
    let line = serde_json::to_string(&LogLine {
        seq,
        event: event.clone(),
    })?;
    writeln!(out, "{line}").map_err(|e| Error::io("events.log", e))
}

/// Parses a whole log. Any bad line, or a gap in the sequence numbers, fails
/// the read.
pub fn read_events<R: BufRead>(input: R, name: &str) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(name, i + 1, e.to_string()))?;
        if rec.seq != events.len() {
            return Err(Error::parse(
                name,
                i + 1,
                format!("expected sequence number {}, found {}", events.len(), rec.seq),
            ));
        }
        events.push(rec.event);
    }
    Ok(events)
}
