use super::{Decider, HumanDecision, PendingValidation, SessionState};
use crate::community::{derive_user_labels, gold_source_classes, majority_label, UserDerivedLabel};
use crate::error::Result;
use crate::graph::{HeteroGraph, Task};
use crate::llm::{build_grouping_prompt, parse_membership_response, LlmBackend};

/// Whoever validates candidate communities.
pub trait Interactor {
    fn decider(&self) -> Decider;

    fn decide(&mut self, state: &SessionState, pending: &PendingValidation) -> Result<HumanDecision>;

    /// Decisions made so far.
    fn calls(&self) -> usize;
}

/// Headless stand-in for a human: accepts the presented users whose
/// gold-derived label matches the majority label of the presented set.
pub struct SimulatedInteractor {
    labels: Vec<UserDerivedLabel>,
    calls: usize,
}

impl SimulatedInteractor {
    pub fn new(g: &HeteroGraph, task: Task) -> Self {
        SimulatedInteractor {
            labels: derive_user_labels(g, &gold_source_classes(g, task)),
            calls: 0,
        }
    }
}

impl Interactor for SimulatedInteractor {
    fn decider(&self) -> Decider {
        Decider::Human
    }

    fn decide(&mut self, _state: &SessionState, p: &PendingValidation) -> Result<HumanDecision> {
        self.calls += 1;
        let majority = majority_label(&p.candidates, &self.labels);
        let (accepted, rejected) = p
            .candidates
            .iter()
            .partition(|&&u| majority.is_some() && self.labels[u].label == majority);
        Ok(HumanDecision {
            validation: p.id,
            accepted,
            rejected,
        })
    }

    fn calls(&self) -> usize {
        self.calls
    }
}

/// Trusts the LLM's grouping of the presented users.
pub struct LlmInteractor<'a> {
    backend: &'a dyn LlmBackend,
    calls: usize,
}

impl<'a> LlmInteractor<'a> {
    pub fn new(backend: &'a dyn LlmBackend) -> Self {
        LlmInteractor { backend, calls: 0 }
    }
}

impl Interactor for LlmInteractor<'_> {
    fn decider(&self) -> Decider {
        Decider::Llm
    }

    fn decide(&mut self, _state: &SessionState, p: &PendingValidation) -> Result<HumanDecision> {
        self.calls += 1;
        let prompt = build_grouping_prompt(&p.summaries)?;
        let raw = match self.backend.complete(&prompt) {
            Ok(raw) => raw,
            Err(e) => {
                log::warn!("llm decision for validation {} failed: {e}", p.id);
                String::new()
            }
        };
        let v = parse_membership_response(&raw, &p.candidates);
        Ok(HumanDecision {
            validation: p.id,
            accepted: v.accepted,
            rejected: v.rejected,
        })
    }

    fn calls(&self) -> usize {
        self.calls
    }
}
