//! The interactive protocol as a persistent state machine. Every transition
//! is an [`Event`]; the state is rebuilt by replaying the log over the base
//! graph and model.

mod events;
mod interactor;
mod persist;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use events::{read_events, write_event, Decider, Event};
pub use interactor::{Interactor, LlmInteractor, SimulatedInteractor};
pub use persist::{
    load_session, save_session, ARTICLES_FILE, BOOKKEEPING_FILE, EVENTS_FILE, FINAL_MODEL_FILE,
    GRAPH_FILE, MODEL_FILE, PROFILES_FILE, REPORT_FILE, write_exports,
};

use crate::community::{
    derive_user_labels, extractor_by_name, filter_cluster_by_entity, kmeans, knn_to_community,
    select_top_clusters, Community, CommunityStatus, Example,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_split, MetricsReport};
use crate::graph::{HeteroGraph, NodeId, NodeKind, Split, Task};
use crate::ingest::{TextStore, MAX_PROFILE_TWEETS};
use crate::llm::{
    build_membership_prompt, get_opinion, parse_membership_response, summarize_batch, LlmBackend,
    Opinion, UserSummary,
};
use crate::rgcn::{
    argmax, forward, train_link_prediction, write_checkpoint, ForwardOutput, LinkPredConfig,
    RgcnModel,
};

pub const SESSION_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Task whose predicted labels drive cluster purity.
    pub task: Task,
    pub k: usize,
    /// Candidates taken from each cluster during expansion.
    pub m: usize,
    pub communities_per_round: usize,
    pub min_cluster_size: usize,
    /// Users eligible for communities; `None` for every user.
    pub population: Option<Split>,
    pub max_tweets: usize,
    pub parallelism: usize,
    pub extractor: String,
    /// Negatives borrowed from other communities when a community has no
    /// rejected example of its own.
    pub max_borrowed_negatives: usize,
    pub seed: u64,
    pub fine_tune: LinkPredConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            task: Task::Factuality,
            k: 35,
            m: 12,
            communities_per_round: 2,
            min_cluster_size: 2,
            population: Some(Split::Test),
            max_tweets: MAX_PROFILE_TWEETS,
            parallelism: 4,
            extractor: "capitalized".into(),
            max_borrowed_negatives: 3,
            seed: 0,
            fine_tune: LinkPredConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 || self.communities_per_round == 0 {
            return Err(Error::InvalidArgument(
                "k, m and communities_per_round must be positive".into(),
            ));
        }
        if extractor_by_name(&self.extractor).is_none() {
            return Err(Error::InvalidArgument(format!(
                "unknown entity extractor `{}`",
                self.extractor
            )));
        }
        self.fine_tune.validate()
    }
}

/// A candidate community waiting for a human decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingValidation {
    pub id: u64,
    pub round: usize,
    pub purity: f64,
    pub anchor: String,
    pub candidates: Vec<usize>,
    pub summaries: Vec<UserSummary>,
    /// Display only; never read by any transition.
    pub opinion: Opinion,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanDecision {
    pub validation: u64,
    pub accepted: Vec<usize>,
    #[serde(default)]
    pub rejected: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub validation: u64,
    /// Id of the community formed, if anyone was accepted.
    pub community: Option<u64>,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
    pub edges_added: usize,
    pub decider: Decider,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionOutcome {
    pub community: u64,
    pub round: usize,
    pub queried: Vec<Vec<usize>>,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
    pub malformed: usize,
    pub edges_added: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Interaction,
    Expansion,
}

/// Accept/reject counts of one validation or expansion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookRow {
    pub phase: Phase,
    pub round: usize,
    pub community: u64,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub rounds_started: usize,
    /// Completed rounds with at least one human decision.
    pub interactions: usize,
    pub expansion_rounds: BTreeMap<u64, usize>,
    pub edges_injected: usize,
    pub llm_decisions: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingDecision,
    Idle,
    Converged,
    Finalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finalized {
    pub model_tag: String,
    pub reports: Vec<MetricsReport>,
    pub model_sha: String,
    pub inductive_holds: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub interactions: usize,
    pub expansions: usize,
}

#[derive(Clone, Copy, Debug)]
struct RoundProgress {
    open: usize,
    human: bool,
}

pub struct SessionState {
    config: SessionConfig,
    base_graph: HeteroGraph,
    base_model: RgcnModel,
    graph: HeteroGraph,
    model: RgcnModel,
    texts: TextStore,
    output: ForwardOutput,
    population: Vec<usize>,
    working: BTreeSet<usize>,
    rejected_pool: BTreeSet<usize>,
    communities: BTreeMap<u64, Community>,
    excluded: BTreeMap<u64, BTreeSet<usize>>,
    pending: BTreeMap<u64, PendingValidation>,
    decided: BTreeMap<u64, DecisionOutcome>,
    rounds: BTreeMap<usize, RoundProgress>,
    summaries: BTreeMap<usize, String>,
    counters: Counters,
    book: Vec<BookRow>,
    next_id: u64,
    events: Vec<Event>,
    log_path: Option<PathBuf>,
    finalized: Option<Finalized>,
    staged_model: Option<RgcnModel>,
}

/// Hash input: bookkeeping only, opinions left out.
#[derive(Serialize)]
struct HashView<'a> {
    population: &'a [usize],
    working: &'a BTreeSet<usize>,
    rejected_pool: &'a BTreeSet<usize>,
    communities: Vec<(u64, &'a BTreeSet<usize>, &'a str, &'a [Example], &'a [Example], usize)>,
    excluded: &'a BTreeMap<u64, BTreeSet<usize>>,
    pending: Vec<(u64, usize, &'a str, &'a [usize], &'a [UserSummary])>,
    decided: &'a BTreeMap<u64, DecisionOutcome>,
    summaries: &'a BTreeMap<usize, String>,
    counters: &'a Counters,
    book: &'a [BookRow],
    next_id: u64,
    finalized: Option<(&'a str, &'a str, &'a [MetricsReport])>,
}

fn mix(seed: u64, tag: u64, n: u64) -> u64 {
    let mut x = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ n.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 31;
    x.wrapping_mul(0x94D0_49BB_1331_11EB)
}

pub fn model_sha(model: &RgcnModel) -> String {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf).expect("writing to memory");
    hex::encode(Sha256::digest(&buf))
}

impl SessionState {
    /// Opens a session over a trained model. The graph must not carry
    /// injected community edges that the log does not explain.
    pub fn new(
        graph: HeteroGraph,
        model: RgcnModel,
        texts: TextStore,
        config: SessionConfig,
    ) -> Result<Self> {
        config.validate()?;
        let population: Vec<usize> = (0..graph.count(NodeKind::User))
            .filter(|&u| config.population.is_none() || graph.split(NodeId::user(u)) == config.population)
            .collect();
        let created = Event::Created {
            version: SESSION_VERSION,
            config,
            population,
        };
        let mut state = Self::from_created(graph, model, texts, &created)?;
        state.events.push(created);
        Ok(state)
    }

    fn from_created(
        graph: HeteroGraph,
        model: RgcnModel,
        texts: TextStore,
        created: &Event,
    ) -> Result<Self> {
        let Event::Created {
            version,
            config,
            population,
        } = created
        else {
            return Err(Error::Precondition("session log must start with `created`".into()));
        };
        if *version != SESSION_VERSION {
            return Err(Error::VersionMismatch {
                expected: SESSION_VERSION,
                found: *version,
            });
        }
        config.validate()?;
        let n_users = graph.count(NodeKind::User);
        if let Some(&bad) = population.iter().find(|&&u| u >= n_users) {
            return Err(Error::NotAUser(NodeId::user(bad)));
        }
        let output = forward(&graph, &model)?;
        Ok(SessionState {
            config: config.clone(),
            base_graph: graph.clone(),
            base_model: model.clone(),
            graph,
            model,
            texts,
            output,
            population: population.clone(),
            working: population.iter().copied().collect(),
            rejected_pool: BTreeSet::new(),
            communities: BTreeMap::new(),
            excluded: BTreeMap::new(),
            pending: BTreeMap::new(),
            decided: BTreeMap::new(),
            rounds: BTreeMap::new(),
            summaries: BTreeMap::new(),
            counters: Counters::default(),
            book: Vec::new(),
            next_id: 1,
            events: Vec::new(),
            log_path: None,
            finalized: None,
            staged_model: None,
        })
    }

    /// Rebuilds a session by folding `events` over the base graph and model.
    pub fn replay(
        graph: HeteroGraph,
        model: RgcnModel,
        texts: TextStore,
        events: Vec<Event>,
    ) -> Result<Self> {
        Self::replay_with(graph, model, texts, events, None)
    }

    fn replay_with(
        graph: HeteroGraph,
        model: RgcnModel,
        texts: TextStore,
        events: Vec<Event>,
        final_model: Option<RgcnModel>,
    ) -> Result<Self> {
        let mut iter = events.into_iter();
        let created = iter
            .next()
            .ok_or_else(|| Error::Precondition("empty session log".into()))?;
        let mut state = Self::from_created(graph, model, texts, &created)?;
        state.events.push(created);
        state.staged_model = final_model;
        for event in iter {
            state.apply(&event)?;
            state.events.push(event);
        }
        state.staged_model = None;
        Ok(state)
    }

    // ----- accessors -----

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn graph(&self) -> &HeteroGraph {
        &self.graph
    }

    pub fn base_graph(&self) -> &HeteroGraph {
        &self.base_graph
    }

    pub fn model(&self) -> &RgcnModel {
        &self.model
    }

    pub fn base_model(&self) -> &RgcnModel {
        &self.base_model
    }

    pub fn texts(&self) -> &TextStore {
        &self.texts
    }

    pub fn output(&self) -> &ForwardOutput {
        &self.output
    }

    pub fn population(&self) -> &[usize] {
        &self.population
    }

    pub fn working(&self) -> &BTreeSet<usize> {
        &self.working
    }

    pub fn rejected_pool(&self) -> &BTreeSet<usize> {
        &self.rejected_pool
    }

    pub fn communities(&self) -> impl Iterator<Item = &Community> {
        self.communities.values()
    }

    pub fn community(&self, id: u64) -> Option<&Community> {
        self.communities.get(&id)
    }

    pub fn community_members(&self) -> Vec<Vec<usize>> {
        self.communities.values().map(Community::members_vec).collect()
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingValidation> {
        self.pending.values()
    }

    pub fn decided(&self, validation: u64) -> Option<&DecisionOutcome> {
        self.decided.get(&validation)
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn bookkeeping(&self) -> &[BookRow] {
        &self.book
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn summary(&self, user: usize) -> Option<&str> {
        self.summaries.get(&user).map(String::as_str)
    }

    pub fn finalized(&self) -> Option<&Finalized> {
        self.finalized.as_ref()
    }

    pub fn status(&self) -> SessionStatus {
        if self.finalized.is_some() {
            SessionStatus::Finalized
        } else if !self.pending.is_empty() {
            SessionStatus::AwaitingDecision
        } else if self.working.is_empty() {
            SessionStatus::Converged
        } else {
            SessionStatus::Idle
        }
    }

    /// Users accepted into any community.
    pub fn accepted_users(&self) -> BTreeSet<usize> {
        self.communities.values().flat_map(|c| c.members.iter().copied()).collect()
    }

    /// SHA-256 over the bookkeeping state. Opinion texts do not contribute.
    pub fn state_hash(&self) -> String {
        let view = HashView {
            population: &self.population,
            working: &self.working,
            rejected_pool: &self.rejected_pool,
            communities: self
                .communities
                .values()
                .map(|c| {
                    (
                        c.id,
                        &c.members,
                        c.anchor.as_str(),
                        c.accepted.as_slice(),
                        c.rejected.as_slice(),
                        c.created_round,
                    )
                })
                .collect(),
            excluded: &self.excluded,
            pending: self
                .pending
                .values()
                .map(|p| {
                    (
                        p.id,
                        p.round,
                        p.anchor.as_str(),
                        p.candidates.as_slice(),
                        p.summaries.as_slice(),
                    )
                })
                .collect(),
            decided: &self.decided,
            summaries: &self.summaries,
            counters: &self.counters,
            book: &self.book,
            next_id: self.next_id,
            finalized: self
                .finalized
                .as_ref()
                .map(|f| (f.model_tag.as_str(), f.model_sha.as_str(), f.reports.as_slice())),
        };
        let json = serde_json::to_vec(&view).expect("serialisable view");
        hex::encode(Sha256::digest(&json))
    }

    /// Checks conservation, disjointness and edge accounting.
    pub fn check_invariants(&self) -> Result<()> {
        let accepted = self.accepted_users();
        let total: usize = self.communities.values().map(Community::len).sum();
        if total != accepted.len() {
            return Err(Error::Precondition("a user belongs to two communities".into()));
        }
        let overlap = |a: &BTreeSet<usize>, b: &BTreeSet<usize>| a.intersection(b).next().is_some();
        if overlap(&self.working, &accepted)
            || overlap(&self.working, &self.rejected_pool)
            || overlap(&accepted, &self.rejected_pool)
        {
            return Err(Error::Precondition("working, accepted and rejected sets overlap".into()));
        }
        if self.working.len() + accepted.len() + self.rejected_pool.len() != self.population.len() {
            return Err(Error::Precondition("user conservation violated".into()));
        }
        let base = self.base_graph.edge_count(crate::graph::Relation::SameCommunity);
        let now = self.graph.edge_count(crate::graph::Relation::SameCommunity);
        if now - base != self.counters.edges_injected {
            return Err(Error::Precondition("injected edge count does not match the graph".into()));
        }
        let mut check = self.base_graph.clone();
        let mut recount = 0;
        for c in self.communities.values() {
            let ids: Vec<NodeId> = c.members.iter().map(|&u| NodeId::user(u)).collect();
            recount += check.inject_community_edges(&ids)?;
        }
        if recount != self.counters.edges_injected {
            return Err(Error::Precondition("edge recount differs from the counter".into()));
        }
        Ok(())
    }

    /// Per-round accept/reject counts as a tab-separated table.
    pub fn render_bookkeeping(&self) -> String {
        let mut out = String::from("phase\tround\tcommunity\taccepted\trejected\n");
        for r in &self.book {
            let phase = match r.phase {
                Phase::Interaction => "interaction",
                Phase::Expansion => "expansion",
            };
            let _ = writeln!(
                out,
                "{phase}\t{}\t{}\t{}\t{}",
                r.round, r.community, r.accepted, r.rejected
            );
        }
        out
    }

    // ----- event log -----

    fn commit(&mut self, event: Event) -> Result<()> {
        if let Some(path) = &self.log_path {
            let mut f = OpenOptions::new()
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            write_event(&mut f, self.events.len(), &event)?;
            f.sync_data().map_err(|e| Error::io(path, e))?;
        }
        self.apply(&event)?;
        self.events.push(event);
        if let Some(dir) = self.log_path.as_ref().and_then(|p| p.parent()) {
            persist::write_exports(self, dir)?;
        }
        Ok(())
    }

    fn refresh(&mut self) -> Result<()> {
        self.output = forward(&self.graph, &self.model)?;
        for c in self.communities.values_mut() {
            c.refresh_centroid(&self.output.embeddings);
        }
        Ok(())
    }

    fn inject(&mut self, members: &BTreeSet<usize>) -> Result<usize> {
        let ids: Vec<NodeId> = members.iter().map(|&u| NodeId::user(u)).collect();
        self.graph.inject_community_edges(&ids)
    }

    fn apply(&mut self, event: &Event) -> Result<()> {
        if self.finalized.is_some() {
            return Err(Error::Precondition("session already finalized".into()));
        }
        match event {
            Event::Created { .. } => {
                return Err(Error::Precondition("duplicate `created` event".into()));
            }
            Event::RoundStarted { round, pending, .. } => {
                if !self.pending.is_empty() {
                    return Err(Error::Precondition("round started with decisions pending".into()));
                }
                let mut seen = BTreeSet::new();
                for p in pending {
                    if p.id < self.next_id || !seen.insert(p.id) {
                        return Err(Error::Precondition(format!("stale validation id {}", p.id)));
                    }
                    for &u in &p.candidates {
                        if !self.working.contains(&u) && !self.rejected_pool.contains(&u) {
                            return Err(Error::Precondition(format!("user {u} is not available")));
                        }
                    }
                }
                for p in pending {
                    for s in &p.summaries {
                        self.summaries.insert(s.user, s.text.clone());
                    }
                    self.next_id = self.next_id.max(p.id + 1);
                    self.pending.insert(p.id, p.clone());
                }
                self.counters.rounds_started += 1;
                if !pending.is_empty() {
                    self.rounds.insert(
                        *round,
                        RoundProgress {
                            open: pending.len(),
                            human: false,
                        },
                    );
                }
            }
            Event::DecisionApplied { decision, decider } => {
                let p = self
                    .pending
                    .remove(&decision.validation)
                    .ok_or(Error::UnknownValidation(decision.validation))?;
                let accepted: BTreeSet<usize> = decision.accepted.iter().copied().collect();
                let rejected: BTreeSet<usize> = decision.rejected.iter().copied().collect();
                let mut edges_added = 0;
                let community = if accepted.is_empty() {
                    None
                } else {
                    let example = |u: &usize| Example {
                        user: *u,
                        summary: self.summaries.get(u).cloned().unwrap_or_default(),
                    };
                    let c = Community {
                        id: p.id,
                        status: CommunityStatus::Validated,
                        members: accepted.clone(),
                        centroid: Vec::new(),
                        anchor: p.anchor.clone(),
                        accepted: accepted.iter().map(example).collect(),
                        rejected: rejected.iter().map(example).collect(),
                        created_round: p.round,
                    };
                    self.communities.insert(p.id, c);
                    edges_added = self.inject(&accepted)?;
                    Some(p.id)
                };
                for u in &accepted {
                    self.working.remove(u);
                    self.rejected_pool.remove(u);
                }
                for &u in &rejected {
                    self.working.remove(&u);
                    self.rejected_pool.insert(u);
                }
                self.counters.edges_injected += edges_added;
                if *decider == Decider::Llm {
                    self.counters.llm_decisions += 1;
                }
                if let Some(r) = self.rounds.get_mut(&p.round) {
                    r.open -= 1;
                    r.human |= *decider == Decider::Human;
                    if r.open == 0 && r.human {
                        self.counters.interactions += 1;
                    }
                }
                self.book.push(BookRow {
                    phase: Phase::Interaction,
                    round: p.round,
                    community: p.id,
                    accepted: accepted.len(),
                    rejected: rejected.len(),
                });
                self.decided.insert(
                    p.id,
                    DecisionOutcome {
                        validation: p.id,
                        community,
                        accepted: accepted.into_iter().collect(),
                        rejected: rejected.into_iter().collect(),
                        edges_added,
                        decider: *decider,
                    },
                );
                self.refresh()?;
            }
            Event::Expanded {
                community,
                summaries,
                accepted,
                rejected,
                ..
            } => {
                if !self.communities.contains_key(community) {
                    return Err(Error::UnknownCommunity(*community));
                }
                for &u in accepted.iter().chain(rejected) {
                    if !self.working.contains(&u) {
                        return Err(Error::Precondition(format!("user {u} is not in the working set")));
                    }
                }
                for s in summaries {
                    self.summaries.insert(s.user, s.text.clone());
                }
                let members = {
                    let c = self.communities.get_mut(community).expect("checked");
                    c.members.extend(accepted.iter().copied());
                    c.members.clone()
                };
                let edges_added = self.inject(&members)?;
                for u in accepted {
                    self.working.remove(u);
                }
                let excluded = self.excluded.entry(*community).or_default();
                for &u in rejected {
                    self.working.remove(&u);
                    self.rejected_pool.insert(u);
                    excluded.insert(u);
                }
                self.counters.edges_injected += edges_added;
                let round = {
                    let n = self.counters.expansion_rounds.entry(*community).or_default();
                    *n += 1;
                    *n
                };
                self.book.push(BookRow {
                    phase: Phase::Expansion,
                    round,
                    community: *community,
                    accepted: accepted.len(),
                    rejected: rejected.len(),
                });
                self.refresh()?;
            }
            Event::Finalized {
                model_tag,
                reports,
                model_sha: sha,
                inductive_holds,
            } => {
                let model = match self.staged_model.take() {
                    Some(m) if model_sha(&m) == *sha => m,
                    _ => self.fine_tuned_model()?,
                };
                let got = model_sha(&model);
                if got != *sha {
                    return Err(Error::Precondition(format!(
                        "fine-tuned model hash {got} does not match the log ({sha})"
                    )));
                }
                self.model = model;
                self.output = forward(&self.graph, &self.model)?;
                self.finalized = Some(Finalized {
                    model_tag: model_tag.clone(),
                    reports: reports.clone(),
                    model_sha: sha.clone(),
                    inductive_holds: *inductive_holds,
                });
            }
        }
        Ok(())
    }

    // ----- operations -----

    fn ensure_open(&self) -> Result<()> {
        if self.finalized.is_some() {
            return Err(Error::Precondition("session already finalized".into()));
        }
        Ok(())
    }

    fn summarize(
        &self,
        users: &[usize],
        anchor: &str,
        backend: &dyn LlmBackend,
        warnings: &mut Vec<String>,
    ) -> BTreeMap<usize, String> {
        let mut out = BTreeMap::new();
        let missing: Vec<usize> = users
            .iter()
            .copied()
            .filter(|u| {
                if let Some(s) = self.summaries.get(u) {
                    out.insert(*u, s.clone());
                    false
                } else {
                    true
                }
            })
            .collect();
        let profiles: Vec<_> = missing
            .iter()
            .map(|&u| self.texts.profile_for(u, anchor, self.config.max_tweets))
            .collect();
        for r in summarize_batch(&profiles, backend, self.config.parallelism) {
            match r {
                Ok(s) => {
                    out.insert(s.user, s.text);
                }
                Err(e) => {
                    log::warn!("{e}");
                    warnings.push(e.to_string());
                }
            }
        }
        out
    }

    /// Derived user labels from the model's current source predictions.
    fn predicted_user_labels(&self) -> Vec<crate::community::UserDerivedLabel> {
        let logits = &self.output.logits[self.config.task as usize];
        let classes: Vec<Option<usize>> = logits.rows().into_iter().map(|r| Some(argmax(r))).collect();
        derive_user_labels(&self.graph, &classes)
    }

    /// Clusters the available users, picks the purest clusters, narrows them
    /// to an anchor entity and prepares them for validation. Returns an empty
    /// list when no user is left.
    pub fn start_round(&mut self, backend: &dyn LlmBackend) -> Result<Vec<PendingValidation>> {
        self.ensure_open()?;
        if !self.pending.is_empty() {
            return Err(Error::Precondition("decide the pending validations first".into()));
        }
        let pool: Vec<usize> = self.working.union(&self.rejected_pool).copied().collect();
        if pool.is_empty() {
            return Ok(Vec::new());
        }
        let round = self.counters.rounds_started + 1;
        let mut warnings = Vec::new();
        let k = self.config.k.min(pool.len());
        if pool.len() < 2 {
            warnings.push(format!("only {} user available", pool.len()));
        }
        let points = self.output.embeddings.users(&pool);
        let km = kmeans(points.view(), k, mix(self.config.seed, 1, round as u64))?;
        let clusters: Vec<Vec<usize>> = km
            .clusters()
            .into_iter()
            .map(|c| c.into_iter().map(|i| pool[i]).collect())
            .collect();
        let labels = self.predicted_user_labels();
        let min_size = self.config.min_cluster_size.min(pool.len());
        let top = select_top_clusters(&clusters, &labels, self.config.communities_per_round, min_size);
        if top.short {
            warnings.push(format!(
                "only {} eligible cluster(s) for {} requested",
                top.chosen.len(),
                self.config.communities_per_round
            ));
        }
        let extractor = extractor_by_name(&self.config.extractor).expect("validated");
        let mut pending = Vec::new();
        for (&ci, &purity) in top.chosen.iter().zip(&top.purities) {
            let filter =
                filter_cluster_by_entity(&clusters[ci], &self.graph, &self.texts.articles, extractor.as_ref());
            if filter.no_entities {
                warnings.push(format!("cluster {ci}: no entity found, kept unfiltered"));
            }
            let summaries = self.summarize(&filter.kept, &filter.anchor, backend, &mut warnings);
            let summaries: Vec<UserSummary> = filter
                .kept
                .iter()
                .filter_map(|u| summaries.get(u).map(|t| UserSummary { user: *u, text: t.clone() }))
                .collect();
            if summaries.is_empty() {
                warnings.push(format!("cluster {ci}: no user could be summarised"));
                continue;
            }
            let opinion = if summaries.len() >= 2 {
                get_opinion(&summaries, backend)
            } else {
                Opinion {
                    text: String::new(),
                    warning: Some("a single user needs no opinion".into()),
                }
            };
            pending.push(PendingValidation {
                id: self.next_id + pending.len() as u64,
                round,
                purity,
                anchor: filter.anchor,
                candidates: summaries.iter().map(|s| s.user).collect(),
                summaries,
                opinion,
            });
        }
        for w in &warnings {
            log::warn!("round {round}: {w}");
        }
        self.commit(Event::RoundStarted {
            round,
            pending: pending.clone(),
            warnings,
        })?;
        Ok(pending)
    }

    /// Applies a validation decision. Users left undecided are rejected.
    /// Resubmitting the same decision returns the original outcome.
    pub fn apply_decision(&mut self, d: &HumanDecision, decider: Decider) -> Result<DecisionOutcome> {
        let accepted: BTreeSet<usize> = d.accepted.iter().copied().collect();
        if let Some(done) = self.decided.get(&d.validation) {
            let explicit: BTreeSet<usize> = d.rejected.iter().copied().collect();
            let same = done.accepted.iter().copied().collect::<BTreeSet<_>>() == accepted
                && explicit.iter().all(|u| done.rejected.contains(u));
            return if same { Ok(done.clone()) } else { Err(Error::Conflict(d.validation)) };
        }
        self.ensure_open()?;
        let p = self
            .pending
            .get(&d.validation)
            .ok_or(Error::UnknownValidation(d.validation))?;
        let presented: BTreeSet<usize> = p.candidates.iter().copied().collect();
        for &u in d.accepted.iter().chain(&d.rejected) {
            if !presented.contains(&u) {
                return Err(Error::InvalidArgument(format!(
                    "user {u} was not presented in validation {}",
                    d.validation
                )));
            }
        }
        if d.rejected.iter().any(|u| accepted.contains(u)) {
            return Err(Error::InvalidArgument("a user is both accepted and rejected".into()));
        }
        let normalized = HumanDecision {
            validation: d.validation,
            accepted: accepted.iter().copied().collect(),
            rejected: presented.difference(&accepted).copied().collect(),
        };
        self.commit(Event::DecisionApplied {
            decision: normalized,
            decider,
        })?;
        Ok(self.decided[&d.validation].clone())
    }

    /// Grows a validated community: centroid-nearest candidates from each
    /// cluster of the working set are judged by the LLM with a one-shot
    /// prompt built from the human decision.
    pub fn expand_round(&mut self, community: u64, backend: &dyn LlmBackend) -> Result<ExpansionOutcome> {
        self.ensure_open()?;
        let c = self
            .communities
            .get(&community)
            .ok_or(Error::UnknownCommunity(community))?
            .clone();
        let negatives: Vec<Example> = if !c.rejected.is_empty() {
            c.rejected.clone()
        } else {
            self.communities
                .values()
                .filter(|o| o.id != community)
                .flat_map(|o| o.accepted.iter().cloned())
                .take(self.config.max_borrowed_negatives)
                .collect()
        };
        if c.accepted.is_empty() || negatives.is_empty() {
            return Err(Error::Precondition(format!(
                "community {community} has no negative example to prompt with"
            )));
        }
        let round = self.counters.expansion_rounds.get(&community).copied().unwrap_or(0) + 1;
        let in_pending: BTreeSet<usize> =
            self.pending.values().flat_map(|p| p.candidates.iter().copied()).collect();
        let excluded = self.excluded.get(&community).cloned().unwrap_or_default();
        let pool: Vec<usize> = self
            .working
            .iter()
            .copied()
            .filter(|u| !in_pending.contains(u) && !excluded.contains(u))
            .collect();
        let mut warnings = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        if pool.is_empty() {
            warnings.push("no candidates left".into());
        } else {
            let k = self.config.k.min(pool.len());
            let points = self.output.embeddings.users(&pool);
            let km = kmeans(points.view(), k, mix(self.config.seed, 2 + community, round as u64))?;
            let centroid = ndarray::ArrayView1::from(&c.centroid);
            for cluster in km.clusters() {
                let users: Vec<usize> = cluster.into_iter().map(|i| pool[i]).collect();
                if users.is_empty() {
                    continue;
                }
                let near = knn_to_community(&users, &self.output.embeddings, centroid, self.config.m);
                groups.push(near.into_iter().map(|(u, _)| u).collect());
            }
        }
        let all: Vec<usize> = groups.iter().flatten().copied().collect();
        let summaries = self.summarize(&all, &c.anchor, backend, &mut warnings);
        let new_summaries: Vec<UserSummary> = summaries
            .iter()
            .filter(|(u, _)| !self.summaries.contains_key(u))
            .map(|(&user, text)| UserSummary { user, text: text.clone() })
            .collect();
        let mut queried = Vec::new();
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        let mut malformed = 0;
        for group in groups {
            let q: Vec<UserSummary> = group
                .iter()
                .filter_map(|u| summaries.get(u).map(|t| UserSummary { user: *u, text: t.clone() }))
                .collect();
            if q.is_empty() {
                continue;
            }
            let ids: Vec<usize> = q.iter().map(|s| s.user).collect();
            let prompt = build_membership_prompt(&c.accepted, &negatives, &q)?;
            match backend.complete(&prompt) {
                Ok(raw) => {
                    let v = parse_membership_response(&raw, &ids);
                    if v.malformed {
                        malformed += 1;
                        warnings.push(format!("malformed membership response: {}", raw.trim()));
                    }
                    accepted.extend(v.accepted);
                    rejected.extend(v.rejected);
                }
                Err(e) => warnings.push(e.to_string()),
            }
            queried.push(ids);
        }
        for w in &warnings {
            log::warn!("expansion of {community}: {w}");
        }
        let before = self.counters.edges_injected;
        self.commit(Event::Expanded {
            community,
            queried: queried.clone(),
            summaries: new_summaries,
            accepted: accepted.clone(),
            rejected: rejected.clone(),
            malformed,
            warnings: warnings.clone(),
        })?;
        Ok(ExpansionOutcome {
            community,
            round,
            queried,
            accepted,
            rejected,
            malformed,
            edges_added: self.counters.edges_injected - before,
            warnings,
        })
    }

    fn fine_tuned_model(&self) -> Result<RgcnModel> {
        let mut model = self.base_model.clone();
        let communities = self.community_members();
        if !communities.is_empty() {
            let mut cfg = self.config.fine_tune.clone();
            cfg.seed = mix(self.config.seed, 3, cfg.seed);
            train_link_prediction(&self.graph, &mut model, &communities, &cfg)?;
        }
        Ok(model)
    }

    /// Sources directly followed by community members.
    pub fn connected_sources(&self) -> usize {
        self.accepted_users()
            .iter()
            .flat_map(|&u| self.graph.followed_sources(u))
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Fine-tunes on the interacted sub-graph and evaluates both tasks on the
    /// Test split. Calling it again returns the stored reports.
    pub fn finalize(&mut self, model_tag: &str) -> Result<Vec<MetricsReport>> {
        if let Some(f) = &self.finalized {
            return Ok(f.reports.clone());
        }
        if !self.pending.is_empty() {
            return Err(Error::Precondition("decide the pending validations first".into()));
        }
        let model = self.fine_tuned_model()?;
        let mut reports = evaluate_split(&self.graph, &model, Split::Test, model_tag, self.config.seed)?;
        let users = self.accepted_users().len();
        let sources = self.connected_sources();
        for r in &mut reports {
            r.users = users;
            r.sources = sources;
            r.edges = self.counters.edges_injected;
            r.interactions = self.counters.interactions;
        }
        let inductive_holds = self.graph.verify_inductive_split()?.holds;
        if !inductive_holds {
            log::warn!("community edges cross the inductive split");
        }
        let sha = model_sha(&model);
        self.staged_model = Some(model);
        self.commit(Event::Finalized {
            model_tag: model_tag.to_string(),
            reports: reports.clone(),
            model_sha: sha,
            inductive_holds,
        })?;
        Ok(reports)
    }

    /// The report row of the session task, once finalized.
    pub fn task_report(&self) -> Option<&MetricsReport> {
        let task = self.config.task;
        self.finalized.as_ref()?.reports.iter().find(|r| r.task == task)
    }
}

/// Runs the schedule: each interaction starts a round, lets `interactor`
/// decide every pending validation, then expands every community
/// `schedule.expansions` times. Finishes with fine-tuning and evaluation.
pub fn run_protocol(
    state: &mut SessionState,
    schedule: Schedule,
    interactor: &mut dyn Interactor,
    backend: &dyn LlmBackend,
    model_tag: &str,
) -> Result<Vec<MetricsReport>> {
    for _ in 0..schedule.interactions {
        let pending = state.start_round(backend)?;
        if pending.is_empty() {
            log::info!("no users left; stopping early");
            break;
        }
        for p in &pending {
            let d = interactor.decide(state, p)?;
            state.apply_decision(&d, interactor.decider())?;
        }
        for _ in 0..schedule.expansions {
            let ids: Vec<u64> = state.communities.keys().copied().collect();
            for id in ids {
                match state.expand_round(id, backend) {
                    Ok(_) => {}
                    Err(Error::Precondition(msg)) => log::warn!("skipping expansion: {msg}"),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    state.finalize(model_tag)
}
