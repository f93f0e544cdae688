use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{evaluate_split, MetricsReport, SweepSummary};
use crate::community::{derive_user_labels, kmeans, knn_to_community, select_top_clusters};
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeId, NodeKind, Split, Task};
use crate::ingest::TextStore;
use crate::llm::LlmBackend;
use crate::rgcn::{argmax, forward, train_link_prediction, RgcnModel};
use crate::session::{run_protocol, Interactor, LlmInteractor, Schedule, SessionConfig, SessionState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphOnlyConfig {
    pub k: usize,
    /// Users kept per selected cluster, nearest to its centroid.
    pub m: usize,
    /// Clusters turned into communities.
    pub communities: usize,
}

impl Default for GraphOnlyConfig {
    fn default() -> Self {
        GraphOnlyConfig {
            k: 35,
            m: SessionConfig::default().m,
            communities: SessionConfig::default().communities_per_round,
        }
    }
}

/// Outcome of a non-interactive run.
#[derive(Clone, Debug)]
pub struct BaselineRun {
    pub reports: Vec<MetricsReport>,
    pub communities: Vec<Vec<usize>>,
    pub model: RgcnModel,
    pub graph: HeteroGraph,
    /// Completions requested from the LLM backend during the run.
    pub llm_calls: usize,
    /// Decisions taken by the interactor during the run.
    pub interactor_calls: usize,
}

impl BaselineRun {
    pub fn report(&self, task: Task) -> &MetricsReport {
        self.reports.iter().find(|r| r.task == task).expect("both tasks reported")
    }
}

fn population(g: &HeteroGraph, split: Option<Split>) -> Vec<usize> {
    (0..g.count(NodeKind::User))
        .filter(|&u| split.is_none() || g.split(NodeId::user(u)) == split)
        .collect()
}

/// Communities straight from the embeddings: k-means, the purest clusters
/// by predicted labels, and the `m` members nearest each centroid. Nothing
/// is shown to a human or an LLM.
pub fn run_graph_only_baseline(
    g: &HeteroGraph,
    model: &RgcnModel,
    session: &SessionConfig,
    cfg: &GraphOnlyConfig,
    model_tag: &str,
) -> Result<BaselineRun> {
    session.validate()?;
    if cfg.k == 0 || cfg.m == 0 || cfg.communities == 0 {
        return Err(Error::InvalidArgument("k, m and communities must be positive".into()));
    }
    let pool = population(g, session.population);
    if pool.is_empty() {
        return Err(Error::Precondition("no users in the population".into()));
    }
    let out = forward(g, model)?;
    let classes: Vec<Option<usize>> = out.logits[session.task as usize]
        .rows()
        .into_iter()
        .map(|r| Some(argmax(r)))
        .collect();
    let labels = derive_user_labels(g, &classes);
    let points = out.embeddings.users(&pool);
    let km = kmeans(points.view(), cfg.k.min(pool.len()), session.seed)?;
    let clusters: Vec<Vec<usize>> = km
        .clusters()
        .into_iter()
        .map(|c| c.into_iter().map(|i| pool[i]).collect())
        .collect();
    let min_size = session.min_cluster_size.min(pool.len());
    let top = select_top_clusters(&clusters, &labels, cfg.communities, min_size);
    if top.short {
        log::warn!("graph only: {} eligible cluster(s) for {}", top.chosen.len(), cfg.communities);
    }
    let communities: Vec<Vec<usize>> = top
        .chosen
        .iter()
        .map(|&ci| {
            let mut members: Vec<usize> =
                knn_to_community(&clusters[ci], &out.embeddings, km.centroids.row(ci), cfg.m)
                    .into_iter()
                    .map(|(u, _)| u)
                    .collect();
            members.sort_unstable();
            members
        })
        .collect();

    let mut graph = g.clone();
    let mut edges = 0;
    for c in &communities {
        let ids: Vec<NodeId> = c.iter().map(|&u| NodeId::user(u)).collect();
        edges += graph.inject_community_edges(&ids)?;
    }
    let mut tuned = model.clone();
    if !communities.is_empty() {
        let mut ft = session.fine_tune.clone();
        ft.seed ^= session.seed;
        train_link_prediction(&graph, &mut tuned, &communities, &ft)?;
    }
    let mut reports = evaluate_split(&graph, &tuned, Split::Test, model_tag, session.seed)?;
    let users: BTreeSet<usize> = communities.iter().flatten().copied().collect();
    let sources: BTreeSet<usize> = users.iter().flat_map(|&u| graph.followed_sources(u)).collect();
    for r in &mut reports {
        r.users = users.len();
        r.sources = sources.len();
        r.edges = edges;
        r.interactions = 0;
    }
    Ok(BaselineRun {
        reports,
        communities,
        model: tuned,
        graph,
        llm_calls: 0,
        interactor_calls: 0,
    })
}

/// The interactive protocol with the LLM's grouping taken as the decision.
pub fn run_llm_only_baseline(
    g: &HeteroGraph,
    model: &RgcnModel,
    texts: &TextStore,
    session: &SessionConfig,
    backend: &dyn LlmBackend,
    schedule: Schedule,
    model_tag: &str,
) -> Result<BaselineRun> {
    let before = backend.calls();
    let mut state = SessionState::new(g.clone(), model.clone(), texts.clone(), session.clone())?;
    let mut interactor = LlmInteractor::new(backend);
    let reports = run_protocol(&mut state, schedule, &mut interactor, backend, model_tag)?;
    debug_assert_eq!(state.counters().interactions, 0);
    Ok(BaselineRun {
        reports,
        communities: state.community_members(),
        model: state.model().clone(),
        graph: state.graph().clone(),
        llm_calls: backend.calls() - before,
        interactor_calls: interactor.calls(),
    })
}

/// Median and quartiles of one configuration over a seed sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model_tag: String,
    pub task: Task,
    pub runs: usize,
    pub accuracy: SweepSummary,
    pub macro_f1: SweepSummary,
}

/// Groups reports by (model tag, task), keeping first-seen order.
pub fn summarize_sweep(reports: &[MetricsReport]) -> Vec<SweepRow> {
    let mut keys: Vec<(String, Task)> = Vec::new();
    for r in reports {
        let key = (r.model_tag.clone(), r.task);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(tag, task)| {
            let rows: Vec<&MetricsReport> =
                reports.iter().filter(|r| r.model_tag == tag && r.task == task).collect();
            let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
            let f1: Vec<f64> = rows.iter().map(|r| r.macro_f1).collect();
            SweepRow {
                model_tag: tag,
                task,
                runs: rows.len(),
                accuracy: SweepSummary::of(&acc),
                macro_f1: SweepSummary::of(&f1),
            }
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "model\ttask\truns\tacc_median\tacc_iqr\tf1_median\tf1_iqr";

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.model_tag,
            r.task,
            r.runs,
            r.accuracy.median,
            r.accuracy.iqr(),
            r.macro_f1.median,
            r.macro_f1.iqr()
        );
    }
    out
}
