//! Heterogeneous social graph: news sources, the articles they publish and the
//! users who follow and propagate them.
//!
//! Nodes are addressed per kind with dense indices. The model works on a
//! single global numbering where sources come first, then articles, then users.

mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_graph, read_graph, save_graph, write_graph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Article,
    User,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Source, NodeKind::Article, NodeKind::User];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Source => "source",
            NodeKind::Article => "article",
            NodeKind::User => "user",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" => Ok(NodeKind::Source),
            "article" => Ok(NodeKind::Article),
            "user" => Ok(NodeKind::User),
            other => Err(format!("unknown node kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeId {
    pub fn new(kind: NodeKind, index: usize) -> Self {
        NodeId { kind, index }
    }

    pub fn source(index: usize) -> Self {
        NodeId::new(NodeKind::Source, index)
    }

    pub fn article(index: usize) -> Self {
        NodeId::new(NodeKind::Article, index)
    }

    pub fn user(index: usize) -> Self {
        NodeId::new(NodeKind::User, index)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.index)
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, index) = s
            .split_once(':')
            .ok_or_else(|| format!("expected <kind>:<index>, got `{s}`"))?;
        let index = index
            .parse()
            .map_err(|_| format!("bad node index in `{s}`"))?;
        Ok(NodeId::new(kind.parse()?, index))
    }
}

/// Typed edge relation. Each stored edge is directed as given by its signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Publishes,
    FollowsSource,
    FollowsUser,
    Propagates,
    SameCommunity,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::Publishes,
        Relation::FollowsSource,
        Relation::FollowsUser,
        Relation::Propagates,
        Relation::SameCommunity,
    ];

    /// (source kind, destination kind)
    pub fn signature(self) -> (NodeKind, NodeKind) {
        match self {
            Relation::Publishes => (NodeKind::Source, NodeKind::Article),
            Relation::FollowsSource => (NodeKind::User, NodeKind::Source),
            Relation::FollowsUser => (NodeKind::User, NodeKind::User),
            Relation::Propagates => (NodeKind::User, NodeKind::Article),
            Relation::SameCommunity => (NodeKind::User, NodeKind::User),
        }
    }

    /// Symmetric relations store each unordered pair once, smaller index first.
    pub fn is_symmetric(self) -> bool {
        matches!(self, Relation::SameCommunity)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Publishes => "publishes",
            Relation::FollowsSource => "follows_source",
            Relation::FollowsUser => "follows_user",
            Relation::Propagates => "propagates",
            Relation::SameCommunity => "same_community",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown relation `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// One of the two profiling tasks. Both use a 3-point scale, so a label is a
/// class index in `0..3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Factuality,
    Bias,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Factuality, Task::Bias];
    pub const NUM_CLASSES: usize = 3;

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Factuality => "factuality",
            Task::Bias => "bias",
        }
    }

    pub fn class_name(self, class: usize) -> &'static str {
        match (self, class) {
            (Task::Factuality, 0) => "low",
            (Task::Factuality, 1) => "mixed",
            (Task::Factuality, 2) => "high",
            (Task::Bias, 0) => "left",
            (Task::Bias, 1) => "center",
            (Task::Bias, 2) => "right",
            _ => "unknown",
        }
    }

    pub fn parse_class(self, s: &str) -> Option<usize> {
        (0..Self::NUM_CLASSES).find(|&c| self.class_name(c) == s.to_ascii_lowercase())
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "factuality" => Ok(Task::Factuality),
            "bias" => Ok(Task::Bias),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factuality {
    Low,
    Mixed,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bias {
    Left,
    Center,
    Right,
}

impl Factuality {
    pub fn from_class(class: usize) -> Option<Self> {
        [Factuality::Low, Factuality::Mixed, Factuality::High]
            .get(class)
            .copied()
    }
}

impl Bias {
    pub fn from_class(class: usize) -> Option<Self> {
        [Bias::Left, Bias::Center, Bias::Right].get(class).copied()
    }
}

/// Gold labels of a news source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceLabels {
    pub factuality: Factuality,
    pub bias: Bias,
}

impl SourceLabels {
    pub fn new(factuality: Factuality, bias: Bias) -> Self {
        SourceLabels { factuality, bias }
    }

    pub fn from_classes(factuality: usize, bias: usize) -> Option<Self> {
        Some(SourceLabels {
            factuality: Factuality::from_class(factuality)?,
            bias: Bias::from_class(bias)?,
        })
    }

    pub fn class(&self, task: Task) -> usize {
        match task {
            Task::Factuality => self.factuality as usize,
            Task::Bias => self.bias as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub split: Option<Split>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: NodeId,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub relation: Relation,
    pub src: NodeId,
    pub dst: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub source: usize,
    pub labels: SourceLabels,
}

/// Flat ingestion records for [`build_graph`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphRecords {
    pub nodes: Vec<NodeRecord>,
    pub features: Vec<FeatureRecord>,
    pub edges: Vec<EdgeRecord>,
    pub labels: Vec<LabelRecord>,
}

/// An edge whose endpoints sit on opposite sides of the inductive boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitViolation {
    pub relation: Relation,
    pub src: NodeId,
    pub dst: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InductiveCheck {
    pub holds: bool,
    pub violations: Vec<SplitViolation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    counts: [usize; 3],
    feature_dim: usize,
    /// Global node order: sources, articles, users.
    features: Array2<f64>,
    splits: Vec<Option<Split>>,
    edges: [BTreeSet<(usize, usize)>; 5],
    labels: BTreeMap<usize, SourceLabels>,
}

impl Default for HeteroGraph {
    fn default() -> Self {
        HeteroGraph {
            counts: [0; 3],
            feature_dim: 0,
            features: Array2::zeros((0, 0)),
            splits: Vec::new(),
            edges: Default::default(),
            labels: BTreeMap::new(),
        }
    }
}

/// Builds a graph from ingestion records, collapsing duplicate edges and
/// dropping self-loops.
pub fn build_graph(records: &GraphRecords) -> Result<HeteroGraph> {
    let mut declared: [BTreeMap<usize, Option<Split>>; 3] = Default::default();
    for rec in &records.nodes {
        if declared[rec.id.kind.slot()]
            .insert(rec.id.index, rec.split)
            .is_some()
        {
            return Err(Error::DuplicateNode(rec.id));
        }
    }
    let mut counts = [0usize; 3];
    for kind in NodeKind::ALL {
        let map = &declared[kind.slot()];
        for (expected, &index) in map.keys().enumerate() {
            if index != expected {
                return Err(Error::SparseIndices {
                    kind: kind.to_string(),
                    missing: expected,
                });
            }
        }
        counts[kind.slot()] = map.len();
    }

    let total: usize = counts.iter().sum();
    let feature_dim = records.features.first().map_or(0, |f| f.values.len());
    let mut graph = HeteroGraph {
        counts,
        feature_dim,
        features: Array2::zeros((total, feature_dim)),
        splits: vec![None; total],
        edges: Default::default(),
        labels: BTreeMap::new(),
    };
    for kind in NodeKind::ALL {
        for (&index, &split) in &declared[kind.slot()] {
            let g = graph.global(NodeId::new(kind, index));
            graph.splits[g] = split;
        }
    }

    let mut seen = vec![false; total];
    for (record, feat) in records.features.iter().enumerate() {
        if !graph.contains(feat.id) {
            return Err(Error::DanglingReference {
                record,
                node: feat.id,
            });
        }
        if feat.values.len() != feature_dim {
            return Err(Error::FeatureDimension {
                record,
                expected: feature_dim,
                found: feat.values.len(),
            });
        }
        if feat.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("features of {}", feat.id)));
        }
        let g = graph.global(feat.id);
        graph
            .features
            .row_mut(g)
            .iter_mut()
            .zip(&feat.values)
            .for_each(|(dst, &v)| *dst = v);
        seen[g] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MissingFeatures(graph.node_at(missing)));
    }

    for (record, edge) in records.edges.iter().enumerate() {
        for node in [edge.src, edge.dst] {
            if !graph.contains(node) {
                return Err(Error::DanglingReference { record, node });
            }
        }
        if (edge.src.kind, edge.dst.kind) != edge.relation.signature() {
            return Err(Error::RelationSignature {
                record,
                relation: edge.relation,
                src: edge.src,
                dst: edge.dst,
            });
        }
        graph.insert_edge(edge.relation, edge.src.index, edge.dst.index);
    }

    for rec in &records.labels {
        if rec.source >= graph.count(NodeKind::Source) {
            return Err(Error::LabelTarget(rec.source));
        }
        graph.labels.insert(rec.source, rec.labels);
    }
    Ok(graph)
}

impl HeteroGraph {
    pub fn count(&self, kind: NodeKind) -> usize {
        self.counts[kind.slot()]
    }

    pub fn num_nodes(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index < self.count(id.kind)
    }

    /// Offset of the first node of `kind` in the global numbering.
    pub fn offset(&self, kind: NodeKind) -> usize {
        self.counts[..kind.slot()].iter().sum()
    }

    pub fn global(&self, id: NodeId) -> usize {
        self.offset(id.kind) + id.index
    }

    pub fn node_at(&self, global: usize) -> NodeId {
        let mut rest = global;
        for kind in NodeKind::ALL {
            if rest < self.count(kind) {
                return NodeId::new(kind, rest);
            }
            rest -= self.count(kind);
        }
        panic!("global index {global} out of range");
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        NodeKind::ALL
            .into_iter()
            .flat_map(move |kind| (0..self.count(kind)).map(move |i| NodeId::new(kind, i)))
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature(&self, id: NodeId) -> ArrayView1<'_, f64> {
        self.features.row(self.global(id))
    }

    pub fn split(&self, id: NodeId) -> Option<Split> {
        self.splits[self.global(id)]
    }

    pub fn set_split(&mut self, id: NodeId, split: Option<Split>) {
        let g = self.global(id);
        self.splits[g] = split;
    }

    pub fn label(&self, source: usize) -> Option<SourceLabels> {
        self.labels.get(&source).copied()
    }

    pub fn labels(&self) -> &BTreeMap<usize, SourceLabels> {
        &self.labels
    }

    /// Stored edges of one relation as (src index, dst index) pairs.
    pub fn edges(&self, relation: Relation) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges[relation.slot()].iter().copied()
    }

    pub fn edge_count(&self, relation: Relation) -> usize {
        self.edges[relation.slot()].len()
    }

    pub fn total_edges(&self) -> usize {
        self.edges.iter().map(BTreeSet::len).sum()
    }

    pub fn has_edge(&self, relation: Relation, src: usize, dst: usize) -> bool {
        let key = if relation.is_symmetric() {
            (src.min(dst), src.max(dst))
        } else {
            (src, dst)
        };
        self.edges[relation.slot()].contains(&key)
    }

    /// Destinations of the stored edges leaving `src`.
    pub fn out_neighbors(&self, relation: Relation, src: usize) -> Vec<usize> {
        let set = &self.edges[relation.slot()];
        let mut out: Vec<usize> = set
            .range((src, 0)..(src + 1, 0))
            .map(|&(_, d)| d)
            .collect();
        if relation.is_symmetric() {
            out.extend(set.iter().filter(|&&(_, d)| d == src).map(|&(s, _)| s));
            out.sort_unstable();
        }
        out
    }

    pub fn followed_sources(&self, user: usize) -> Vec<usize> {
        self.out_neighbors(Relation::FollowsSource, user)
    }

    pub fn propagated_articles(&self, user: usize) -> Vec<usize> {
        self.out_neighbors(Relation::Propagates, user)
    }

    /// Publishing source of each article, if any.
    pub fn publishers(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.count(NodeKind::Article)];
        for (s, a) in self.edges(Relation::Publishes) {
            out[a].get_or_insert(s);
        }
        out
    }

    fn insert_edge(&mut self, relation: Relation, src: usize, dst: usize) -> bool {
        let (s_kind, d_kind) = relation.signature();
        if s_kind == d_kind && src == dst {
            return false;
        }
        let key = if relation.is_symmetric() {
            (src.min(dst), src.max(dst))
        } else {
            (src, dst)
        };
        self.edges[relation.slot()].insert(key)
    }

    /// Connects every pair of `members` with a `SameCommunity` edge and returns
    /// the number of edges that did not exist before. Nothing is added when
    /// any member is not a user of this graph.
    pub fn inject_community_edges(&mut self, members: &[NodeId]) -> Result<usize> {
        for &m in members {
            if m.kind != NodeKind::User || !self.contains(m) {
                return Err(Error::NotAUser(m));
            }
        }
        let mut users: Vec<usize> = members.iter().map(|m| m.index).collect();
        users.sort_unstable();
        users.dedup();
        let mut added = 0;
        for (i, &u) in users.iter().enumerate() {
            for &v in &users[i + 1..] {
                if self.insert_edge(Relation::SameCommunity, u, v) {
                    added += 1;
                }
            }
        }
        Ok(added)
    }

    /// Checks that no edge crosses from {Train, Dev} nodes to Test nodes.
    pub fn verify_inductive_split(&self) -> Result<InductiveCheck> {
        if let Some(g) = self.splits.iter().position(Option::is_none) {
            return Err(Error::Untagged(self.node_at(g)));
        }
        let mut violations = Vec::new();
        for relation in Relation::ALL {
            let (sk, dk) = relation.signature();
            for (s, d) in self.edges(relation) {
                let (src, dst) = (NodeId::new(sk, s), NodeId::new(dk, d));
                let a = self.split(src) == Some(Split::Test);
                let b = self.split(dst) == Some(Split::Test);
                if a != b {
                    violations.push(SplitViolation { relation, src, dst });
                }
            }
        }
        Ok(InductiveCheck {
            holds: violations.is_empty(),
            violations,
        })
    }

    /// Flattens the graph back into records; `build_graph(&g.to_records())`
    /// reproduces `g`.
    pub fn to_records(&self) -> GraphRecords {
        let nodes = self
            .nodes()
            .map(|id| NodeRecord {
                id,
                split: self.split(id),
            })
            .collect();
        let features = self
            .nodes()
            .map(|id| FeatureRecord {
                id,
                values: self.feature(id).to_vec(),
            })
            .collect();
        let mut edges = Vec::with_capacity(self.total_edges());
        for relation in Relation::ALL {
            let (sk, dk) = relation.signature();
            edges.extend(self.edges(relation).map(|(s, d)| EdgeRecord {
                relation,
                src: NodeId::new(sk, s),
                dst: NodeId::new(dk, d),
            }));
        }
        let labels = self
            .labels
            .iter()
            .map(|(&source, &labels)| LabelRecord { source, labels })
            .collect();
        GraphRecords {
            nodes,
            features,
            edges,
            labels,
        }
    }

    /// Nodes carrying `split`, of the given kind.
    pub fn nodes_in_split(&self, kind: NodeKind, split: Split) -> Vec<usize> {
        (0..self.count(kind))
            .filter(|&i| self.split(NodeId::new(kind, i)) == Some(split))
            .collect()
    }
}
