//! Dataset directory layout:
//!
//! - `sources.tsv`, `users.tsv`: `index  period  name  f1,f2,...`
//! - `articles.tsv`: `index  period  name  f1,f2,...  text`
//! - `edges.tsv`: `relation  src  dst` with ids written `kind:index`
//! - `labels.tsv`: `source  factuality  bias`
//! - `profiles.txt`: `user <idx> bio <text>`, `tweet <idx> <text>`, `meta <idx> k=v`
//!
//! Lines starting with `#` are comments. Fields are tab separated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::texts::TextStore;
use crate::error::{Error, Result};
use crate::graph::{
    build_graph, EdgeRecord, FeatureRecord, GraphRecords, HeteroGraph, LabelRecord, NodeId,
    NodeKind, NodeRecord, Relation, SourceLabels, Split, Task,
};

pub const SOURCES_FILE: &str = "sources.tsv";
pub const ARTICLES_FILE: &str = "articles.tsv";
pub const USERS_FILE: &str = "users.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const PROFILES_FILE: &str = "profiles.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub index: usize,
    pub period: String,
    pub name: String,
    pub features: Vec<f64>,
}

/// The raw contents of a dataset directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestRecordSet {
    pub sources: Vec<NodeRow>,
    pub articles: Vec<NodeRow>,
    pub users: Vec<NodeRow>,
    pub edges: Vec<EdgeRecord>,
    pub labels: Vec<LabelRecord>,
    /// Bios, tweets and article texts.
    pub texts: TextStore,
}

/// Maps collection periods to splits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeriodMap(pub BTreeMap<String, Split>);

impl Default for PeriodMap {
    fn default() -> Self {
        PeriodMap(
            [("train", Split::Train), ("dev", Split::Dev), ("test", Split::Test)]
                .into_iter()
                .map(|(p, s)| (p.to_string(), s))
                .collect(),
        )
    }
}

fn join_features(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

impl IngestRecordSet {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let node_file = |rows: &[NodeRow], with_text: bool| {
            let mut out = String::new();
            for r in rows {
                let _ = write!(
                    out,
                    "{}\t{}\t{}\t{}",
                    r.index,
                    clean(&r.period),
                    clean(&r.name),
                    join_features(&r.features)
                );
                if with_text {
                    let text = self.texts.articles.get(r.index).map(String::as_str).unwrap_or("");
                    let _ = write!(out, "\t{}", clean(text));
                }
                out.push('\n');
            }
            out
        };
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
        };
        write(SOURCES_FILE, node_file(&self.sources, false))?;
        write(ARTICLES_FILE, node_file(&self.articles, true))?;
        write(USERS_FILE, node_file(&self.users, false))?;
        let mut edges = String::new();
        for e in &self.edges {
            let _ = writeln!(edges, "{}\t{}\t{}", e.relation, e.src, e.dst);
        }
        write(EDGES_FILE, edges)?;
        let mut labels = String::new();
        for l in &self.labels {
            let _ = writeln!(
                labels,
                "{}\t{}\t{}",
                l.source,
                Task::Factuality.class_name(l.labels.class(Task::Factuality)),
                Task::Bias.class_name(l.labels.class(Task::Bias))
            );
        }
        write(LABELS_FILE, labels)?;
        let mut profiles = Vec::new();
        self.texts
            .write_profiles(&mut profiles)
            .map_err(|e| Error::io(dir.join(PROFILES_FILE), e))?;
        let path = dir.join(PROFILES_FILE);
        std::fs::write(&path, profiles).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<IngestRecordSet> {
        let read = |name: &str, required: bool| -> Result<Option<(String, String)>> {
            let path = dir.join(name);
            if !path.exists() && !required {
                return Ok(None);
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(Some((path.display().to_string(), text)))
        };
        let mut set = IngestRecordSet::default();
        let (p, t) = read(SOURCES_FILE, true)?.expect("required");
        set.sources = parse_nodes(&p, &t, false)?.0;
        if let Some((p, t)) = read(ARTICLES_FILE, false)? {
            let (rows, texts) = parse_nodes(&p, &t, true)?;
            set.articles = rows;
            set.texts.articles = texts;
        }
        if let Some((p, t)) = read(USERS_FILE, false)? {
            set.users = parse_nodes(&p, &t, false)?.0;
        }
        let declared: [BTreeSet<usize>; 3] = [&set.sources, &set.articles, &set.users]
            .map(|rows| rows.iter().map(|r| r.index).collect());
        if let Some((p, t)) = read(EDGES_FILE, false)? {
            set.edges = parse_edges(&p, &t, &declared)?;
        }
        if let Some((p, t)) = read(LABELS_FILE, false)? {
            set.labels = parse_labels(&p, &t, &declared[0])?;
        }
        if let Some((p, t)) = read(PROFILES_FILE, false)? {
            set.texts.read_profiles(t.as_bytes(), &p)?;
            if let Some(&u) = set.texts.users.keys().find(|u| !declared[2].contains(u)) {
                return Err(Error::parse(p, 0, format!("profile for undeclared user {u}")));
            }
        }
        Ok(set)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_nodes(path: &str, text: &str, with_text: bool) -> Result<(Vec<NodeRow>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut texts = Vec::new();
    for (line, l) in content_lines(text) {
        let cols: Vec<&str> = l.split('\t').collect();
        let need = if with_text { 4 } else { 4 };
        if cols.len() < need {
            return Err(Error::parse(path, line, format!("expected at least {need} tab-separated fields")));
        }
        let index: usize = cols[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad index `{}`", cols[0])))?;
        let features = if cols[3].trim().is_empty() {
            Vec::new()
        } else {
            cols[3]
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, line, format!("bad feature value: {e}")))?
        };
        if with_text {
            if texts.len() <= index {
                texts.resize(index + 1, String::new());
            }
            texts[index] = cols.get(4).copied().unwrap_or("").to_string();
        }
        rows.push(NodeRow {
            index,
            period: cols[1].trim().to_string(),
            name: cols[2].to_string(),
            features,
        });
    }
    Ok((rows, texts))
}

fn parse_edges(path: &str, text: &str, declared: &[BTreeSet<usize>; 3]) -> Result<Vec<EdgeRecord>> {
    let mut edges = Vec::new();
    for (line, l) in content_lines(text) {
        let cols: Vec<&str> = l.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::parse(path, line, "expected `relation  src  dst`"));
        }
        let relation: Relation = cols[0].parse().map_err(|e: String| Error::parse(path, line, e))?;
        let mut ids = [NodeId::source(0); 2];
        for (slot, raw) in ids.iter_mut().zip(&cols[1..]) {
            let id: NodeId = raw.parse().map_err(|e: String| Error::parse(path, line, e))?;
            if !declared[id.kind as usize].contains(&id.index) {
                return Err(Error::parse(path, line, format!("unresolved reference {id}")));
            }
            *slot = id;
        }
        edges.push(EdgeRecord {
            relation,
            src: ids[0],
            dst: ids[1],
        });
    }
    Ok(edges)
}

fn parse_labels(path: &str, text: &str, sources: &BTreeSet<usize>) -> Result<Vec<LabelRecord>> {
    let mut labels = Vec::new();
    for (line, l) in content_lines(text) {
        let cols: Vec<&str> = l.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::parse(path, line, "expected `source  factuality  bias`"));
        }
        let source: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad source index `{}`", cols[0])))?;
        if !sources.contains(&source) {
            return Err(Error::parse(path, line, format!("unresolved reference source:{source}")));
        }
        let f = Task::Factuality
            .parse_class(cols[1])
            .ok_or_else(|| Error::parse(path, line, format!("unknown factuality `{}`", cols[1])))?;
        let b = Task::Bias
            .parse_class(cols[2])
            .ok_or_else(|| Error::parse(path, line, format!("unknown bias `{}`", cols[2])))?;
        labels.push(LabelRecord {
            source,
            labels: SourceLabels::from_classes(f, b).expect("parsed classes"),
        });
    }
    Ok(labels)
}

/// A graph ready for training plus the texts the prompts need.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: HeteroGraph,
    pub texts: TextStore,
    pub warnings: Vec<String>,
}

/// Builds the graph, tagging each node with the split of its period.
/// Edges crossing the inductive split are reported as warnings.
pub fn ingest(set: &IngestRecordSet, periods: &PeriodMap) -> Result<Dataset> {
    let mut records = GraphRecords::default();
    for (kind, rows) in [
        (NodeKind::Source, &set.sources),
        (NodeKind::Article, &set.articles),
        (NodeKind::User, &set.users),
    ] {
        for r in rows {
            let id = NodeId::new(kind, r.index);
            let split = periods.0.get(&r.period).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("{id}: period `{}` has no split mapping", r.period))
            })?;
            records.nodes.push(NodeRecord { id, split: Some(split) });
            records.features.push(FeatureRecord {
                id,
                values: r.features.clone(),
            });
        }
    }
    records.edges = set.edges.clone();
    records.labels = set.labels.clone();
    let graph = build_graph(&records)?;
    let mut warnings = Vec::new();
    let check = graph.verify_inductive_split()?;
    for v in &check.violations {
        let w = format!("{} edge {} -> {} crosses the inductive split", v.relation, v.src, v.dst);
        log::warn!("{w}");
        warnings.push(w);
    }
    let mut texts = set.texts.clone();
    texts.articles.resize(graph.count(NodeKind::Article).max(texts.articles.len()), String::new());
    Ok(Dataset {
        graph,
        texts,
        warnings,
    })
}

pub fn ingest_dir(dir: &Path, periods: &PeriodMap) -> Result<Dataset> {
    ingest(&IngestRecordSet::read_dir(dir)?, periods)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(index: usize, period: &str) -> NodeRow {
        NodeRow {
            index,
            period: period.into(),
            name: format!("n{index}"),
            features: vec![index as f64, 0.5],
        }
    }

    #[test]
    fn minimal_single_source() {
        let set = IngestRecordSet {
            sources: vec![row(0, "train")],
            ..Default::default()
        };
        let d = ingest(&set, &PeriodMap::default()).unwrap();
        assert_eq!(d.graph.num_nodes(), 1);
        assert!(d.texts.users.is_empty());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = IngestRecordSet {
            sources: vec![row(0, "train"), row(1, "test")],
            articles: vec![row(0, "test")],
            users: vec![row(0, "test")],
            edges: vec![
                EdgeRecord {
                    relation: Relation::Publishes,
                    src: NodeId::source(1),
                    dst: NodeId::article(0),
                },
                EdgeRecord {
                    relation: Relation::FollowsSource,
                    src: NodeId::user(0),
                    dst: NodeId::source(1),
                },
            ],
            labels: vec![LabelRecord {
                source: 1,
                labels: SourceLabels::from_classes(0, 2).unwrap(),
            }],
            texts: TextStore::default(),
        };
        set.texts.articles = vec!["rally in Springfield".into()];
        set.texts.users.insert(
            0,
            super::super::UserText {
                bio: "b".into(),
                tweets: vec!["t".into()],
                metadata: vec![],
            },
        );
        set.write_dir(dir.path()).unwrap();
        let back = IngestRecordSet::read_dir(dir.path()).unwrap();
        assert_eq!(back, set);
        let d = ingest(&back, &PeriodMap::default()).unwrap();
        assert!(d.warnings.is_empty());
        assert_eq!(d.graph.split(NodeId::user(0)), Some(Split::Test));
    }

    #[test]
    fn unresolved_edge_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(SOURCES_FILE), "0\ttrain\ts\t1\n").unwrap();
        std::fs::write(
            dir.path().join(EDGES_FILE),
            "# header\nfollows_source\tuser:4\tsource:0\n",
        )
        .unwrap();
        let err = IngestRecordSet::read_dir(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("edges.tsv:2"), "{msg}");
        assert!(msg.contains("user:4"), "{msg}");
    }

    #[test]
    fn cross_split_edge_is_warned() {
        let set = IngestRecordSet {
            sources: vec![row(0, "train")],
            users: vec![row(0, "test")],
            edges: vec![EdgeRecord {
                relation: Relation::FollowsSource,
                src: NodeId::user(0),
                dst: NodeId::source(0),
            }],
            ..Default::default()
        };
        let d = ingest(&set, &PeriodMap::default()).unwrap();
        assert_eq!(d.warnings.len(), 1);
        assert!(!d.graph.verify_inductive_split().unwrap().holds);
    }

    #[test]
    fn unknown_period_rejected() {
        let set = IngestRecordSet {
            sources: vec![row(0, "2031")],
            ..Default::default()
        };
        assert!(ingest(&set, &PeriodMap::default()).is_err());
    }
}
