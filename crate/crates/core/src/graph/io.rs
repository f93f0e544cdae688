//! Line-delimited graph file.
//!
//! ```text
//! node <kind> <index> [split]
//! feat <kind> <index> <d floats>
//! edge <relation> <kind:idx> <kind:idx>
//! label <source-idx> <factuality> <bias>
//! end
//! ```
//!
//! Sections appear in that order. The closing `end` record makes truncation
//! detectable. Lines starting with `#` are comments.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{
    build_graph, EdgeRecord, FeatureRecord, GraphRecords, HeteroGraph, LabelRecord, NodeId,
    NodeRecord, SourceLabels, Task,
};
use crate::error::{Error, Result};

const HEADER: &str = "# mediaprof graph v1";

pub fn write_graph<W: Write>(g: &HeteroGraph, mut out: W) -> std::io::Result<()> {
    let recs = g.to_records();
    writeln!(out, "{HEADER}")?;
    for n in &recs.nodes {
        match n.split {
            Some(s) => writeln!(out, "node {} {} {}", n.id.kind, n.id.index, s)?,
            None => writeln!(out, "node {} {}", n.id.kind, n.id.index)?,
        }
    }
    for f in &recs.features {
        write!(out, "feat {} {}", f.id.kind, f.id.index)?;
        for v in &f.values {
            // `{}` on f64 prints the shortest representation that parses back
            // to the same bits.
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    for e in &recs.edges {
        writeln!(out, "edge {} {} {}", e.relation, e.src, e.dst)?;
    }
    for l in &recs.labels {
        writeln!(
            out,
            "label {} {} {}",
            l.source,
            Task::Factuality.class_name(l.labels.class(Task::Factuality)),
            Task::Bias.class_name(l.labels.class(Task::Bias)),
        )?;
    }
    writeln!(out, "end")?;
    Ok(())
}

pub fn save_graph(g: &HeteroGraph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_graph(g, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_graph(path: &Path) -> Result<HeteroGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_graph(BufReader::new(file), &path.display().to_string())
}

/// Parses a graph file. Fails without returning a partial graph.
pub fn read_graph<R: BufRead>(input: R, name: &str) -> Result<HeteroGraph> {
    let mut recs = GraphRecords::default();
    let mut section = 0u8;
    let mut ended = false;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(name, lineno, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if ended {
            return Err(Error::parse(name, lineno, "content after `end` record"));
        }
        let err = |msg: String| Error::parse(name, lineno, msg);
        let mut fields = line.split_whitespace();
        let tag = fields.next().unwrap_or_default();
        let order = match tag {
            "node" => 0,
            "feat" => 1,
            "edge" => 2,
            "label" => 3,
            "end" => 4,
            other => return Err(err(format!("unknown record `{other}`"))),
        };
        if order < section {
            return Err(err(format!("`{tag}` record out of section order")));
        }
        section = order;
        let fields: Vec<&str> = fields.collect();
        match tag {
            "node" => {
                if !(2..=3).contains(&fields.len()) {
                    return Err(err("expected: node <kind> <index> [split]".into()));
                }
                let id = parse_id(fields[0], fields[1]).map_err(err)?;
                let split = fields.get(2).map(|s| s.parse()).transpose().map_err(err)?;
                recs.nodes.push(NodeRecord { id, split });
            }
            "feat" => {
                if fields.len() < 2 {
                    return Err(err("expected: feat <kind> <index> <floats>".into()));
                }
                let id = parse_id(fields[0], fields[1]).map_err(err)?;
                let values = fields[2..]
                    .iter()
                    .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad float `{v}`"))))
                    .collect::<Result<Vec<_>>>()?;
                recs.features.push(FeatureRecord { id, values });
            }
            "edge" => {
                if fields.len() != 3 {
                    return Err(err("expected: edge <relation> <kind:idx> <kind:idx>".into()));
                }
                recs.edges.push(EdgeRecord {
                    relation: fields[0].parse().map_err(err)?,
                    src: fields[1].parse().map_err(err)?,
                    dst: fields[2].parse().map_err(err)?,
                });
            }
            "label" => {
                if fields.len() != 3 {
                    return Err(err("expected: label <source-idx> <factuality> <bias>".into()));
                }
                let source = fields[0]
                    .parse()
                    .map_err(|_| err(format!("bad source index `{}`", fields[0])))?;
                let f = Task::Factuality
                    .parse_class(fields[1])
                    .ok_or_else(|| err(format!("bad factuality `{}`", fields[1])))?;
                let b = Task::Bias
                    .parse_class(fields[2])
                    .ok_or_else(|| err(format!("bad bias `{}`", fields[2])))?;
                recs.labels.push(LabelRecord {
                    source,
                    labels: SourceLabels::from_classes(f, b).expect("classes in range"),
                });
            }
            _ => {
                if !fields.is_empty() {
                    return Err(err("`end` takes no fields".into()));
                }
                ended = true;
            }
        }
    }
    if !ended {
        return Err(Error::parse(name, 0, "truncated file: missing `end` record"));
    }
    build_graph(&recs)
}

fn parse_id(kind: &str, index: &str) -> Result<NodeId, String> {
    let kind = kind.parse()?;
    let index = index
        .parse()
        .map_err(|_| format!("bad node index `{index}`"))?;
    Ok(NodeId::new(kind, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Bias, Factuality, NodeKind, Relation, Split};

    fn all_relations_graph() -> HeteroGraph {
        let ids = [
            NodeId::source(0),
            NodeId::article(0),
            NodeId::user(0),
            NodeId::user(1),
        ];
        let recs = GraphRecords {
            nodes: ids
                .iter()
                .map(|&id| NodeRecord {
                    id,
                    split: Some(Split::Dev),
                })
                .collect(),
            features: ids
                .iter()
                .enumerate()
                .map(|(i, &id)| FeatureRecord {
                    id,
                    values: vec![0.1 * i as f64, -1.0 / 3.0, 1e-300],
                })
                .collect(),
            edges: vec![
                EdgeRecord { relation: Relation::Publishes, src: ids[0], dst: ids[1] },
                EdgeRecord { relation: Relation::FollowsSource, src: ids[2], dst: ids[0] },
                EdgeRecord { relation: Relation::FollowsUser, src: ids[3], dst: ids[2] },
                EdgeRecord { relation: Relation::Propagates, src: ids[3], dst: ids[1] },
                EdgeRecord { relation: Relation::SameCommunity, src: ids[3], dst: ids[2] },
            ],
            labels: vec![LabelRecord {
                source: 0,
                labels: SourceLabels::new(Factuality::Mixed, Bias::Right),
            }],
        };
        build_graph(&recs).unwrap()
    }

    fn roundtrip(g: &HeteroGraph) -> HeteroGraph {
        let mut buf = Vec::new();
        write_graph(g, &mut buf).unwrap();
        read_graph(buf.as_slice(), "mem").unwrap()
    }

    #[test]
    fn empty_graph_roundtrips() {
        let g = HeteroGraph::default();
        assert_eq!(roundtrip(&g), g);
    }

    #[test]
    fn all_relations_roundtrip() {
        let g = all_relations_graph();
        let back = roundtrip(&g);
        assert_eq!(back, g);
        for r in Relation::ALL {
            assert_eq!(back.edge_count(r), 1, "{r}");
        }
        assert_eq!(back.count(NodeKind::User), 2);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let mut buf = Vec::new();
        write_graph(&all_relations_graph(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = text.rfind("end").unwrap();
        let err = read_graph(text[..cut].as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        let mid = text.find("edge").unwrap() + 7;
        assert!(read_graph(text[..mid].as_bytes(), "mem").is_err());
    }

    #[test]
    fn malformed_line_reports_position() {
        let text = "node source 0 train\nfeat source 0 1.0 x\nend\n";
        match read_graph(text.as_bytes(), "g.txt") {
            Err(Error::Parse { path, line, .. }) => {
                assert_eq!(path, "g.txt");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_order_sections_rejected() {
        let text = "node source 0\nlabel 0 high left\nfeat source 0 1.0\nend\n";
        assert!(read_graph(text.as_bytes(), "g").is_err());
    }
}
