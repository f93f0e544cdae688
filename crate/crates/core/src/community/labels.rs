use serde::{Deserialize, Serialize};

use crate::graph::{HeteroGraph, NodeKind, Task};

/// A user's label on one task, taken as the mode over the sources they follow
/// and the publishers of the articles they propagate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserDerivedLabel {
    pub user: usize,
    /// `None` when the user has no labeled connection.
    pub label: Option<usize>,
    pub counts: [usize; 3],
}

/// Mode of `counts`; ties go to the lowest class. `None` when all are zero.
pub fn mode(counts: &[usize; 3]) -> Option<usize> {
    let mut best = None;
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 && best.is_none_or(|b: usize| n > counts[b]) {
            best = Some(c);
        }
    }
    best
}

/// Gold class of every source on `task`, indexed by source.
pub fn gold_source_classes(g: &HeteroGraph, task: Task) -> Vec<Option<usize>> {
    (0..g.count(NodeKind::Source))
        .map(|s| g.label(s).map(|l| l.class(task)))
        .collect()
}

/// Derives a label for every user from per-source classes (gold labels or
/// model predictions). Articles inherit their publisher's class.
pub fn derive_user_labels(g: &HeteroGraph, source_classes: &[Option<usize>]) -> Vec<UserDerivedLabel> {
    let publishers = g.publishers();
    (0..g.count(NodeKind::User))
        .map(|u| {
            let mut counts = [0usize; 3];
            for s in g.followed_sources(u) {
                if let Some(c) = source_classes.get(s).copied().flatten() {
                    counts[c] += 1;
                }
            }
            for a in g.propagated_articles(u) {
                if let Some(c) = publishers[a].and_then(|s| source_classes.get(s).copied().flatten()) {
                    counts[c] += 1;
                }
            }
            UserDerivedLabel {
                user: u,
                label: mode(&counts),
                counts,
            }
        })
        .collect()
}

/// Counts of each derived label among `members`, ignoring unknown labels.
pub fn label_histogram(members: &[usize], labels: &[UserDerivedLabel]) -> [usize; 3] {
    let mut hist = [0usize; 3];
    for &u in members {
        if let Some(c) = labels[u].label {
            hist[c] += 1;
        }
    }
    hist
}

/// Most common derived label among `members` (ties to the lowest class).
pub fn majority_label(members: &[usize], labels: &[UserDerivedLabel]) -> Option<usize> {
    mode(&label_histogram(members, labels))
}

/// Share of labeled members carrying the majority label; `None` when no
/// member is labeled.
pub fn cluster_purity(members: &[usize], labels: &[UserDerivedLabel]) -> Option<f64> {
    let hist = label_histogram(members, labels);
    let labeled: usize = hist.iter().sum();
    (labeled > 0).then(|| *hist.iter().max().expect("3 classes") as f64 / labeled as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopClusters {
    /// Indices into the input cluster list, best first.
    pub chosen: Vec<usize>,
    pub purities: Vec<f64>,
    /// Set when fewer than the requested number of clusters were eligible.
    pub short: bool,
}

/// The `n` purest clusters among those with a defined purity and at least
/// `min_size` members. Ties go to the larger cluster, then the lower index.
pub fn select_top_clusters(
    clusters: &[Vec<usize>],
    labels: &[UserDerivedLabel],
    n: usize,
    min_size: usize,
) -> TopClusters {
    let mut eligible: Vec<(usize, f64)> = clusters
        .iter()
        .enumerate()
        .filter(|(_, c)| c.len() >= min_size)
        .filter_map(|(i, c)| cluster_purity(c, labels).map(|p| (i, p)))
        .collect();
    eligible.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(clusters[b.0].len().cmp(&clusters[a.0].len()))
            .then(a.0.cmp(&b.0))
    });
    eligible.truncate(n);
    TopClusters {
        short: eligible.len() < n,
        chosen: eligible.iter().map(|e| e.0).collect(),
        purities: eligible.iter().map(|e| e.1).collect(),
    }
}
