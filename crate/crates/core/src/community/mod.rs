//! Clustering and community mechanics: k-means over user embeddings, derived
//! user labels and purity, anchor-entity filtering and centroid neighbours.

mod entities;
mod kmeans;
mod labels;

use std::collections::BTreeSet;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

pub use entities::{
    extractor_by_name, filter_cluster_by_entity, CapitalizedRuns, EntityExtractor, EntityFilter,
};
pub use kmeans::{kmeans, KMeans, MAX_ITERATIONS};
pub use labels::{
    cluster_purity, derive_user_labels, gold_source_classes, label_histogram, majority_label,
    mode, select_top_clusters, TopClusters, UserDerivedLabel,
};

use crate::rgcn::EmbeddingTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommunityStatus {
    Candidate,
    Validated,
}

/// A user shown to a judge together with the summary they were judged on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub user: usize,
    pub summary: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub id: u64,
    pub status: CommunityStatus,
    pub members: BTreeSet<usize>,
    pub centroid: Vec<f64>,
    pub anchor: String,
    /// Positive few-shot examples from the validating judgement.
    pub accepted: Vec<Example>,
    /// Negative few-shot examples from the validating judgement.
    pub rejected: Vec<Example>,
    pub created_round: usize,
}

impl Community {
    pub fn members_vec(&self) -> Vec<usize> {
        self.members.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Recomputes the centroid as the mean member embedding.
    pub fn refresh_centroid(&mut self, embeddings: &EmbeddingTable) {
        if self.members.is_empty() {
            self.centroid.clear();
            return;
        }
        let mut sum = Array1::<f64>::zeros(embeddings.width());
        for &u in &self.members {
            sum += &embeddings.user(u);
        }
        sum /= self.members.len() as f64;
        self.centroid = sum.to_vec();
    }
}

/// Up to `m` candidates nearest to `centroid` (Euclidean), closest first,
/// ties broken by lower user index.
pub fn knn_to_community(
    candidates: &[usize],
    embeddings: &EmbeddingTable,
    centroid: ArrayView1<f64>,
    m: usize,
) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&u| {
            let d = embeddings
                .user(u)
                .iter()
                .zip(centroid)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            (u, d)
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.dedup_by_key(|s| s.0);
    scored.truncate(m);
    scored
}
