//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use mediaprof_core::graph::{
    build_graph, Bias, EdgeRecord, Factuality, FeatureRecord, GraphRecords, HeteroGraph,
    LabelRecord, NodeId, NodeRecord, Relation, SourceLabels, Split,
};
use mediaprof_core::rgcn::{encode, Adjacency, Params, RgcnConfig, RgcnModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-4;

/// 10 nodes touching every relation type.
pub fn tiny_graph(seed: u64) -> HeteroGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<NodeId> = (0..3)
        .map(NodeId::source)
        .chain((0..3).map(NodeId::article))
        .chain((0..4).map(NodeId::user))
        .collect();
    let e = |relation, src, dst| EdgeRecord { relation, src, dst };
    let (s, a, u) = (NodeId::source, NodeId::article, NodeId::user);
    build_graph(&GraphRecords {
        nodes: ids
            .iter()
            .map(|&id| NodeRecord { id, split: Some(Split::Train) })
            .collect(),
        features: ids
            .iter()
            .map(|&id| FeatureRecord {
                id,
                values: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            })
            .collect(),
        edges: vec![
            e(Relation::Publishes, s(0), a(0)),
            e(Relation::Publishes, s(1), a(1)),
            e(Relation::Publishes, s(2), a(2)),
            e(Relation::FollowsSource, u(0), s(0)),
            e(Relation::FollowsSource, u(1), s(0)),
            e(Relation::FollowsSource, u(2), s(1)),
            e(Relation::FollowsSource, u(3), s(2)),
            e(Relation::FollowsUser, u(0), u(1)),
            e(Relation::FollowsUser, u(3), u(2)),
            e(Relation::Propagates, u(0), a(1)),
            e(Relation::Propagates, u(2), a(2)),
            e(Relation::Propagates, u(3), a(0)),
            e(Relation::SameCommunity, u(0), u(1)),
            e(Relation::SameCommunity, u(2), u(3)),
        ],
        labels: vec![
            LabelRecord { source: 0, labels: SourceLabels::new(Factuality::Low, Bias::Right) },
            LabelRecord { source: 1, labels: SourceLabels::new(Factuality::High, Bias::Left) },
            LabelRecord { source: 2, labels: SourceLabels::new(Factuality::Mixed, Bias::Center) },
        ],
    })
    .unwrap()
}

pub fn model(seed: u64) -> RgcnModel {
    let mut m = RgcnModel::new(RgcnConfig {
        input_dim: 4,
        hidden: 5,
        layers: 2,
        seed,
        task_weights: [1.0, 0.7],
        ..RgcnConfig::default()
    })
    .unwrap();
    // Non-zero biases so their gradients are exercised too.
    m.params.heads[0].bias[1] = 0.3;
    m.params.heads[1].bias[2] = -0.2;
    m
}

/// Max relative error over every parameter, with the floor guarding
/// parameters whose gradient is numerically zero.
pub fn max_relative_error(params: &Params, analytic: &Params, loss: impl Fn(&Params) -> f64) -> (f64, String) {
    let names = params.names();
    let mut worst = (0.0, String::new());
    let mut probe = params.clone();
    let sizes: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    for (t, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let orig = probe.slices()[t][i];
            probe.slices_mut()[t][i] = orig + EPS;
            let up = loss(&probe);
            probe.slices_mut()[t][i] = orig - EPS;
            let down = loss(&probe);
            probe.slices_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let exact = analytic.slices()[t][i];
            let denom = exact.abs().max(numeric.abs()).max(1e-6);
            let rel = (exact - numeric).abs() / denom;
            if rel > worst.0 {
                worst = (rel, format!("{}[{i}]: analytic {exact:e} numeric {numeric:e}", names[t]));
            }
        }
    }
    worst
}

/// The first `count` (graph, model) instances whose pre-activations all sit
/// at least 10 steps away from the ReLU kink, where central differences are
/// valid.
pub fn smooth_instances(count: usize, model_offset: u64) -> Vec<(u64, HeteroGraph, RgcnModel)> {
    (0..100)
        .map(|seed| (seed, tiny_graph(seed), model(seed + model_offset)))
        .filter(|(_, g, m)| {
            encode(&Adjacency::new(g), g.features(), &m.params).min_abs_pre_activation() > 10.0 * EPS
        })
        .take(count)
        .collect()
}


use mediaprof_core::ingest::{generate_synthetic, ingest, PeriodMap, SyntheticConfig, SyntheticData, TextStore};
use mediaprof_core::rgcn::{train_classification, LinkPredConfig};
use mediaprof_core::session::SessionConfig;

/// Planted data, its graph and a model pre-trained on the Train split.
pub struct Planted {
    pub data: SyntheticData,
    pub graph: HeteroGraph,
    pub texts: TextStore,
    pub model: RgcnModel,
}

/// Three planted communities with noisy source features, so sources are
/// best classified through their followers.
pub fn planted_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        communities: 3,
        users_per_community: 30,
        sources_per_community: 20,
        source_sigma: 5.0,
        seed,
        ..Default::default()
    }
}

pub fn planted(cfg: &SyntheticConfig) -> Planted {
    let data = generate_synthetic(cfg).unwrap();
    let ds = ingest(&data.records, &PeriodMap::default()).unwrap();
    let mut model = RgcnModel::new(RgcnConfig {
        input_dim: cfg.feature_dim,
        hidden: 32,
        layers: 2,
        lr: 0.01,
        seed: cfg.seed,
        ..Default::default()
    })
    .unwrap();
    train_classification(&ds.graph, &mut model, 100).unwrap();
    Planted {
        data,
        graph: ds.graph,
        texts: ds.texts,
        model,
    }
}

/// Session settings shared by every arm of a paired comparison.
pub fn paired_session(seed: u64) -> SessionConfig {
    SessionConfig {
        k: 8,
        m: 12,
        seed,
        fine_tune: LinkPredConfig {
            margin: 40.0,
            epochs: 50,
            lr: 0.001,
            ..Default::default()
        },
        ..Default::default()
    }
}
