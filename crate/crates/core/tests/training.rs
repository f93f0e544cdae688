use mediaprof_core::graph::{build_graph, GraphRecords, NodeId, NodeKind, Split};
use mediaprof_core::ingest::{generate_synthetic, ingest, PeriodMap, SyntheticConfig};
use mediaprof_core::rgcn::{
    classify_sources, forward, train_classification, OptimizerKind, RgcnConfig, RgcnModel,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sources whose own features already separate the classes.
fn separable(seed: u64) -> mediaprof_core::graph::HeteroGraph {
    let data = generate_synthetic(&SyntheticConfig {
        communities: 3,
        users_per_community: 8,
        sources_per_community: 6,
        sigma: 0.3,
        source_sigma: 0.3,
        separation: 4.0,
        seed,
        ..Default::default()
    })
    .unwrap();
    ingest(&data.records, &PeriodMap::default()).unwrap().graph
}

fn model(optimizer: OptimizerKind, seed: u64) -> RgcnModel {
    RgcnModel::new(RgcnConfig {
        input_dim: 16,
        hidden: 32,
        layers: 2,
        optimizer,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn train_accuracy(g: &mediaprof_core::graph::HeteroGraph, m: &RgcnModel) -> f64 {
    let preds = classify_sources(g, m, Some(Split::Train)).unwrap();
    let hits = preds
        .iter()
        .filter(|p| {
            let l = g.label(p.source).unwrap();
            p.classes == [l.factuality as usize, l.bias as usize]
        })
        .count();
    hits as f64 / preds.len() as f64
}

#[test]
fn separable_features_reach_full_train_accuracy_in_200_epochs() {
    for seed in 0..3 {
        let g = separable(seed);
        let mut m = model(OptimizerKind::Adam, seed);
        assert_eq!(m.config.lr, 0.001);
        let trace = train_classification(&g, &mut m, 200).unwrap();
        assert!(trace.last().unwrap() < &trace[0]);
        assert_eq!(train_accuracy(&g, &m), 1.0, "seed {seed}");
    }
}

#[test]
fn training_is_deterministic() {
    let g = separable(4);
    let mut a = model(OptimizerKind::Adam, 9);
    let mut b = model(OptimizerKind::Adam, 9);
    let ta = train_classification(&g, &mut a, 20).unwrap();
    let tb = train_classification(&g, &mut b, 20).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(a, b);
}

#[test]
fn sgd_lowers_the_loss() {
    let g = separable(5);
    let mut m = model(OptimizerKind::Sgd, 5);
    m.config.lr = 0.05;
    let trace = train_classification(&g, &mut m, 50).unwrap();
    assert!(trace.last().unwrap() < &trace[0]);
}

/// Relabels the users of `records` by `perm` (old index -> new index).
fn permute_users(records: &GraphRecords, perm: &[usize]) -> GraphRecords {
    let map = |id: NodeId| {
        if id.kind == NodeKind::User {
            NodeId::user(perm[id.index])
        } else {
            id
        }
    };
    let mut out = records.clone();
    for n in &mut out.nodes {
        n.id = map(n.id);
    }
    for f in &mut out.features {
        f.id = map(f.id);
    }
    for e in &mut out.edges {
        e.src = map(e.src);
        e.dst = map(e.dst);
    }
    out
}

#[test]
fn embeddings_are_equivariant_under_user_relabeling() {
    let g = separable(6);
    let mut m = model(OptimizerKind::Adam, 6);
    train_classification(&g, &mut m, 10).unwrap();
    let mut perm: Vec<usize> = (0..g.count(NodeKind::User)).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(6));
    let permuted = build_graph(&permute_users(&g.to_records(), &perm)).unwrap();
    let a = forward(&g, &m).unwrap();
    let b = forward(&permuted, &m).unwrap();
    for (old, &new) in perm.iter().enumerate() {
        for (x, y) in a.embeddings.user(old).iter().zip(b.embeddings.user(new).iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
    for t in 0..2 {
        for (x, y) in a.logits[t].iter().zip(b.logits[t].iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
