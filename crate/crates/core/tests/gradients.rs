//! Analytic gradients against central finite differences on a small graph.

mod support;

use mediaprof_core::graph::{NodeId, Split};
use mediaprof_core::rgcn::{
    classification_loss, interacted_subgraph, labeled_sources, link_prediction_loss, positive_pairs,
    Adjacency,
};
use support::{max_relative_error, smooth_instances};

#[test]
fn classification_gradient_matches_finite_differences() {
    let instances = smooth_instances(3, 100);
    assert_eq!(instances.len(), 3);
    for (seed, g, m) in instances {
        let adj = Adjacency::new(&g);
        let batch = labeled_sources(&g, Split::Train);
        let w = m.config.task_weights;
        let (_, grads) = classification_loss(&adj, g.features(), &m.params, w, &batch, true);
        let (err, at) = max_relative_error(&m.params, &grads.unwrap(), |p| {
            classification_loss(&adj, g.features(), p, w, &batch, false).0
        });
        assert!(err < 1e-4, "seed {seed}: {err:e} at {at}");
    }
}

#[test]
fn link_prediction_gradient_matches_finite_differences() {
    let instances = smooth_instances(3, 200);
    assert_eq!(instances.len(), 3);
    for (seed, g, m) in instances {
        let adj = Adjacency::new(&g);
        let communities = vec![vec![0, 1], vec![2, 3]];
        let positives = positive_pairs(&g, &interacted_subgraph(&g, &communities));
        let negatives: Vec<(usize, usize)> = [(0, 2), (1, 3), (0, 3)]
            .iter()
            .map(|&(a, b)| (g.global(NodeId::user(a)), g.global(NodeId::user(b))))
            .collect();
        // Large margin keeps every hinge active.
        let margin = 50.0;
        let (_, grads) =
            link_prediction_loss(&adj, g.features(), &m.params, &positives, &negatives, margin, true);
        let (err, at) = max_relative_error(&m.params, &grads.unwrap(), |p| {
            link_prediction_loss(&adj, g.features(), p, &positives, &negatives, margin, false).0
        });
        assert!(err < 1e-4, "seed {seed}: {err:e} at {at}");
    }
}
