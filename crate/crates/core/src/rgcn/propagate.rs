//! Relational message passing:
//!
//! `h_i' = ReLU( sum_r sum_{j in N_r(i)} W_r h_j / |N_r(i)|  +  W_0 h_i )`
//!
//! Every stored directed relation contributes two message types (along the
//! edge and against it); `SameCommunity` is symmetric and contributes one.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::model::{Params, RgcnModel};
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeId, NodeKind, Relation};

pub const NUM_MESSAGE_TYPES: usize = 9;

/// Message type index for a stored relation, in the direction of the edge
/// (`inverse == false`) or against it.
pub fn message_type(relation: Relation, inverse: bool) -> usize {
    match relation {
        Relation::SameCommunity => 8,
        r => 2 * (r as usize) + usize::from(inverse),
    }
}

/// In-neighbour lists per message type, in compressed-row form over global
/// node indices.
#[derive(Clone, Debug)]
pub struct Adjacency {
    n: usize,
    offsets: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn new(g: &HeteroGraph) -> Self {
        let n = g.num_nodes();
        let mut lists: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n]; NUM_MESSAGE_TYPES];
        for relation in Relation::ALL {
            let (sk, dk) = relation.signature();
            let fwd = message_type(relation, false);
            let inv = message_type(relation, true);
            for (s, d) in g.edges(relation) {
                let src = g.global(NodeId::new(sk, s));
                let dst = g.global(NodeId::new(dk, d));
                lists[fwd][dst].push(src);
                lists[inv][src].push(dst);
            }
        }
        let mut offsets = Vec::with_capacity(NUM_MESSAGE_TYPES);
        let mut neighbors = Vec::with_capacity(NUM_MESSAGE_TYPES);
        for per_node in lists {
            let mut off = Vec::with_capacity(n + 1);
            let mut flat = Vec::new();
            off.push(0);
            for mut list in per_node {
                list.sort_unstable();
                flat.extend(list);
                off.push(flat.len());
            }
            offsets.push(off);
            neighbors.push(flat);
        }
        Adjacency {
            n,
            offsets,
            neighbors,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn in_neighbors(&self, message_type: usize, node: usize) -> &[usize] {
        let off = &self.offsets[message_type];
        &self.neighbors[message_type][off[node]..off[node + 1]]
    }

    fn is_empty(&self, message_type: usize) -> bool {
        self.neighbors[message_type].is_empty()
    }

    /// Mean of in-neighbour rows; zero rows for nodes without neighbours.
    fn aggregate(&self, message_type: usize, h: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(h.dim());
        for i in 0..self.n {
            let nbrs = self.in_neighbors(message_type, i);
            if nbrs.is_empty() {
                continue;
            }
            let scale = 1.0 / nbrs.len() as f64;
            let mut row = out.row_mut(i);
            for &j in nbrs {
                row.scaled_add(scale, &h.row(j));
            }
        }
        out
    }

    /// Adjoint of [`Adjacency::aggregate`], accumulated into `dh`.
    fn scatter(&self, message_type: usize, dm: ArrayView2<f64>, dh: &mut Array2<f64>) {
        for i in 0..self.n {
            let nbrs = self.in_neighbors(message_type, i);
            if nbrs.is_empty() {
                continue;
            }
            let scale = 1.0 / nbrs.len() as f64;
            let grad = dm.row(i);
            for &j in nbrs {
                dh.row_mut(j).scaled_add(scale, &grad);
            }
        }
    }
}

/// Final-layer node representations, addressed by [`NodeId`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    counts: [usize; 3],
    values: Array2<f64>,
}

impl EmbeddingTable {
    pub fn new(g: &HeteroGraph, values: Array2<f64>) -> Self {
        assert_eq!(values.nrows(), g.num_nodes());
        EmbeddingTable {
            counts: NodeKind::ALL.map(|k| g.count(k)),
            values,
        }
    }

    fn global(&self, id: NodeId) -> usize {
        self.counts[..id.kind as usize].iter().sum::<usize>() + id.index
    }

    pub fn get(&self, id: NodeId) -> ArrayView1<'_, f64> {
        assert!(id.index < self.counts[id.kind as usize], "{id} out of range");
        self.values.row(self.global(id))
    }

    pub fn user(&self, index: usize) -> ArrayView1<'_, f64> {
        self.get(NodeId::user(index))
    }

    /// Rows of the given users, stacked in order.
    pub fn users(&self, indices: &[usize]) -> Array2<f64> {
        let rows: Vec<usize> = indices
            .iter()
            .map(|&u| self.global(NodeId::user(u)))
            .collect();
        self.values.select(Axis(0), &rows)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Layer inputs; `inputs[l]` feeds layer `l`, the last entry is the output.
    inputs: Vec<Array2<f64>>,
    aggregated: Vec<Vec<Option<Array2<f64>>>>,
    pre_activation: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.inputs.last().expect("at least the input layer")
    }

    /// Smallest |pre-activation| over all layers; finite differences are only
    /// meaningful when this exceeds the step size.
    pub fn min_abs_pre_activation(&self) -> f64 {
        self.pre_activation
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

pub(crate) fn check_inputs(g: &HeteroGraph, model: &RgcnModel) -> Result<()> {
    if g.feature_dim() != model.config.input_dim {
        return Err(Error::InvalidArgument(format!(
            "graph feature dimension {} does not match model input width {}",
            g.feature_dim(),
            model.config.input_dim
        )));
    }
    if g.features().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("node features".into()));
    }
    Ok(())
}

/// Runs all layers over the whole graph.
pub fn encode(adj: &Adjacency, features: &Array2<f64>, params: &Params) -> ForwardCache {
    let mut inputs = vec![features.clone()];
    let mut aggregated = Vec::with_capacity(params.layers.len());
    let mut pre_activation = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let h = inputs.last().expect("non-empty");
        let mut z = h.dot(&layer.self_weight.t());
        let mut aggs = Vec::with_capacity(NUM_MESSAGE_TYPES);
        for (r, w) in layer.relation_weights.iter().enumerate() {
            if adj.is_empty(r) {
                aggs.push(None);
                continue;
            }
            let m = adj.aggregate(r, h.view());
            z += &m.dot(&w.t());
            aggs.push(Some(m));
        }
        let out = z.mapv(|v| v.max(0.0));
        aggregated.push(aggs);
        pre_activation.push(z);
        inputs.push(out);
    }
    ForwardCache {
        inputs,
        aggregated,
        pre_activation,
    }
}

/// Back-propagates `d_out` (gradient w.r.t. final embeddings) through the
/// encoder, accumulating weight gradients into `grads`.
pub fn backward_encoder(
    adj: &Adjacency,
    params: &Params,
    cache: &ForwardCache,
    d_out: Array2<f64>,
    grads: &mut Params,
) {
    let mut d_h = d_out;
    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let z = &cache.pre_activation[l];
        let h_in = &cache.inputs[l];
        let mut d_z = d_h;
        d_z.zip_mut_with(z, |d, &zv| {
            if zv <= 0.0 {
                *d = 0.0;
            }
        });
        let g_layer = &mut grads.layers[l];
        g_layer.self_weight += &d_z.t().dot(h_in);
        let mut d_in = d_z.dot(&layer.self_weight);
        for (r, w) in layer.relation_weights.iter().enumerate() {
            if let Some(m) = &cache.aggregated[l][r] {
                g_layer.relation_weights[r] += &d_z.t().dot(m);
                let d_m = d_z.dot(w);
                adj.scatter(r, d_m.view(), &mut d_in);
            }
        }
        d_h = d_in;
    }
}

/// Logits of one head for the given embedding rows.
pub fn head_logits(params: &Params, task: crate::graph::Task, emb: ArrayView2<f64>) -> Array2<f64> {
    let head = params.head(task);
    let mut logits = emb.dot(&head.weight.t());
    logits += &head.bias;
    logits
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub embeddings: EmbeddingTable,
    /// Per-source logits for (factuality, bias), one row per source index.
    pub logits: [Array2<f64>; 2],
}

/// Encodes every node and applies both heads to the sources.
pub fn forward(g: &HeteroGraph, model: &RgcnModel) -> Result<ForwardOutput> {
    check_inputs(g, model)?;
    let adj = Adjacency::new(g);
    let cache = encode(&adj, g.features(), &model.params);
    let out = cache.output().clone();
    let n_sources = g.count(NodeKind::Source);
    let source_rows = out.slice(ndarray::s![..n_sources, ..]);
    let logits = crate::graph::Task::ALL.map(|t| head_logits(&model.params, t, source_rows));
    let embeddings = EmbeddingTable::new(g, out);
    if !embeddings.is_finite() {
        return Err(Error::NonFinite("embeddings".into()));
    }
    Ok(ForwardOutput { embeddings, logits })
}

/// Embeddings only; the refresh step after edge injection.
pub fn embed(g: &HeteroGraph, model: &RgcnModel) -> Result<EmbeddingTable> {
    forward(g, model).map(|f| f.embeddings)
}
