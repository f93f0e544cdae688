use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{OptimizerKind, Params, RgcnModel};
use super::propagate::{backward_encoder, check_inputs, encode, head_logits, Adjacency};
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeId, NodeKind, Relation, Split, Task};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn log_softmax(row: ArrayView1<f64>) -> Vec<f64> {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Labeled sources for training: (source index, [factuality class, bias class]).
pub fn labeled_sources(g: &HeteroGraph, split: Split) -> Vec<(usize, [usize; 2])> {
    g.nodes_in_split(NodeKind::Source, split)
        .into_iter()
        .filter_map(|s| {
            g.label(s)
                .map(|l| (s, [l.class(Task::Factuality), l.class(Task::Bias)]))
        })
        .collect()
}

/// Summed, weighted cross-entropy of both heads over `batch`, averaged over
/// the batch per task. Returns the gradient when `with_grad` is set.
pub fn classification_loss(
    adj: &Adjacency,
    features: &Array2<f64>,
    params: &Params,
    task_weights: [f64; 2],
    batch: &[(usize, [usize; 2])],
    with_grad: bool,
) -> (f64, Option<Params>) {
    let cache = encode(adj, features, params);
    let emb = cache.output();
    let rows: Vec<usize> = batch.iter().map(|&(s, _)| s).collect();
    let batch_emb = emb.select(Axis(0), &rows);
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grads = with_grad.then(|| Params::zeros_like(params));
    let mut d_emb = Array2::zeros(emb.dim());
    for task in Task::ALL {
        let w = task_weights[task as usize];
        let logits = head_logits(params, task, batch_emb.view());
        let mut d_logits = Array2::zeros(logits.dim());
        for (b, &(_, gold)) in batch.iter().enumerate() {
            let lp = log_softmax(logits.row(b));
            let y = gold[task as usize];
            loss += -w * scale * lp[y];
            for c in 0..Task::NUM_CLASSES {
                let p = lp[c].exp();
                d_logits[[b, c]] = w * scale * (p - if c == y { 1.0 } else { 0.0 });
            }
        }
        if let Some(g) = grads.as_mut() {
            let head = &mut g.heads[task as usize];
            head.weight += &d_logits.t().dot(&batch_emb);
            head.bias += &d_logits.sum_axis(Axis(0));
            let d_rows = d_logits.dot(&params.head(task).weight);
            for (b, &row) in rows.iter().enumerate() {
                d_emb.row_mut(row).scaled_add(1.0, &d_rows.row(b));
            }
        }
    }
    if let Some(g) = grads.as_mut() {
        backward_encoder(adj, params, &cache, d_emb, g);
    }
    (loss, grads)
}

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        let mut p = other.clone();
        for s in p.slices_mut() {
            s.fill(0.0);
        }
        p
    }
}

/// Plain SGD or Adam over [`Params`].
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    first: Option<Params>,
    second: Option<Params>,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            first: None,
            second: None,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => params.add_scaled(grads, -self.lr),
            OptimizerKind::Adam => {
                let m = self.first.get_or_insert_with(|| Params::zeros_like(grads));
                let v = self.second.get_or_insert_with(|| Params::zeros_like(grads));
                let t = self.step as i32;
                let c1 = 1.0 - Self::BETA1.powi(t);
                let c2 = 1.0 - Self::BETA2.powi(t);
                let tensors = params
                    .slices_mut()
                    .into_iter()
                    .zip(grads.slices())
                    .zip(m.slices_mut())
                    .zip(v.slices_mut());
                for (((p, g), m), v) in tensors {
                    for i in 0..p.len() {
                        m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                        v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
                    }
                }
            }
        }
    }
}

/// Supervised training of both heads on labeled Train sources. Returns the
/// mean batch loss of each epoch.
pub fn train_classification(
    g: &HeteroGraph,
    model: &mut RgcnModel,
    epochs: usize,
) -> Result<Vec<f64>> {
    check_inputs(g, model)?;
    let mut sources = labeled_sources(g, Split::Train);
    if sources.is_empty() {
        return Err(Error::Precondition("no labeled Train sources".into()));
    }
    let adj = Adjacency::new(g);
    let cfg = model.config.clone();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c1a5);
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        if sources.len() > cfg.batch_size {
            sources.shuffle(&mut rng);
        }
        let mut total = 0.0;
        let mut batches = 0;
        for batch in sources.chunks(cfg.batch_size) {
            let (loss, grads) = classification_loss(
                &adj,
                g.features(),
                &model.params,
                cfg.task_weights,
                batch,
                true,
            );
            opt.step(&mut model.params, &grads.expect("requested"));
            total += loss;
            batches += 1;
        }
        if !model.params.is_finite() {
            return Err(Error::NonFinite("model weights after update".into()));
        }
        trace.push(total / batches as f64);
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkPredConfig {
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for LinkPredConfig {
    fn default() -> Self {
        LinkPredConfig {
            margin: 1.0,
            negatives_per_positive: 1,
            epochs: 50,
            lr: 0.001,
            seed: 0,
        }
    }
}

impl LinkPredConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(Error::InvalidArgument("margin must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument("link prediction lr must be > 0".into()));
        }
        Ok(())
    }
}

/// Member users of the communities plus the articles and sources they are
/// directly connected to, as global node indices.
pub fn interacted_subgraph(g: &HeteroGraph, communities: &[Vec<usize>]) -> BTreeSet<usize> {
    let mut nodes = BTreeSet::new();
    for &u in communities.iter().flatten() {
        nodes.insert(g.global(NodeId::user(u)));
        for s in g.followed_sources(u) {
            nodes.insert(g.global(NodeId::source(s)));
        }
        for a in g.propagated_articles(u) {
            nodes.insert(g.global(NodeId::article(a)));
        }
    }
    nodes
}

/// Every stored edge with both endpoints in `nodes`.
pub fn positive_pairs(g: &HeteroGraph, nodes: &BTreeSet<usize>) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for relation in Relation::ALL {
        let (sk, dk) = relation.signature();
        for (s, d) in g.edges(relation) {
            let a = g.global(NodeId::new(sk, s));
            let b = g.global(NodeId::new(dk, d));
            if nodes.contains(&a) && nodes.contains(&b) {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

/// Uniform user pairs drawn from two different communities.
pub fn sample_negatives<R: Rng>(
    g: &HeteroGraph,
    communities: &[Vec<usize>],
    count: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let members: Vec<(usize, usize)> = communities
        .iter()
        .enumerate()
        .flat_map(|(c, m)| m.iter().map(move |&u| (c, u)))
        .collect();
    if communities.iter().filter(|c| !c.is_empty()).count() < 2 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (ca, ua) = members[rng.random_range(0..members.len())];
        let others: Vec<usize> = members
            .iter()
            .filter(|(c, _)| *c != ca)
            .map(|&(_, u)| u)
            .collect();
        let ub = others[rng.random_range(0..others.len())];
        out.push((g.global(NodeId::user(ua)), g.global(NodeId::user(ub))));
    }
    out
}

/// `sum_pos ||e_u - e_v||^2 + sum_neg max(0, margin - ||e_u - e_w||)^2`
pub fn link_prediction_loss(
    adj: &Adjacency,
    features: &Array2<f64>,
    params: &Params,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
    margin: f64,
    with_grad: bool,
) -> (f64, Option<Params>) {
    let cache = encode(adj, features, params);
    let emb = cache.output();
    let mut d_emb = Array2::<f64>::zeros(emb.dim());
    let mut loss = 0.0;
    for &(a, b) in positives {
        let diff = &emb.row(a) - &emb.row(b);
        loss += diff.dot(&diff);
        if with_grad {
            d_emb.row_mut(a).scaled_add(2.0, &diff);
            d_emb.row_mut(b).scaled_add(-2.0, &diff);
        }
    }
    for &(a, b) in negatives {
        let diff = &emb.row(a) - &emb.row(b);
        let dist = diff.dot(&diff).sqrt();
        if dist >= margin {
            continue;
        }
        let gap = margin - dist;
        loss += gap * gap;
        if with_grad && dist > 0.0 {
            let coeff = -2.0 * gap / dist;
            d_emb.row_mut(a).scaled_add(coeff, &diff);
            d_emb.row_mut(b).scaled_add(-coeff, &diff);
        }
    }
    let grads = with_grad.then(|| {
        let mut g = Params::zeros_like(params);
        backward_encoder(adj, params, &cache, d_emb, &mut g);
        g
    });
    (loss, grads)
}

/// Unsupervised fine-tuning on the sub-graph the communities interacted
/// with. No gold labels are read. Returns the loss of each epoch.
pub fn train_link_prediction(
    g: &HeteroGraph,
    model: &mut RgcnModel,
    communities: &[Vec<usize>],
    cfg: &LinkPredConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_inputs(g, model)?;
    if communities.is_empty() || communities.iter().any(Vec::is_empty) {
        return Err(Error::Precondition(
            "link prediction needs at least one non-empty community".into(),
        ));
    }
    let adj = Adjacency::new(g);
    let nodes = interacted_subgraph(g, communities);
    let positives = positive_pairs(g, &nodes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(model.config.optimizer, cfg.lr);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let neg_count = positives.len().max(1) * cfg.negatives_per_positive;
    for _ in 0..cfg.epochs {
        let negatives = sample_negatives(g, communities, neg_count, &mut rng);
        let (loss, grads) = link_prediction_loss(
            &adj,
            g.features(),
            &model.params,
            &positives,
            &negatives,
            cfg.margin,
            true,
        );
        let grads = grads.expect("requested");
        opt.step(&mut model.params, &grads);
        if !model.params.is_finite() {
            return Err(Error::NonFinite("model weights after update".into()));
        }
        trace.push(loss);
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePrediction {
    pub source: usize,
    /// Predicted class per task, indexed by [`Task`].
    pub classes: [usize; 2],
}

impl SourcePrediction {
    pub fn class(&self, task: Task) -> usize {
        self.classes[task as usize]
    }
}

/// Argmax of both heads for the sources of `split` (all sources when `None`).
pub fn classify_sources(
    g: &HeteroGraph,
    model: &RgcnModel,
    split: Option<Split>,
) -> Result<Vec<SourcePrediction>> {
    let out = super::propagate::forward(g, model)?;
    Ok(predictions_from_logits(g, &out.logits, split))
}

pub fn predictions_from_logits(
    g: &HeteroGraph,
    logits: &[Array2<f64>; 2],
    split: Option<Split>,
) -> Vec<SourcePrediction> {
    (0..g.count(NodeKind::Source))
        .filter(|&s| split.is_none() || g.split(NodeId::source(s)) == split)
        .map(|s| SourcePrediction {
            source: s,
            classes: [argmax(logits[0].row(s)), argmax(logits[1].row(s))],
        })
        .collect()
}
