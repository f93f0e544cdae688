use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::propagate::NUM_MESSAGE_TYPES;
use crate::error::{Error, Result};
use crate::graph::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RgcnConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Loss weights for (factuality, bias).
    pub task_weights: [f64; 2],
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for RgcnConfig {
    fn default() -> Self {
        RgcnConfig {
            input_dim: 773,
            hidden: 128,
            layers: 5,
            lr: 0.001,
            batch_size: 128,
            task_weights: [1.0, 1.0],
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl RgcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "layers, hidden and batch_size must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("bad learning rate {}", self.lr)));
        }
        if self.task_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("task weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One message-passing layer: a self weight and one weight per message type,
/// each of shape (out, in).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub self_weight: Array2<f64>,
    pub relation_weights: Vec<Array2<f64>>,
}

/// Affine classification head mapping an embedding to 3 logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All trainable tensors. Gradients use the same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub layers: Vec<Layer>,
    /// Indexed by [`Task`]: factuality head first, then bias.
    pub heads: [Head; 2],
}

impl Params {
    pub fn zeros(cfg: &RgcnConfig) -> Self {
        let layers = (0..cfg.layers)
            .map(|l| {
                let (out, inp) = layer_shape(cfg, l);
                Layer {
                    self_weight: Array2::zeros((out, inp)),
                    relation_weights: vec![Array2::zeros((out, inp)); NUM_MESSAGE_TYPES],
                }
            })
            .collect();
        let head = || Head {
            weight: Array2::zeros((Task::NUM_CLASSES, cfg.hidden)),
            bias: Array1::zeros(Task::NUM_CLASSES),
        };
        Params {
            layers,
            heads: [head(), head()],
        }
    }

    pub fn head(&self, task: Task) -> &Head {
        &self.heads[task as usize]
    }

    /// Every tensor as a flat slice, in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(layer.self_weight.as_slice().expect("standard layout"));
            for w in &layer.relation_weights {
                out.push(w.as_slice().expect("standard layout"));
            }
        }
        for head in &self.heads {
            out.push(head.weight.as_slice().expect("standard layout"));
            out.push(head.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.self_weight.as_slice_mut().expect("standard layout"));
            for w in &mut layer.relation_weights {
                out.push(w.as_slice_mut().expect("standard layout"));
            }
        }
        for head in &mut self.heads {
            out.push(head.weight.as_slice_mut().expect("standard layout"));
            out.push(head.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Human-readable tensor names aligned with [`Params::slices`].
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(format!("layer{l}.self"));
            for r in 0..layer.relation_weights.len() {
                out.push(format!("layer{l}.rel{r}"));
            }
        }
        for task in Task::ALL {
            out.push(format!("{task}.weight"));
            out.push(format!("{task}.bias"));
        }
        out
    }

    pub fn num_values(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
        }
    }
}

pub(crate) fn layer_shape(cfg: &RgcnConfig, layer: usize) -> (usize, usize) {
    let inp = if layer == 0 { cfg.input_dim } else { cfg.hidden };
    (cfg.hidden, inp)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RgcnModel {
    pub config: RgcnConfig,
    pub params: Params,
}

impl RgcnModel {
    /// Glorot-uniform weights, zero head biases, seeded by `config.seed`.
    pub fn new(config: RgcnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::zeros(&config);
        let mut glorot = |w: &mut Array2<f64>| {
            let (out, inp) = w.dim();
            let limit = (6.0 / (out + inp) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-limit..limit));
        };
        for layer in &mut params.layers {
            glorot(&mut layer.self_weight);
            for w in &mut layer.relation_weights {
                glorot(w);
            }
        }
        for head in &mut params.heads {
            glorot(&mut head.weight);
        }
        Ok(RgcnModel { config, params })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }
}
