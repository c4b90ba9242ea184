//! Two-layer (by default) graph convolutional network with a per-node
//! correctness classifier.
//!
//! `H^{l+1} = ReLU(Â H^l W^l)` with no activation after the last layer and
//! no bias inside propagation. Logits are `h · c + b`.

use std::path::Path;

use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::GraphBatch;
use crate::params::{NamedTensors, ParamError};
use crate::tape::{Gradients, Tape, Var};
use crate::util::canonical_sum;

#[derive(Debug, thiserror::Error)]
pub enum GcnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Checkpoint(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcnConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self { hidden_dim: 256, num_layers: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub layer_weights: Vec<Array2<f64>>,
    /// `[hidden, 1]`
    pub classifier: Array2<f64>,
    pub classifier_bias: f64,
}

impl GcnParams {
    /// Glorot-uniform weights, zero classifier bias.
    pub fn init(input_dim: usize, config: &GcnConfig, seed: u64) -> Self {
        assert!(config.num_layers >= 1 && config.hidden_dim >= 1 && input_dim >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
        };
        let mut layer_weights = Vec::with_capacity(config.num_layers);
        let mut dim = input_dim;
        for _ in 0..config.num_layers {
            layer_weights.push(glorot(dim, config.hidden_dim));
            dim = config.hidden_dim;
        }
        let classifier = glorot(config.hidden_dim, 1);
        Self { layer_weights, classifier, classifier_bias: 0.0 }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_weights[0].nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.classifier.nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_weights.len()
    }

    pub fn validate(&self) -> Result<(), GcnError> {
        if self.layer_weights.is_empty() {
            return Err(GcnError::Dimension("no propagation layers".into()));
        }
        for pair in self.layer_weights.windows(2) {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(GcnError::Dimension(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].ncols(),
                    pair[1].nrows()
                )));
            }
        }
        let last = self.layer_weights.last().unwrap().ncols();
        if self.classifier.dim() != (last, 1) {
            return Err(GcnError::Dimension(format!(
                "classifier shape {:?}, expected ({last}, 1)",
                self.classifier.dim()
            )));
        }
        Ok(())
    }

    pub fn to_tensors(&self) -> NamedTensors {
        let mut t = NamedTensors::new();
        for (i, w) in self.layer_weights.iter().enumerate() {
            t.push(format!("gcn.layer{i}"), w.clone());
        }
        t.push("gcn.classifier", self.classifier.clone());
        t.push("gcn.classifier_bias", Array2::from_elem((1, 1), self.classifier_bias));
        t
    }

    /// Reads the tensors written by [`Self::to_tensors`] out of `tensors`.
    pub fn from_tensors(tensors: &mut NamedTensors) -> Result<Self, GcnError> {
        let mut layer_weights = Vec::new();
        while let Some(w) = tensors.get(&format!("gcn.layer{}", layer_weights.len())) {
            let shape = w.dim();
            layer_weights.push(tensors.take(&format!("gcn.layer{}", layer_weights.len()), shape)?);
        }
        let hidden = layer_weights
            .last()
            .map(|w| w.ncols())
            .ok_or_else(|| GcnError::Dimension("checkpoint has no GCN layers".into()))?;
        let classifier = tensors.take("gcn.classifier", (hidden, 1))?;
        let classifier_bias = tensors.take("gcn.classifier_bias", (1, 1))?[[0, 0]];
        let params = Self { layer_weights, classifier, classifier_bias };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<(), GcnError> {
        Ok(self.to_tensors().save(path, serde_json::json!({"kind": "gcn"}))?)
    }

    pub fn load(path: &Path) -> Result<Self, GcnError> {
        let (mut t, _) = NamedTensors::load(path)?;
        Self::from_tensors(&mut t)
    }

    pub fn register(&self, tape: &mut Tape) -> GcnVars {
        GcnVars {
            layers: self.layer_weights.iter().map(|w| tape.param(w)).collect(),
            classifier: tape.param(&self.classifier),
            bias: tape.param(&Array2::from_elem((1, 1), self.classifier_bias)),
        }
    }

    /// Gradients shaped like `self`, zero where nothing flowed.
    pub fn gradients(&self, vars: &GcnVars, grads: &Gradients) -> GcnParams {
        GcnParams {
            layer_weights: self
                .layer_weights
                .iter()
                .zip(&vars.layers)
                .map(|(w, v)| grads.get_or_zeros(*v, w))
                .collect(),
            classifier: grads.get_or_zeros(vars.classifier, &self.classifier),
            classifier_bias: grads.get(vars.bias).map_or(0.0, |g| g[[0, 0]]),
        }
    }
}

/// Tape handles for a registered [`GcnParams`].
#[derive(Debug, Clone)]
pub struct GcnVars {
    pub layers: Vec<Var>,
    pub classifier: Var,
    pub bias: Var,
}

/// Node embeddings `[n, hidden]` for one graph on the tape.
pub fn forward_on_tape(tape: &mut Tape, vars: &GcnVars, adjacency: &Array2<f64>, features: &Array2<f64>) -> Var {
    let a = tape.constant(adjacency.clone());
    let mut h = tape.constant(features.clone());
    for (l, w) in vars.layers.iter().enumerate() {
        let xw = tape.matmul(h, *w);
        h = tape.matmul(a, xw);
        if l + 1 < vars.layers.len() {
            h = tape.relu(h);
        }
    }
    h
}

/// Per-node logits `[n, 1]` from embeddings on the tape.
pub fn logits_on_tape(tape: &mut Tape, vars: &GcnVars, embeddings: Var) -> Var {
    let z = tape.matmul(embeddings, vars.classifier);
    tape.add_row(z, vars.bias)
}

/// `[B, N_max]` logits for a padded batch on the tape.
pub fn batch_logits_on_tape(tape: &mut Tape, vars: &GcnVars, batch: &GraphBatch) -> Var {
    let rows: Vec<Var> = (0..batch.batch_size())
        .map(|b| {
            let a = batch.adjacency.slice(s![b, .., ..]).to_owned();
            let x = batch.node_features.slice(s![b, .., ..]).to_owned();
            let h = forward_on_tape(tape, vars, &a, &x);
            let logits = logits_on_tape(tape, vars, h);
            tape.transpose(logits)
        })
        .collect();
    tape.concat_rows(&rows)
}

fn check_batch(batch: &GraphBatch, params: &GcnParams) -> Result<(), GcnError> {
    params.validate()?;
    if batch.feature_dim() != params.input_dim() {
        return Err(GcnError::Dimension(format!(
            "batch features have width {}, GCN expects {}",
            batch.feature_dim(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// `Â · m`, summing each neighbourhood in canonical order so that relabeling
/// nodes permutes the output bit for bit.
fn aggregate(adjacency: ndarray::ArrayView2<f64>, m: &Array2<f64>) -> Array2<f64> {
    let n = adjacency.nrows();
    let mut out = Array2::zeros((n, m.ncols()));
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        for c in 0..m.ncols() {
            terms.clear();
            terms.extend((0..n).filter(|&j| adjacency[[i, j]] != 0.0).map(|j| adjacency[[i, j]] * m[[j, c]]));
            out[[i, c]] = canonical_sum(&mut terms);
        }
    }
    out
}

/// Node embeddings `[B, N_max, hidden]`; padded nodes are zero.
pub fn gcn_forward(batch: &GraphBatch, params: &GcnParams) -> Result<Array3<f64>, GcnError> {
    check_batch(batch, params)?;
    let (b, n, _) = batch.node_features.dim();
    let mut out = Array3::zeros((b, n, params.hidden_dim()));
    for g in 0..b {
        let a = batch.adjacency.slice(s![g, .., ..]);
        let mut h = batch.node_features.slice(s![g, .., ..]).to_owned();
        for (l, w) in params.layer_weights.iter().enumerate() {
            h = aggregate(a, &h.dot(w));
            if l + 1 < params.num_layers() {
                h.mapv_inplace(|x| x.max(0.0));
            }
        }
        for (i, &real) in batch.node_mask.row(g).iter().enumerate() {
            if !real {
                h.row_mut(i).fill(0.0);
            }
        }
        out.slice_mut(s![g, .., ..]).assign(&h);
    }
    Ok(out)
}

/// Pre-sigmoid correctness scores `[B, N_max]`. Padded positions hold the
/// bias and must be excluded through the batch mask.
pub fn node_logits(embeddings: &Array3<f64>, params: &GcnParams) -> Array2<f64> {
    let (b, n, _) = embeddings.dim();
    let c = params.classifier.column(0);
    Array2::from_shape_fn((b, n), |(g, i)| embeddings.slice(s![g, i, ..]).dot(&c) + params.classifier_bias)
}
