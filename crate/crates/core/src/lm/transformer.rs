//! A tiny decoder-only transformer: learned positions, pre-RMSNorm blocks,
//! multi-head causal attention, ReLU feed-forward, tied output embedding.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tokenizer::{self, BOS, EOS, VOCAB_SIZE};
use crate::params::{NamedTensors, ParamError};
use crate::tape::{Tape, Var};

const RMS_EPS: f64 = 1e-5;
const PER_BLOCK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self { vocab_size: VOCAB_SIZE, d_model: 64, n_layers: 2, n_heads: 4, d_ff: 128, max_seq: 96 }
    }
}

impl TransformerConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.vocab_size != VOCAB_SIZE {
            return Err(format!("byte tokenizer needs vocab_size {VOCAB_SIZE}"));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(format!("d_model {} not divisible by {} heads", self.d_model, self.n_heads));
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.max_seq < 4 {
            return Err("layers, d_ff must be positive and max_seq at least 4".into());
        }
        Ok(())
    }
}

/// Parameters of one transformer block.
#[derive(Debug, Clone, PartialEq)]
struct Block {
    norm1: Array2<f64>,
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
    wo: Array2<f64>,
    norm2: Array2<f64>,
    w1: Array2<f64>,
    w2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyTransformer {
    config: TransformerConfig,
    tok_emb: Array2<f64>,
    pos_emb: Array2<f64>,
    blocks: Vec<Block>,
    final_norm: Array2<f64>,
}

/// Output of a forward pass on the tape.
#[derive(Debug, Clone, Copy)]
pub struct LmOutput {
    /// `[T, V]`
    pub logits: Var,
    /// `[T, d_model]`, after the final norm
    pub hidden: Var,
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

impl TinyTransformer {
    pub fn new(config: TransformerConfig, seed: u64) -> Self {
        config.validate().expect("valid transformer config");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let mut normal = |rows: usize, cols: usize, std: f64| {
            let dist = Normal::new(0.0, std).unwrap();
            Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng))
        };
        let proj_std = 0.02 / (2.0 * config.n_layers as f64).sqrt();
        let tok_emb = normal(config.vocab_size, d, 0.02);
        let pos_emb = normal(config.max_seq, d, 0.01);
        let blocks = (0..config.n_layers)
            .map(|_| Block {
                norm1: Array2::ones((1, d)),
                wq: normal(d, d, 1.0 / (d as f64).sqrt()),
                wk: normal(d, d, 1.0 / (d as f64).sqrt()),
                wv: normal(d, d, 1.0 / (d as f64).sqrt()),
                wo: normal(d, d, proj_std),
                norm2: Array2::ones((1, d)),
                w1: normal(d, config.d_ff, 1.0 / (d as f64).sqrt()),
                w2: normal(config.d_ff, d, proj_std),
            })
            .collect();
        Self { final_norm: Array2::ones((1, d)), config, tok_emb, pos_emb, blocks }
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters in a fixed order.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for b in &self.blocks {
            out.extend([&b.norm1, &b.wq, &b.wk, &b.wv, &b.wo, &b.norm2, &b.w1, &b.w2]);
        }
        out.push(&self.final_norm);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for b in &mut self.blocks {
            out.extend([
                &mut b.norm1,
                &mut b.wq,
                &mut b.wk,
                &mut b.wv,
                &mut b.wo,
                &mut b.norm2,
                &mut b.w1,
                &mut b.w2,
            ]);
        }
        out.push(&mut self.final_norm);
        out
    }

    pub fn tensor_names(&self, prefix: &str) -> Vec<String> {
        let mut out = vec![format!("{prefix}.tok_emb"), format!("{prefix}.pos_emb")];
        for i in 0..self.blocks.len() {
            for n in ["norm1", "wq", "wk", "wv", "wo", "norm2", "w1", "w2"] {
                out.push(format!("{prefix}.block{i}.{n}"));
            }
        }
        out.push(format!("{prefix}.final_norm"));
        out
    }

    pub fn write_tensors(&self, prefix: &str, out: &mut NamedTensors) {
        for (name, t) in self.tensor_names(prefix).into_iter().zip(self.tensors()) {
            out.push(name, t.clone());
        }
    }

    /// Rebuilds a model of `config` from tensors written under `prefix`.
    pub fn read_tensors(config: TransformerConfig, prefix: &str, src: &mut NamedTensors) -> Result<Self, ParamError> {
        config.validate().map_err(ParamError::Format)?;
        let mut model = Self::new(config, 0);
        let names = model.tensor_names(prefix);
        for (name, slot) in names.iter().zip(model.tensors_mut()) {
            *slot = src.take(name, slot.dim())?;
        }
        Ok(model)
    }

    /// Registers every parameter on `tape`, in [`Self::tensors`] order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors().into_iter().map(|t| tape.param(t)).collect()
    }

    /// Forward pass on the tape with parameters `vars` from [`Self::register`].
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &[Var], tokens: &[usize]) -> LmOutput {
        let c = &self.config;
        assert!(!tokens.is_empty() && tokens.len() <= c.max_seq, "sequence length {}", tokens.len());
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let tok = tape.gather_rows(vars[0], tokens);
        let pos = tape.gather_rows(vars[1], &positions);
        let mut x = tape.add(tok, pos);
        let dh = c.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        for l in 0..c.n_layers {
            let p = &vars[2 + l * PER_BLOCK..2 + (l + 1) * PER_BLOCK];
            let h = tape.rms_norm(x, p[0]);
            let q = tape.matmul(h, p[1]);
            let k = tape.matmul(h, p[2]);
            let v = tape.matmul(h, p[3]);
            let heads: Vec<Var> = (0..c.n_heads)
                .map(|hd| {
                    let qh = tape.slice_cols(q, hd * dh, dh);
                    let kh = tape.slice_cols(k, hd * dh, dh);
                    let vh = tape.slice_cols(v, hd * dh, dh);
                    let scores = tape.matmul_t(qh, kh);
                    let scores = tape.scale(scores, scale);
                    let attn = tape.causal_softmax(scores);
                    tape.matmul(attn, vh)
                })
                .collect();
            let cat = tape.concat_cols(&heads);
            let o = tape.matmul(cat, p[4]);
            x = tape.add(x, o);
            let h2 = tape.rms_norm(x, p[5]);
            let f = tape.matmul(h2, p[6]);
            let f = tape.relu(f);
            let f = tape.matmul(f, p[7]);
            x = tape.add(x, f);
        }
        let hidden = tape.rms_norm(x, vars[vars.len() - 1]);
        let logits = tape.matmul_t(hidden, vars[0]);
        LmOutput { logits, hidden }
    }

    /// Forward pass without gradients: `([T, V] logits, [T, d] hidden)`.
    pub fn forward(&self, tokens: &[usize]) -> (Array2<f64>, Array2<f64>) {
        let mut cache = KvCache::new(self);
        let mut hidden = Array2::zeros((tokens.len(), self.config.d_model));
        for (i, &t) in tokens.iter().enumerate() {
            hidden.row_mut(i).assign(&cache.step(self, t));
        }
        let logits = hidden.dot(&self.tok_emb.t());
        (logits, hidden)
    }

    /// Continues `prompt` for up to `max_tokens` bytes, stopping at EOS.
    /// Temperature 0 is greedy; otherwise sampling is seeded from `seed`.
    pub fn generate(&self, prompt: &str, max_tokens: usize, temperature: f64, seed: u64) -> String {
        let max_seq = self.config.max_seq;
        let mut context = vec![BOS];
        context.extend(tokenizer::encode(prompt));
        let keep = (max_seq / 2).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut cache = KvCache::new(self);
        let mut last = prefill(self, &mut cache, &context[context.len().saturating_sub(max_seq)..]);
        for _ in 0..max_tokens {
            let mut logits: Vec<f64> = self.tok_emb.dot(&last).to_vec();
            let next = if temperature <= 0.0 {
                argmax(&logits)
            } else {
                logits.iter_mut().for_each(|l| *l /= temperature);
                softmax_in_place(&mut logits);
                sample(&logits, &mut rng)
            };
            if next == EOS {
                break;
            }
            out.push(next);
            context.push(next);
            if cache.len() == max_seq {
                cache = KvCache::new(self);
                last = prefill(self, &mut cache, &context[context.len() - keep..]);
            } else {
                last = cache.step(self, next);
            }
        }
        tokenizer::decode(&out)
    }
}

fn prefill(model: &TinyTransformer, cache: &mut KvCache, tokens: &[usize]) -> Array1<f64> {
    let mut last = Array1::zeros(model.config.d_model);
    for &t in tokens {
        last = cache.step(model, t);
    }
    last
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

fn sample(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Per-layer key/value rows for incremental decoding.
struct KvCache {
    keys: Vec<Vec<Array1<f64>>>,
    values: Vec<Vec<Array1<f64>>>,
}

impl KvCache {
    fn new(model: &TinyTransformer) -> Self {
        let n = model.config.n_layers;
        Self { keys: vec![Vec::new(); n], values: vec![Vec::new(); n] }
    }

    fn len(&self) -> usize {
        self.keys[0].len()
    }

    /// Processes one token and returns its final-norm hidden state.
    fn step(&mut self, model: &TinyTransformer, token: usize) -> Array1<f64> {
        let c = &model.config;
        let pos = self.len();
        assert!(pos < c.max_seq, "cache full");
        let dh = c.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x = &model.tok_emb.row(token) + &model.pos_emb.row(pos);
        for (l, b) in model.blocks.iter().enumerate() {
            let h = rms_row(x.view(), &b.norm1);
            let q = h.dot(&b.wq);
            self.keys[l].push(h.dot(&b.wk));
            self.values[l].push(h.dot(&b.wv));
            let mut cat = Array1::zeros(c.d_model);
            for hd in 0..c.n_heads {
                let range = s![hd * dh..(hd + 1) * dh];
                let qh = q.slice(range);
                let mut scores: Vec<f64> =
                    self.keys[l].iter().map(|k| qh.dot(&k.slice(range)) * scale).collect();
                softmax_in_place(&mut scores);
                let mut head = cat.slice_mut(range);
                for (w, v) in scores.iter().zip(&self.values[l]) {
                    head.scaled_add(*w, &v.slice(range));
                }
            }
            x = x + cat.dot(&b.wo);
            let h2 = rms_row(x.view(), &b.norm2);
            let f = h2.dot(&b.w1).mapv(|v| v.max(0.0)).dot(&b.w2);
            x = x + f;
        }
        rms_row(x.view(), &model.final_norm)
    }
}

fn rms_row(x: ArrayView1<f64>, gain: &Array2<f64>) -> Array1<f64> {
    let m = x.len() as f64;
    let inv = 1.0 / (x.dot(&x) / m + RMS_EPS).sqrt();
    x.mapv(|v| v * inv) * &gain.index_axis(Axis(0), 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::max_gradient_error;

    fn rms_rows(x: &Array2<f64>, gain: &Array2<f64>) -> Array2<f64> {
        let m = x.ncols() as f64;
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let inv = 1.0 / (row.dot(&row) / m + RMS_EPS).sqrt();
            row *= inv;
        }
        out * gain
    }

    /// Full-matrix reference forward returning final hidden states.
    fn forward_dense(model: &TinyTransformer, tokens: &[usize]) -> Array2<f64> {
        let c = &model.config;
        let t = tokens.len();
        let mut x = Array2::from_shape_fn((t, c.d_model), |(i, j)| model.tok_emb[[tokens[i], j]] + model.pos_emb[[i, j]]);
        let dh = c.head_dim();
        for b in &model.blocks {
            let h = rms_rows(&x, &b.norm1);
            let (q, k, v) = (h.dot(&b.wq), h.dot(&b.wk), h.dot(&b.wv));
            let mut cat = Array2::zeros((t, c.d_model));
            for hd in 0..c.n_heads {
                let r = s![.., hd * dh..(hd + 1) * dh];
                let mut scores = q.slice(r).dot(&k.slice(r).t()) / (dh as f64).sqrt();
                for i in 0..t {
                    let mut row: Vec<f64> = scores.row(i).slice(s![..=i]).to_vec();
                    softmax_in_place(&mut row);
                    for j in 0..t {
                        scores[[i, j]] = if j <= i { row[j] } else { 0.0 };
                    }
                }
                cat.slice_mut(r).assign(&scores.dot(&v.slice(r)));
            }
            x = x + cat.dot(&b.wo);
            let h2 = rms_rows(&x, &b.norm2);
            x = x + h2.dot(&b.w1).mapv(|v| v.max(0.0)).dot(&b.w2);
        }
        rms_rows(&x, &model.final_norm)
    }

    fn tiny() -> TransformerConfig {
        TransformerConfig { d_model: 8, n_layers: 2, n_heads: 2, d_ff: 12, max_seq: 12, ..Default::default() }
    }

    #[test]
    fn default_size_is_small() {
        let m = TinyTransformer::new(TransformerConfig::default(), 0);
        assert!(m.parameter_count() < 100_000, "{}", m.parameter_count());
    }

    #[test]
    fn tape_cache_and_dense_forwards_agree() {
        let m = TinyTransformer::new(tiny(), 3);
        let tokens = [BOS, 72, 105, 33, 10, 72];
        let mut tape = Tape::new();
        let vars = m.register(&mut tape);
        let out = m.forward_on_tape(&mut tape, &vars, &tokens);
        let (logits, hidden) = m.forward(&tokens);
        let dense = forward_dense(&m, &tokens);
        assert_eq!(tape.value(out.logits).dim(), (6, VOCAB_SIZE));
        for ((i, j), v) in hidden.indexed_iter() {
            assert!((tape.value(out.hidden)[[i, j]] - v).abs() < 1e-10);
            assert!((dense[[i, j]] - v).abs() < 1e-10);
        }
        for ((i, j), v) in logits.indexed_iter() {
            assert!((tape.value(out.logits)[[i, j]] - v).abs() < 1e-10);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = TinyTransformer::new(tiny(), 4);
        let tokens = [BOS, 3, 7, 3, 9];
        let targets = [3, 7, 3, 9, EOS];
        let mask = [false, true, true, true, true];
        let inputs: Vec<Array2<f64>> = m.tensors().into_iter().cloned().collect();
        let err = max_gradient_error(
            &inputs,
            |t, v| {
                let out = m.forward_on_tape(t, v, &tokens);
                t.lm_loss(out.logits, &targets, &mask).unwrap()
            },
            1e-5,
        );
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let m = TinyTransformer::new(tiny(), 5);
        let a = m.generate("hello", 30, 0.0, 1);
        assert_eq!(a, m.generate("hello", 30, 0.0, 99));
        assert!(a.len() <= 30 * 3);
        let s1 = m.generate("hello", 30, 1.0, 7);
        assert_eq!(s1, m.generate("hello", 30, 1.0, 7));
        // long prompts slide the window instead of overflowing it
        let long = "x".repeat(100);
        let _ = m.generate(&long, 20, 0.0, 0);
    }

    #[test]
    fn tensor_round_trip() {
        let m = TinyTransformer::new(tiny(), 6);
        let mut t = NamedTensors::new();
        m.write_tensors("dec", &mut t);
        let back = TinyTransformer::read_tensors(tiny(), "dec", &mut t).unwrap();
        assert_eq!(back, m);
        assert!(t.is_empty());
    }
}
