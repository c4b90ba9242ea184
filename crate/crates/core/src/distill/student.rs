//! Decomposer-solver student with projection heads and a chain scorer.

use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DistillError;
use crate::lm::{encode, SeededGenerator, TinyTransformer, TransformerConfig, BOS};
use crate::params::NamedTensors;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentConfig {
    pub lm: TransformerConfig,
    pub projection_dim: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self { lm: TransformerConfig::default(), projection_dim: 128 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentUnit {
    pub config: StudentConfig,
    pub decomposer: TinyTransformer,
    pub solver: TinyTransformer,
    /// `[d, P]` and `[1, P]`
    pub proj_dec: Array2<f64>,
    pub proj_dec_bias: Array2<f64>,
    pub proj_sol: Array2<f64>,
    pub proj_sol_bias: Array2<f64>,
    /// `[d, 1]` and `[1, 1]`
    pub scorer: Array2<f64>,
    pub scorer_bias: Array2<f64>,
}

/// Tape handles for a registered student, in [`StudentUnit::tensors`] order.
#[derive(Debug, Clone)]
pub struct StudentVars {
    pub all: Vec<Var>,
    pub decomposer: Vec<Var>,
    pub solver: Vec<Var>,
    pub proj_dec: Var,
    pub proj_dec_bias: Var,
    pub proj_sol: Var,
    pub proj_sol_bias: Var,
    pub scorer: Var,
    pub scorer_bias: Var,
}

impl StudentUnit {
    pub fn new(config: StudentConfig, seed: u64) -> Self {
        let d = config.lm.d_model;
        let p = config.projection_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut normal = |rows: usize, cols: usize| {
            let dist = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).unwrap();
            Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng))
        };
        Self {
            decomposer: TinyTransformer::new(config.lm.clone(), seed),
            solver: TinyTransformer::new(config.lm.clone(), seed.wrapping_add(1)),
            proj_dec: normal(d, p),
            proj_dec_bias: Array2::zeros((1, p)),
            proj_sol: normal(d, p),
            proj_sol_bias: Array2::zeros((1, p)),
            scorer: normal(d, 1),
            scorer_bias: Array2::zeros((1, 1)),
            config,
        }
    }

    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = self.decomposer.tensors();
        out.extend(self.solver.tensors());
        out.extend([
            &self.proj_dec,
            &self.proj_dec_bias,
            &self.proj_sol,
            &self.proj_sol_bias,
            &self.scorer,
            &self.scorer_bias,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = self.decomposer.tensors_mut();
        out.extend(self.solver.tensors_mut());
        out.extend([
            &mut self.proj_dec,
            &mut self.proj_dec_bias,
            &mut self.proj_sol,
            &mut self.proj_sol_bias,
            &mut self.scorer,
            &mut self.scorer_bias,
        ]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn register(&self, tape: &mut Tape) -> StudentVars {
        let all: Vec<Var> = self.tensors().into_iter().map(|t| tape.param(t)).collect();
        let n = self.decomposer.tensors().len();
        let heads = &all[2 * n..];
        StudentVars {
            decomposer: all[..n].to_vec(),
            solver: all[n..2 * n].to_vec(),
            proj_dec: heads[0],
            proj_dec_bias: heads[1],
            proj_sol: heads[2],
            proj_sol_bias: heads[3],
            scorer: heads[4],
            scorer_bias: heads[5],
            all,
        }
    }

    pub fn write_tensors(&self, out: &mut NamedTensors) {
        self.decomposer.write_tensors("decomposer", out);
        self.solver.write_tensors("solver", out);
        out.push("proj_dec", self.proj_dec.clone());
        out.push("proj_dec_bias", self.proj_dec_bias.clone());
        out.push("proj_sol", self.proj_sol.clone());
        out.push("proj_sol_bias", self.proj_sol_bias.clone());
        out.push("scorer", self.scorer.clone());
        out.push("scorer_bias", self.scorer_bias.clone());
    }

    pub fn read_tensors(config: StudentConfig, src: &mut NamedTensors) -> Result<Self, DistillError> {
        let (d, p) = (config.lm.d_model, config.projection_dim);
        Ok(Self {
            decomposer: TinyTransformer::read_tensors(config.lm.clone(), "decomposer", src)?,
            solver: TinyTransformer::read_tensors(config.lm.clone(), "solver", src)?,
            proj_dec: src.take("proj_dec", (d, p))?,
            proj_dec_bias: src.take("proj_dec_bias", (1, p))?,
            proj_sol: src.take("proj_sol", (d, p))?,
            proj_sol_bias: src.take("proj_sol_bias", (1, p))?,
            scorer: src.take("scorer", (d, 1))?,
            scorer_bias: src.take("scorer_bias", (1, 1))?,
            config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DistillError> {
        let mut t = NamedTensors::new();
        self.write_tensors(&mut t);
        t.save(path, serde_json::json!({ "kind": "student", "config": self.config }))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DistillError> {
        let (mut t, meta) = NamedTensors::load(path)?;
        let config: StudentConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| DistillError::Validation(format!("student checkpoint config: {e}")))?;
        Self::read_tensors(config, &mut t)
    }

    pub fn decomposer_generator(&self, seed: u64) -> SeededGenerator<'_> {
        SeededGenerator { model: &self.decomposer, seed }
    }

    pub fn solver_generator(&self, seed: u64) -> SeededGenerator<'_> {
        SeededGenerator { model: &self.solver, seed }
    }
}

/// Tokens scored for a chain: BOS then the chain's bytes, keeping the tail
/// (where the answer marker sits) when the chain exceeds the window.
pub fn chain_tokens(chain: &str, max_seq: usize) -> Result<Vec<usize>, DistillError> {
    let body = encode(chain);
    if body.is_empty() {
        return Err(DistillError::Validation("cannot score an empty chain".into()));
    }
    let mut tokens = vec![BOS];
    tokens.extend(body);
    if tokens.len() > max_seq {
        tokens.drain(..tokens.len() - max_seq);
    }
    Ok(tokens)
}

/// Chain score on the tape: scorer applied to mean-pooled solver hidden states.
pub fn score_chain_on_tape(
    student: &StudentUnit,
    tape: &mut Tape,
    vars: &StudentVars,
    chain: &str,
) -> Result<Var, DistillError> {
    let tokens = chain_tokens(chain, student.config.lm.max_seq)?;
    let out = student.solver.forward_on_tape(tape, &vars.solver, &tokens);
    let pooled = tape.mean_rows(out.hidden);
    let s = tape.matmul(pooled, vars.scorer);
    Ok(tape.add(s, vars.scorer_bias))
}

pub fn score_chain(student: &StudentUnit, chain: &str) -> Result<f64, DistillError> {
    let tokens = chain_tokens(chain, student.config.lm.max_seq)?;
    let (_, hidden) = student.solver.forward(&tokens);
    let pooled = hidden.mean_axis(ndarray::Axis(0)).expect("non-empty");
    Ok(pooled.dot(&student.scorer.column(0)) + student.scorer_bias[[0, 0]])
}
