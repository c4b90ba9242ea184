//! Joint training of the student and the GCN on the composite objective.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::examples::{contrastive_pairs, ExampleKind, TrainingExample};
use super::student::{score_chain_on_tape, StudentConfig, StudentUnit, StudentVars};
use super::DistillError;
use crate::gcn::{batch_logits_on_tape, GcnParams};
use crate::graph::{tensorize, InteractionGraph};
use crate::lm::encode_pair;
use crate::losses::{total_loss, LossBundle, LossCoefficients, LossError};
use crate::optim::{Adam, AdamConfig};
use crate::params::NamedTensors;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Epochs without improvement before stopping; 0 disables early stopping.
    pub early_stopping_patience: usize,
    /// Examples per step; whole questions are packed until this is reached.
    pub batch_size: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            epochs: 7,
            early_stopping_patience: 2,
            batch_size: 8,
            checkpoint_dir: None,
            seed: 42,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DistillError::Validation(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(DistillError::Validation("epochs and batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(DistillError::Validation(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// One question's graph with the examples drawn from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionBundle {
    pub graph: InteractionGraph,
    pub examples: Vec<TrainingExample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's steps, measured before each update.
    pub train: LossBundle,
    pub validation: Option<LossBundle>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Training-set losses before the first update.
    pub initial: LossBundle,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub train_questions: Vec<String>,
    pub validation_questions: Vec<String>,
}

impl TrainingHistory {
    pub fn final_train(&self) -> Option<&LossBundle> {
        self.epochs.last().map(|e| &e.train)
    }
}

pub struct TrainOutcome {
    /// Parameters from the best monitored epoch.
    pub student: StudentUnit,
    pub gcn: GcnParams,
    pub history: TrainingHistory,
}

struct StepOutput {
    losses: LossBundle,
    grads: Option<(Vec<Array2<f64>>, GcnParams)>,
}

fn pooled_projection(
    tape: &mut Tape,
    hidden: Var,
    positions: &[usize],
    proj: Var,
    bias: Var,
) -> Var {
    let rows = tape.gather_rows(hidden, positions);
    let mean = tape.mean_rows(rows);
    let z = tape.matmul(mean, proj);
    tape.add(z, bias)
}

fn solutions_text(examples: &[TrainingExample]) -> Option<String> {
    let sols: Vec<&str> = examples
        .iter()
        .filter(|e| e.kind == ExampleKind::Solver)
        .map(|e| e.completion.as_str())
        .collect();
    (!sols.is_empty()).then(|| sols.join("\n"))
}

/// Forward pass over `bundles` and, when `with_grads`, gradients of the
/// weighted total. Components with a zero coefficient are skipped and
/// reported as 0.
fn run_step(
    student: &StudentUnit,
    gcn: &GcnParams,
    bundles: &[&QuestionBundle],
    coeffs: &LossCoefficients,
    with_grads: bool,
) -> Result<StepOutput, DistillError> {
    let mut tape = Tape::new();
    let sv: StudentVars = student.register(&mut tape);
    let gv = gcn.register(&mut tape);
    let max_seq = student.config.lm.max_seq;
    let mut terms: Vec<(Var, f64)> = Vec::new();
    let mut values = [0.0f64; 4];

    let want_lm = coeffs.alpha != 0.0;
    let want_align = coeffs.delta != 0.0;
    let mut lm_terms: Vec<(Var, usize)> = Vec::new();
    let mut z_dec = Vec::new();
    let mut z_sol = Vec::new();
    for b in bundles {
        for e in &b.examples {
            let is_dec = e.kind == ExampleKind::Decomposer;
            let lm_target = is_dec || matches!(e.kind, ExampleKind::Positive | ExampleKind::Solver);
            if !(want_lm && lm_target) && !(want_align && is_dec) {
                continue;
            }
            let seq = encode_pair(&e.prompt, &e.completion, max_seq);
            let (model, vars) = if is_dec {
                (&student.decomposer, &sv.decomposer)
            } else {
                (&student.solver, &sv.solver)
            };
            let out = model.forward_on_tape(&mut tape, vars, &seq.inputs);
            if want_lm {
                lm_terms.push((tape.lm_loss(out.logits, &seq.targets, &seq.mask)?, seq.supervised()));
            }
            if want_align && is_dec {
                if let Some(sols) = solutions_text(&b.examples) {
                    let zd = pooled_projection(&mut tape, out.hidden, &seq.completion_positions(), sv.proj_dec, sv.proj_dec_bias);
                    let sseq = encode_pair(b.graph.question_text(), &sols, max_seq);
                    let sout = student.solver.forward_on_tape(&mut tape, &sv.solver, &sseq.inputs);
                    let zs = pooled_projection(&mut tape, sout.hidden, &sseq.completion_positions(), sv.proj_sol, sv.proj_sol_bias);
                    z_dec.push(zd);
                    z_sol.push(zs);
                }
            }
        }
    }
    if !lm_terms.is_empty() {
        let total: usize = lm_terms.iter().map(|(_, n)| n).sum();
        let weighted: Vec<(Var, f64)> = lm_terms.iter().map(|&(v, n)| (v, n as f64 / total as f64)).collect();
        let lm = tape.weighted_sum(&weighted);
        values[0] = tape.scalar(lm);
        terms.push((lm, coeffs.alpha));
    }

    if coeffs.beta != 0.0 {
        let graphs: Vec<InteractionGraph> = bundles.iter().map(|b| b.graph.clone()).collect();
        let batch = tensorize(&graphs)?;
        let logits = batch_logits_on_tape(&mut tape, &gv, &batch);
        let node = tape.node_loss(logits, batch.labels.view(), batch.label_mask.view())?;
        values[1] = tape.scalar(node);
        terms.push((node, coeffs.beta));
    }

    if coeffs.gamma != 0.0 {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for b in bundles {
            let mut cache: BTreeMap<usize, Var> = BTreeMap::new();
            for (p, n) in contrastive_pairs(&b.examples) {
                for idx in [p, n] {
                    if let std::collections::btree_map::Entry::Vacant(slot) = cache.entry(idx) {
                        slot.insert(score_chain_on_tape(student, &mut tape, &sv, &b.examples[idx].completion)?);
                    }
                }
                pos.push(cache[&p]);
                neg.push(cache[&n]);
            }
        }
        if !pos.is_empty() {
            let p = tape.concat_rows(&pos);
            let n = tape.concat_rows(&neg);
            let c = tape.contrastive_loss(p, n)?;
            values[2] = tape.scalar(c);
            terms.push((c, coeffs.gamma));
        }
    }

    if !z_dec.is_empty() {
        let d = tape.concat_rows(&z_dec);
        let s = tape.concat_rows(&z_sol);
        let a = tape.alignment_loss(d, s)?;
        values[3] = tape.scalar(a);
        terms.push((a, coeffs.delta));
    }

    let losses = total_loss(values[0], values[1], values[2], values[3], coeffs)?;
    let grads = if with_grads && !terms.is_empty() {
        let total = tape.weighted_sum(&terms);
        let g = tape.backward(total);
        let sg = sv.all.iter().zip(student.tensors()).map(|(v, t)| g.get_or_zeros(*v, t)).collect();
        Some((sg, gcn.gradients(&gv, &g)))
    } else if with_grads {
        let sg = student.tensors().into_iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        let zero = GcnParams {
            layer_weights: gcn.layer_weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            classifier: Array2::zeros(gcn.classifier.raw_dim()),
            classifier_bias: 0.0,
        };
        Some((sg, zero))
    } else {
        None
    };
    Ok(StepOutput { losses, grads })
}

fn parameter_shapes(student: &StudentUnit, gcn: &GcnParams) -> Vec<(usize, usize)> {
    let mut shapes: Vec<(usize, usize)> = student.tensors().iter().map(|t| t.dim()).collect();
    shapes.extend(gcn.layer_weights.iter().map(|w| w.dim()));
    shapes.push(gcn.classifier.dim());
    shapes.push((1, 1));
    shapes
}

fn apply_update(
    adam: &mut Adam,
    student: &mut StudentUnit,
    gcn: &mut GcnParams,
    student_grads: Vec<Array2<f64>>,
    gcn_grads: GcnParams,
) {
    let mut bias = Array2::from_elem((1, 1), gcn.classifier_bias);
    {
        let mut params = student.tensors_mut();
        params.extend(gcn.layer_weights.iter_mut());
        params.push(&mut gcn.classifier);
        params.push(&mut bias);
        let mut grads = student_grads;
        grads.extend(gcn_grads.layer_weights);
        grads.push(gcn_grads.classifier);
        grads.push(Array2::from_elem((1, 1), gcn_grads.classifier_bias));
        adam.step(&mut params, &grads);
    }
    gcn.classifier_bias = bias[[0, 0]];
}

/// Groups `order` into steps of whole questions holding at least
/// `batch_size` examples each (the last step may hold fewer).
fn pack(order: &[usize], bundles: &[QuestionBundle], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    let mut count = 0;
    for &i in order {
        current.push(i);
        count += bundles[i].examples.len().max(1);
        if count >= batch_size {
            out.push(std::mem::take(&mut current));
            count = 0;
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

fn mean_bundle(items: &[LossBundle]) -> LossBundle {
    let n = items.len().max(1) as f64;
    let mut m = LossBundle::default();
    for b in items {
        m.lm += b.lm / n;
        m.node += b.node / n;
        m.contrast += b.contrast / n;
        m.align += b.align / n;
        m.total += b.total / n;
    }
    m
}

/// Mean step losses over `indices`, in order, without updating anything.
pub fn evaluate(
    student: &StudentUnit,
    gcn: &GcnParams,
    bundles: &[QuestionBundle],
    indices: &[usize],
    coeffs: &LossCoefficients,
    batch_size: usize,
) -> Result<LossBundle, DistillError> {
    let mut items = Vec::new();
    for step in pack(indices, bundles, batch_size) {
        let refs: Vec<&QuestionBundle> = step.iter().map(|&i| &bundles[i]).collect();
        items.push(run_step(student, gcn, &refs, coeffs, false)?.losses);
    }
    Ok(mean_bundle(&items))
}

/// Deterministic `(train, validation)` index split.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((fraction * n as f64).round() as usize).min(n.saturating_sub(1));
    let val = idx.split_off(n - n_val);
    (idx, val)
}

fn epoch_order(train: &[usize], seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = train.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);
    order
}

const LAST: &str = "last.json";
const BEST: &str = "best.json";

#[derive(Serialize, Deserialize)]
struct ResumeMeta {
    kind: String,
    student_config: StudentConfig,
    adam: AdamConfig,
    adam_steps: u64,
    history: TrainingHistory,
    best_monitor: Option<f64>,
    since_best: usize,
}

struct State {
    student: StudentUnit,
    gcn: GcnParams,
    adam: Adam,
    history: TrainingHistory,
    best: Option<(f64, StudentUnit, GcnParams)>,
    since_best: usize,
}

fn write_params(student: &StudentUnit, gcn: &GcnParams) -> NamedTensors {
    let mut t = NamedTensors::new();
    student.write_tensors(&mut t);
    for (name, tensor) in gcn.to_tensors().iter() {
        t.push(name, tensor.clone());
    }
    t
}

fn save_state(dir: &Path, state: &State) -> Result<(), DistillError> {
    std::fs::create_dir_all(dir)?;
    let mut t = write_params(&state.student, &state.gcn);
    state.adam.write_tensors(&mut t);
    let meta = ResumeMeta {
        kind: "training_state".into(),
        student_config: state.student.config.clone(),
        adam: state.adam.config,
        adam_steps: state.adam.steps,
        history: state.history.clone(),
        best_monitor: state.best.as_ref().map(|b| b.0),
        since_best: state.since_best,
    };
    t.save(&dir.join(LAST), serde_json::to_value(meta).expect("meta serializes"))?;
    Ok(())
}

fn load_state(dir: &Path) -> Result<Option<State>, DistillError> {
    let path = dir.join(LAST);
    if !path.exists() {
        return Ok(None);
    }
    let (mut t, meta) = NamedTensors::load(&path)?;
    let meta: ResumeMeta =
        serde_json::from_value(meta).map_err(|e| DistillError::Validation(format!("training state: {e}")))?;
    let student = StudentUnit::read_tensors(meta.student_config.clone(), &mut t)?;
    let gcn = GcnParams::from_tensors(&mut t)?;
    let shapes = parameter_shapes(&student, &gcn);
    let adam = Adam::read_tensors(meta.adam, meta.adam_steps, &shapes, &mut t)?;
    let best = match meta.best_monitor {
        Some(m) => {
            let (bs, bg) = load_trained(&dir.join(BEST))?;
            Some((m, bs, bg))
        }
        None => None,
    };
    Ok(Some(State { student, gcn, adam, history: meta.history, best, since_best: meta.since_best }))
}

/// Writes a student and GCN pair as one checkpoint file.
pub fn save_trained(path: &Path, student: &StudentUnit, gcn: &GcnParams) -> Result<(), DistillError> {
    let meta = serde_json::json!({ "kind": "trained", "config": student.config });
    write_params(student, gcn).save(path, meta)?;
    Ok(())
}

pub fn load_trained(path: &Path) -> Result<(StudentUnit, GcnParams), DistillError> {
    let (mut t, meta) = NamedTensors::load(path)?;
    let config: StudentConfig = serde_json::from_value(meta["config"].clone())
        .map_err(|e| DistillError::Validation(format!("checkpoint config: {e}")))?;
    let student = StudentUnit::read_tensors(config, &mut t)?;
    let gcn = GcnParams::from_tensors(&mut t)?;
    Ok((student, gcn))
}

/// Trains `student` and `gcn` on `bundles`.
///
/// With `resume` and a checkpoint directory holding a previous run's state,
/// training continues after the last completed epoch. Returns the
/// parameters of the best monitored epoch (validation total when a
/// validation split exists, training total otherwise).
pub fn train(
    bundles: &[QuestionBundle],
    student: StudentUnit,
    gcn: GcnParams,
    coeffs: &LossCoefficients,
    config: &TrainConfig,
    resume: bool,
) -> Result<TrainOutcome, DistillError> {
    config.validate()?;
    coeffs.validate().map_err(DistillError::Validation)?;
    if bundles.is_empty() {
        return Err(DistillError::Validation("no training graphs".into()));
    }
    let (train_idx, val_idx) = validation_split(bundles.len(), config.validation_fraction, config.seed);
    let adam_config = AdamConfig { learning_rate: config.learning_rate, ..Default::default() };

    let resumed = match (&config.checkpoint_dir, resume) {
        (Some(dir), true) => load_state(dir)?,
        _ => None,
    };
    let mut state = match resumed {
        Some(mut s) => {
            s.adam.config = adam_config;
            log::info!("resuming after epoch {}", s.history.epochs.len());
            s
        }
        None => {
            let initial =
                evaluate(&student, &gcn, bundles, &train_idx, coeffs, config.batch_size).map_err(|e| match e {
                    DistillError::Loss(LossError::NonFinite { component, value }) => {
                        log::error!("initial {component} loss is {value}; aborting");
                        DistillError::Diverged { epoch: 0, step: 0, last_good: None }
                    }
                    other => other,
                })?;
            let shapes = parameter_shapes(&student, &gcn);
            State {
                adam: Adam::new(adam_config, &shapes),
                history: TrainingHistory {
                    initial,
                    train_questions: train_idx.iter().map(|&i| bundles[i].graph.question_id.clone()).collect(),
                    validation_questions: val_idx.iter().map(|&i| bundles[i].graph.question_id.clone()).collect(),
                    ..Default::default()
                },
                student,
                gcn,
                best: None,
                since_best: 0,
            }
        }
    };

    let last_good = config.checkpoint_dir.as_ref().map(|d| d.join(LAST)).filter(|p| p.exists());
    let mut last_good = last_good;
    for epoch in state.history.epochs.len()..config.epochs {
        if state.history.stopped_early {
            break;
        }
        let steps = pack(&epoch_order(&train_idx, config.seed, epoch), bundles, config.batch_size);
        let mut step_losses = Vec::with_capacity(steps.len());
        for (s, step) in steps.iter().enumerate() {
            let refs: Vec<&QuestionBundle> = step.iter().map(|&i| &bundles[i]).collect();
            let out = run_step(&state.student, &state.gcn, &refs, coeffs, true).map_err(|e| match e {
                DistillError::Loss(LossError::NonFinite { component, value }) => {
                    log::error!("epoch {epoch} step {s}: {component} loss is {value}; aborting");
                    DistillError::Diverged { epoch, step: s, last_good: last_good.clone() }
                }
                other => other,
            })?;
            let (sg, gg) = out.grads.expect("requested gradients");
            apply_update(&mut state.adam, &mut state.student, &mut state.gcn, sg, gg);
            step_losses.push(out.losses);
        }
        let train_mean = mean_bundle(&step_losses);
        let validation = if val_idx.is_empty() {
            None
        } else {
            Some(evaluate(&state.student, &state.gcn, bundles, &val_idx, coeffs, config.batch_size)?)
        };
        let monitor = validation.as_ref().unwrap_or(&train_mean).total;
        log::info!(
            "epoch {}: train total {:.4} (lm {:.4} node {:.4} contrast {:.4} align {:.4}){}",
            epoch + 1,
            train_mean.total,
            train_mean.lm,
            train_mean.node,
            train_mean.contrast,
            train_mean.align,
            validation.as_ref().map_or(String::new(), |v| format!(", validation total {:.4}", v.total))
        );
        state.history.epochs.push(EpochRecord { epoch, train: train_mean, validation, steps: steps.len() });
        if state.best.as_ref().is_none_or(|b| monitor < b.0) {
            state.best = Some((monitor, state.student.clone(), state.gcn.clone()));
            state.history.best_epoch = Some(epoch);
            state.since_best = 0;
            if let Some(dir) = &config.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                save_trained(&dir.join(BEST), &state.student, &state.gcn)?;
            }
        } else {
            state.since_best += 1;
        }
        if config.early_stopping_patience > 0 && state.since_best >= config.early_stopping_patience {
            log::info!("early stopping after epoch {}", epoch + 1);
            state.history.stopped_early = true;
        }
        if let Some(dir) = &config.checkpoint_dir {
            save_state(dir, &state)?;
            last_good = Some(dir.join(LAST));
        }
    }

    let (student, gcn) = match state.best {
        Some((_, s, g)) => (s, g),
        None => (state.student, state.gcn),
    };
    Ok(TrainOutcome { student, gcn, history: state.history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::GcnConfig;
    use crate::graph::tests_support::{transcript, weights};
    use crate::graph::{annotate, build_graph, HashingEmbedder};
    use crate::lm::TransformerConfig;
    use crate::record::Label;

    fn small_student(seed: u64) -> StudentUnit {
        StudentUnit::new(
            StudentConfig {
                lm: TransformerConfig { d_model: 16, n_layers: 1, n_heads: 2, d_ff: 16, max_seq: 48, ..Default::default() },
                projection_dim: 8,
            },
            seed,
        )
    }

    fn bundle(i: usize) -> QuestionBundle {
        let mut t = transcript(1 + i % 2, move |_, a| (a + i) % 4 != 0);
        t.question.question_id = format!("q{i}");
        let mut g = build_graph(&t, &weights(), &Label::from("True")).unwrap();
        annotate(&mut g, &HashingEmbedder::new(8), 4).unwrap();
        let ex = |kind, prompt: &str, completion: &str| TrainingExample {
            kind,
            prompt: prompt.into(),
            completion: completion.into(),
            source_node_ids: vec![],
            question_id: format!("q{i}"),
        };
        QuestionBundle {
            graph: g,
            examples: vec![
                ex(ExampleKind::Positive, "Is water wet?", "Lawyer: wet. Answer: True"),
                ex(ExampleKind::Negative, "Is water wet?", "Lawyer: dry. Answer: False"),
                ex(ExampleKind::Decomposer, "Break it down: Is water wet?", "1. What is wet?\n2. So?"),
                ex(ExampleKind::Solver, "Sub: What is wet?", "Covered in liquid."),
                ex(ExampleKind::Solver, "Sub: So?", "Answer: True"),
            ],
        }
    }

    fn gcn() -> GcnParams {
        GcnParams::init(12, &GcnConfig { hidden_dim: 8, num_layers: 2 }, 1)
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig { learning_rate: 3e-3, epochs, early_stopping_patience: 0, batch_size: 5, ..Default::default() }
    }

    #[test]
    fn zero_coefficients_leave_parameters_unchanged() {
        let bundles = vec![bundle(0), bundle(1)];
        let zero = LossCoefficients { alpha: 0.0, beta: 0.0, gamma: 0.0, delta: 0.0 };
        let s = small_student(0);
        let g = gcn();
        let out = train(&bundles, s.clone(), g.clone(), &zero, &TrainConfig { validation_fraction: 0.0, ..config(1) }, false).unwrap();
        assert_eq!(out.student, s);
        assert_eq!(out.gcn, g);
        assert_eq!(out.history.epochs[0].train.total, 0.0);
    }

    #[test]
    fn disabled_components_stay_zero() {
        let bundles = vec![bundle(0), bundle(1), bundle(2)];
        let coeffs = LossCoefficients { gamma: 0.0, delta: 0.0, ..Default::default() };
        let out = train(&bundles, small_student(1), gcn(), &coeffs, &config(2), false).unwrap();
        for e in &out.history.epochs {
            assert_eq!(e.train.contrast, 0.0);
            assert_eq!(e.train.align, 0.0);
            assert!(e.train.lm > 0.0 && e.train.node > 0.0);
        }
    }

    #[test]
    fn positive_only_lm_overfits() {
        let mut bundles: Vec<QuestionBundle> = (0..5).map(bundle).collect();
        for b in &mut bundles {
            b.examples.retain(|e| e.kind == ExampleKind::Positive);
        }
        let coeffs = LossCoefficients { alpha: 1.0, beta: 0.0, gamma: 0.0, delta: 0.0 };
        let cfg = TrainConfig { validation_fraction: 0.0, batch_size: 1, ..config(6) };
        let out = train(&bundles, small_student(2), gcn(), &coeffs, &cfg, false).unwrap();
        let first = out.history.initial.total;
        let last = out.history.final_train().unwrap().total;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn resume_reproduces_next_epoch_exactly() {
        let bundles: Vec<QuestionBundle> = (0..4).map(bundle).collect();
        let coeffs = LossCoefficients::default();
        let dir = tempfile::tempdir().unwrap();
        let straight = train(&bundles, small_student(3), gcn(), &coeffs, &config(2), false).unwrap();
        let cfg1 = TrainConfig { checkpoint_dir: Some(dir.path().to_path_buf()), ..config(1) };
        train(&bundles, small_student(3), gcn(), &coeffs, &cfg1, false).unwrap();
        let cfg2 = TrainConfig { epochs: 2, ..cfg1 };
        // fresh initial parameters are ignored when resuming
        let resumed = train(&bundles, small_student(99), gcn(), &coeffs, &cfg2, true).unwrap();
        assert_eq!(resumed.history.epochs.len(), 2);
        let a = &straight.history.epochs[1];
        let b = &resumed.history.epochs[1];
        assert_eq!(a.train.total.to_bits(), b.train.total.to_bits());
        assert_eq!(a.validation, b.validation);
        assert_eq!(straight.student, resumed.student);
    }

    #[test]
    fn non_finite_loss_aborts_training() {
        let bundles = vec![bundle(0), bundle(1)];
        let mut g = gcn();
        g.classifier_bias = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { checkpoint_dir: Some(dir.path().to_path_buf()), validation_fraction: 0.0, ..config(1) };
        let err = train(&bundles, small_student(4), g, &LossCoefficients::default(), &cfg, false).err().unwrap();
        assert!(matches!(err, DistillError::Diverged { epoch: 0, .. }), "{err}");
    }

    #[test]
    fn split_is_deterministic() {
        let (t1, v1) = validation_split(20, 0.1, 42);
        let (t2, v2) = validation_split(20, 0.1, 42);
        assert_eq!((t1.len(), v1.len()), (18, 2));
        assert_eq!((&t1, &v1), (&t2, &v2));
        assert_eq!(validation_split(1, 0.1, 42).1.len(), 0);
    }

    #[test]
    fn trained_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let s = small_student(5);
        let g = gcn();
        save_trained(&path, &s, &g).unwrap();
        assert_eq!(load_trained(&path).unwrap(), (s, g));
    }
}
