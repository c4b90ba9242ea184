//! The stages shared by the command line and the tests:
//! debate -> graphs -> distill -> infer -> eval.

use std::collections::BTreeMap;
use std::time::Duration;

use super::{evaluate_predictions, HarnessError, MetricsReport, SmagdiConfig};
use crate::agents::{AgentBackend, Persona};
use crate::debate::{calibrate, run_debate, AgentWeights, DebateError, DebateTranscript};
use crate::distill::{extract_examples, train, QuestionBundle, StudentUnit, TrainOutcome};
use crate::gcn::GcnParams;
use crate::graph::{annotate, build_graph, HashingEmbedder, HttpEmbedder, InteractionGraph, TextEmbedder};
use crate::record::{Answer, QuestionRecord};
use crate::scot::{infer, InferenceTrace, Socratic};

pub fn make_embedder(config: &SmagdiConfig) -> Result<Box<dyn TextEmbedder>, HarnessError> {
    match &config.graph.embedder_url {
        None => Ok(Box::new(HashingEmbedder::new(config.graph.embedding_dim))),
        Some(url) => {
            let e = HttpEmbedder::new(url, &config.graph.embedder_model, None, Duration::from_secs(60))
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            e.verify().map_err(|e| HarnessError::Config(format!("embedding service: {e}")))?;
            Ok(Box::new(e))
        }
    }
}

#[derive(Debug, Clone)]
pub struct DebateArtifacts {
    pub weights: AgentWeights,
    pub transcripts: Vec<DebateTranscript>,
    pub graphs: Vec<InteractionGraph>,
    /// Questions dropped because every agent abstained.
    pub skipped: Vec<String>,
}

/// Calibrates weights on the first `calibration_size` questions, debates all
/// of them and turns each transcript into an annotated graph.
pub fn debate_stage(
    questions: &[QuestionRecord],
    roster: &[Persona],
    backend: &dyn AgentBackend,
    embedder: &dyn TextEmbedder,
    config: &SmagdiConfig,
) -> Result<DebateArtifacts, HarnessError> {
    let sample = &questions[..config.debate.calibration_size.min(questions.len())];
    let weights = calibrate(roster, backend, sample, &config.debate)?;
    let mut transcripts = Vec::new();
    let mut graphs = Vec::new();
    let mut skipped = Vec::new();
    for q in questions {
        match run_debate(q, roster, backend, &weights, &config.debate) {
            Ok(t) => {
                let mut g = build_graph(&t, &weights, &q.gold)?;
                annotate(&mut g, embedder, config.graph.pe_dim)?;
                graphs.push(g);
                transcripts.push(t);
            }
            Err(DebateError::UnresolvableVote) => {
                log::warn!("{}: every agent abstained, skipping", q.question_id);
                skipped.push(q.question_id.clone());
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(DebateArtifacts { weights, transcripts, graphs, skipped })
}

pub fn build_bundles(
    graphs: &[InteractionGraph],
    backend: &dyn AgentBackend,
    config: &SmagdiConfig,
) -> Result<Vec<QuestionBundle>, HarnessError> {
    graphs
        .iter()
        .map(|g| {
            Ok(QuestionBundle { examples: extract_examples(g, backend, &config.extract)?, graph: g.clone() })
        })
        .collect()
}

fn feature_dim(graphs: &[InteractionGraph]) -> Result<usize, HarnessError> {
    let node = graphs
        .first()
        .and_then(|g| g.nodes.first())
        .ok_or_else(|| HarnessError::Validation("no graphs to train on".into()))?;
    Ok(node.semantic_embedding.len() + node.positional_encoding.len())
}

/// Fresh student and GCN, seeded from the config.
pub fn initial_models(graphs: &[InteractionGraph], config: &SmagdiConfig) -> Result<(StudentUnit, GcnParams), HarnessError> {
    let seed = config.seed();
    let student = StudentUnit::new(config.student.clone(), seed);
    let gcn = GcnParams::init(feature_dim(graphs)?, &config.gcn, seed.wrapping_add(17));
    Ok((student, gcn))
}

pub fn distill_stage(
    graphs: &[InteractionGraph],
    backend: &dyn AgentBackend,
    config: &SmagdiConfig,
    resume: bool,
) -> Result<TrainOutcome, HarnessError> {
    let bundles = build_bundles(graphs, backend, config)?;
    let (student, gcn) = initial_models(graphs, config)?;
    Ok(train(&bundles, student, gcn, &config.losses, &config.train, resume)?)
}

pub fn infer_stage(student: &StudentUnit, questions: &[QuestionRecord], config: &SmagdiConfig) -> Vec<InferenceTrace> {
    let seed = config.seed();
    let decomposer = student.decomposer_generator(seed);
    let solver = student.solver_generator(seed.wrapping_add(1));
    let s = Socratic { decomposer: &decomposer, solver: &solver };
    questions.iter().map(|q| infer(s, q, &config.scot)).collect()
}

pub fn eval_stage(questions: &[QuestionRecord], traces: &[InferenceTrace]) -> Result<MetricsReport, HarnessError> {
    let predictions: BTreeMap<String, Answer> =
        traces.iter().map(|t| (t.question_id.clone(), t.final_answer.clone())).collect();
    evaluate_predictions(questions, &predictions)
}
