//! Training examples drawn from interaction graphs.

use serde::{Deserialize, Serialize};

use super::DistillError;
use crate::agents::{analysis_part, AgentBackend, GenerationRequest, RequestTag, DEFAULT_MAX_TOKENS};
use crate::graph::{InteractionGraph, NodeKind};
use crate::record::ABSTAIN;
use crate::scot::{decomposer_prompt, parse_decomposition, solver_prompt, ParsedDecomposition, SolveContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExampleKind {
    Positive,
    Negative,
    Decomposer,
    Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub kind: ExampleKind,
    pub prompt: String,
    pub completion: String,
    pub source_node_ids: Vec<usize>,
    pub question_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractOptions {
    /// Keep at most this many POSITIVE and NEGATIVE chains per graph,
    /// evenly spaced over the enumeration order.
    pub max_chains_per_kind: Option<usize>,
    pub synthesis_temperature: f64,
    pub synthesis_max_tokens: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { max_chains_per_kind: Some(4), synthesis_temperature: 0.7, synthesis_max_tokens: DEFAULT_MAX_TOKENS }
    }
}

/// Every path from the question node to a node without successors, in
/// depth-first order following edge insertion order.
pub fn enumerate_paths(graph: &InteractionGraph) -> Vec<Vec<usize>> {
    let succ = graph.successors();
    let mut out = Vec::new();
    let mut stack = vec![vec![0usize]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if succ[last].is_empty() {
            if path.len() > 1 {
                out.push(path);
            }
            continue;
        }
        for &next in succ[last].iter().rev() {
            let mut p = path.clone();
            p.push(next);
            stack.push(p);
        }
    }
    out
}

/// Reasoning chain along `path`: each response's analysis, then the
/// terminal node's answer marker.
pub fn chain_text(graph: &InteractionGraph, path: &[usize]) -> String {
    let mut parts: Vec<&str> = path
        .iter()
        .map(|&i| &graph.nodes[i])
        .filter(|n| n.kind == NodeKind::Response)
        .map(|n| analysis_part(&n.text))
        .collect();
    let terminal = graph.nodes[*path.last().expect("non-empty path")]
        .answer
        .as_ref()
        .and_then(|a| a.label())
        .map_or(ABSTAIN.to_string(), |l| l.to_string());
    let marker = format!("Answer: {terminal}");
    parts.push(&marker);
    parts.join("\n")
}

fn evenly_spaced<T: Clone>(items: &[T], cap: Option<usize>) -> Vec<T> {
    match cap {
        Some(k) if items.len() > k => (0..k).map(|i| items[i * items.len() / k].clone()).collect(),
        _ => items.to_vec(),
    }
}

fn final_round_responses(graph: &InteractionGraph) -> Vec<(usize, String)> {
    graph
        .response_nodes()
        .filter(|n| n.round == Some(graph.rounds))
        .map(|n| (n.node_id, format!("{}: {}", n.agent_id.as_deref().unwrap_or("?"), n.text)))
        .collect()
}

/// Decomposer synthesis prompt sent to the teacher backend.
pub fn decomposer_synthesis_prompt(question: &str, responses: &[String]) -> String {
    format!(
        "Decompose the following question into a sequence of simpler sub-questions that, when answered, \
         would help solve the main question: {question}, based on the agent's responses\n{}",
        responses.join("\n")
    )
}

/// Solver synthesis prompt sent to the teacher backend.
pub fn solver_synthesis_prompt(question: &str, decomposition: &str, responses: &[String]) -> String {
    format!(
        "Answer the decompositions similar to the agent's responses\nQuestion: {question}\nDecompositions:\n{decomposition}\nAgent responses:\n{}",
        responses.join("\n")
    )
}

/// POSITIVE chains (every response correct), NEGATIVE chains (incorrect
/// terminal node), and DECOMPOSER/SOLVER examples synthesized by `backend`.
pub fn extract_examples(
    graph: &InteractionGraph,
    backend: &dyn AgentBackend,
    options: &ExtractOptions,
) -> Result<Vec<TrainingExample>, DistillError> {
    if graph.response_nodes().any(|n| n.correct.is_none()) {
        return Err(DistillError::Validation(format!("graph {} lacks correctness labels", graph.question_id)));
    }
    let question = graph.question_text().to_string();
    let qid = graph.question_id.clone();
    let paths = enumerate_paths(graph);
    let correct = |i: usize| graph.nodes[i].correct == Some(true);
    let positives: Vec<&Vec<usize>> = paths.iter().filter(|p| p[1..].iter().all(|&i| correct(i))).collect();
    let negatives: Vec<&Vec<usize>> = paths.iter().filter(|p| !correct(*p.last().unwrap())).collect();
    if positives.is_empty() {
        log::warn!("graph {qid} has no fully correct chain; no POSITIVE examples");
    }
    let mut out = Vec::new();
    for (kind, group) in [(ExampleKind::Positive, positives), (ExampleKind::Negative, negatives)] {
        for path in evenly_spaced(&group, options.max_chains_per_kind) {
            out.push(TrainingExample {
                kind,
                prompt: question.clone(),
                completion: chain_text(graph, path),
                source_node_ids: path.clone(),
                question_id: qid.clone(),
            });
        }
    }

    let responses = final_round_responses(graph);
    let sources: Vec<usize> = responses.iter().map(|(i, _)| *i).collect();
    let texts: Vec<String> = responses.into_iter().map(|(_, t)| t).collect();
    let ask = |prompt: String, tag: RequestTag| {
        backend
            .generate(&GenerationRequest {
                prompt,
                temperature: options.synthesis_temperature,
                max_tokens: options.synthesis_max_tokens,
                tag: Some(tag),
            })
            .map_err(|source| DistillError::Backend { question_id: qid.clone(), source })
    };
    let decomposition = ask(
        decomposer_synthesis_prompt(&question, &texts),
        RequestTag::Decompose { question_id: qid.clone() },
    )?;
    let ParsedDecomposition::Items(subs) = parse_decomposition(&decomposition) else {
        log::warn!("graph {qid}: synthesized decomposition has no numbered items; skipping DECOMPOSER/SOLVER");
        return Ok(out);
    };
    out.push(TrainingExample {
        kind: ExampleKind::Decomposer,
        prompt: decomposer_prompt(&question),
        completion: decomposition.trim().to_string(),
        source_node_ids: sources.clone(),
        question_id: qid.clone(),
    });
    let solutions = ask(
        solver_synthesis_prompt(&question, decomposition.trim(), &texts),
        RequestTag::Solve { question_id: qid.clone() },
    )?;
    let answers = match parse_decomposition(&solutions) {
        ParsedDecomposition::Items(items) => items,
        _ => Vec::new(),
    };
    if answers.len() != subs.len() {
        log::warn!("graph {qid}: {} sub-questions but {} solutions", subs.len(), answers.len());
    }
    let mut context = SolveContext::new(question.clone());
    for (sub, answer) in subs.iter().zip(answers) {
        out.push(TrainingExample {
            kind: ExampleKind::Solver,
            prompt: solver_prompt(&context, sub),
            completion: answer.clone(),
            source_node_ids: sources.clone(),
            question_id: qid.clone(),
        });
        context.answered.push((sub.clone(), answer));
    }
    Ok(out)
}

/// Indices `(positive, negative)` into `examples`: each POSITIVE is paired
/// with a NEGATIVE of the same question, cycling through the negatives.
pub fn contrastive_pairs(examples: &[TrainingExample]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut questions: Vec<&str> = examples.iter().map(|e| e.question_id.as_str()).collect();
    questions.dedup();
    for q in questions {
        let of = |k: ExampleKind| -> Vec<usize> {
            examples.iter().enumerate().filter(|(_, e)| e.kind == k && e.question_id == q).map(|(i, _)| i).collect()
        };
        let (pos, neg) = (of(ExampleKind::Positive), of(ExampleKind::Negative));
        if neg.is_empty() {
            continue;
        }
        pairs.extend(pos.iter().enumerate().map(|(i, &p)| (p, neg[i % neg.len()])));
    }
    pairs
}
