//! Socratic zero-shot inference with a decomposer and a solver.
//!
//! The decomposer splits the question into numbered sub-questions, the
//! solver answers them in order with the earlier answers as context, and a
//! final composition prompt asks the solver for the terminal answer. A
//! sub-question whose answer reports it "cannot be answered directly" is
//! decomposed again while the depth budget allows.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agents::{answer_format_instruction, extract_answer};
use crate::lm::TextGenerator;
use crate::record::{Answer, QuestionRecord, ABSTAIN};

pub const DECOMPOSER_INSTRUCTION: &str = "Break this down into sub-questions that will help determine the answer";
pub const SOLVER_INSTRUCTION: &str = "Provide a clear answer that aids in determining the answer to the main question.";
/// Solver output containing this phrase asks for a further decomposition.
pub const INSUFFICIENT_MARKER: &str = "cannot be answered directly";
const FINAL_SUB_QUESTION: &str = "Overall, what is the final answer?";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScotConfig {
    pub max_depth: u32,
    pub temperature: f64,
    pub decompose_tokens: usize,
    pub solve_tokens: usize,
}

impl Default for ScotConfig {
    fn default() -> Self {
        Self { max_depth: 2, temperature: 0.0, decompose_tokens: 160, solve_tokens: 96 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTrace {
    pub question_id: String,
    pub decomposition: Vec<String>,
    pub sub_answers: Vec<String>,
    pub final_answer: Answer,
    pub depth_used: u32,
}

/// The two halves of a student.
#[derive(Clone, Copy)]
pub struct Socratic<'a> {
    pub decomposer: &'a dyn TextGenerator,
    pub solver: &'a dyn TextGenerator,
}

pub fn decomposer_prompt(question: &str) -> String {
    format!("{DECOMPOSER_INSTRUCTION}\nQuestion: {question}\nSub-questions:\n")
}

/// Main question plus the sub-questions answered so far, in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveContext {
    pub main_question: String,
    pub answered: Vec<(String, String)>,
}

impl SolveContext {
    pub fn new(main_question: impl Into<String>) -> Self {
        Self { main_question: main_question.into(), answered: Vec::new() }
    }
}

pub fn solver_prompt(context: &SolveContext, sub_question: &str) -> String {
    let mut p = format!("{SOLVER_INSTRUCTION}\nMain question: {}\n", context.main_question);
    for (i, (q, a)) in context.answered.iter().enumerate() {
        p.push_str(&format!("Sub-question {}: {q}\nResponse {}: {a}\n", i + 1, i + 1));
    }
    p.push_str(&format!("Sub-question: {sub_question}\nResponse:"));
    p
}

/// Final prompt: all sub-answers verbatim, then the answer-format instruction.
pub fn composition_prompt(question: &QuestionRecord, context: &SolveContext) -> String {
    let mut p = solver_prompt(context, FINAL_SUB_QUESTION);
    p.insert_str(p.len() - "Response:".len(), &format!("{}\n", answer_format_instruction(question)));
    p
}

fn item_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?:decomposition\s*:?\s*)?\d+\s*[.):]\s*(.+?)\s*$").expect("static regex")
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedDecomposition {
    /// The question needs no decomposition.
    Atomic,
    Items(Vec<String>),
    Unparseable,
}

/// Accepts `1.`, `1)`, `Decomposition 1:` and `Decomposition: 1.` prefixes.
/// Blank output or "No sub-questions" means atomic.
pub fn parse_decomposition(text: &str) -> ParsedDecomposition {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed.to_ascii_lowercase().starts_with("no sub-questions") {
        return ParsedDecomposition::Atomic;
    }
    let items: Vec<String> = trimmed
        .lines()
        .filter_map(|l| item_line().captures(l))
        .map(|c| c[1].to_string())
        .collect();
    if items.is_empty() {
        ParsedDecomposition::Unparseable
    } else {
        ParsedDecomposition::Items(items)
    }
}

/// Sub-questions for `question` at recursion `depth`; empty when the
/// question is atomic or the depth budget is spent.
pub fn decompose(student: Socratic<'_>, question: &str, depth: u32, config: &ScotConfig) -> Vec<String> {
    if depth >= config.max_depth {
        return Vec::new();
    }
    let text = match student.decomposer.generate(&decomposer_prompt(question), config.decompose_tokens, config.temperature) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("decomposer failed, treating question as a single sub-question: {e}");
            return vec![question.to_string()];
        }
    };
    match parse_decomposition(&text) {
        ParsedDecomposition::Atomic => Vec::new(),
        ParsedDecomposition::Items(items) => items,
        ParsedDecomposition::Unparseable => {
            log::warn!("unparseable decomposition, falling back to the question itself");
            vec![question.to_string()]
        }
    }
}

/// Answers one sub-question given the answers so far. Retries once, then
/// yields the ABSTAIN placeholder.
pub fn solve_sub(student: Socratic<'_>, sub_question: &str, context: &SolveContext, config: &ScotConfig) -> String {
    let prompt = solver_prompt(context, sub_question);
    for attempt in 0..2 {
        match student.solver.generate(&prompt, config.solve_tokens, config.temperature) {
            Ok(t) => return t.trim().to_string(),
            Err(e) => log::warn!("solver attempt {} failed: {e}", attempt + 1),
        }
    }
    ABSTAIN.to_string()
}

/// Answers `sub_question`, recursing when the solver reports insufficiency.
/// Returns the answer and the deepest decomposition level reached below it.
fn answer_recursively(
    student: Socratic<'_>,
    sub_question: &str,
    context: &SolveContext,
    depth: u32,
    config: &ScotConfig,
) -> (String, u32) {
    let answer = solve_sub(student, sub_question, context, config);
    if !answer.contains(INSUFFICIENT_MARKER) {
        return (answer, 0);
    }
    let nested = decompose(student, sub_question, depth, config);
    if nested.is_empty() {
        return (answer, 0);
    }
    let mut inner = SolveContext::new(sub_question);
    let mut deepest = 1;
    for q in &nested {
        let (a, d) = answer_recursively(student, q, &inner, depth + 1, config);
        deepest = deepest.max(1 + d);
        inner.answered.push((q.clone(), a));
    }
    let mut outer = context.clone();
    outer.answered.extend(inner.answered);
    (solve_sub(student, sub_question, &outer, config), deepest)
}

/// Decompose, solve each sub-question in order, then compose the final answer.
pub fn infer(student: Socratic<'_>, question: &QuestionRecord, config: &ScotConfig) -> InferenceTrace {
    let decomposition = decompose(student, &question.text, 0, config);
    let mut context = SolveContext::new(question.text.clone());
    let mut depth_used = if decomposition.is_empty() { 0 } else { 1 };
    for sub in &decomposition {
        let (answer, nested) = answer_recursively(student, sub, &context, 1, config);
        depth_used = depth_used.max(1 + nested);
        context.answered.push((sub.clone(), answer));
    }
    let final_text = student
        .solver
        .generate(&composition_prompt(question, &context), config.solve_tokens, config.temperature)
        .unwrap_or_default();
    InferenceTrace {
        question_id: question.question_id.clone(),
        sub_answers: context.answered.iter().map(|(_, a)| a.clone()).collect(),
        decomposition,
        final_answer: extract_answer(&final_text, &question.answer_space),
        depth_used,
    }
}
