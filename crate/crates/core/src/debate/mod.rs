//! Dynamic agent weighting and the layered-consensus debate loop.

mod vote;
mod weights;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use vote::{check_consensus, vote_scores, weighted_vote};
pub use weights::{optimize_weights, AgentWeights, DEFAULT_EPSILON};

use crate::agents::{respond, AgentBackend, AgentError, AgentResponse, PeerView, Persona};
use crate::record::{Label, QuestionRecord};

#[derive(Debug, Error)]
pub enum DebateError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("every agent abstained; no vote possible")]
    UnresolvableVote,
    #[error("debate on {question_id} aborted: {source}")]
    Agent {
        question_id: String,
        #[source]
        source: AgentError,
    },
}

impl DebateError {
    /// Whether re-running the same question later may succeed.
    pub fn is_resumable(&self) -> bool {
        matches!(self, DebateError::Agent { source, .. } if source.is_retryable())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebateConfig {
    pub max_rounds: u32,
    pub base_temperature: f64,
    pub temperature_increment: f64,
    pub epsilon: f64,
    /// Number of training questions used to calibrate agent weights.
    pub calibration_size: usize,
    /// Extra attempts per agent call on retryable backend errors.
    pub retries: u32,
}

impl Default for DebateConfig {
    fn default() -> Self {
        DebateConfig {
            max_rounds: 3,
            base_temperature: 0.7,
            temperature_increment: 0.1,
            epsilon: DEFAULT_EPSILON,
            calibration_size: 100,
            retries: 1,
        }
    }
}

impl DebateConfig {
    pub fn validate(&self) -> Result<(), DebateError> {
        if self.max_rounds < 1 {
            return Err(DebateError::Validation("max_rounds must be at least 1".into()));
        }
        if !(self.temperature_increment >= 0.0) {
            return Err(DebateError::Validation("temperature_increment must be >= 0".into()));
        }
        if !(self.base_temperature > 0.0) {
            return Err(DebateError::Validation("base_temperature must be > 0".into()));
        }
        Ok(())
    }

    /// Sampling temperature for a 1-based round.
    pub fn temperature_for(&self, round: u32) -> f64 {
        self.base_temperature + self.temperature_increment * (round - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecidedBy {
    Consensus,
    WeightedVote,
}

/// Full record of one question's debate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub question: QuestionRecord,
    pub rounds: Vec<Vec<AgentResponse>>,
    pub final_answer: Label,
    pub consensus_reached: bool,
    pub decided_by: DecidedBy,
}

fn respond_with_retries(
    persona: &Persona,
    backend: &dyn AgentBackend,
    question: &QuestionRecord,
    peers: &[PeerView<'_>],
    round: u32,
    temperature: f64,
    retries: u32,
) -> Result<AgentResponse, AgentError> {
    let mut attempt = 0;
    loop {
        match respond(persona, backend, question, peers, round, temperature) {
            Err(e) if e.is_retryable() && attempt < retries => {
                log::warn!("retrying {} round {round}: {e}", persona.name);
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Measures each persona's single-shot accuracy on `sample` and turns the
/// accuracies into [`AgentWeights`].
pub fn calibrate(
    roster: &[Persona],
    backend: &dyn AgentBackend,
    sample: &[QuestionRecord],
    config: &DebateConfig,
) -> Result<AgentWeights, DebateError> {
    if sample.is_empty() {
        return Err(DebateError::Validation("calibration sample is empty".into()));
    }
    config.validate()?;
    let mut accuracies = BTreeMap::new();
    for persona in roster {
        let mut hits = 0usize;
        for q in sample {
            let r = respond_with_retries(
                persona,
                backend,
                q,
                &[],
                1,
                config.base_temperature,
                config.retries,
            )
            .map_err(|source| DebateError::Agent { question_id: q.question_id.clone(), source })?;
            if r.extracted_answer.matches(&q.gold) {
                hits += 1;
            }
        }
        accuracies.insert(persona.name.clone(), hits as f64 / sample.len() as f64);
    }
    optimize_weights(&accuracies, config.epsilon)
}

/// Runs rounds until the non-abstaining agents agree or `max_rounds` is
/// reached, then settles by weighted vote.
pub fn run_debate(
    question: &QuestionRecord,
    roster: &[Persona],
    backend: &dyn AgentBackend,
    weights: &AgentWeights,
    config: &DebateConfig,
) -> Result<DebateTranscript, DebateError> {
    config.validate()?;
    if roster.is_empty() {
        return Err(DebateError::Validation("empty roster".into()));
    }
    let weight_sum: f64 = roster.iter().map(|p| weights.weight(&p.name)).sum();
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(DebateError::Validation(format!(
            "roster weights sum to {weight_sum}, expected 1"
        )));
    }

    let mut rounds: Vec<Vec<AgentResponse>> = Vec::new();
    for round in 1..=config.max_rounds {
        let temperature = config.temperature_for(round);
        let previous = rounds.last();
        // agents only read the previous round, so a round's calls are independent
        let results: Vec<Result<AgentResponse, AgentError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = roster
                .iter()
                .map(|persona| {
                    let peers: Vec<PeerView<'_>> = previous
                        .map(|prev| {
                            prev.iter()
                                .filter(|r| r.agent_id != persona.name)
                                .map(|r| PeerView { response: r, weight: weights.weight(&r.agent_id) })
                                .collect()
                        })
                        .unwrap_or_default();
                    scope.spawn(move || {
                        respond_with_retries(
                            persona,
                            backend,
                            question,
                            &peers,
                            round,
                            temperature,
                            config.retries,
                        )
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("agent thread panicked"))
                .collect()
        });
        let responses = results
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| DebateError::Agent { question_id: question.question_id.clone(), source })?;

        let consensus = check_consensus(&responses);
        rounds.push(responses);
        if let Some(label) = consensus {
            return Ok(DebateTranscript {
                question: question.clone(),
                rounds,
                final_answer: label,
                consensus_reached: true,
                decided_by: DecidedBy::Consensus,
            });
        }
    }

    let last = rounds.last().expect("at least one round ran");
    let final_answer = weighted_vote(last, weights, &question.answer_space)?;
    Ok(DebateTranscript {
        question: question.clone(),
        rounds,
        final_answer,
        consensus_reached: false,
        decided_by: DecidedBy::WeightedVote,
    })
}
