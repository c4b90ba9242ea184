//! Persona agents: roster, prompting, answer extraction and response backends.

mod backend;
mod extract;
mod persona;
mod prompt;
mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    AgentBackend, BackendError, GenerationRequest, HttpBackend, HttpBackendConfig, MockBackend,
    MockScript, RequestTag, ScriptedResponse, BACKEND_URL_ENV,
};
pub use extract::{analysis_part, extract_answer};
pub use persona::{default_roster, Persona, DECISION_DIRECTIVE};
pub use prompt::{answer_format_instruction, build_prompt, PeerView};
pub use synthetic::{synthesize_script, SyntheticProfile, SOLO_AGENT};

use crate::record::{Answer, QuestionRecord};

/// Token budget for a single agent utterance.
pub const DEFAULT_MAX_TOKENS: usize = 512;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("backend failure for {agent_id} in round {round}: {source}")]
    Backend {
        agent_id: String,
        round: u32,
        retryable: bool,
        #[source]
        source: BackendError,
    },
}

impl AgentError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, AgentError::Backend { retryable: true, .. })
    }
}

/// One agent utterance in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub agent_id: String,
    pub round: u32,
    pub raw_text: String,
    pub extracted_answer: Answer,
    pub temperature: f64,
}

/// Asks `persona` for its round-`round` response through `backend`.
pub fn respond(
    persona: &Persona,
    backend: &dyn AgentBackend,
    question: &QuestionRecord,
    peer_context: &[PeerView<'_>],
    round: u32,
    temperature: f64,
) -> Result<AgentResponse, AgentError> {
    if !(temperature > 0.0) {
        return Err(AgentError::Contract(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let prompt = build_prompt(persona, question, peer_context, round)?;
    let request = GenerationRequest {
        prompt,
        temperature,
        max_tokens: DEFAULT_MAX_TOKENS,
        tag: Some(RequestTag::Agent {
            question_id: question.question_id.clone(),
            agent_id: persona.name.clone(),
            round,
        }),
    };
    let raw_text = backend.generate(&request).map_err(|source| AgentError::Backend {
        agent_id: persona.name.clone(),
        round,
        retryable: source.is_retryable(),
        source,
    })?;
    let extracted_answer = extract_answer(&raw_text, &question.answer_space);
    Ok(AgentResponse {
        agent_id: persona.name.clone(),
        round,
        raw_text,
        extracted_answer,
        temperature,
    })
}
