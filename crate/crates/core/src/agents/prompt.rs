use std::fmt::Write;

use super::{AgentError, AgentResponse, Persona};
use crate::record::QuestionRecord;

/// A peer's previous-round response together with that peer's normalized weight.
#[derive(Debug, Clone, Copy)]
pub struct PeerView<'a> {
    pub response: &'a AgentResponse,
    pub weight: f64,
}

/// Instruction fixing the terminal answer format.
pub fn answer_format_instruction(question: &QuestionRecord) -> String {
    format!(
        "Finish with a final line of the form \"Answer: <label>\" where <label> is one of: {}.",
        question.options_text()
    )
}

/// Builds a persona's prompt for `round`.
///
/// Round 1 carries the persona directives, the question and the analysis
/// instruction. Later rounds also list peer responses from the previous
/// round, highest weight first, each annotated with its weight.
pub fn build_prompt(
    persona: &Persona,
    question: &QuestionRecord,
    peer_context: &[PeerView<'_>],
    round: u32,
) -> Result<String, AgentError> {
    if round == 0 {
        return Err(AgentError::Contract("round numbers start at 1".into()));
    }
    if round == 1 && !peer_context.is_empty() {
        return Err(AgentError::Contract("round 1 takes no peer context".into()));
    }
    if round > 1 && peer_context.is_empty() {
        return Err(AgentError::Contract(format!(
            "round {round} requires peer context"
        )));
    }

    let mut prompt = String::new();
    let _ = writeln!(prompt, "You are the {}. Follow these directives:", persona.name);
    for (i, directive) in persona.directives.iter().enumerate() {
        let _ = writeln!(prompt, "{}. {}", i + 1, directive);
    }
    let _ = writeln!(prompt, "\nQuestion: {}", question.text);

    if round > 1 {
        let mut peers: Vec<&PeerView<'_>> = peer_context.iter().collect();
        // stable sort keeps roster order among equal weights
        peers.sort_by(|a, b| b.weight.total_cmp(&a.weight));
        let _ = writeln!(
            prompt,
            "\nRound {round}. Responses from the other agents in the previous round, \
             most credible first (weight = influence):"
        );
        for peer in peers {
            let _ = writeln!(
                prompt,
                "- {} (weight {:.4}, answered {}): {}",
                peer.response.agent_id,
                peer.weight,
                peer.response.extracted_answer,
                peer.response.raw_text.trim()
            );
        }
        let _ = writeln!(
            prompt,
            "\nRefine your response in light of these responses, giving more influence to \
             agents with higher weight."
        );
    }

    let _ = writeln!(
        prompt,
        "\nProvide your analysis of the question from your perspective. {}",
        answer_format_instruction(question)
    );
    Ok(prompt)
}
