use serde::{Deserialize, Serialize};

use super::{accuracy, HarnessError};
use crate::agents::{answer_format_instruction, extract_answer, AgentBackend, GenerationRequest, Persona, RequestTag, DEFAULT_MAX_TOKENS, SOLO_AGENT};
use crate::debate::{run_debate, AgentWeights, DebateConfig, DecidedBy};
use crate::record::{Answer, Label, QuestionRecord};

/// Zero-shot prompt for the single-agent arm: no persona, no peers.
pub fn solo_prompt(question: &QuestionRecord) -> String {
    format!(
        "Question: {}\n\nAnswer the question. {}",
        question.text,
        answer_format_instruction(question)
    )
}

pub fn solo_answer(
    backend: &dyn AgentBackend,
    question: &QuestionRecord,
    temperature: f64,
) -> Result<(String, Answer), HarnessError> {
    let request = GenerationRequest {
        prompt: solo_prompt(question),
        temperature,
        max_tokens: DEFAULT_MAX_TOKENS,
        tag: Some(RequestTag::Agent {
            question_id: question.question_id.clone(),
            agent_id: SOLO_AGENT.into(),
            round: 1,
        }),
    };
    let text = backend.generate(&request)?;
    let answer = extract_answer(&text, &question.answer_space);
    Ok((text, answer))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionDecision {
    pub question_id: String,
    pub gold: Label,
    pub mas: Answer,
    pub sas: Answer,
    pub decided_by: DecidedBy,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub mas: ArmResult,
    pub sas: ArmResult,
    pub decisions: Vec<QuestionDecision>,
}

/// Runs the weighted debate and the single zero-shot agent on every question.
pub fn compare_mas_sas(
    questions: &[QuestionRecord],
    roster: &[Persona],
    backend: &dyn AgentBackend,
    weights: &AgentWeights,
    config: &DebateConfig,
) -> Result<CompareReport, HarnessError> {
    let mut decisions = Vec::with_capacity(questions.len());
    for q in questions {
        let t = run_debate(q, roster, backend, weights, config)?;
        let (_, sas) = solo_answer(backend, q, config.base_temperature)?;
        decisions.push(QuestionDecision {
            question_id: q.question_id.clone(),
            gold: q.gold.clone(),
            mas: Answer::Label(t.final_answer),
            sas,
            decided_by: t.decided_by,
            rounds: t.rounds.len(),
        });
    }
    let arm = |pick: fn(&QuestionDecision) -> &Answer| -> Result<ArmResult, HarnessError> {
        let pairs: Vec<(Answer, Label)> = decisions.iter().map(|d| (pick(d).clone(), d.gold.clone())).collect();
        Ok(ArmResult { accuracy: accuracy(&pairs)?, n: pairs.len() })
    };
    let mas = arm(|d| &d.mas)?;
    let sas = arm(|d| &d.sas)?;
    Ok(CompareReport { mas, sas, decisions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{default_roster, MockBackend};

    fn setup(solo: &str, agents: [&str; 5]) -> (QuestionRecord, MockBackend) {
        let q = QuestionRecord::strategyqa("q", "Is it so?", true);
        let mut b = MockBackend::default();
        for (p, a) in default_roster().iter().zip(agents) {
            b.script_agent("q", &p.name, 1, &format!("I think so. Answer: {a}"));
        }
        b.script_agent("q", SOLO_AGENT, 1, &format!("Answer: {solo}"));
        (q, b)
    }

    #[test]
    fn debate_can_beat_a_wrong_solo_agent() {
        let roster = default_roster();
        let w = AgentWeights::uniform(roster.iter().map(|p| p.name.as_str()), 0.1);
        let (q, b) = setup("False", ["True", "True", "True", "False", "True"]);
        let r = compare_mas_sas(&[q], &roster, &b, &w, &DebateConfig::default()).unwrap();
        assert_eq!(r.mas.accuracy, 1.0);
        assert_eq!(r.sas.accuracy, 0.0);
        assert_eq!(r.decisions.len(), 1);
        assert_eq!(r.decisions[0].decided_by, DecidedBy::WeightedVote);
    }

    #[test]
    fn identical_answers_tie() {
        let roster = default_roster();
        let w = AgentWeights::uniform(roster.iter().map(|p| p.name.as_str()), 0.1);
        let (q, b) = setup("True", ["True"; 5]);
        let r = compare_mas_sas(&[q], &roster, &b, &w, &DebateConfig::default()).unwrap();
        assert_eq!(r.mas, r.sas);
    }
}
