//! Generates mock scripts that imitate a debating panel on labelled questions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backend::{MockScript, ScriptedResponse};
use super::Persona;
use crate::record::{Label, QuestionRecord};
use crate::util::stable_hash;

/// Agent id used for the single-agent comparison arm.
pub const SOLO_AGENT: &str = "Solo";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProfile {
    /// Round-1 probability of answering correctly, one entry per roster persona.
    pub skills: Vec<f64>,
    /// Probability that a minority agent adopts the previous round's majority.
    pub conformity: f64,
    pub solo_skill: f64,
    pub rounds: u32,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        SyntheticProfile {
            skills: vec![0.7, 0.8, 0.75, 0.6, 0.65],
            conformity: 0.6,
            solo_skill: 0.6,
            rounds: 3,
        }
    }
}

const PHRASES: [&str; 6] = [
    "weighing the key facts",
    "checking the strongest counterargument",
    "comparing the likely scenarios",
    "tracing the relevant precedent",
    "estimating how plausible each option is",
    "looking at the underlying evidence",
];

fn topic(question: &str) -> String {
    let trimmed = question.trim().trim_end_matches('?');
    let mut out: String = trimmed.chars().take(48).collect();
    if trimmed.chars().count() > 48 {
        out.push_str("...");
    }
    out
}

fn wrong_label(rng: &mut ChaCha8Rng, q: &QuestionRecord) -> Label {
    let wrong: Vec<&Label> = q.answer_space.iter().filter(|l| **l != q.gold).collect();
    wrong[rng.random_range(0..wrong.len())].clone()
}

fn utterance(rng: &mut ChaCha8Rng, agent: &str, round: u32, label: &Label) -> String {
    let phrase = PHRASES[rng.random_range(0..PHRASES.len())];
    if round == 1 {
        format!("{agent}: after {phrase}, I conclude {label}. Answer: {label}")
    } else {
        format!("{agent} (round {round}): after {phrase} and the peers, {label}. Answer: {label}")
    }
}

/// Builds a deterministic script for `records` given `roster` and `seed`.
pub fn synthesize_script(
    records: &[QuestionRecord],
    roster: &[Persona],
    profile: &SyntheticProfile,
    seed: u64,
) -> MockScript {
    let mut script = MockScript::default();
    for q in records {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(&q.question_id));
        let mut current: Vec<Label> = roster
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let skill = profile.skills.get(i).copied().unwrap_or(0.6);
                if rng.random_bool(skill) {
                    q.gold.clone()
                } else {
                    wrong_label(&mut rng, q)
                }
            })
            .collect();
        for round in 1..=profile.rounds.max(1) {
            if round > 1 {
                let majority = majority_label(&current, &q.answer_space);
                current = current
                    .iter()
                    .map(|l| {
                        if *l != majority && rng.random_bool(profile.conformity) {
                            majority.clone()
                        } else {
                            l.clone()
                        }
                    })
                    .collect();
            }
            for (persona, label) in roster.iter().zip(&current) {
                script.responses.push(ScriptedResponse {
                    question_id: q.question_id.clone(),
                    agent_id: persona.name.clone(),
                    round,
                    text: utterance(&mut rng, &persona.name, round, label),
                });
            }
        }

        let solo = if rng.random_bool(profile.solo_skill) {
            q.gold.clone()
        } else {
            wrong_label(&mut rng, q)
        };
        script.responses.push(ScriptedResponse {
            question_id: q.question_id.clone(),
            agent_id: SOLO_AGENT.into(),
            round: 1,
            text: utterance(&mut rng, SOLO_AGENT, 1, &solo),
        });

        let t = topic(&q.text);
        let n_sub = rng.random_range(3..=5);
        let subs = [
            format!("What does the question '{t}' ask?"),
            format!("Which facts bear on '{t}'?"),
            "What do the agents agree on?".to_string(),
            "What is the strongest objection?".to_string(),
            "So what is the answer overall?".to_string(),
        ];
        let chosen: Vec<&String> = subs[..n_sub - 1].iter().chain(subs.last()).collect();
        let decomposition = chosen
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s))
            .collect::<Vec<_>>()
            .join("\n");
        let mut solutions: Vec<String> = (0..n_sub - 1)
            .map(|i| {
                let phrase = PHRASES[(i + rng.random_range(0..PHRASES.len())) % PHRASES.len()];
                format!("{}. Found by {phrase}.", i + 1)
            })
            .collect();
        solutions.push(format!("{}. Answer: {}", n_sub, q.gold));
        script.decompositions.insert(q.question_id.clone(), decomposition);
        script.solutions.insert(q.question_id.clone(), solutions.join("\n"));
    }
    script
}

fn majority_label(labels: &[Label], space: &[Label]) -> Label {
    space
        .iter()
        .map(|l| (labels.iter().filter(|x| *x == l).count(), l))
        .fold(None::<(usize, &Label)>, |best, (c, l)| match best {
            Some((bc, _)) if bc >= c => best,
            _ => Some((c, l)),
        })
        .map(|(_, l)| l.clone())
        .expect("non-empty answer space")
}
