use super::{AgentWeights, DebateError};
use crate::agents::AgentResponse;
use crate::record::{Answer, Label};

/// The common label when every non-abstaining agent agrees, ignoring abstentions.
pub fn check_consensus(responses: &[AgentResponse]) -> Option<Label> {
    let mut labels = responses.iter().filter_map(|r| r.extracted_answer.label());
    let first = labels.next()?;
    labels.all(|l| l == first).then(|| first.clone())
}

/// Weighted share each label receives, in answer-space order.
pub fn vote_scores(
    responses: &[AgentResponse],
    weights: &AgentWeights,
    answer_space: &[Label],
) -> Vec<(Label, f64)> {
    answer_space
        .iter()
        .map(|label| {
            let score = responses
                .iter()
                .filter(|r| r.extracted_answer == Answer::Label(label.clone()))
                .map(|r| weights.weight(&r.agent_id))
                .sum();
            (label.clone(), score)
        })
        .collect()
}

/// Relative tolerance under which two vote totals count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Label with the largest summed normalized weight; ties go to the label that
/// comes first in `answer_space`. Abstentions carry no weight.
pub fn weighted_vote(
    responses: &[AgentResponse],
    weights: &AgentWeights,
    answer_space: &[Label],
) -> Result<Label, DebateError> {
    if responses.iter().all(|r| r.extracted_answer.is_abstain()) {
        return Err(DebateError::UnresolvableVote);
    }
    let scores = vote_scores(responses, weights, answer_space);
    let mut best: Option<&(Label, f64)> = None;
    for entry in &scores {
        match best {
            Some((_, b)) if entry.1 <= b + TIE_TOLERANCE * b.abs().max(1.0) => {}
            _ => best = Some(entry),
        }
    }
    let (label, score) = best.expect("answer space is non-empty");
    if *score <= 0.0 {
        // every vote fell outside the answer space
        return Err(DebateError::UnresolvableVote);
    }
    Ok(label.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debate::optimize_weights;
    use crate::record::DatasetKind;
    use std::collections::BTreeMap;

    const NAMES: [&str; 5] = ["Lawyer", "Scientist", "Mathematician", "Ethicist", "Historian"];

    fn responses(answers: [Option<&str>; 5]) -> Vec<AgentResponse> {
        NAMES
            .iter()
            .zip(answers)
            .map(|(n, a)| AgentResponse {
                agent_id: n.to_string(),
                round: 1,
                raw_text: String::new(),
                extracted_answer: a.map(|l| Answer::Label(Label::from(l))).unwrap_or(Answer::Abstain),
                temperature: 0.7,
            })
            .collect()
    }

    fn weights(values: [f64; 5]) -> AgentWeights {
        let acc: BTreeMap<String, f64> =
            NAMES.iter().zip(values).map(|(n, v)| (n.to_string(), v)).collect();
        optimize_weights(&acc, 0.1).unwrap()
    }

    #[test]
    fn consensus_cases() {
        let t = Some("True");
        let f = Some("False");
        assert_eq!(check_consensus(&responses([t; 5])), Some(Label::from("True")));
        assert_eq!(check_consensus(&responses([t, t, t, t, f])), None);
        assert_eq!(check_consensus(&responses([t, t, None, t, None])), Some(Label::from("True")));
        assert_eq!(check_consensus(&responses([None; 5])), None);
    }

    #[test]
    fn weighted_vote_worked_example() {
        let w = weights([0.5, 0.25, 0.25, 0.0, 0.0]);
        let (t, f) = (Some("True"), Some("False"));
        let r = responses([t, f, f, t, t]);
        let space = DatasetKind::StrategyQa.answer_space();
        let scores = vote_scores(&r, &w, &space);
        // brute force: True = 0.5+0.1+0.1 over 1.2, False = 0.25+0.25 over 1.2
        assert!((scores[0].1 - 0.7 / 1.2).abs() < 1e-12);
        assert!((scores[1].1 - 0.5 / 1.2).abs() < 1e-12);
        assert!((scores[0].1 - 0.5833).abs() < 1e-4);
        assert_eq!(weighted_vote(&r, &w, &space).unwrap(), Label::from("True"));
    }

    #[test]
    fn single_voter_decides() {
        let w = weights([0.9, 0.9, 0.9, 0.9, 0.9]);
        let r = responses([None, None, Some("False"), None, None]);
        let space = DatasetKind::StrategyQa.answer_space();
        assert_eq!(weighted_vote(&r, &w, &space).unwrap(), Label::from("False"));
    }

    #[test]
    fn exact_tie_goes_to_first_label() {
        // symmetric construction: two equal-weight voters per side
        let w = weights([0.5, 0.5, 0.5, 0.5, 0.5]);
        let space = DatasetKind::StrategyQa.answer_space();
        let r = responses([Some("False"), Some("True"), None, Some("False"), Some("True")]);
        let scores = vote_scores(&r, &w, &space);
        assert_eq!(scores[0].1, scores[1].1);
        assert_eq!(weighted_vote(&r, &w, &space).unwrap(), Label::from("True"));
    }

    #[test]
    fn all_abstain_is_unresolvable() {
        let w = weights([0.5; 5]);
        let space = DatasetKind::StrategyQa.answer_space();
        assert!(matches!(
            weighted_vote(&responses([None; 5]), &w, &space),
            Err(DebateError::UnresolvableVote)
        ));
    }

    proptest::proptest! {
        #[test]
        fn invariant_under_rescaling(
            values in proptest::array::uniform5(0.0f64..=1.0),
            votes in proptest::array::uniform5(0usize..3),
            scale in 0.1f64..0.99,
        ) {
            let space = DatasetKind::StrategyQa.answer_space();
            let pick = |v: usize| match v { 0 => Some("True"), 1 => Some("False"), _ => None };
            let r = responses(votes.map(pick));
            proptest::prop_assume!(r.iter().any(|x| !x.extracted_answer.is_abstain()));
            let w1 = weights(values);
            let mut w2 = w1.clone();
            for v in w2.raw.values_mut() { *v *= scale; }
            let total: f64 = w2.raw.values().sum();
            w2.normalized = w2.raw.iter().map(|(k, v)| (k.clone(), v / total)).collect();
            proptest::prop_assert_eq!(
                weighted_vote(&r, &w1, &space).unwrap(),
                weighted_vote(&r, &w2, &space).unwrap()
            );
        }
    }
}
