use std::sync::OnceLock;

use regex::Regex;

use crate::record::{Answer, Label};

fn marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)answer\s*:\s*([^\s,;]+)").expect("static regex"))
}

/// Returns the label after the last `Answer:` marker when it names a member of
/// `answer_space` (case-insensitive), otherwise [`Answer::Abstain`].
pub fn extract_answer(raw_text: &str, answer_space: &[Label]) -> Answer {
    let Some(caps) = marker().captures_iter(raw_text).last() else {
        return Answer::Abstain;
    };
    let token = caps[1].trim_matches(|c: char| {
        matches!(c, '"' | '\'' | '*' | '`' | '(' | ')' | '[' | ']' | '.' | '!' | '?')
    });
    answer_space
        .iter()
        .find(|label| label.as_str().eq_ignore_ascii_case(token))
        .cloned()
        .map(Answer::Label)
        .unwrap_or(Answer::Abstain)
}

/// Everything before the final `Answer:` marker, or the whole text if there is none.
pub fn analysis_part(raw_text: &str) -> &str {
    match marker().find_iter(raw_text).last() {
        Some(m) => raw_text[..m.start()].trim_end(),
        None => raw_text.trim_end(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::DatasetKind;

    fn tf() -> Vec<Label> {
        DatasetKind::StrategyQa.answer_space()
    }

    #[test]
    fn terminal_marker_is_read() {
        assert_eq!(
            extract_answer("The harbor mattered. Answer: True", &tf()),
            Answer::Label(Label::from("True"))
        );
    }

    #[test]
    fn missing_marker_abstains() {
        assert_eq!(extract_answer("no marker here", &tf()), Answer::Abstain);
    }

    #[test]
    fn last_marker_wins() {
        let space = DatasetKind::Mmlu.answer_space();
        let text = "Answer: 2\n... Answer: 0";
        // scan every marker position; the final one decides
        let positions: Vec<_> = text.match_indices("Answer:").map(|(i, _)| i).collect();
        assert_eq!(positions.len(), 2);
        let tail = &text[*positions.last().unwrap()..];
        assert_eq!(extract_answer(tail, &space), Answer::Label(Label::from("0")));
        assert_eq!(extract_answer(text, &space), Answer::Label(Label::from("0")));
    }

    #[test]
    fn case_and_punctuation_are_tolerated() {
        assert_eq!(
            extract_answer("answer: **false**.", &tf()),
            Answer::Label(Label::from("False"))
        );
        assert_eq!(extract_answer("ANSWER:TRUE", &tf()), Answer::Label(Label::from("True")));
    }

    #[test]
    fn out_of_space_token_abstains() {
        assert_eq!(extract_answer("Answer: maybe", &tf()), Answer::Abstain);
        let space = DatasetKind::Mmlu.answer_space();
        assert_eq!(extract_answer("Answer: 7", &space), Answer::Abstain);
    }

    #[test]
    fn mmlu_transcript_format() {
        let space = DatasetKind::Mmlu.answer_space();
        let text = "Both statements are true, so the answer is True, True. Answer: 0";
        assert_eq!(extract_answer(text, &space), Answer::Label(Label::from("0")));
    }

    #[test]
    fn analysis_stops_before_marker() {
        assert_eq!(analysis_part("Reasoning here.\nAnswer: True"), "Reasoning here.");
        assert_eq!(analysis_part("just text"), "just text");
    }

    proptest::proptest! {
        #[test]
        fn never_leaves_answer_space(text in ".{0,80}") {
            let space = tf();
            match extract_answer(&text, &space) {
                Answer::Label(l) => proptest::prop_assert!(space.contains(&l)),
                Answer::Abstain => {}
            }
        }

        #[test]
        fn idempotent_on_rendered_answer(text in "[a-zA-Z :]{0,40}") {
            let space = tf();
            let first = extract_answer(&text, &space);
            let rendered = format!("Answer: {first}");
            let second = extract_answer(&rendered, &space);
            proptest::prop_assert_eq!(first, second);
        }
    }
}
