use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::record::{Answer, Label, QuestionRecord};

/// ABSTAIN never matches.
pub fn exact_match(predicted: &Answer, gold: &Label) -> bool {
    predicted.matches(gold)
}

pub fn accuracy(pairs: &[(Answer, Label)]) -> Result<f64, HarnessError> {
    if pairs.is_empty() {
        return Err(HarnessError::UndefinedAccuracy);
    }
    let hits = pairs.iter().filter(|(p, g)| exact_match(p, g)).count();
    Ok(hits as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub n: usize,
    /// Empty unless records carry subjects.
    #[serde(default)]
    pub per_subject: BTreeMap<String, SubjectMetrics>,
}

/// Scores `predictions` (keyed by question id) against `records`. Every
/// record must have a prediction.
pub fn evaluate_predictions(
    records: &[QuestionRecord],
    predictions: &BTreeMap<String, Answer>,
) -> Result<MetricsReport, HarnessError> {
    let mut pairs = Vec::with_capacity(records.len());
    let mut by_subject: BTreeMap<String, Vec<(Answer, Label)>> = BTreeMap::new();
    for r in records {
        let p = predictions
            .get(&r.question_id)
            .ok_or_else(|| HarnessError::Validation(format!("no prediction for {}", r.question_id)))?;
        pairs.push((p.clone(), r.gold.clone()));
        if let Some(s) = &r.subject {
            by_subject.entry(s.clone()).or_default().push((p.clone(), r.gold.clone()));
        }
    }
    let per_subject = by_subject
        .into_iter()
        .map(|(s, v)| Ok((s, SubjectMetrics { accuracy: accuracy(&v)?, n: v.len() })))
        .collect::<Result<_, HarnessError>>()?;
    Ok(MetricsReport { accuracy: accuracy(&pairs)?, n: pairs.len(), per_subject })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> Label {
        Label::from("True")
    }
    fn f() -> Label {
        Label::from("False")
    }

    #[test]
    fn basic_cases() {
        assert!(exact_match(&Answer::Label(t()), &t()));
        assert!(!exact_match(&Answer::Abstain, &f()));
        let pairs = vec![
            (Answer::Label(t()), t()),
            (Answer::Label(f()), f()),
            (Answer::Label(t()), t()),
            (Answer::Abstain, t()),
        ];
        assert_eq!(accuracy(&pairs).unwrap(), 0.75);
        assert!(matches!(accuracy(&[]), Err(HarnessError::UndefinedAccuracy)));
    }

    #[test]
    fn subjects_are_broken_out() {
        let recs = vec![
            QuestionRecord::mmlu("a", "?", 0, Some("law".into())),
            QuestionRecord::mmlu("b", "?", 1, Some("law".into())),
            QuestionRecord::mmlu("c", "?", 2, Some("math".into())),
        ];
        let preds: BTreeMap<String, Answer> = [("a", "0"), ("b", "0"), ("c", "2")]
            .iter()
            .map(|(k, v)| (k.to_string(), Answer::Label(Label::from(*v))))
            .collect();
        let m = evaluate_predictions(&recs, &preds).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.per_subject["law"], SubjectMetrics { accuracy: 0.5, n: 2 });
        assert_eq!(m.per_subject["math"].n, 1);
    }

    proptest::proptest! {
        #[test]
        fn bounded_and_order_invariant(hits in proptest::collection::vec(proptest::bool::ANY, 1..50), rot in 0usize..50) {
            let mut pairs: Vec<(Answer, Label)> = hits
                .iter()
                .map(|&h| (Answer::Label(if h { t() } else { f() }), t()))
                .collect();
            let a = accuracy(&pairs).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&a));
            let k = rot % pairs.len();
            pairs.rotate_left(k);
            proptest::prop_assert_eq!(accuracy(&pairs).unwrap(), a);
        }
    }
}
