//! Question records, answer labels and the abstain convention shared by every stage.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Literal used on the wire for an abstention.
pub const ABSTAIN: &str = "ABSTAIN";

/// A canonical answer label such as `True` or `2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(String);

impl Label {
    pub fn new(text: impl Into<String>) -> Self {
        Label(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label(s.to_string())
    }
}

/// Either a label from the question's answer space or an abstention.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Answer {
    Label(Label),
    Abstain,
}

impl Answer {
    pub fn label(&self) -> Option<&Label> {
        match self {
            Answer::Label(l) => Some(l),
            Answer::Abstain => None,
        }
    }

    pub fn is_abstain(&self) -> bool {
        matches!(self, Answer::Abstain)
    }

    pub fn matches(&self, gold: &Label) -> bool {
        self.label() == Some(gold)
    }
}

impl From<Label> for Answer {
    fn from(l: Label) -> Self {
        Answer::Label(l)
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Label(l) => f.write_str(l.as_str()),
            Answer::Abstain => f.write_str(ABSTAIN),
        }
    }
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == ABSTAIN {
            Answer::Abstain
        } else {
            Answer::Label(Label(s))
        })
    }
}

/// Which benchmark a record came from; fixes the answer space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    StrategyQa,
    Mmlu,
}

impl DatasetKind {
    pub fn answer_space(self) -> Vec<Label> {
        match self {
            DatasetKind::StrategyQa => vec![Label::from("True"), Label::from("False")],
            DatasetKind::Mmlu => (0..4).map(|i| Label::new(i.to_string())).collect(),
        }
    }
}

/// One benchmark question with its gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub text: String,
    pub answer_space: Vec<Label>,
    pub gold: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl QuestionRecord {
    pub fn strategyqa(question_id: impl Into<String>, text: impl Into<String>, gold: bool) -> Self {
        QuestionRecord {
            question_id: question_id.into(),
            text: text.into(),
            answer_space: DatasetKind::StrategyQa.answer_space(),
            gold: Label::from(if gold { "True" } else { "False" }),
            subject: None,
        }
    }

    pub fn mmlu(
        question_id: impl Into<String>,
        text: impl Into<String>,
        gold: usize,
        subject: Option<String>,
    ) -> Self {
        QuestionRecord {
            question_id: question_id.into(),
            text: text.into(),
            answer_space: DatasetKind::Mmlu.answer_space(),
            gold: Label::new(gold.to_string()),
            subject,
        }
    }

    /// Comma-separated answer space for prompt instructions.
    pub fn options_text(&self) -> String {
        self.answer_space
            .iter()
            .map(Label::as_str)
            .collect::<Vec<_>>()
            .join(", ")
    }
}
