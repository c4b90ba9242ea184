//! Datasets, splits, exact-match scoring, the MAS/SAS comparison and run
//! configuration.

mod compare;
mod config;
mod data;
mod metrics;
pub mod pipeline;
mod split;

use std::path::PathBuf;

pub use compare::{compare_mas_sas, solo_answer, solo_prompt, ArmResult, CompareReport, QuestionDecision};
pub use config::{GraphSection, SmagdiConfig};
pub use data::{
    load_dataset, load_mmlu, load_records, load_strategyqa, mmlu_text, parse_bool, parse_choice, save_records,
};
pub use metrics::{accuracy, evaluate_predictions, exact_match, MetricsReport, SubjectMetrics};
pub use split::{split, SplitSpec};

use crate::agents::BackendError;
use crate::debate::DebateError;
use crate::distill::DistillError;
use crate::graph::GraphError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{}: row {row}: {message}", path.display())]
    Row { path: PathBuf, row: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("accuracy is undefined for an empty prediction list")]
    UndefinedAccuracy,
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Debate(#[from] DebateError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}
