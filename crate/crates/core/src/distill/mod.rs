//! Distillation of interaction graphs into the decomposer-solver student.

mod examples;
mod student;
mod train;

use std::path::PathBuf;

pub use examples::{
    chain_text, contrastive_pairs, decomposer_synthesis_prompt, enumerate_paths, extract_examples,
    solver_synthesis_prompt, ExampleKind, ExtractOptions, TrainingExample,
};
pub use student::{chain_tokens, score_chain, score_chain_on_tape, StudentConfig, StudentUnit, StudentVars};
pub use train::{
    evaluate, load_trained, save_trained, train, validation_split, EpochRecord, QuestionBundle, TrainConfig,
    TrainOutcome, TrainingHistory,
};

use crate::agents::BackendError;
use crate::gcn::GcnError;
use crate::graph::GraphError;
use crate::losses::LossError;
use crate::params::ParamError;

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("synthesis for {question_id} failed: {source}")]
    Backend { question_id: String, source: BackendError },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("training diverged at epoch {epoch} step {step}; last good checkpoint: {last_good:?}")]
    Diverged { epoch: usize, step: usize, last_good: Option<PathBuf> },
    #[error(transparent)]
    Checkpoint(#[from] ParamError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Gcn(#[from] GcnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
