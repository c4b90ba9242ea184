//! Small causal language models used as the student's decomposer and solver.

mod tokenizer;
mod transformer;

pub use tokenizer::{decode, encode, encode_pair, Sequence, BOS, EOS, VOCAB_SIZE};
pub use transformer::{LmOutput, TinyTransformer, TransformerConfig};

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("generation failed: {0}")]
    Failed(String),
}

/// Anything that continues a prompt with text.
pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str, max_tokens: usize, temperature: f64) -> Result<String, GenerationError>;
}

/// A transformer paired with a sampling seed. Sampling is seeded from the
/// prompt so equal prompts give equal continuations.
pub struct SeededGenerator<'a> {
    pub model: &'a TinyTransformer,
    pub seed: u64,
}

impl TextGenerator for SeededGenerator<'_> {
    fn generate(&self, prompt: &str, max_tokens: usize, temperature: f64) -> Result<String, GenerationError> {
        let seed = self.seed ^ crate::util::stable_hash(prompt);
        Ok(self.model.generate(prompt, max_tokens, temperature, seed))
    }
}
