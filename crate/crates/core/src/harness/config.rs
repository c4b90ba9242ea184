//! TOML run configuration. Sections mirror the modules; every key is
//! optional and command-line flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, SplitSpec};
use crate::debate::DebateConfig;
use crate::distill::{ExtractOptions, StudentConfig, TrainConfig};
use crate::gcn::GcnConfig;
use crate::graph::DEFAULT_PE_DIM;
use crate::losses::LossCoefficients;
use crate::scot::ScotConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSection {
    pub embedding_dim: usize,
    pub pe_dim: usize,
    /// Remote sentence-embedding service; the local hashing embedder is used when unset.
    pub embedder_url: Option<String>,
    pub embedder_model: String,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            pe_dim: DEFAULT_PE_DIM,
            embedder_url: None,
            embedder_model: "all-mpnet-base-v2".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmagdiConfig {
    pub seed: Option<u64>,
    pub split: SplitSpec,
    pub debate: DebateConfig,
    pub graph: GraphSection,
    pub extract: ExtractOptions,
    pub student: StudentConfig,
    pub gcn: GcnConfig,
    pub losses: LossCoefficients,
    pub train: TrainConfig,
    pub scot: ScotConfig,
}

impl SmagdiConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
        let mut c: Self = toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if let Some(seed) = c.seed {
            c.set_seed(seed);
        }
        Ok(c)
    }

    /// One seed for splits, initialization and shuffling.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.split.seed = seed;
        self.train.seed = seed;
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }
}
