use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DebateError;

/// Default influence floor.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Per-agent credibility: `raw = max(epsilon, accuracy)`, normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentWeights {
    pub epsilon: f64,
    pub raw: BTreeMap<String, f64>,
    pub normalized: BTreeMap<String, f64>,
}

impl AgentWeights {
    /// Normalized weight of `agent`, zero for unknown agents.
    pub fn weight(&self, agent: &str) -> f64 {
        self.normalized.get(agent).copied().unwrap_or(0.0)
    }

    /// Equal weights for `agents`.
    pub fn uniform<'a>(agents: impl IntoIterator<Item = &'a str>, epsilon: f64) -> Self {
        let accuracies: BTreeMap<String, f64> = agents.into_iter().map(|a| (a.to_string(), 1.0)).collect();
        optimize_weights(&accuracies, epsilon).expect("uniform accuracies are valid")
    }
}

/// Clamps accuracies at `epsilon` and normalizes them into influence shares.
pub fn optimize_weights(
    accuracies: &BTreeMap<String, f64>,
    epsilon: f64,
) -> Result<AgentWeights, DebateError> {
    if accuracies.is_empty() {
        return Err(DebateError::Validation("no agent accuracies given".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(DebateError::Validation(format!("epsilon {epsilon} outside (0, 1)")));
    }
    for (agent, acc) in accuracies {
        if !(0.0..=1.0).contains(acc) {
            return Err(DebateError::Validation(format!(
                "accuracy {acc} for {agent} outside [0, 1]"
            )));
        }
    }
    let raw: BTreeMap<String, f64> = accuracies
        .iter()
        .map(|(a, acc)| (a.clone(), acc.max(epsilon)))
        .collect();
    let total: f64 = raw.values().sum();
    let normalized = raw.iter().map(|(a, w)| (a.clone(), w / total)).collect();
    Ok(AgentWeights { epsilon, raw, normalized })
}
