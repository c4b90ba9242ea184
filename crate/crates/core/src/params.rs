//! Named parameter tensors and their JSON checkpoint format.
//!
//! A checkpoint is `{"format_version": 1, "manifest": [{"name", "shape"}],
//! "data": [[...]], "meta": {...}}` with tensors flattened row-major in
//! manifest order.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ParamError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: [usize; 2],
}

/// Ordered collection of named matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedTensors {
    entries: Vec<(String, Array2<f64>)>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    manifest: Vec<ManifestEntry>,
    data: Vec<Vec<f64>>,
    #[serde(default)]
    meta: serde_json::Value,
}

impl NamedTensors {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Array2<f64>) {
        self.entries.push((name.into(), tensor));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Removes and returns `name`, checking its shape.
    pub fn take(&mut self, name: &str, shape: (usize, usize)) -> Result<Array2<f64>, ParamError> {
        let pos = self
            .entries
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| ParamError::Format(format!("missing tensor {name}")))?;
        let (_, t) = self.entries.remove(pos);
        if t.dim() != shape {
            return Err(ParamError::Format(format!("tensor {name} has shape {:?}, expected {shape:?}", t.dim())));
        }
        Ok(t)
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.entries
            .iter()
            .map(|(n, t)| ManifestEntry { name: n.clone(), shape: [t.nrows(), t.ncols()] })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_json(&self, meta: serde_json::Value) -> String {
        let file = CheckpointFile {
            format_version: FORMAT_VERSION,
            manifest: self.manifest(),
            data: self.entries.iter().map(|(_, t)| t.iter().copied().collect()).collect(),
            meta,
        };
        serde_json::to_string(&file).expect("finite tensors serialize")
    }

    pub fn from_json(text: &str) -> Result<(Self, serde_json::Value), ParamError> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(ParamError::Format(format!("unsupported format_version {}", file.format_version)));
        }
        if file.manifest.len() != file.data.len() {
            return Err(ParamError::Format("manifest and data lengths differ".into()));
        }
        let mut out = Self::new();
        for (entry, flat) in file.manifest.into_iter().zip(file.data) {
            let [r, c] = entry.shape;
            let t = Array2::from_shape_vec((r, c), flat)
                .map_err(|_| ParamError::Format(format!("tensor {} does not match shape {r}x{c}", entry.name)))?;
            out.push(entry.name, t);
        }
        Ok((out, file.meta))
    }

    pub fn save(&self, path: &Path, meta: serde_json::Value) -> Result<(), ParamError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json(meta))?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value), ParamError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_exact() {
        let mut t = NamedTensors::new();
        t.push("a", Array2::from_shape_fn((2, 3), |(i, j)| (i as f64 + 0.1) / (j as f64 + 3.0)));
        t.push("b", Array2::from_elem((1, 1), std::f64::consts::PI));
        let (back, meta) = NamedTensors::from_json(&t.to_json(serde_json::json!({"epoch": 3}))).unwrap();
        assert_eq!(back, t);
        assert_eq!(meta["epoch"], 3);
        assert_eq!(back.parameter_count(), 7);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let text = r#"{"format_version":1,"manifest":[{"name":"a","shape":[2,2]}],"data":[[1,2,3]]}"#;
        assert!(NamedTensors::from_json(text).is_err());
        let mut t = NamedTensors::new();
        t.push("a", Array2::zeros((2, 2)));
        assert!(t.clone().take("a", (2, 3)).is_err());
        assert!(t.take("missing", (2, 2)).is_err());
    }
}
