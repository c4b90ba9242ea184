use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GraphError, MagNode};

pub const DEFAULT_HASH_DIM: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding service error: {0}")]
    Service(String),
    #[error("expected {expected}-dimensional vectors, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A sentence embedder with a fixed output width.
pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Deterministic bag-of-words embedder: each lowercased token adds a signed
/// unit to a hashed bucket, and the result is L2-normalized. The empty text
/// maps to the zero vector.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding width must be positive");
        Self { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_DIM)
    }
}

impl TextEmbedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; self.dim];
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let digest = Sha256::digest(token.to_lowercase().as_bytes());
            let bucket = u64::from_le_bytes(digest[..8].try_into().unwrap()) as usize % self.dim;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Known output widths of sentence-transformer models.
pub fn known_model_dim(model: &str) -> Option<usize> {
    match model.rsplit('/').next().unwrap_or(model) {
        "all-mpnet-base-v2" => Some(768),
        "all-MiniLM-L6-v2" | "all-MiniLM-L12-v2" => Some(384),
        _ => None,
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Adapter for an HTTP sentence-embedding service.
///
/// Request: `POST url {"model", "texts": [..]}`; response `{"embeddings": [[..]]}`.
pub struct HttpEmbedder {
    url: String,
    model: String,
    dim: usize,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    /// `dim` defaults to the model's published width when known.
    pub fn new(url: &str, model: &str, dim: Option<usize>, timeout: Duration) -> Result<Self, EmbedError> {
        let dim = dim
            .or_else(|| known_model_dim(model))
            .ok_or_else(|| EmbedError::Service(format!("unknown width for model {model}; set it explicitly")))?;
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Ok(Self { url: url.to_string(), model: model.to_string(), dim, agent })
    }

    /// Embeds a probe string and checks the service returns the advertised width.
    pub fn verify(&self) -> Result<(), EmbedError> {
        self.embed("probe").map(|_| ())
    }
}

impl TextEmbedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let body = EmbedRequest { model: &self.model, texts: vec![text] };
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| EmbedError::Service(e.to_string()))?;
        let parsed: EmbedResponse = resp.body_mut().read_json().map_err(|e| EmbedError::Service(e.to_string()))?;
        let v = parsed
            .embeddings
            .into_iter()
            .next()
            .ok_or_else(|| EmbedError::Service("empty embeddings list".into()))?;
        if v.len() != self.dim {
            return Err(EmbedError::Dimension { expected: self.dim, got: v.len() });
        }
        Ok(v)
    }
}

/// One vector per node, in node order.
pub fn embed_nodes(nodes: &[MagNode], embedder: &dyn TextEmbedder) -> Result<Vec<Vec<f64>>, GraphError> {
    nodes
        .iter()
        .map(|n| {
            let v = embedder.embed(&n.text).map_err(|source| GraphError::Embed { node_id: n.node_id, source })?;
            if v.len() != embedder.dim() {
                return Err(GraphError::Embed {
                    node_id: n.node_id,
                    source: EmbedError::Dimension { expected: embedder.dim(), got: v.len() },
                });
            }
            Ok(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeKind;

    struct Failing;
    impl TextEmbedder for Failing {
        fn dim(&self) -> usize {
            4
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
            if text.contains("bad") {
                Err(EmbedError::Service("boom".into()))
            } else {
                Ok(vec![0.0; 4])
            }
        }
    }

    fn node(id: usize, text: &str) -> MagNode {
        MagNode {
            node_id: id,
            kind: NodeKind::Response,
            agent_id: Some("Lawyer".into()),
            round: Some(1),
            text: text.into(),
            answer: None,
            correct: Some(true),
            semantic_embedding: vec![],
            positional_encoding: vec![],
        }
    }

    #[test]
    fn hashing_is_deterministic_and_normalized() {
        let e = HashingEmbedder::default();
        let a = e.embed("The quick brown fox").unwrap();
        assert_eq!(a, e.embed("The quick brown fox").unwrap());
        assert_eq!(a.len(), 64);
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_ne!(a, e.embed("A slow green turtle").unwrap());
    }

    #[test]
    fn empty_text_gives_zero_vector() {
        let v = HashingEmbedder::new(16).embed("").unwrap();
        assert_eq!(v, vec![0.0; 16]);
    }

    #[test]
    fn mpnet_width() {
        assert_eq!(known_model_dim("sentence-transformers/all-mpnet-base-v2"), Some(768));
        let e = HttpEmbedder::new("http://127.0.0.1:9", "all-mpnet-base-v2", None, Duration::from_millis(50)).unwrap();
        assert_eq!(e.dim(), 768);
        assert!(HttpEmbedder::new("http://x", "mystery", None, Duration::from_secs(1)).is_err());
    }

    #[test]
    fn failure_names_node() {
        let nodes = vec![node(0, "fine"), node(7, "bad text")];
        match embed_nodes(&nodes, &Failing) {
            Err(GraphError::Embed { node_id, .. }) => assert_eq!(node_id, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn http_embedder_checks_width() {
        use std::io::{BufRead, BufReader, Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            for _ in 0..2 {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let payload = r#"{"embeddings":[[0.1,0.2,0.3]]}"#;
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                    payload.len()
                )
                .unwrap();
            }
        });
        let url = format!("http://{addr}/embed");
        let ok = HttpEmbedder::new(&url, "custom", Some(3), Duration::from_secs(5)).unwrap();
        assert_eq!(ok.embed("hi").unwrap(), vec![0.1, 0.2, 0.3]);
        let wrong = HttpEmbedder::new(&url, "all-mpnet-base-v2", None, Duration::from_secs(5)).unwrap();
        assert!(matches!(wrong.verify(), Err(EmbedError::Dimension { expected: 768, got: 3 })));
        server.join().unwrap();
    }
}
