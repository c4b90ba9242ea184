//! Multi-agent interaction graphs built from debate transcripts.

mod batch;
mod build;
mod embed;
mod io;
mod spectral;

pub use batch::{masked_mean, normalized_adjacency, tensorize, GraphBatch};
pub use build::{build_graph, EdgeKind, InteractionGraph, MagEdge, MagNode, NodeKind, MAG_VERSION};
pub use embed::{embed_nodes, known_model_dim, EmbedError, HashingEmbedder, HttpEmbedder, TextEmbedder, DEFAULT_HASH_DIM};
pub use io::{deserialize, read_graphs, serialize, write_graphs, GraphReader, GraphWriter};
pub use spectral::{
    fix_sign, laplacian_pe, laplacian_pe_from_edges, normalized_laplacian, positional_encoding, symmetric_eigen,
};

pub const DEFAULT_PE_DIM: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("invalid graph: {0}")]
    Validation(String),
    #[error("embedding node {node_id}: {source}")]
    Embed { node_id: usize, source: EmbedError },
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("line {line}: {source}")]
    Line { line: usize, source: Box<GraphError> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fills every node's semantic embedding and `k`-wide positional encoding.
pub fn annotate(graph: &mut InteractionGraph, embedder: &dyn TextEmbedder, k: usize) -> Result<(), GraphError> {
    let vectors = embed_nodes(&graph.nodes, embedder)?;
    let pe = positional_encoding(graph, k);
    for ((node, v), row) in graph.nodes.iter_mut().zip(vectors).zip(pe.rows()) {
        node.semantic_embedding = v;
        node.positional_encoding = row.to_vec();
    }
    Ok(())
}

#[cfg(test)]
pub(crate) use build::tests as tests_support;
