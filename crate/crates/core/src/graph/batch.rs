use ndarray::{s, Array2, Array3, ArrayView2};

use super::{GraphError, InteractionGraph, NodeKind};
use crate::util::canonical_sum;

/// Padded, masked tensors for a batch of graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    /// `[B, N_max, D_sem + k]`
    pub node_features: Array3<f64>,
    /// `[B, N_max, N_max]`, normalized with self-loops; zero outside real nodes
    pub adjacency: Array3<f64>,
    pub node_mask: Array2<bool>,
    /// Correctness targets, 0 where absent
    pub labels: Array2<f64>,
    /// True on RESPONSE nodes, which are the only ones carrying a label
    pub label_mask: Array2<bool>,
    pub node_counts: Vec<usize>,
}

impl GraphBatch {
    pub fn batch_size(&self) -> usize {
        self.node_counts.len()
    }

    pub fn max_nodes(&self) -> usize {
        self.node_mask.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.dim().2
    }

    /// Unpadded normalized adjacency of graph `b`.
    pub fn adjacency_of(&self, b: usize) -> Array2<f64> {
        let n = self.node_counts[b];
        self.adjacency.slice(s![b, ..n, ..n]).to_owned()
    }

    /// Unpadded features of graph `b`.
    pub fn features_of(&self, b: usize) -> Array2<f64> {
        let n = self.node_counts[b];
        self.node_features.slice(s![b, ..n, ..]).to_owned()
    }
}

/// `D̂^{-1/2} (A_sym + I) D̂^{-1/2}` where `A_sym[i][j]` is the larger of the
/// two directed edge weights between `i` and `j`. Degrees are summed in a
/// canonical order so relabeling nodes permutes the result exactly.
pub fn normalized_adjacency(graph: &InteractionGraph) -> Array2<f64> {
    let n = graph.nodes.len();
    let mut a = Array2::<f64>::eye(n);
    for e in &graph.edges {
        if e.src != e.dst {
            let w = a[[e.src, e.dst]].max(e.weight);
            a[[e.src, e.dst]] = w;
            a[[e.dst, e.src]] = w;
        }
    }
    let inv_sqrt: Vec<f64> = a
        .rows()
        .into_iter()
        .map(|r| 1.0 / canonical_sum(&mut r.to_vec()).sqrt())
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| inv_sqrt[i] * a[[i, j]] * inv_sqrt[j])
}

fn feature_width(graph: &InteractionGraph) -> Result<usize, GraphError> {
    let first = &graph.nodes[0];
    let (sem, pos) = (first.semantic_embedding.len(), first.positional_encoding.len());
    for node in &graph.nodes {
        if node.semantic_embedding.len() != sem || node.positional_encoding.len() != pos {
            return Err(GraphError::Validation(format!(
                "graph {} node {} has feature widths ({}, {}), expected ({sem}, {pos})",
                graph.question_id,
                node.node_id,
                node.semantic_embedding.len(),
                node.positional_encoding.len()
            )));
        }
    }
    Ok(sem + pos)
}

/// Pads `graphs` to a common node count.
pub fn tensorize(graphs: &[InteractionGraph]) -> Result<GraphBatch, GraphError> {
    let first = graphs.first().ok_or_else(|| GraphError::Validation("empty graph batch".into()))?;
    let dim = feature_width(first)?;
    for g in graphs {
        let d = feature_width(g)?;
        if d != dim {
            return Err(GraphError::Validation(format!(
                "graph {} has feature width {d}, batch expects {dim}",
                g.question_id
            )));
        }
    }
    let b = graphs.len();
    let n_max = graphs.iter().map(|g| g.nodes.len()).max().unwrap_or(0);
    let mut batch = GraphBatch {
        node_features: Array3::zeros((b, n_max, dim)),
        adjacency: Array3::zeros((b, n_max, n_max)),
        node_mask: Array2::from_elem((b, n_max), false),
        labels: Array2::zeros((b, n_max)),
        label_mask: Array2::from_elem((b, n_max), false),
        node_counts: graphs.iter().map(|g| g.nodes.len()).collect(),
    };
    for (gi, g) in graphs.iter().enumerate() {
        let n = g.nodes.len();
        batch.adjacency.slice_mut(s![gi, ..n, ..n]).assign(&normalized_adjacency(g));
        for (i, node) in g.nodes.iter().enumerate() {
            batch.node_mask[[gi, i]] = true;
            for (j, x) in node.semantic_embedding.iter().chain(&node.positional_encoding).enumerate() {
                batch.node_features[[gi, i, j]] = *x;
            }
            if node.kind == NodeKind::Response {
                if let Some(c) = node.correct {
                    batch.label_mask[[gi, i]] = true;
                    batch.labels[[gi, i]] = if c { 1.0 } else { 0.0 };
                }
            }
        }
    }
    Ok(batch)
}

/// Mean of `values` over positions where `mask` is true; 0 when none are.
pub fn masked_mean(values: ArrayView2<f64>, mask: ArrayView2<bool>) -> f64 {
    let (sum, count) = values
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build::tests::{transcript, weights};
    use crate::graph::{build_graph, EdgeKind, MagEdge};
    use crate::record::Label;
    use nalgebra::DMatrix;

    fn graph(rounds: usize) -> InteractionGraph {
        let mut g = build_graph(&transcript(rounds, |r, a| (r + a) % 2 == 0), &weights(), &Label::from("True")).unwrap();
        for n in &mut g.nodes {
            n.semantic_embedding = vec![n.node_id as f64, 1.0];
            n.positional_encoding = vec![0.5];
        }
        g
    }

    fn dense_oracle(g: &InteractionGraph) -> DMatrix<f64> {
        let n = g.nodes.len();
        let mut a = DMatrix::<f64>::identity(n, n);
        for e in &g.edges {
            let w = a[(e.src, e.dst)].max(e.weight);
            a[(e.src, e.dst)] = w;
            a[(e.dst, e.src)] = w;
        }
        let d = DMatrix::from_diagonal(&a.row_sum_tr().map(|x| 1.0 / x.sqrt()));
        &d * a * &d
    }

    #[test]
    fn adjacency_matches_dense_oracle() {
        for r in 1..=3 {
            let g = graph(r);
            let ours = normalized_adjacency(&g);
            let oracle = dense_oracle(&g);
            for i in 0..g.nodes.len() {
                for j in 0..g.nodes.len() {
                    assert!((ours[[i, j]] - oracle[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn padding_and_masks() {
        let batch = tensorize(&[graph(1), graph(3)]).unwrap();
        assert_eq!(batch.max_nodes(), 16);
        assert_eq!(batch.node_mask.row(0).iter().filter(|&&m| m).count(), 6);
        assert_eq!(batch.node_mask.row(1).iter().filter(|&&m| m).count(), 16);
        assert!(batch.node_features.slice(s![0, 6.., ..]).iter().all(|&x| x == 0.0));
        assert!(batch.adjacency.slice(s![0, 6.., ..]).iter().all(|&x| x == 0.0));
        assert!(batch.adjacency.slice(s![0, .., 6..]).iter().all(|&x| x == 0.0));
        assert!(!batch.label_mask[[0, 0]]);
        assert_eq!(batch.label_mask.row(0).iter().filter(|&&m| m).count(), 5);
        assert_eq!(batch.feature_dim(), 3);
    }

    #[test]
    fn single_graph_round_trip() {
        let g = graph(2);
        let batch = tensorize(std::slice::from_ref(&g)).unwrap();
        assert_eq!(batch.adjacency_of(0), normalized_adjacency(&g));
        assert_eq!(batch.features_of(0)[[3, 0]], 3.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut g = graph(1);
        g.nodes[2].positional_encoding.push(1.0);
        assert!(tensorize(&[g]).is_err());
        let mut h = graph(1);
        for n in &mut h.nodes {
            n.positional_encoding.clear();
        }
        assert!(tensorize(&[graph(1), h]).is_err());
        assert!(tensorize(&[]).is_err());
    }

    #[test]
    fn fully_masked_reduction_is_zero() {
        let values = Array2::from_elem((2, 3), 7.0);
        let mask = Array2::from_elem((2, 3), false);
        assert_eq!(masked_mean(values.view(), mask.view()), 0.0);
        let mut mask = mask;
        mask[[1, 2]] = true;
        assert_eq!(masked_mean(values.view(), mask.view()), 7.0);
    }

    #[test]
    fn symmetrization_takes_the_larger_weight() {
        let mut g = graph(1);
        g.edges.push(MagEdge { src: 1, dst: 2, kind: EdgeKind::Influence, weight: 0.25 });
        g.edges.push(MagEdge { src: 2, dst: 1, kind: EdgeKind::Influence, weight: 0.5 });
        let a = normalized_adjacency(&g);
        assert!((a[[1, 2]] - a[[2, 1]]).abs() < 1e-15);
        assert!((a[[1, 2]] - dense_oracle(&g)[(1, 2)]).abs() < 1e-12);
    }
}
