//! Laplacian positional encodings.
//!
//! Uses the symmetric-normalized Laplacian `L = I - D^{-1/2} A D^{-1/2}` of the
//! undirected, unweighted skeleton. Isolated nodes have `D^{-1/2} = 0`, which
//! leaves a unit diagonal entry.

use ndarray::Array2;

use super::{GraphError, InteractionGraph};

/// Eigenvalues at or below this are treated as zero.
pub const ZERO_EIGENVALUE: f64 = 1e-8;
const SIGN_THRESHOLD: f64 = 1e-8;

pub fn normalized_laplacian(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut adj = Array2::<f64>::zeros((n, n));
    for &(a, b) in edges {
        if a != b {
            adj[[a, b]] = 1.0;
            adj[[b, a]] = 1.0;
        }
    }
    let inv_sqrt: Vec<f64> = adj
        .rows()
        .into_iter()
        .map(|r| {
            let d = r.sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - inv_sqrt[i] * adj[[i, j]] * inv_sqrt[j]
    })
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in ascending order and matching eigenvector columns.
pub fn symmetric_eigen(matrix: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = matrix.nrows();
    let mut a = matrix.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (values, vectors)
}

/// Flips `column` so its first clearly non-zero entry is positive.
pub fn fix_sign(column: &mut [f64]) {
    if let Some(first) = column.iter().find(|x| x.abs() > SIGN_THRESHOLD) {
        if *first < 0.0 {
            column.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `[n, k]` encodings: eigenvectors for the `k` smallest non-zero eigenvalues,
/// zero columns where fewer exist.
pub fn laplacian_pe_from_edges(
    n: usize,
    edges: &[(usize, usize)],
    k: usize,
) -> Result<Array2<f64>, GraphError> {
    if k >= n {
        return Err(GraphError::Validation(format!(
            "positional dimension {k} needs at least {} nodes, graph has {n}",
            k + 1
        )));
    }
    let (values, vectors) = symmetric_eigen(&normalized_laplacian(n, edges));
    let mut pe = Array2::zeros((n, k));
    let picked = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > ZERO_EIGENVALUE)
        .map(|(i, _)| i)
        .take(k);
    for (col, idx) in picked.enumerate() {
        let mut column: Vec<f64> = vectors.column(idx).to_vec();
        fix_sign(&mut column);
        for (r, x) in column.into_iter().enumerate() {
            pe[[r, col]] = x;
        }
    }
    Ok(pe)
}

fn skeleton(graph: &InteractionGraph) -> Vec<(usize, usize)> {
    graph.edges.iter().map(|e| (e.src, e.dst)).collect()
}

/// Laplacian positional encoding of `graph`; requires `k < |V|`.
pub fn laplacian_pe(graph: &InteractionGraph, k: usize) -> Result<Array2<f64>, GraphError> {
    laplacian_pe_from_edges(graph.nodes.len(), &skeleton(graph), k)
}

/// Fixed-width `[n, k]` encoding for batching: uses `min(k, |V| - 1)`
/// eigenvectors and zero-pads the remaining columns.
pub fn positional_encoding(graph: &InteractionGraph, k: usize) -> Array2<f64> {
    let n = graph.nodes.len();
    let usable = k.min(n.saturating_sub(1));
    let inner = laplacian_pe_from_edges(n, &skeleton(graph), usable).expect("usable < n");
    let mut out = Array2::zeros((n, k));
    out.slice_mut(ndarray::s![.., ..usable]).assign(&inner);
    out
}
