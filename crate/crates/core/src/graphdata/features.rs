use super::network::AttributedNetwork;
use crate::numkernel::SparseMatrix;

/// Symmetric normalization `D^{-1/2} A' D^{-1/2}` with `A' = A + I` when
/// `add_self_loops` is set, `A' = A` otherwise. Zero-degree rows stay zero.
pub fn normalize_adjacency(net: &AttributedNetwork, add_self_loops: bool) -> SparseMatrix {
    let n = net.n_nodes();
    let base = net.adjacency();
    let mut deg = base.row_sums();
    if add_self_loops {
        deg.iter_mut().for_each(|d| *d += 1.0);
    }
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let loops = (0..n)
        .filter(|_| add_self_loops)
        .map(|i| (i, i, 1.0));
    SparseMatrix::from_triplets(
        n,
        n,
        base.triplets()
            .chain(loops)
            .map(|(i, j, w)| (i, j, w * inv_sqrt[i] * inv_sqrt[j])),
    )
    .expect("normalized entries stay in range")
}

/// Node input features `[A | X]`, N×(N+M), using the binarized adjacency.
pub fn build_node_features(net: &AttributedNetwork) -> SparseMatrix {
    net.adjacency_binary()
        .hstack(net.attributes())
        .expect("adjacency and attributes share the node dimension")
}

/// Attribute input features `Xᵀ`, M×N.
pub fn build_attr_features(net: &AttributedNetwork) -> SparseMatrix {
    net.attributes().transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::DenseMatrix;

    fn net(edges: &[(usize, usize)], n: usize, x: &[(usize, usize)], m: usize) -> AttributedNetwork {
        let adj = SparseMatrix::from_triplets(
            n,
            n,
            edges.iter().flat_map(|&(i, j)| [(i, j, 1.0), (j, i, 1.0)]),
        )
        .unwrap();
        let attrs = SparseMatrix::from_triplets(n, m, x.iter().map(|&(i, a)| (i, a, 1.0))).unwrap();
        AttributedNetwork::new(adj, attrs, vec![None; n], 2).unwrap()
    }

    #[test]
    fn single_edge_without_loops() {
        let g = net(&[(0, 1)], 2, &[], 1);
        let a = normalize_adjacency(&g, false).to_dense();
        assert_eq!(a, DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
    }

    #[test]
    fn triangle_without_loops() {
        let g = net(&[(0, 1), (1, 2), (0, 2)], 3, &[], 1);
        let a = normalize_adjacency(&g, false).to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 0.5 };
                assert!((a.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_edge_with_loops() {
        let g = net(&[(0, 1)], 2, &[], 1);
        let a = normalize_adjacency(&g, true).to_dense();
        for v in a.as_slice() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_node_without_loops_is_zero_row() {
        let g = net(&[(0, 1)], 3, &[], 1);
        let a = normalize_adjacency(&g, false);
        assert_eq!(a.row_nnz(2), 0);
    }

    #[test]
    fn node_features_stack_adjacency_and_attributes() {
        let g = net(&[(0, 1)], 2, &[(0, 0)], 1);
        let f = build_node_features(&g).to_dense();
        assert_eq!(f, DenseMatrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.0]]));
    }

    #[test]
    fn zero_attributes_leave_right_block_empty() {
        let g = net(&[(0, 1), (1, 2)], 3, &[], 4);
        let f = build_node_features(&g);
        assert!(f.triplets().all(|(_, j, _)| j < 3));
    }

    #[test]
    fn attr_features_transpose() {
        let g = net(&[(0, 1)], 2, &[(0, 0), (1, 1)], 2);
        assert_eq!(build_attr_features(&g).to_dense(), DenseMatrix::identity(2));
        let empty = net(&[(0, 1)], 2, &[], 2);
        assert_eq!(build_attr_features(&empty).nnz(), 0);
    }
}
