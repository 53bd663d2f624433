use ndarray::Array2;

use super::TextGraph;

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    /// `self * dense`, accumulating each output row in column order.
    pub fn matmul(&self, dense: &Array2<f64>) -> Array2<f64> {
        assert_eq!(dense.nrows(), self.n, "sparse-dense shape mismatch");
        let mut out = Array2::zeros((self.n, dense.ncols()));
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut out_row = out.row_mut(i);
            for (&j, &a) in cols.iter().zip(vals) {
                out_row.scaled_add(a, &dense.row(j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                out[[i, j]] = a;
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &a)| self.get(j, i) == a)
        })
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` where `D` is the degree matrix of `A + I`.
pub fn normalized_adjacency(graph: &TextGraph) -> SparseMatrix {
    normalized_adjacency_from_edges(graph.node_count(), graph.edges())
}

/// Same as [`normalized_adjacency`] for a bare undirected edge list. Pairs must
/// be distinct and free of self-loops.
pub fn normalized_adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> SparseMatrix {
    let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let deg: Vec<f64> = adj.iter().map(|r| r.len() as f64).collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for (i, row) in adj.iter_mut().enumerate() {
        row.sort_unstable();
        for &j in row.iter() {
            indices.push(j);
            values.push(1.0 / (deg[i] * deg[j]).sqrt());
        }
        indptr.push(indices.len());
    }
    SparseMatrix {
        n,
        indptr,
        indices,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> TextGraph {
        TextGraph::new(
            vec![String::new(); n],
            vec![0; n],
            vec!["only".into()],
            edges.iter().copied(),
        )
        .unwrap()
    }

    #[test]
    fn isolated_node_is_identity() {
        let a = normalized_adjacency(&graph(1, &[]));
        assert_eq!(a.to_dense(), ndarray::arr2(&[[1.0]]));
    }

    #[test]
    fn single_edge_is_all_halves() {
        let a = normalized_adjacency(&graph(2, &[(0, 1)]));
        assert_eq!(a.to_dense(), ndarray::arr2(&[[0.5, 0.5], [0.5, 0.5]]));
    }

    /// Dense construction: A + I, degrees by row sums, elementwise scaling.
    fn dense_oracle(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
        let mut a = Array2::<f64>::eye(n);
        for &(u, v) in edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
        Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (deg[i] * deg[j]).sqrt())
    }

    #[test]
    fn matches_dense_oracle_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 6;
            let edges: Vec<(usize, usize)> = (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                .filter(|_| rng.random_bool(0.4))
                .collect();
            let sparse = normalized_adjacency(&graph(n, &edges));
            let oracle = dense_oracle(n, &edges);
            let dense = sparse.to_dense();
            for (x, y) in dense.iter().zip(oracle.iter()) {
                assert!((x - y).abs() <= 1e-15, "{x} vs {y}");
            }
            assert!(sparse.is_symmetric());
            let x = Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f64 - 4.0);
            let prod = sparse.matmul(&x);
            let expected = oracle.dot(&x);
            for (p, e) in prod.iter().zip(expected.iter()) {
                assert!((p - e).abs() <= 1e-12);
            }
        }
    }
}
