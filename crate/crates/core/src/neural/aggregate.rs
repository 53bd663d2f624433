use ndarray::Array2;

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// Fixed mixing weights for [`aggregate_layer`].
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorParams {
    /// Self weight `α` in `[0, 1]`.
    pub alpha: f64,
    /// `(neighbor, β)` per node; a non-empty row must sum to 1.
    pub neighbor_weights: Vec<Vec<(usize, f64)>>,
}

impl AggregatorParams {
    /// Uniform `β = 1/deg` over each adjacency list.
    pub fn uniform(alpha: f64, neighbors: &[Vec<usize>]) -> Self {
        Self {
            alpha,
            neighbor_weights: neighbors
                .iter()
                .map(|ns| ns.iter().map(|&u| (u, 1.0 / ns.len() as f64)).collect())
                .collect(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.neighbor_weights.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.neighbor_weights.len(),
            });
        }
        for (v, row) in self.neighbor_weights.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            if let Some(&(u, b)) = row.iter().find(|&&(u, b)| u >= n || !(b >= 0.0)) {
                return Err(Error::invalid(format!(
                    "node {v}: bad neighbor weight ({u}, {b})"
                )));
            }
            let sum: f64 = row.iter().map(|&(_, b)| b).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!(
                    "node {v}: neighbor weights sum to {sum}, not 1"
                )));
            }
        }
        Ok(())
    }
}

/// `h'_v = α W h_v + (1 - α) Σ_u β_vu W h_u`, with rows of `h` as node
/// states and `w` of shape `p x p'`. A node without neighbors gets exactly
/// `α W h_v`.
pub fn aggregate_layer(h: &Array2<f64>, params: &AggregatorParams, w: &Array2<f64>) -> Result<Array2<f64>> {
    if h.ncols() != w.nrows() {
        return Err(Error::Dimension {
            expected: w.nrows(),
            got: h.ncols(),
        });
    }
    params.validate(h.nrows())?;
    Ok(aggregate_unchecked(h, params, w))
}

/// [`aggregate_layer`] without the weight checks.
pub(crate) fn aggregate_unchecked(h: &Array2<f64>, params: &AggregatorParams, w: &Array2<f64>) -> Array2<f64> {
    let wh = h.dot(w);
    let mut out = &wh * params.alpha;
    let rest = 1.0 - params.alpha;
    for (v, row) in params.neighbor_weights.iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        let mut acc = ndarray::Array1::<f64>::zeros(w.ncols());
        for &(u, b) in row {
            acc.scaled_add(b, &wh.row(u));
        }
        out.row_mut(v).scaled_add(rest, &acc);
    }
    out
}
