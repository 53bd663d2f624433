//! Confidence-guided attachment of synthetic nodes to the original graph.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::generation::SyntheticNode;
use crate::neural::{predict, train_classifier, ClassifierModel, ModelKind, TrainConfig};

/// `κ(z)`: the maximum softmax probability of an embedding-space classifier
/// trained on the original graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceNet {
    pub model: ClassifierModel,
}

impl ConfidenceNet {
    pub fn kappa(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let pred = predict(&self.model, &rows.to_owned(), None)?;
        Ok(pred
            .probs
            .rows()
            .into_iter()
            .map(|r| r.fold(0.0f64, |m, &p| m.max(p)))
            .collect())
    }
}

pub fn train_confidence(
    emb: &EmbeddingMatrix,
    labels: &[usize],
    train_idx: &[usize],
    class_count: usize,
    cfg: &TrainConfig,
) -> Result<ConfidenceNet> {
    let classes: BTreeSet<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    if classes.len() < 2 {
        return Err(Error::invalid(
            "the confidence classifier needs at least two classes in training",
        ));
    }
    let rows = emb.rows().select(Axis(0), train_idx);
    let sub_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let local: Vec<usize> = (0..train_idx.len()).collect();
    let model = train_classifier(ModelKind::Mlp, &rows, None, &sub_labels, &local, class_count, cfg)?;
    Ok(ConfidenceNet { model })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// One budget of `synthetic_count * n` edges shared by all synthetic nodes.
    Global,
    /// The `n` best targets of each synthetic node.
    PerNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeAssignConfig {
    /// Edges-per-synthetic-node multiplier `n`.
    pub factor: usize,
    /// Candidates scoring below this are never selected.
    pub threshold: f64,
    pub allow_synthetic_targets: bool,
    pub selection: Selection,
}

impl Default for EdgeAssignConfig {
    fn default() -> Self {
        Self {
            factor: 20,
            threshold: 0.0,
            allow_synthetic_targets: false,
            selection: Selection::Global,
        }
    }
}

impl EdgeAssignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factor == 0 {
            return Err(Error::invalid("edge factor n must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::invalid("edge threshold must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Position in the synthetic list.
    pub synthetic: usize,
    /// Node id of the attachment target.
    pub target: usize,
    pub score: f64,
}

/// `score(v̂, u) = κ(z_u) · cos(z_v̂, z_u)` for every synthetic row and every
/// row of `targets`.
pub fn score_edges(
    synthetic: ArrayView2<'_, f64>,
    targets: &EmbeddingMatrix,
    conf: &ConfidenceNet,
) -> Result<Vec<Candidate>> {
    if synthetic.ncols() != targets.dim() {
        return Err(Error::Dimension {
            expected: targets.dim(),
            got: synthetic.ncols(),
        });
    }
    let kappa = conf.kappa(targets.rows().view())?;
    score_with_kappa(synthetic, targets, &kappa)
}

/// [`score_edges`] with precomputed target confidences.
pub fn score_with_kappa(
    synthetic: ArrayView2<'_, f64>,
    targets: &EmbeddingMatrix,
    kappa: &[f64],
) -> Result<Vec<Candidate>> {
    let mut out = Vec::with_capacity(synthetic.nrows() * targets.len());
    for (s, row) in synthetic.rows().into_iter().enumerate() {
        for (u, &k) in kappa.iter().enumerate() {
            out.push(Candidate {
                synthetic: s,
                target: u,
                score: k * cosine_similarity(row, targets.row(u))?,
            });
        }
    }
    Ok(out)
}

fn by_rank(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.synthetic.cmp(&b.synthetic))
        .then(a.target.cmp(&b.target))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSelection {
    pub k_edge: usize,
    pub edges: Vec<Candidate>,
    /// Synthetic positions that received no edge, ascending.
    pub isolated: Vec<usize>,
}

/// Drops candidates below the threshold, then keeps the best
/// `synthetic_count * n` globally (or the best `n` per synthetic node).
/// Ties rank the lower synthetic position, then the lower target id, first.
pub fn select_topk(
    candidates: &[Candidate],
    synthetic_count: usize,
    cfg: &EdgeAssignConfig,
) -> EdgeSelection {
    let k_edge = synthetic_count * cfg.factor;
    let mut pool: Vec<Candidate> = candidates
        .iter()
        .copied()
        .filter(|c| c.score >= cfg.threshold)
        .collect();
    pool.sort_by(by_rank);
    let edges: Vec<Candidate> = match cfg.selection {
        Selection::Global => pool.into_iter().take(k_edge).collect(),
        Selection::PerNode => {
            let mut taken = vec![0usize; synthetic_count];
            pool.into_iter()
                .filter(|c| {
                    let t = &mut taken[c.synthetic];
                    *t += 1;
                    *t <= cfg.factor
                })
                .collect()
        }
    };
    let mut has_edge = vec![false; synthetic_count];
    for e in &edges {
        has_edge[e.synthetic] = true;
    }
    EdgeSelection {
        k_edge,
        edges,
        isolated: (0..synthetic_count).filter(|&i| !has_edge[i]).collect(),
    }
}

/// Global top-k selection.
pub fn select_topk_global(
    candidates: &[Candidate],
    synthetic_count: usize,
    cfg: &EdgeAssignConfig,
) -> EdgeSelection {
    select_topk(
        candidates,
        synthetic_count,
        &EdgeAssignConfig {
            selection: Selection::Global,
            ..cfg.clone()
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub k_edge: usize,
    pub edges_added: usize,
    pub isolated: usize,
    /// Minimum, quartiles and maximum of all candidate scores.
    pub score_quantiles: Vec<f64>,
}

/// Nearest-rank quantiles at 0, 0.25, 0.5, 0.75 and 1.
pub fn quantiles(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|q| v[((q * (v.len() - 1) as f64).round()) as usize])
        .collect()
}

pub fn synthetic_rows(synthetic: &[SyntheticNode], dim: usize) -> Result<Array2<f64>> {
    let mut rows = Array2::zeros((synthetic.len(), dim));
    for (i, node) in synthetic.iter().enumerate() {
        let e = node
            .embedding
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("synthetic node {i} has no embedding")))?;
        if e.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: e.len(),
            });
        }
        rows.row_mut(i).assign(&ArrayView1::from(e.as_slice()));
    }
    Ok(rows)
}

/// Scores and selects edges for synthetic embedding rows, returning each
/// row's `(target, score)` list sorted by target. Targets are the original
/// nodes `0..original.len()`; with `allow_synthetic_targets`, earlier
/// synthetic rows (ids `original.len() + j`) are candidates too.
pub fn assign_edges_rows(
    rows: ArrayView2<'_, f64>,
    original: &EmbeddingMatrix,
    conf: &ConfidenceNet,
    cfg: &EdgeAssignConfig,
) -> Result<(Vec<Vec<(usize, f64)>>, EdgeReport)> {
    cfg.validate()?;
    let mut candidates = score_edges(rows, original, conf)?;
    if cfg.allow_synthetic_targets && rows.nrows() > 0 {
        let synth_matrix = EmbeddingMatrix::new(rows.to_owned(), original.encoder_id());
        let kappa = conf.kappa(rows)?;
        let base = original.len();
        for c in score_with_kappa(rows, &synth_matrix, &kappa)? {
            if c.target < c.synthetic {
                candidates.push(Candidate {
                    target: base + c.target,
                    ..c
                });
            }
        }
    }
    let selection = select_topk(&candidates, rows.nrows(), cfg);
    let mut edges = vec![Vec::new(); rows.nrows()];
    for e in &selection.edges {
        edges[e.synthetic].push((e.target, e.score));
    }
    for list in &mut edges {
        list.sort_by_key(|&(t, _)| t);
    }
    let scores: Vec<f64> = candidates.iter().map(|c| c.score).collect();
    let report = EdgeReport {
        k_edge: selection.k_edge,
        edges_added: selection.edges.len(),
        isolated: selection.isolated.len(),
        score_quantiles: quantiles(&scores),
    };
    Ok((edges, report))
}

/// [`assign_edges_rows`] over embedded synthetic nodes; returns updated
/// copies with `edges` and `isolated` filled.
pub fn assign_edges(
    synthetic: &[SyntheticNode],
    original: &EmbeddingMatrix,
    conf: &ConfidenceNet,
    cfg: &EdgeAssignConfig,
) -> Result<(Vec<SyntheticNode>, EdgeReport)> {
    let rows = synthetic_rows(synthetic, original.dim())?;
    let (edges, report) = assign_edges_rows(rows.view(), original, conf, cfg)?;
    let out = synthetic
        .iter()
        .zip(edges)
        .map(|(node, edges)| SyntheticNode {
            isolated: edges.is_empty(),
            edges,
            ..node.clone()
        })
        .collect();
    Ok((out, report))
}

/// Copies the adjacency of `anchor`.
pub fn duplicate_edges(anchor: usize, neighbors: &[Vec<usize>]) -> Vec<usize> {
    neighbors.get(anchor).cloned().unwrap_or_default()
}
