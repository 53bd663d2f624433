//! Text encoders and the embedding-space queries used by generation, edge
//! assignment and the metrics.

mod hashing;
mod remote;

pub use hashing::{encode_hashing, hash_token, tokenize};
pub use remote::{encode_remote, EmbeddingsRequest, EmbeddingsResponse, EmbeddingDatum};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-per-node embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: Array2<f64>,
    encoder_id: String,
}

impl EmbeddingMatrix {
    pub fn new(rows: Array2<f64>, encoder_id: impl Into<String>) -> Self {
        Self {
            rows,
            encoder_id: encoder_id.into(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], dim: usize, encoder_id: impl Into<String>) -> Result<Self> {
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        let rows = Array2::from_shape_vec((rows.len(), dim), flat).expect("shape checked");
        Ok(Self::new(rows, encoder_id))
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn into_rows(self) -> Array2<f64> {
        self.rows
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.rows.outer_iter().map(|r| r.to_vec()).collect()
    }

    /// Stacks `extra` below these rows.
    pub fn stacked(&self, extra: &Array2<f64>) -> Result<EmbeddingMatrix> {
        if extra.nrows() > 0 && extra.ncols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: extra.ncols(),
            });
        }
        let rows = if extra.nrows() == 0 {
            self.rows.clone()
        } else {
            ndarray::concatenate(Axis(0), &[self.rows.view(), extra.view()])
                .expect("dimensions checked")
        };
        Ok(Self::new(rows, self.encoder_id.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[serde(alias = "hashing")]
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Output dimension of the hashing encoder.
    pub dim: usize,
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub batch_size: usize,
    pub retries: usize,
    pub backoff_ms: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Hash,
            dim: 256,
            endpoint: "http://127.0.0.1:8080".into(),
            model: "all-MiniLM-L6-v2".into(),
            timeout_secs: 60,
            api_key_env: None,
            batch_size: 64,
            retries: 3,
            backoff_ms: 200,
        }
    }
}

impl EncoderConfig {
    pub fn hashing(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }
}

/// Encodes with whichever encoder the config selects.
pub fn encode(texts: &[String], cfg: &EncoderConfig) -> Result<EmbeddingMatrix> {
    match cfg.kind {
        EncoderKind::Hash => encode_hashing(texts, cfg.dim),
        EncoderKind::Remote => encode_remote(texts, cfg),
    }
}

pub(crate) fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// `dot(a, b) / (|a| |b|)`, or 0 when either vector is all-zero.
pub fn cosine_similarity(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

/// The `k` candidates passing `keep` that are most cosine-similar to
/// `anchor`, excluding the anchor itself. Ties go to the lower node id.
pub fn knn_by_cosine(
    anchor: usize,
    k: usize,
    emb: &EmbeddingMatrix,
    candidates: &[usize],
    keep: impl Fn(usize) -> bool,
) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    let a = emb.row(anchor);
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .copied()
        .filter(|&u| u != anchor && keep(u))
        .map(|u| (u, cosine_similarity(a, emb.row(u)).expect("shared matrix")))
        .collect();
    scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    scored.truncate(k);
    scored.into_iter().map(|(u, _)| u).collect()
}

/// Same-label nearest neighbors of `anchor` among `candidates`.
pub fn knn_same_class(
    anchor: usize,
    k: usize,
    emb: &EmbeddingMatrix,
    labels: &[usize],
    candidates: &[usize],
) -> Vec<usize> {
    let target = labels[anchor];
    knn_by_cosine(anchor, k, emb, candidates, |u| labels[u] == target)
}

/// Per-class mean of the rows listed in `subset`; `None` for classes with no
/// member in the subset.
pub fn class_centroids(
    emb: &EmbeddingMatrix,
    labels: &[usize],
    subset: &[usize],
    class_count: usize,
) -> Vec<Option<Array1<f64>>> {
    let mut sums = vec![Array1::<f64>::zeros(emb.dim()); class_count];
    let mut counts = vec![0usize; class_count];
    for &v in subset {
        sums[labels[v]] += &emb.row(v);
        counts[labels[v]] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| (n > 0).then(|| s / n as f64))
        .collect()
}
