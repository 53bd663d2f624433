//! Embedding-space interpolation baselines: oversampling, SMOTE and Mixup.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::generation::VicinalPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericMode {
    Oversample,
    Smote,
    Mixup,
}

/// Synthetic rows with hard labels and the pair each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericSynthetic {
    pub rows: Array2<f64>,
    pub labels: Vec<usize>,
    pub pairs: Vec<VicinalPair>,
}

impl NumericSynthetic {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Copies tail-class training rows round-robin (ascending node id) until
/// each class reaches its target count of synthetic rows.
pub fn oversample(
    emb: &EmbeddingMatrix,
    labels: &[usize],
    train_idx: &[usize],
    targets: &std::collections::BTreeMap<usize, usize>,
) -> Result<NumericSynthetic> {
    let mut pairs = Vec::new();
    for (&class, &target) in targets {
        if target == 0 {
            continue;
        }
        let mut members: Vec<usize> = train_idx.iter().copied().filter(|&v| labels[v] == class).collect();
        members.sort_unstable();
        if members.is_empty() {
            return Err(Error::invalid(format!("class {class} has no training rows to copy")));
        }
        pairs.extend(members.iter().cycle().take(target).map(|&v| VicinalPair {
            anchor: v,
            partner: v,
            class,
        }));
    }
    let mut rows = Array2::zeros((pairs.len(), emb.dim()));
    for (i, p) in pairs.iter().enumerate() {
        rows.row_mut(i).assign(&emb.row(p.anchor));
    }
    Ok(NumericSynthetic {
        labels: pairs.iter().map(|p| p.class).collect(),
        rows,
        pairs,
    })
}

/// `x_i + λ (x_k - x_i)`.
pub fn smote_interpolate(xi: ArrayView1<'_, f64>, xk: ArrayView1<'_, f64>, lambda: f64) -> Result<Array1<f64>> {
    if xi.len() != xk.len() {
        return Err(Error::Dimension {
            expected: xi.len(),
            got: xk.len(),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(&xi + &((&xk - &xi) * lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationParams {
    /// Fixed `λ`; drawn from `Beta(α, α)` when absent.
    pub lambda: Option<f64>,
    pub beta_alpha: f64,
    pub seed: u64,
}

impl Default for InterpolationParams {
    fn default() -> Self {
        Self {
            lambda: None,
            beta_alpha: 1.0,
            seed: 0,
        }
    }
}

/// One draw from `Beta(α, α)`.
pub fn draw_lambda(alpha: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("Beta concentration {alpha} must be > 0")));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(beta.sample(rng))
}

/// `(λ x_i + (1-λ) x_j, λ y_i + (1-λ) y_j)`.
pub fn mixup_interpolate(
    xi: ArrayView1<'_, f64>,
    xj: ArrayView1<'_, f64>,
    yi: ArrayView1<'_, f64>,
    yj: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if xi.len() != xj.len() {
        return Err(Error::Dimension {
            expected: xi.len(),
            got: xj.len(),
        });
    }
    if yi.len() != yj.len() {
        return Err(Error::Dimension {
            expected: yi.len(),
            got: yj.len(),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok((
        &xi * lambda + &xj * (1.0 - lambda),
        &yi * lambda + &yj * (1.0 - lambda),
    ))
}

/// Arg-max of a soft label, with ties going to `first_class`.
pub fn hard_label(soft: ArrayView1<'_, f64>, first_class: usize) -> usize {
    let mut best = first_class;
    for (c, &v) in soft.iter().enumerate() {
        if v > soft[best] {
            best = c;
        }
    }
    best
}

/// Numeric counterpart of the text interpolation, over the same pair
/// schedule: oversampling copies the anchor, SMOTE draws `λ ~ U(0, 1)` on a
/// same-class pair, Mixup draws `λ ~ Beta(α, α)` and may cross classes.
pub fn numeric_augment(
    emb: &EmbeddingMatrix,
    labels: &[usize],
    class_count: usize,
    pairs: &[VicinalPair],
    mode: NumericMode,
    params: &InterpolationParams,
) -> Result<NumericSynthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut rows = Array2::zeros((pairs.len(), emb.dim()));
    let mut out_labels = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let (xi, xj) = (emb.row(p.anchor), emb.row(p.partner));
        let (row, label) = match mode {
            NumericMode::Oversample => (xi.to_owned(), p.class),
            NumericMode::Smote => {
                if labels[p.partner] != labels[p.anchor] {
                    return Err(Error::invalid(format!(
                        "SMOTE pair ({}, {}) crosses classes",
                        p.anchor, p.partner
                    )));
                }
                let lambda = match params.lambda {
                    Some(l) => l,
                    None => rng.random::<f64>(),
                };
                (smote_interpolate(xi, xj, lambda)?, p.class)
            }
            NumericMode::Mixup => {
                let lambda = match params.lambda {
                    Some(l) => l,
                    None => draw_lambda(params.beta_alpha, &mut rng)?,
                };
                let one_hot = |c: usize| Array1::from_shape_fn(class_count, |k| f64::from(u8::from(k == c)));
                let (yi, yj) = (one_hot(labels[p.anchor]), one_hot(labels[p.partner]));
                let (x, y) = mixup_interpolate(xi, xj, yi.view(), yj.view(), lambda)?;
                (x, hard_label(y.view(), labels[p.anchor]))
            }
        };
        rows.row_mut(i).assign(&row);
        out_labels.push(label);
    }
    Ok(NumericSynthetic {
        rows,
        labels: out_labels,
        pairs: pairs.to_vec(),
    })
}
