//! Classification scores, boundary statistics, margins and vicinal risk.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{predict, ClassifierModel};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Self {
        Self {
            counts: Array2::zeros((class_count, class_count)),
        }
    }

    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        if counts.nrows() != counts.ncols() {
            return Err(Error::Dimension {
                expected: counts.nrows(),
                got: counts.ncols(),
            });
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(truth: &[usize], pred: &[usize], class_count: usize) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Dimension {
                expected: truth.len(),
                got: pred.len(),
            });
        }
        let mut m = Self::new(class_count);
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= class_count || p >= class_count {
                return Err(Error::invalid(format!("label pair ({t}, {p}) out of range")));
            }
            m.counts[[t, p]] += 1;
        }
        Ok(m)
    }

    pub fn class_count(&self) -> usize {
        self.counts.nrows()
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[[truth, pred]]
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts.row(class).sum()
    }

    /// Recall per class; `None` for classes with no true members.
    pub fn recalls(&self) -> Vec<Option<f64>> {
        (0..self.class_count())
            .map(|c| {
                let s = self.support(c);
                (s > 0).then(|| self.counts[[c, c]] as f64 / s as f64)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub acc: f64,
    pub bacc: f64,
    pub macro_f1: f64,
    pub gmean: f64,
    /// Classes without test support. They count as F1 = 0 in `macro_f1` and
    /// are left out of `bacc` and `gmean`.
    pub unsupported: Vec<usize>,
}

pub fn classification_metrics(m: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    let total = m.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let c = m.class_count();
    let trace: u64 = (0..c).map(|k| m.get(k, k)).sum();
    let recalls = m.recalls();
    let supported: Vec<f64> = recalls.iter().flatten().copied().collect();
    let bacc = supported.iter().sum::<f64>() / supported.len() as f64;
    let gmean = supported.iter().product::<f64>().powf(1.0 / supported.len() as f64);
    let f1: Vec<f64> = (0..c)
        .map(|k| {
            let tp = m.get(k, k) as f64;
            let predicted: u64 = (0..c).map(|t| m.get(t, k)).sum();
            let denom = m.support(k) as f64 + predicted as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .collect();
    Ok(ClassificationMetrics {
        acc: trace as f64 / total as f64,
        bacc,
        macro_f1: f1.iter().sum::<f64>() / c as f64,
        gmean,
        unsupported: (0..c).filter(|&k| recalls[k].is_none()).collect(),
    })
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Labelled reference points, grouped by class for manifold queries.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldIndex {
    points: Array2<f64>,
    labels: Vec<usize>,
}

impl ManifoldIndex {
    pub fn new(points: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::Dimension {
                expected: points.nrows(),
                got: labels.len(),
            });
        }
        Ok(Self { points, labels })
    }

    /// Index over the rows `subset` of `rows`.
    pub fn from_subset(rows: ArrayView2<'_, f64>, labels: &[usize], subset: &[usize]) -> Self {
        let points = Array2::from_shape_fn((subset.len(), rows.ncols()), |(i, j)| rows[[subset[i], j]]);
        Self {
            points,
            labels: subset.iter().map(|&v| labels[v]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Labels of the `k` nearest points; equal distances go to the lower
    /// index.
    pub fn knn_labels(&self, x: ArrayView1<'_, f64>, k: usize) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .points
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, p)| (sq_dist(x, p), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.iter().take(k).map(|&(_, i)| self.labels[i]).collect()
    }

    /// `min_{m ∈ M_c} ||x - m||`.
    pub fn dist_to_manifold(&self, x: ArrayView1<'_, f64>, class: usize) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.points
            .rows()
            .into_iter()
            .zip(&self.labels)
            .filter(|&(_, &l)| l == class)
            .map(|(p, _)| sq_dist(x, p))
            .min_by(f64::total_cmp)
            .map(f64::sqrt)
            .ok_or_else(|| Error::invalid(format!("class {class} has no reference points")))
    }
}

/// True when the k-NN majority label differs from `label`; a tie for the
/// majority counts as differing.
pub fn is_boundary(x: ArrayView1<'_, f64>, label: usize, reference: &ManifoldIndex, k: usize) -> bool {
    let near = reference.knn_labels(x, k);
    let mut counts = std::collections::BTreeMap::<usize, usize>::new();
    for l in near {
        *counts.entry(l).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    let winners: Vec<usize> = counts.iter().filter(|&(_, &n)| n == best).map(|(&l, _)| l).collect();
    winners != [label]
}

/// Boundary-coverage rate: fraction of samples whose k-NN majority label on
/// the reference set differs from their own.
pub fn bcr(samples: ArrayView2<'_, f64>, labels: &[usize], reference: &ManifoldIndex, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("BCR needs k >= 1"));
    }
    if reference.is_empty() {
        return Err(Error::invalid("BCR needs a non-empty reference set"));
    }
    if samples.nrows() == 0 {
        return Ok(0.0);
    }
    let hits = samples
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|&(x, &y)| is_boundary(x, y, reference, k))
        .count();
    Ok(hits as f64 / samples.nrows() as f64)
}

/// Score used when a sample sits on the nearest other-class centroid.
pub const BPS_CAP: f64 = 1e6;

/// Boundary proximity of one sample: `d_in / d_out`.
pub fn bps_score(x: ArrayView1<'_, f64>, label: usize, centroids: &[Option<Array1<f64>>]) -> Result<f64> {
    let undefined = |c: usize| Error::invalid(format!("centroid of class {c} is undefined"));
    let own = centroids.get(label).and_then(Option::as_ref).ok_or_else(|| undefined(label))?;
    let d_in = sq_dist(x, own.view()).sqrt();
    let d_out = centroids
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != label)
        .filter_map(|(_, m)| m.as_ref())
        .map(|m| sq_dist(x, m.view()).sqrt())
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::invalid("BPS needs at least one other defined centroid"))?;
    Ok(if d_out == 0.0 { BPS_CAP } else { (d_in / d_out).min(BPS_CAP) })
}

/// Mean boundary proximity score.
pub fn bps(samples: ArrayView2<'_, f64>, labels: &[usize], centroids: &[Option<Array1<f64>>]) -> Result<f64> {
    if samples.nrows() == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (x, &y) in samples.rows().into_iter().zip(labels) {
        sum += bps_score(x, y, centroids)?;
    }
    Ok(sum / samples.nrows() as f64)
}

/// In-class rate: share of samples the probe assigns to their intended
/// class.
pub fn icr(samples: &Array2<f64>, intended: &[usize], probe: &ClassifierModel) -> Result<f64> {
    if samples.nrows() == 0 {
        return Ok(0.0);
    }
    let pred = predict(probe, samples, None)?;
    let hits = pred.labels.iter().zip(intended).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / samples.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    pub margins: Vec<f64>,
    pub gamma_min: f64,
    /// Samples whose true logit ties the best other logit.
    pub ties: usize,
}

/// `γ(x) = f_y(x) - max_{j≠y} f_j(x)` per row.
pub fn margins(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<MarginStats> {
    if logits.nrows() != labels.len() {
        return Err(Error::Dimension {
            expected: logits.nrows(),
            got: labels.len(),
        });
    }
    if logits.ncols() < 2 {
        return Err(Error::invalid("margins need at least two classes"));
    }
    let mut out = Vec::with_capacity(labels.len());
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        if y >= row.len() {
            return Err(Error::invalid(format!("label {y} out of range")));
        }
        let other = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(row[y] - other);
    }
    Ok(MarginStats {
        gamma_min: out.iter().copied().fold(f64::INFINITY, f64::min),
        ties: out.iter().filter(|&&g| g == 0.0).count(),
        margins: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// Left side minus right side; non-negative exactly when `holds`.
    pub slack: f64,
    pub bound: f64,
}

/// Evaluates `γ_min_aug ≥ γ₀ − δ(1 − BCR)` under the ordering `δ ≥ γ₀`.
pub fn check_margin_bound(gamma0: f64, delta: f64, bcr: f64, gamma_min_aug: f64) -> Result<BoundCheck> {
    if !(0.0..=1.0).contains(&bcr) {
        return Err(Error::invalid(format!("BCR {bcr} outside [0, 1]")));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be positive"));
    }
    if delta < gamma0 {
        return Err(Error::invalid(format!(
            "delta {delta} is below gamma0 {gamma0}; the bound assumes delta >= gamma0"
        )));
    }
    let bound = gamma0 - delta * (1.0 - bcr);
    let slack = gamma_min_aug - bound;
    Ok(BoundCheck {
        holds: slack >= 0.0,
        slack,
        bound,
    })
}

/// The bound that the same assumptions do support: with no boundary
/// samples every margin stays at least `γ₀`; otherwise a boundary sample may
/// sit anywhere in `[−δ, δ]`, so only `min(γ₀, −δ)` is guaranteed.
pub fn check_margin_bound_supported(gamma0: f64, delta: f64, bcr: f64, gamma_min_aug: f64) -> Result<BoundCheck> {
    check_margin_bound(gamma0, delta, bcr, gamma_min_aug)?;
    let bound = if bcr == 0.0 { gamma0 } else { gamma0.min(-delta) };
    let slack = gamma_min_aug - bound;
    Ok(BoundCheck {
        holds: slack >= 0.0,
        slack,
        bound,
    })
}

/// Evaluates `R_aug − R_orig ≤ −L γ₀ (BCR − η)` with `η = δ/γ₀`, dropping
/// the unspecified `O(δ)` term.
pub fn check_vicinal_risk_bound(
    risk_orig: f64,
    risk_aug: f64,
    lipschitz: f64,
    gamma0: f64,
    delta: f64,
    bcr: f64,
) -> Result<BoundCheck> {
    if !(gamma0 > 0.0) {
        return Err(Error::invalid("the risk bound needs gamma0 > 0"));
    }
    let eta = delta / gamma0;
    let bound = -lipschitz * gamma0 * (bcr - eta);
    let slack = bound - (risk_aug - risk_orig);
    Ok(BoundCheck {
        holds: slack >= 0.0,
        slack,
        bound,
    })
}

/// Per-row cross-entropy `-log softmax(z)_y`.
pub fn cross_entropy_rows(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Vec<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = logits.row(i);
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .collect()
}

/// Mean over anchors of the mean loss of that anchor's samples.
/// `groups[i]` names the anchor of sample `i`; every anchor in `anchors`
/// needs at least one sample.
pub fn vicinal_risk_from_losses(losses: &[f64], groups: &[usize], anchors: &[usize]) -> Result<f64> {
    if losses.len() != groups.len() {
        return Err(Error::Dimension {
            expected: losses.len(),
            got: groups.len(),
        });
    }
    if anchors.is_empty() {
        return Err(Error::invalid("vicinal risk needs at least one anchor"));
    }
    let mut total = 0.0;
    for &a in anchors {
        let (sum, n) = losses
            .iter()
            .zip(groups)
            .filter(|&(_, &g)| g == a)
            .fold((0.0, 0usize), |(s, n), (&l, _)| (s + l, n + 1));
        if n == 0 {
            return Err(Error::invalid(format!("anchor {a} has no vicinal samples")));
        }
        total += sum / n as f64;
    }
    Ok(total / anchors.len() as f64)
}

/// Vicinal risk of an embedding-space model under cross-entropy.
pub fn vicinal_risk(
    model: &ClassifierModel,
    samples: &Array2<f64>,
    labels: &[usize],
    groups: &[usize],
    anchors: &[usize],
) -> Result<f64> {
    let logits = predict(model, samples, None)?.logits;
    vicinal_risk_from_losses(&cross_entropy_rows(logits.view(), labels), groups, anchors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    #[test]
    fn perfect_diagonal() {
        let m = ConfusionMatrix::from_predictions(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        let s = classification_metrics(&m).unwrap();
        assert_eq!((s.acc, s.bacc, s.macro_f1, s.gmean), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn two_class_arithmetic() {
        let m = ConfusionMatrix::from_counts(arr2(&[[4, 0], [3, 1]])).unwrap();
        let s = classification_metrics(&m).unwrap();
        assert!((s.gmean - 0.5).abs() < 1e-15);
        assert!((s.bacc - 0.625).abs() < 1e-15);
    }

    #[test]
    fn unsupported_class_is_flagged() {
        let m = ConfusionMatrix::from_predictions(&[0, 0], &[0, 1], 2).unwrap();
        let s = classification_metrics(&m).unwrap();
        assert_eq!(s.unsupported, vec![1]);
        assert_eq!(s.bacc, 0.5);
        assert!((s.macro_f1 - (2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn bcr_corner_cases() {
        let reference = ManifoldIndex::new(arr2(&[[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]]), vec![0, 0, 1, 1]).unwrap();
        let same = arr2(&[[0.0, 0.0], [5.0, 5.0]]);
        assert_eq!(bcr(same.view(), &[0, 1], &reference, 1).unwrap(), 0.0);
        assert_eq!(bcr(same.view(), &[1, 0], &reference, 3).unwrap(), 1.0);
        // k = 2 splits one-one between the classes: a tie counts as boundary.
        let mid = arr2(&[[2.5, 2.5]]);
        let tie_ref = ManifoldIndex::new(arr2(&[[0.0, 0.0], [5.0, 5.0]]), vec![0, 1]).unwrap();
        assert_eq!(bcr(mid.view(), &[0], &tie_ref, 2).unwrap(), 1.0);
    }

    #[test]
    fn bps_cases() {
        let c = vec![Some(arr1(&[0.0, 0.0])), Some(arr1(&[2.0, 0.0]))];
        assert_eq!(bps_score(arr1(&[0.0, 0.0]).view(), 0, &c).unwrap(), 0.0);
        assert_eq!(bps_score(arr1(&[1.0, 3.0]).view(), 0, &c).unwrap(), 1.0);
        assert_eq!(bps_score(arr1(&[2.0, 0.0]).view(), 0, &c).unwrap(), BPS_CAP);
        assert!(bps_score(arr1(&[0.0, 0.0]).view(), 0, &[Some(arr1(&[0.0, 0.0])), None]).is_err());
    }

    #[test]
    fn margin_cases() {
        let s = margins(arr2(&[[2.0, 0.5, -1.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]).view(), &[0, 0, 0]).unwrap();
        assert_eq!(s.margins, vec![1.5, -1.0, 0.0]);
        assert_eq!(s.gamma_min, -1.0);
        assert_eq!(s.ties, 1);
    }

    #[test]
    fn margin_bound_substitutions() {
        let c = check_margin_bound(1.0, 2.0, 0.0, -1.0).unwrap();
        assert_eq!((c.bound, c.slack, c.holds), (-1.0, 0.0, true));
        let c = check_margin_bound(1.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!((c.slack, c.holds), (0.0, true));
        assert!(check_margin_bound(2.0, 1.0, 0.5, 0.0).is_err());
        assert!(check_margin_bound(1.0, 2.0, 1.5, 0.0).is_err());
    }

    #[test]
    fn vicinal_risk_nested_mean() {
        let losses = [1.0, 3.0, 2.0, 2.0, 0.0, 6.0];
        let groups = [7, 7, 8, 8, 9, 9];
        let r = vicinal_risk_from_losses(&losses, &groups, &[7, 8, 9]).unwrap();
        assert!((r - (2.0 + 2.0 + 3.0) / 3.0).abs() < 1e-15);
        assert!(vicinal_risk_from_losses(&losses, &groups, &[10]).is_err());
        assert_eq!(vicinal_risk_from_losses(&[0.7], &[1], &[1]).unwrap(), 0.7);
    }

    #[test]
    fn manifold_distance() {
        let idx = ManifoldIndex::new(arr2(&[[0.0, 0.0], [3.0, 4.0]]), vec![0, 1]).unwrap();
        assert_eq!(idx.dist_to_manifold(arr1(&[0.0, 0.0]).view(), 0).unwrap(), 0.0);
        assert_eq!(idx.dist_to_manifold(arr1(&[0.0, 0.0]).view(), 1).unwrap(), 5.0);
        assert!(idx.dist_to_manifold(arr1(&[0.0, 0.0]).view(), 2).is_err());
    }
}
