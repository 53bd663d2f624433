//! Self-contained numerical checks of the isolation, contraction and margin
//! results, plus backpropagation gradient checks.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::normalized_adjacency_from_edges;
use crate::metrics::{check_margin_bound, check_margin_bound_supported};
use crate::neural::{aggregate_layer, aggregate_unchecked, gradient_check, AggregatorParams, ClassifierModel, ModelKind};

/// Absolute tolerance of the isolation closed form.
pub const ISOLATION_TOL: f64 = 1e-12;
/// Relative floating-point slack on the contraction right-hand side.
pub const CONTRACTION_SLACK: f64 = 1e-12;
pub const GRADIENT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub isolation_trials: usize,
    pub contraction_trials: usize,
    pub margin_trials: usize,
    pub gradient_trials: usize,
    pub layers: usize,
    /// Fixed `α`; drawn per trial when absent.
    pub alpha: Option<f64>,
    /// Scales one neighbor-weight row by 1.5 in the contraction trials.
    pub inject_unnormalized_beta: bool,
    pub gradient_epsilon: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            isolation_trials: 100,
            contraction_trials: 1000,
            margin_trials: 1000,
            gradient_trials: 10,
            layers: 3,
            alpha: None,
            inject_unnormalized_beta: false,
            gradient_epsilon: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub trials: usize,
    pub failures: usize,
    /// Largest error, or most negative slack, seen across trials.
    pub worst: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, trials: usize, failures: usize, worst: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed: failures == 0,
            trials,
            failures,
            worst,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn gaussian_vector(dim: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(dim, |_| rng.sample(StandardNormal))
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

fn random_alpha(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> f64 {
    cfg.alpha.unwrap_or_else(|| rng.random_range(0.01..0.99))
}

/// Columns of a Gram-Schmidt orthonormalized Gaussian matrix.
pub fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    loop {
        let g = gaussian_matrix(dim, dim, rng);
        let mut q = Array2::<f64>::zeros((dim, dim));
        let mut ok = true;
        for j in 0..dim {
            let mut v = g.column(j).to_owned();
            for i in 0..j {
                let qi = q.column(i);
                let proj = qi.dot(&v);
                v.scaled_add(-proj, &qi);
            }
            let n = norm(&v);
            if n < 1e-8 {
                ok = false;
                break;
            }
            q.column_mut(j).assign(&(v / n));
        }
        if ok {
            return q;
        }
    }
}

/// `U diag(s) Vᵀ` with orthogonal `U`, `V`, so its spectral norm is `max s`.
pub fn matrix_with_singular_values(s: &[f64], rng: &mut ChaCha8Rng) -> Array2<f64> {
    let u = random_orthogonal(s.len(), rng);
    let v = random_orthogonal(s.len(), rng);
    let d = Array2::from_diag(&Array1::from(s.to_vec()));
    u.dot(&d).dot(&v.t())
}

/// Neighbor weights drawn uniformly then normalized.
fn random_weights(neighbors: &[usize], rng: &mut ChaCha8Rng) -> Vec<(usize, f64)> {
    let raw: Vec<f64> = neighbors.iter().map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    neighbors.iter().zip(raw).map(|(&u, b)| (u, b / total)).collect()
}

/// Node 0 has no edges; after `layers` aggregation steps its state must
/// equal `α^L h W_1 ⋯ W_L` and be bit-identical when every other input is
/// perturbed. Returns the absolute error and whether invariance held.
pub fn isolation_trial(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let n = rng.random_range(4..12);
    let p = rng.random_range(2..6);
    let alpha = random_alpha(cfg, rng);
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 1..n {
        for v in (u + 1)..n {
            if rng.random_bool(0.4) {
                neighbors[u].push(v);
                neighbors[v].push(u);
            }
        }
    }
    let params = AggregatorParams {
        alpha,
        neighbor_weights: neighbors.iter().map(|ns| random_weights(ns, rng)).collect(),
    };
    let weights: Vec<Array2<f64>> = (0..cfg.layers).map(|_| gaussian_matrix(p, p, rng) * 0.5).collect();
    let h0 = gaussian_matrix(n, p, rng);
    let run = |h: &Array2<f64>| -> Result<Array2<f64>> {
        let mut h = h.clone();
        for w in &weights {
            h = aggregate_layer(&h, &params, w)?;
        }
        Ok(h)
    };
    let out = run(&h0)?;
    let mut closed = h0.row(0).to_owned();
    for w in &weights {
        closed = closed.dot(w);
    }
    closed *= alpha.powi(cfg.layers as i32);
    let err = (&out.row(0) - &closed).fold(0.0f64, |m, v| m.max(v.abs()));

    let mut perturbed = h0.clone();
    for mut row in perturbed.rows_mut().into_iter().skip(1) {
        row += &(gaussian_vector(p, rng) * 10.0);
    }
    let out2 = run(&perturbed)?;
    let invariant = out
        .row(0)
        .iter()
        .zip(out2.row(0))
        .all(|(a, b)| a.to_bits() == b.to_bits());
    Ok((err, invariant))
}

/// One aggregation step with `‖W‖₂ = L_w < 1`, neighbors within `ε` of a
/// reference point `m` and `‖h_v − m‖ ≥ ε`. Returns
/// `rhs − ‖h'_v − mW‖` for the right-hand side `αL_w d + (1−α)L_w ε`.
pub fn contraction_trial(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let p = rng.random_range(2..7);
    let deg = rng.random_range(1..6);
    let alpha = random_alpha(cfg, rng);
    let lw = rng.random_range(0.1..0.99);
    let mut s: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..lw)).collect();
    s[0] = lw;
    let w = matrix_with_singular_values(&s, rng);
    let eps = rng.random_range(0.01..1.0);
    let m = gaussian_vector(p, rng) * 3.0;

    let mut h = Array2::zeros((deg + 1, p));
    let dir = gaussian_vector(p, rng);
    let d = eps * rng.random_range(1.0..5.0);
    h.row_mut(0).assign(&(&m + &(&dir * (d / norm(&dir)))));
    for u in 1..=deg {
        let dir = gaussian_vector(p, rng);
        let r = eps * rng.random::<f64>();
        h.row_mut(u).assign(&(&m + &(&dir * (r / norm(&dir)))));
    }
    let mut weights = vec![random_weights(&(1..=deg).collect::<Vec<_>>(), rng)];
    weights.extend((0..deg).map(|_| Vec::new()));
    let out = if cfg.inject_unnormalized_beta {
        for e in &mut weights[0] {
            e.1 *= 1.5;
        }
        aggregate_unchecked(
            &h,
            &AggregatorParams {
                alpha,
                neighbor_weights: weights,
            },
            &w,
        )
    } else {
        aggregate_layer(
            &h,
            &AggregatorParams {
                alpha,
                neighbor_weights: weights,
            },
            &w,
        )?
    };
    let d_before = norm(&(&h.row(0) - &m));
    let d_after = norm(&(&out.row(0) - &m.dot(&w)));
    let rhs = alpha * lw * d_before + (1.0 - alpha) * lw * eps;
    Ok((rhs * (1.0 + CONTRACTION_SLACK) - d_after, rhs))
}

/// Margins satisfying the three margin-bound assumptions: original and
/// interior margins at least `γ0` (one original exactly `γ0`), boundary
/// margins in `[−δ, δ]`, `δ ≥ γ0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSet {
    pub gamma0: f64,
    pub delta: f64,
    pub original: Vec<f64>,
    pub interior: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl MarginSet {
    pub fn random(rng: &mut ChaCha8Rng, allow_boundary: bool) -> Self {
        let gamma0 = rng.random_range(0.1..2.0);
        let delta = gamma0 + rng.random_range(0.0..2.0);
        let mut original: Vec<f64> = (0..rng.random_range(1..20))
            .map(|_| gamma0 + rng.random_range(0.0..3.0))
            .collect();
        original[0] = gamma0;
        let interior = (0..rng.random_range(0..20))
            .map(|_| gamma0 + rng.random_range(0.0..3.0))
            .collect();
        let boundary = if allow_boundary {
            (0..rng.random_range(1..20))
                .map(|_| rng.random_range(-delta..=delta))
                .collect()
        } else {
            Vec::new()
        };
        Self {
            gamma0,
            delta,
            original,
            interior,
            boundary,
        }
    }

    pub fn bcr(&self) -> f64 {
        let synthetic = self.interior.len() + self.boundary.len();
        if synthetic == 0 {
            0.0
        } else {
            self.boundary.len() as f64 / synthetic as f64
        }
    }

    pub fn gamma_min(&self) -> f64 {
        self.original
            .iter()
            .chain(&self.interior)
            .chain(&self.boundary)
            .fold(f64::INFINITY, |m, &g| m.min(g))
    }
}

fn isolation_check(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..cfg.isolation_trials {
        let (err, invariant) = isolation_trial(cfg, rng)?;
        worst = worst.max(err);
        if err > ISOLATION_TOL || !invariant {
            failures += 1;
        }
    }
    Ok(CheckResult::new(
        "isolation",
        cfg.isolation_trials,
        failures,
        worst,
        format!("max |h_L - closed form| = {worst:.3e}, tolerance {ISOLATION_TOL:e}"),
    ))
}

fn contraction_check(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let (mut failures, mut worst) = (0, f64::INFINITY);
    for _ in 0..cfg.contraction_trials {
        let (slack, _) = contraction_trial(cfg, rng)?;
        worst = worst.min(slack);
        if slack < 0.0 {
            failures += 1;
        }
    }
    Ok(CheckResult::new(
        "contraction",
        cfg.contraction_trials,
        failures,
        worst,
        format!("min slack {worst:.3e}"),
    ))
}

fn margin_checks(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let (mut stated_fail, mut stated_worst) = (0, f64::INFINITY);
    let (mut supported_fail, mut supported_worst) = (0, f64::INFINITY);
    for _ in 0..cfg.margin_trials {
        let with_boundary = rng.random_bool(0.8);
        let set = MarginSet::random(rng, with_boundary);
        let (bcr, gmin) = (set.bcr(), set.gamma_min());
        let stated = check_margin_bound(set.gamma0, set.delta, bcr, gmin)?;
        stated_worst = stated_worst.min(stated.slack);
        stated_fail += usize::from(!stated.holds);
        let supported = check_margin_bound_supported(set.gamma0, set.delta, bcr, gmin)?;
        supported_worst = supported_worst.min(supported.slack);
        supported_fail += usize::from(!supported.holds);
    }
    let mut corner_fail = 0;
    let corner_trials = cfg.margin_trials.clamp(1, 100);
    for _ in 0..corner_trials {
        let set = MarginSet::random(rng, false);
        let check = check_margin_bound(set.gamma0, set.delta, 0.0, set.gamma_min())?;
        let exact = check.bound.to_bits() == (set.gamma0 - set.delta).to_bits();
        corner_fail += usize::from(!(exact && check.holds));
    }
    Ok(vec![
        CheckResult::new(
            "margin_bound",
            cfg.margin_trials,
            stated_fail,
            stated_worst,
            format!("gamma_min >= gamma0 - delta (1 - BCR); min slack {stated_worst:.4}"),
        ),
        CheckResult::new(
            "margin_bound_corner",
            corner_trials,
            corner_fail,
            0.0,
            "BCR = 0 bound equals gamma0 - delta".to_string(),
        ),
        CheckResult::new(
            "margin_bound_supported",
            cfg.margin_trials,
            supported_fail,
            supported_worst,
            format!("gamma_min >= gamma0 if BCR = 0 else min(gamma0, -delta); min slack {supported_worst:.4}"),
        ),
    ])
}

/// A random 6-node graph with 4 features and 3 classes.
pub fn gradient_instance(rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<(usize, usize)>, Vec<usize>) {
    let n = 6;
    let x = gaussian_matrix(n, 4, rng);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random_bool(0.4) {
                edges.push((u, v));
            }
        }
    }
    let labels = (0..n).map(|_| rng.random_range(0..3)).collect();
    (x, edges, labels)
}

/// Largest relative gradient error for (MLP, GCN) on one random instance.
pub fn gradient_trial(epsilon: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (x, edges, labels) = gradient_instance(rng);
    let adj = normalized_adjacency_from_edges(x.nrows(), &edges);
    let idx: Vec<usize> = {
        let mut v = sample(rng, 6, 4).into_vec();
        v.sort_unstable();
        v
    };
    let seed = rng.random();
    let mut mlp = ClassifierModel::new(ModelKind::Mlp, 4, &[5], 3, 0.0, seed);
    let mut gcn = ClassifierModel::new(ModelKind::Gcn, 4, &[5, 4], 3, 0.0, seed);
    // Zero biases put dead-neighborhood pre-activations exactly on the ReLU
    // kink, where no gradient exists to compare against.
    for layer in mlp.layers.iter_mut().chain(gcn.layers.iter_mut()) {
        layer.bias = gaussian_vector(layer.bias.len(), rng) * 0.1;
    }
    (
        gradient_check(&mlp, &x, None, &labels, &idx, epsilon, 400, seed),
        gradient_check(&gcn, &x, Some(&adj), &labels, &idx, epsilon, 400, seed),
    )
}

fn gradient_checks(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let (mut mlp_worst, mut gcn_worst) = (0.0f64, 0.0f64);
    let (mut mlp_fail, mut gcn_fail) = (0, 0);
    for _ in 0..cfg.gradient_trials {
        let (m, g) = gradient_trial(cfg.gradient_epsilon, rng);
        mlp_worst = mlp_worst.max(m);
        gcn_worst = gcn_worst.max(g);
        mlp_fail += usize::from(!(m <= GRADIENT_TOL));
        gcn_fail += usize::from(!(g <= GRADIENT_TOL));
    }
    vec![
        CheckResult::new(
            "gradient_mlp",
            cfg.gradient_trials,
            mlp_fail,
            mlp_worst,
            format!("max relative error {mlp_worst:.3e}, tolerance {GRADIENT_TOL:e}"),
        ),
        CheckResult::new(
            "gradient_gcn",
            cfg.gradient_trials,
            gcn_fail,
            gcn_worst,
            format!("max relative error {gcn_worst:.3e}, tolerance {GRADIENT_TOL:e}"),
        ),
    ]
}

/// Runs every check with independent streams derived from `cfg.seed`.
pub fn run_checks(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let stream = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k);
        rng
    };
    let start = Instant::now();
    let mut checks = vec![
        isolation_check(cfg, &mut stream(1))?,
        contraction_check(cfg, &mut stream(2))?,
    ];
    checks.extend(margin_checks(cfg, &mut stream(3))?);
    checks.extend(gradient_checks(cfg, &mut stream(4)));
    log::debug!("theory checks took {:?}", start.elapsed());
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, all_passed })
}
