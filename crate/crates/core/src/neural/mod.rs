//! Dense layers, GCN/MLP classifiers with hand-written backpropagation, the
//! fixed-weight aggregation layer and a finite-difference gradient checker.

mod aggregate;
mod checkpoint;
mod gradcheck;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate_layer, AggregatorParams};
pub(crate) use aggregate::aggregate_unchecked;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, relative_error, check_gradient};

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Row-vector convention: `y = x W + b` with `W` of shape `in_dim x out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((in_dim, out_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    /// Uniform in `±1/sqrt(in_dim)`, zero bias.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((in_dim, out_dim), |_| rng.random_range(-bound..=bound)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub hidden_dims: Vec<usize>,
    pub weight_decay: f64,
    pub seed: u64,
    /// Weight the loss by inverse training-class frequency.
    pub class_weighted: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::gcn()
    }
}

impl TrainConfig {
    pub fn gcn() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 0.01,
            dropout: 0.5,
            hidden_dims: vec![64, 64],
            weight_decay: 5e-4,
            seed: 0,
            class_weighted: false,
        }
    }

    pub fn mlp() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 0.001,
            dropout: 0.0,
            hidden_dims: vec![256],
            weight_decay: 0.0,
            seed: 0,
            class_weighted: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub kind: ModelKind,
    pub layers: Vec<DenseLayer>,
    pub dropout: f64,
    pub class_count: usize,
    /// Training loss per epoch.
    pub history: Vec<f64>,
}

impl ClassifierModel {
    /// Seeded initialization of `in_dim -> hidden... -> class_count`.
    pub fn new(
        kind: ModelKind,
        in_dim: usize,
        hidden: &[usize],
        class_count: usize,
        dropout: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims: Vec<usize> = std::iter::once(in_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(class_count))
            .collect();
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], &mut rng))
            .collect();
        Self {
            kind,
            layers,
            dropout,
            class_count,
            history: Vec::new(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::in_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
    }

    fn check_inputs(&self, x: &Array2<f64>, adj: Option<&SparseMatrix>) -> Result<()> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Dimension {
                expected: self.in_dim(),
                got: x.ncols(),
            });
        }
        match (self.kind, adj) {
            (ModelKind::Gcn, None) => Err(Error::invalid("a GCN needs an adjacency matrix")),
            (ModelKind::Gcn, Some(a)) if a.dim() != x.nrows() => Err(Error::Dimension {
                expected: x.nrows(),
                got: a.dim(),
            }),
            _ => Ok(()),
        }
    }
}

/// Dropout stream for one `(seed, epoch, layer)` triple.
#[derive(Debug, Clone, Copy)]
pub struct DropoutKey {
    pub seed: u64,
    pub epoch: u64,
}

fn dropout_rng(key: DropoutKey, layer: usize) -> ChaCha8Rng {
    let layer_seed = key.seed ^ (layer as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(layer_seed);
    rng.set_stream(key.epoch);
    rng
}

struct Tape {
    /// Layer inputs after dropout.
    inputs: Vec<Array2<f64>>,
    /// Scaled keep masks, one per layer when dropout is active.
    masks: Vec<Option<Array2<f64>>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
}

fn forward_taped(
    model: &ClassifierModel,
    x: &Array2<f64>,
    adj: Option<&SparseMatrix>,
    dropout: Option<DropoutKey>,
) -> (Array2<f64>, Tape) {
    let last = model.layers.len() - 1;
    let mut tape = Tape {
        inputs: Vec::with_capacity(model.layers.len()),
        masks: Vec::with_capacity(model.layers.len()),
        pre: Vec::with_capacity(last),
    };
    let mut h = x.clone();
    for (l, layer) in model.layers.iter().enumerate() {
        let mask = match dropout {
            Some(key) if model.dropout > 0.0 => {
                let keep = 1.0 - model.dropout;
                let mut rng = dropout_rng(key, l);
                let m = Array2::from_shape_fn(h.dim(), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                h *= &m;
                Some(m)
            }
            _ => None,
        };
        let p = h.dot(&layer.weight);
        let mut z = match (model.kind, adj) {
            (ModelKind::Gcn, Some(a)) => a.matmul(&p),
            _ => p,
        };
        z += &layer.bias;
        tape.inputs.push(h);
        tape.masks.push(mask);
        if l < last {
            h = z.mapv(|v| v.max(0.0));
            tape.pre.push(z);
        } else {
            h = z;
        }
    }
    (h, tape)
}

/// Logits of the model; dropout is applied only when `train_mode` is set.
pub fn forward(
    model: &ClassifierModel,
    x: &Array2<f64>,
    adj: Option<&SparseMatrix>,
    train_mode: bool,
    seed: u64,
) -> Result<Array2<f64>> {
    model.check_inputs(x, adj)?;
    let key = train_mode.then_some(DropoutKey { seed, epoch: 0 });
    Ok(forward_taped(model, x, adj, key).0)
}

/// `Â · ReLU(Â · drop(X) · W₁ + b₁) ⋯ · W_L + b_L`.
pub fn gcn_forward(
    adj: &SparseMatrix,
    x: &Array2<f64>,
    model: &ClassifierModel,
    train_mode: bool,
    seed: u64,
) -> Result<Array2<f64>> {
    if model.kind != ModelKind::Gcn {
        return Err(Error::invalid("gcn_forward needs a GCN model"));
    }
    forward(model, x, Some(adj), train_mode, seed)
}

pub fn mlp_forward(model: &ClassifierModel, x: &Array2<f64>) -> Result<Array2<f64>> {
    if model.kind != ModelKind::Mlp {
        return Err(Error::invalid("mlp_forward needs an MLP model"));
    }
    forward(model, x, None, false, 0)
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Supervised targets for the cross-entropy objective.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub labels: &'a [usize],
    pub idx: &'a [usize],
    /// Per-class loss weights; uniform when absent.
    pub class_weights: Option<Vec<f64>>,
    pub weight_decay: f64,
}

impl Objective<'_> {
    fn weight(&self, class: usize) -> f64 {
        self.class_weights.as_ref().map_or(1.0, |w| w[class])
    }

    /// Weighted mean cross-entropy over `idx` plus `wd/2 * sum ||W||²`, and
    /// the gradient with respect to the logits.
    fn loss_and_grad(&self, model: &ClassifierModel, logits: &Array2<f64>) -> (f64, Array2<f64>) {
        let probs = softmax_rows(logits);
        let mut grad = Array2::zeros(logits.dim());
        let total: f64 = self.idx.iter().map(|&i| self.weight(self.labels[i])).sum();
        let mut loss = 0.0;
        for &i in self.idx {
            let y = self.labels[i];
            let w = self.weight(y) / total;
            let row = logits.row(i);
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += w * (lse - row[y]);
            let mut g = grad.row_mut(i);
            g.assign(&probs.row(i));
            g[y] -= 1.0;
            g *= w;
        }
        if self.weight_decay > 0.0 {
            let sq: f64 = model.layers.iter().map(|l| l.weight.iter().map(|w| w * w).sum::<f64>()).sum();
            loss += 0.5 * self.weight_decay * sq;
        }
        (loss, grad)
    }
}

/// Loss and parameter gradients (same layout as `flat_params`).
fn loss_and_param_grads(
    model: &ClassifierModel,
    x: &Array2<f64>,
    adj: Option<&SparseMatrix>,
    objective: &Objective<'_>,
    dropout: Option<DropoutKey>,
) -> (f64, Vec<DenseLayer>) {
    let (logits, tape) = forward_taped(model, x, adj, dropout);
    let (loss, mut gz) = objective.loss_and_grad(model, &logits);
    let mut grads: Vec<DenseLayer> = Vec::with_capacity(model.layers.len());
    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        let db = gz.sum_axis(Axis(0));
        let gp = match (model.kind, adj) {
            (ModelKind::Gcn, Some(a)) => a.matmul(&gz),
            _ => std::mem::take(&mut gz),
        };
        let mut dw = tape.inputs[l].t().dot(&gp);
        if objective.weight_decay > 0.0 {
            dw.scaled_add(objective.weight_decay, &layer.weight);
        }
        grads.push(DenseLayer { weight: dw, bias: db });
        if l > 0 {
            let mut gh = gp.dot(&layer.weight.t());
            if let Some(m) = &tape.masks[l] {
                gh *= m;
            }
            Zip::from(&mut gh).and(&tape.pre[l - 1]).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            gz = gh;
        }
    }
    grads.reverse();
    (loss, grads)
}

/// Loss of the model without dropout.
pub fn objective_loss(
    model: &ClassifierModel,
    x: &Array2<f64>,
    adj: Option<&SparseMatrix>,
    objective: &Objective<'_>,
) -> f64 {
    let (logits, _) = forward_taped(model, x, adj, None);
    objective.loss_and_grad(model, &logits).0
}

/// Analytic parameter gradient without dropout, flattened like
/// `flat_params`.
pub fn objective_gradient(
    model: &ClassifierModel,
    x: &Array2<f64>,
    adj: Option<&SparseMatrix>,
    objective: &Objective<'_>,
) -> (f64, Vec<f64>) {
    let (loss, grads) = loss_and_param_grads(model, x, adj, objective, None);
    let mut flat = Vec::with_capacity(model.param_count());
    for g in &grads {
        flat.extend(g.weight.iter());
        flat.extend(g.bias.iter());
    }
    (loss, flat)
}

struct Adam {
    m: Vec<DenseLayer>,
    v: Vec<DenseLayer>,
    t: i32,
}

impl Adam {
    fn new(model: &ClassifierModel) -> Self {
        let zeros: Vec<DenseLayer> = model
            .layers
            .iter()
            .map(|l| DenseLayer::zeros(l.in_dim(), l.out_dim()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut ClassifierModel, grads: &[DenseLayer], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        };
        for (((layer, g), m), v) in model.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut layer.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

/// Inverse-frequency weights `n / (C_present * n_c)` over the training set;
/// classes absent from it get weight 0.
pub fn inverse_frequency_weights(labels: &[usize], idx: &[usize], class_count: usize) -> Vec<f64> {
    let mut counts = vec![0usize; class_count];
    for &i in idx {
        counts[labels[i]] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { idx.len() as f64 / (present * c as f64) })
        .collect()
}

/// Full-batch training with Adam on the cross-entropy of `train_idx`.
pub fn train_classifier(
    kind: ModelKind,
    features: &Array2<f64>,
    adj: Option<&SparseMatrix>,
    labels: &[usize],
    train_idx: &[usize],
    class_count: usize,
    cfg: &TrainConfig,
) -> Result<ClassifierModel> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if let Some(&bad) = train_idx.iter().find(|&&i| i >= labels.len() || labels[i] >= class_count) {
        return Err(Error::invalid(format!("training node {bad} has no valid label")));
    }
    let mut model = ClassifierModel::new(
        kind,
        features.ncols(),
        &cfg.hidden_dims,
        class_count,
        cfg.dropout,
        cfg.seed,
    );
    model.check_inputs(features, adj)?;
    let objective = Objective {
        labels,
        idx: train_idx,
        class_weights: cfg
            .class_weighted
            .then(|| inverse_frequency_weights(labels, train_idx, class_count)),
        weight_decay: cfg.weight_decay,
    };
    let mut adam = Adam::new(&model);
    let dropout_seed = cfg.seed ^ 0xd1b5_4a32_d192_ed03;
    for epoch in 0..cfg.epochs {
        let key = DropoutKey {
            seed: dropout_seed,
            epoch: epoch as u64,
        };
        let (loss, grads) = loss_and_param_grads(&model, features, adj, &objective, Some(key));
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        model.history.push(loss);
        if cfg.learning_rate > 0.0 {
            adam.step(&mut model, &grads, cfg.learning_rate);
        }
    }
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub probs: Array2<f64>,
    pub logits: Array2<f64>,
}

impl Prediction {
    pub fn from_logits(logits: Array2<f64>) -> Self {
        let probs = softmax_rows(&logits);
        let labels = logits.rows().into_iter().map(argmax).collect();
        Self {
            labels,
            probs,
            logits,
        }
    }
}

pub fn predict(
    model: &ClassifierModel,
    features: &Array2<f64>,
    adj: Option<&SparseMatrix>,
) -> Result<Prediction> {
    Ok(Prediction::from_logits(forward(model, features, adj, false, 0)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalized_adjacency_from_edges;
    use ndarray::arr2;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_parameters_give_zero_logits() {
        let mut model = ClassifierModel::new(ModelKind::Gcn, 3, &[4], 2, 0.0, 1);
        let zeros = vec![0.0; model.param_count()];
        model.set_flat_params(&zeros);
        let adj = normalized_adjacency_from_edges(3, &[(0, 1)]);
        let x = random(&mut ChaCha8Rng::seed_from_u64(2), 3, 3);
        let z = gcn_forward(&adj, &x, &model, false, 0).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_node_gcn_equals_mlp() {
        let gcn = ClassifierModel::new(ModelKind::Gcn, 4, &[5], 3, 0.0, 7);
        let mut mlp = gcn.clone();
        mlp.kind = ModelKind::Mlp;
        let x = random(&mut ChaCha8Rng::seed_from_u64(3), 1, 4);
        let adj = normalized_adjacency_from_edges(1, &[]);
        assert_eq!(
            gcn_forward(&adj, &x, &gcn, false, 0).unwrap(),
            mlp_forward(&mlp, &x).unwrap()
        );
    }

    #[test]
    fn gcn_matches_dense_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let edges = [(0, 1), (1, 2), (2, 3), (0, 4), (3, 4), (1, 3)];
        let adj = normalized_adjacency_from_edges(5, &edges);
        let x = random(&mut rng, 5, 3);
        let model = ClassifierModel::new(ModelKind::Gcn, 3, &[4], 2, 0.0, 5);

        // Oracle: dense A + I, explicit degree scaling, plain matrix chain.
        let mut a = Array2::<f64>::eye(5);
        for &(u, v) in &edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        let d: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
        let an = Array2::from_shape_fn((5, 5), |(i, j)| a[[i, j]] / (d[i] * d[j]).sqrt());
        let (l1, l2) = (&model.layers[0], &model.layers[1]);
        let h = (an.dot(&x.dot(&l1.weight)) + &l1.bias).mapv(|v| v.max(0.0));
        let oracle = an.dot(&h.dot(&l2.weight)) + &l2.bias;

        let got = gcn_forward(&adj, &x, &model, false, 0).unwrap();
        for (g, o) in got.iter().zip(oracle.iter()) {
            assert!((g - o).abs() <= 1e-10 * o.abs().max(1.0), "{g} vs {o}");
        }
    }

    #[test]
    fn dropout_only_in_train_mode_and_reproducible() {
        let model = ClassifierModel::new(ModelKind::Mlp, 6, &[8], 3, 0.5, 1);
        let x = random(&mut ChaCha8Rng::seed_from_u64(9), 10, 6);
        let eval_a = forward(&model, &x, None, false, 1).unwrap();
        let eval_b = forward(&model, &x, None, false, 2).unwrap();
        assert_eq!(eval_a, eval_b);
        let train_a = forward(&model, &x, None, true, 1).unwrap();
        assert_eq!(train_a, forward(&model, &x, None, true, 1).unwrap());
        assert_ne!(train_a, eval_a);
        assert_ne!(train_a, forward(&model, &x, None, true, 2).unwrap());
    }

    #[test]
    fn prediction_rules() {
        let p = Prediction::from_logits(arr2(&[[2.0, 0.5, -1.0], [0.3, 0.3, 0.3]]));
        assert_eq!(p.labels, vec![0, 0]);
        assert_eq!(p.logits[[0, 1]], 0.5);
        for row in p.probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20;
        let mut x = Array2::zeros((n, 2));
        let mut labels = vec![0; n];
        for i in 0..n {
            let y = i % 2;
            let side = if y == 0 { -1.0 } else { 1.0 };
            x[[i, 0]] = side * rng.random_range(0.2..1.0);
            x[[i, 1]] = rng.random_range(-1.0..1.0);
            labels[i] = y;
        }
        // Perceptron oracle: the set is linearly separable (it converges).
        let mut w = [0.0f64; 3];
        let mut converged = false;
        for _ in 0..1000 {
            let mut mistakes = 0;
            for i in 0..n {
                let s = if labels[i] == 1 { 1.0 } else { -1.0 };
                let act = w[0] * x[[i, 0]] + w[1] * x[[i, 1]] + w[2];
                if s * act <= 0.0 {
                    w[0] += s * x[[i, 0]];
                    w[1] += s * x[[i, 1]];
                    w[2] += s;
                    mistakes += 1;
                }
            }
            if mistakes == 0 {
                converged = true;
                break;
            }
        }
        assert!(converged);

        let idx: Vec<usize> = (0..n).collect();
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.01,
            hidden_dims: vec![16],
            ..TrainConfig::mlp()
        };
        let model = train_classifier(ModelKind::Mlp, &x, None, &labels, &idx, 2, &cfg).unwrap();
        let pred = predict(&model, &x, None).unwrap();
        assert_eq!(pred.labels, labels);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(&mut rng, 6, 3);
        let labels = vec![0, 1, 0, 1, 0, 1];
        let idx: Vec<usize> = (0..6).collect();
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 0.0,
            hidden_dims: vec![4],
            ..TrainConfig::mlp()
        };
        let model = train_classifier(ModelKind::Mlp, &x, None, &labels, &idx, 2, &cfg).unwrap();
        let fresh = ClassifierModel::new(ModelKind::Mlp, 3, &[4], 2, 0.0, cfg.seed);
        assert_eq!(model.layers, fresh.layers);
        assert!(model.history.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(&mut rng, 8, 3);
        let adj = normalized_adjacency_from_edges(8, &[(0, 1), (2, 3), (4, 5), (6, 7), (1, 2)]);
        let labels = vec![0, 1, 2, 0, 1, 2, 0, 1];
        let idx: Vec<usize> = (0..6).collect();
        let cfg = TrainConfig {
            epochs: 30,
            hidden_dims: vec![5, 5],
            ..TrainConfig::gcn()
        };
        let a = train_classifier(ModelKind::Gcn, &x, Some(&adj), &labels, &idx, 3, &cfg).unwrap();
        let b = train_classifier(ModelKind::Gcn, &x, Some(&adj), &labels, &idx, 3, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 30);
    }

    #[test]
    fn defaults_match_the_documented_backbones() {
        let g = TrainConfig::gcn();
        assert_eq!((g.epochs, g.learning_rate, g.hidden_dims.as_slice()), (1000, 0.01, &[64, 64][..]));
        let m = TrainConfig::mlp();
        assert_eq!((m.epochs, m.learning_rate, m.hidden_dims.as_slice(), m.dropout), (1000, 0.001, &[256][..], 0.0));
        let model = ClassifierModel::new(ModelKind::Gcn, 10, &g.hidden_dims, 7, g.dropout, 0);
        let shapes: Vec<(usize, usize)> = model.layers.iter().map(|l| l.weight.dim()).collect();
        assert_eq!(shapes, vec![(10, 64), (64, 64), (64, 7)]);
    }

    #[test]
    fn class_weights_balance_counts() {
        let labels = [0, 0, 0, 1];
        let w = inverse_frequency_weights(&labels, &[0, 1, 2, 3], 3);
        assert_eq!(w, vec![4.0 / 6.0, 2.0, 0.0]);
    }
}
