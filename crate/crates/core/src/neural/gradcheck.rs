use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{objective_gradient, objective_loss, ClassifierModel, Objective};
use crate::graph::SparseMatrix;

/// Denominator floor for [`relative_error`], so gradients that are zero on
/// both sides do not divide by zero.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Central differences of `f` at `params` for the listed coordinates,
/// compared against `grad`; returns the largest relative error.
pub fn check_gradient(
    f: impl Fn(&[f64]) -> f64,
    params: &[f64],
    grad: &[f64],
    coords: &[usize],
    epsilon: f64,
) -> f64 {
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = p[i];
        p[i] = orig + epsilon;
        let up = f(&p);
        p[i] = orig - epsilon;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max(relative_error(grad[i], numeric));
    }
    worst
}

/// Largest relative error between backpropagated and finite-difference
/// gradients of the cross-entropy over `idx`, with dropout off. At most
/// `max_coords` parameters are checked, sampled with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    model: &ClassifierModel,
    features: &Array2<f64>,
    adj: Option<&SparseMatrix>,
    labels: &[usize],
    idx: &[usize],
    epsilon: f64,
    max_coords: usize,
    seed: u64,
) -> f64 {
    let objective = Objective {
        labels,
        idx,
        class_weights: None,
        weight_decay: 0.0,
    };
    let params = model.flat_params();
    let (_, grad) = objective_gradient(model, features, adj, &objective);
    let coords: Vec<usize> = if params.len() <= max_coords {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = sample(&mut rng, params.len(), max_coords).into_vec();
        c.sort_unstable();
        c
    };
    let f = |p: &[f64]| {
        let mut m = model.clone();
        m.set_flat_params(p);
        objective_loss(&m, features, adj, &objective)
    };
    check_gradient(f, &params, &grad, &coords, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalized_adjacency_from_edges;
    use crate::neural::ModelKind;
    use rand::Rng;

    #[test]
    fn linear_squared_loss_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<[f64; 3]> = (0..8)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0])
            .collect();
        let ys: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |w: &[f64]| {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| {
                    let r = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - y;
                    0.5 * r * r
                })
                .sum::<f64>()
        };
        let w = [0.3, -0.2, 0.1];
        let mut grad = [0.0; 3];
        for (x, y) in xs.iter().zip(&ys) {
            let r = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - y;
            for k in 0..3 {
                grad[k] += r * x[k];
            }
        }
        assert!(check_gradient(loss, &w, &grad, &[0, 1, 2], 1e-3) <= 1e-9);
    }

    fn instance(seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (
            Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0)),
            (0..6).map(|i| i % 3).collect(),
        )
    }

    #[test]
    fn mlp_gradients_match() {
        let (x, labels) = instance(2);
        let model = ClassifierModel::new(ModelKind::Mlp, 4, &[5], 3, 0.0, 3);
        let err = gradient_check(&model, &x, None, &labels, &[0, 1, 2, 3, 4, 5], 1e-5, usize::MAX, 0);
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn gcn_gradients_match() {
        let (x, labels) = instance(4);
        let adj = normalized_adjacency_from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]);
        let model = ClassifierModel::new(ModelKind::Gcn, 4, &[5, 4], 3, 0.0, 5);
        let err = gradient_check(&model, &x, Some(&adj), &labels, &[0, 2, 3, 5], 1e-5, usize::MAX, 0);
        assert!(err <= 1e-4, "{err}");
    }
}
