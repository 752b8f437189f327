//! Finite-difference verification of every analytic gradient in the crate.
//!
//! Central differences, `(J(θ+ε) - J(θ-ε)) / 2ε`, on the flattened
//! parameter vector, compared against the backward pass by the scale-free
//! error `‖g_a − g_n‖ / max(‖g_a‖, ‖g_n‖, 1e-12)`. The standard grid
//! covers every loss mode × tying mode × activation kind on desk-scale
//! models with several seeds; separate checks cover the clustering
//! front-end's joint gradient and the recurrent network's
//! backpropagation through time.
//!
//! Corruption is compatible with the checks because a corruption draw is an
//! explicit value: for a fixed draw the loss is a deterministic,
//! differentiable function of the parameters.

use crate::activations::Activation;
use crate::error::Result;
use crate::gated::{GatedModel, TyingMode};
use crate::numerics::{l2_norm, one_hot, vec_sub, Rng, Vector};
use crate::training::{backward, loss, CorruptionDraws, LossMode};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

/// Central-difference gradient of `f` at `theta0`.
pub fn numeric_grad(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    theta0: &[f64],
    eps: f64,
) -> Result<Vector> {
    let mut theta = theta0.to_vec();
    let mut g = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        theta[i] = theta0[i] + eps;
        let plus = f(&theta)?;
        theta[i] = theta0[i] - eps;
        let minus = f(&theta)?;
        theta[i] = theta0[i];
        g[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(g)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-12)` — scale-free, and well-defined when
/// both gradients vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = l2_norm(&vec_sub(a, b));
    diff / l2_norm(a).max(l2_norm(b)).max(1e-12)
}

/// Relative error between the analytic gated gradient and finite
/// differences for one (model, example, loss, corruption draw) cell.
pub fn check_gated(
    model: &GatedModel,
    x: &[f64],
    y: &[f64],
    label: Option<&[f64]>,
    mode: LossMode,
    draws: &CorruptionDraws,
    eps: f64,
) -> Result<f64> {
    let (_, grads) = backward(model, x, y, label, mode, draws)?;
    let analytic = grads.to_vec();
    let theta0 = model.param_vec();
    let mut scratch = model.clone();
    let numeric = numeric_grad(
        |t| {
            scratch.set_param_vec(t)?;
            loss(&scratch, x, y, label, mode, draws)
        },
        &theta0,
        eps,
    )?;
    Ok(rel_error(&analytic, &numeric))
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub cells: usize,
    pub max_rel_err: f64,
    /// Description of the worst cell, for diagnostics.
    pub worst: String,
}

impl GridReport {
    pub(crate) fn new() -> Self {
        GridReport {
            cells: 0,
            max_rel_err: 0.0,
            worst: String::new(),
        }
    }

    pub(crate) fn record(&mut self, err: f64, cell: impl FnOnce() -> String) {
        self.cells += 1;
        if err > self.max_rel_err {
            self.max_rel_err = err;
            self.worst = cell();
        }
    }

    fn merge(&mut self, other: GridReport) {
        self.cells += other.cells;
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
    }
}

pub const GRID_MODES: [LossMode; 5] = [
    LossMode::ReconstructX,
    LossMode::ReconstructY,
    LossMode::Symmetric,
    LossMode::CrossEntropyX,
    LossMode::Hybrid(0.5),
];

pub const GRID_ACTIVATIONS: [Activation; 4] = [
    Activation::Identity,
    Activation::Sigmoid,
    Activation::Relu,
    Activation::Softplus,
];

/// One grid cell's model and example, derived deterministically from the
/// seed. Cross-entropy cells force the sigmoid `x` output the loss
/// requires and draw `x` targets inside `[0, 1]`.
fn grid_cell(
    mode: LossMode,
    tying: TyingMode,
    act: Activation,
    seed: u64,
) -> (GatedModel, Vector, Vector, Vector) {
    let (n_x, n_y, n_h, n_f) = (3, 4, 2, 3);
    let mut rng = Rng::new(seed.wrapping_mul(0x9E37_79B9).wrapping_add(17));
    let act_x = if mode == LossMode::CrossEntropyX {
        Activation::Sigmoid
    } else {
        act
    };
    let mut model =
        GatedModel::init_with_sigma(n_x, n_y, n_h, n_f, tying, [act_x, act, act], 0.6, &mut rng);
    // nonzero biases so their gradients are exercised off the origin
    for b in [&mut model.b_fx, &mut model.b_fy, &mut model.b_fh] {
        for v in b.iter_mut() {
            *v = 0.1 * rng.next_gaussian();
        }
    }
    let x: Vector = if mode == LossMode::CrossEntropyX {
        (0..n_x).map(|_| rng.next_f64()).collect()
    } else {
        (0..n_x).map(|_| rng.next_gaussian()).collect()
    };
    let y: Vector = (0..n_y).map(|_| rng.next_gaussian()).collect();
    let label = one_hot(rng.next_index(n_h), n_h);
    (model, x, y, label)
}

/// The full loss × tying × activation grid of the gated gradient checks.
pub fn check_gated_grid(seeds: &[u64], eps: f64) -> Result<GridReport> {
    let mut report = GridReport::new();
    for &mode in &GRID_MODES {
        for tying in [TyingMode::Tied, TyingMode::Untied] {
            for &act in &GRID_ACTIVATIONS {
                for &seed in seeds {
                    let (model, x, y, label) = grid_cell(mode, tying, act, seed);
                    let err = check_gated(
                        &model,
                        &x,
                        &y,
                        Some(&label),
                        mode,
                        &CorruptionDraws::none(),
                        eps,
                    )?;
                    report.record(err, || {
                        format!(
                            "gated {} / {:?} / {} / seed {}",
                            mode.name(),
                            tying,
                            act.name(),
                            seed
                        )
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Everything: the gated grid plus the clustering joint gradient and the
/// recurrent BPTT checks. This is what the command-line `gradcheck` runs.
pub fn run_default_grid(seeds: &[u64], eps: f64) -> Result<GridReport> {
    let mut report = check_gated_grid(seeds, eps)?;
    report.merge(crate::variants::check_clustering_grid(seeds, eps)?);
    report.merge(crate::mrnn::check_mrnn_grid(seeds, eps)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::{draw_corruption, CorruptionKind, CorruptionSpec, CorruptionTarget};

    #[test]
    fn numeric_grad_of_quadratic() {
        // f(t) = sum i t_i^2 has gradient 2 i t_i
        let f = |t: &[f64]| Ok(t.iter().enumerate().map(|(i, v)| i as f64 * v * v).sum());
        let theta = vec![0.5, -1.0, 2.0];
        let g = numeric_grad(f, &theta, 1e-5).unwrap();
        let expect = [0.0, -2.0, 8.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn rel_error_handles_zero_gradients() {
        assert_eq!(rel_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(rel_error(&[1.0, 0.0], &[1.0, 1e-9]) < 1e-8);
    }

    #[test]
    fn gated_grid_single_seed_passes() {
        let report = check_gated_grid(&[0], DEFAULT_EPS).unwrap();
        assert_eq!(report.cells, 5 * 2 * 4);
        assert!(
            report.max_rel_err < DEFAULT_TOLERANCE,
            "max rel err {} at {}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn gradient_correct_under_active_corruption() {
        // fixed corruption draws on every site: the loss is still an exact
        // function of the parameters, and the backward pass must follow the
        // masks
        for target in [
            CorruptionTarget::InputX,
            CorruptionTarget::InputY,
            CorruptionTarget::BothInputs,
            CorruptionTarget::Factors,
        ] {
            let spec = CorruptionSpec {
                kind: CorruptionKind::Masking(0.4),
                target,
            };
            let (model, x, y, label) =
                grid_cell(LossMode::Symmetric, TyingMode::Tied, Activation::Sigmoid, 3);
            let mut rng = Rng::new(99);
            let draws = draw_corruption(&spec, &model, &mut rng);
            let err =
                check_gated(&model, &x, &y, Some(&label), LossMode::Symmetric, &draws, DEFAULT_EPS)
                    .unwrap();
            assert!(err < DEFAULT_TOLERANCE, "target {target:?}: rel err {err}");
        }

        // gaussian and salt-and-pepper draws, for coverage of the offset path
        for kind in [CorruptionKind::Gaussian(0.5), CorruptionKind::SaltPepper(0.3)] {
            let spec = CorruptionSpec {
                kind,
                target: CorruptionTarget::Factors,
            };
            let (model, x, y, _) =
                grid_cell(LossMode::ReconstructX, TyingMode::Untied, Activation::Softplus, 5);
            let mut rng = Rng::new(7);
            let draws = draw_corruption(&spec, &model, &mut rng);
            let err = check_gated(&model, &x, &y, None, LossMode::ReconstructX, &draws, DEFAULT_EPS)
                .unwrap();
            assert!(err < DEFAULT_TOLERANCE, "kind {kind:?}: rel err {err}");
        }
    }
}
