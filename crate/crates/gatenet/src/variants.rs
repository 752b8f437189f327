//! Architecture variants built on the gated core: analogy making,
//! class-conditional gating, and a self-clustering autoencoder.
//!
//! The clustering model bolts a small linear-softmax autoencoder onto the
//! gated block: `class = softmax(W_ae x + b_ae)` plays the role of the `y`
//! input, the mapping layer is softplus, and the whole thing trains jointly
//! on `x` reconstruction — gradients reach `W_ae` through the gated block's
//! input-gradient `dJ/dy`.

use crate::activations::{argmax, Activation};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::gated::{GatedModel, TyingMode};
use crate::gradcheck::{numeric_grad, rel_error, GridReport};
use crate::numerics::{matvec, scale_assign, vec_add_assign, Matrix, Rng, Vector};
use crate::training::{
    apply_opt_draw, backward, draw_corruption, loss, sgd_step, CorruptionDraws, GatedGrads,
    LossMode, TrainConfig,
};

/// Infers the latent relation from one pair and applies it to a new input:
/// `h = o(x_src, y_src)`, then `y = q(x_new, h)`.
pub fn analogy(model: &GatedModel, x_src: &[f64], y_src: &[f64], x_new: &[f64]) -> Result<Vector> {
    let h = model.predict_h(x_src, y_src)?;
    model.predict_y(x_new, &h)
}

/// Reconstruction of `x` gated by a one-hot class label standing in for
/// `y`. With a one-hot label, the `y` factor projection selects a single
/// column of `W_y_in`, so the label modulates the model's weights — one
/// effective autoencoder per class with heavy sharing. The mapping layer is
/// rectified-linear in this configuration.
pub fn class_conditional_forward(model: &GatedModel, x: &[f64], label: &[f64]) -> Result<Vector> {
    if model.act_h != Activation::Relu {
        return Err(Error::invalid(
            "class_conditional_forward",
            format!(
                "the class-conditional configuration uses a relu mapping layer, model has {}",
                model.act_h.name()
            ),
        ));
    }
    let ones = label.iter().filter(|&&v| v == 1.0).count();
    let zeros = label.iter().filter(|&&v| v == 0.0).count();
    if ones != 1 || ones + zeros != label.len() {
        return Err(Error::invalid(
            "class_conditional_forward",
            "label must be exactly one-hot (one entry 1.0, the rest 0.0)",
        ));
    }
    let h = model.predict_h(x, label)?;
    model.predict_x(label, &h)
}

/// A gated autoencoder whose `y` input is produced by its own linear
/// autoencoder head squashed through a softmax — the class assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringModel {
    /// Gated block with `n_y` = number of classes, softplus mapping layer.
    pub gated: GatedModel,
    /// Class head: `n_classes x n_x`.
    pub w_ae: Matrix,
    pub b_ae: Vector,
}

impl ClusteringModel {
    pub fn n_classes(&self) -> usize {
        self.gated.n_y
    }

    /// Gaussian-initialized clustering model: tied gated block with the
    /// given `x` activation, softplus mapping layer, `k` classes.
    pub fn init_with_sigma(
        n_x: usize,
        k: usize,
        n_h: usize,
        n_f: usize,
        act_x: Activation,
        sigma: f64,
        rng: &mut Rng,
    ) -> Self {
        let gated = GatedModel::init_with_sigma(
            n_x,
            k,
            n_h,
            n_f,
            TyingMode::Tied,
            [act_x, Activation::Softmax, Activation::Softplus],
            sigma,
            rng,
        );
        ClusteringModel {
            gated,
            w_ae: Matrix::gaussian(k, n_x, sigma, rng),
            b_ae: vec![0.0; k],
        }
    }

    pub fn n_params(&self) -> usize {
        self.gated.n_params() + self.w_ae.data().len() + self.b_ae.len()
    }

    /// Canonical flat order: gated parameters, then `W_ae`, then `b_ae`.
    pub fn param_vec(&self) -> Vector {
        let mut v = self.gated.param_vec();
        v.extend_from_slice(self.w_ae.data());
        v.extend_from_slice(&self.b_ae);
        v
    }

    pub fn set_param_vec(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_params() {
            return Err(Error::shape(
                "set_param_vec",
                format!("{} params", self.n_params()),
                format!("vector of len {}", v.len()),
            ));
        }
        let split = self.gated.n_params();
        self.gated.set_param_vec(&v[..split])?;
        let wlen = self.w_ae.data().len();
        self.w_ae.data_mut().copy_from_slice(&v[split..split + wlen]);
        self.b_ae.copy_from_slice(&v[split + wlen..]);
        Ok(())
    }

    fn class_logits(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.gated.n_x {
            return Err(Error::shape(
                "clustering_forward",
                format!("n_x {}", self.gated.n_x),
                format!("input len {}", x.len()),
            ));
        }
        let mut z = matvec(&self.w_ae, x);
        vec_add_assign(&mut z, &self.b_ae);
        Ok(z)
    }
}

/// Forward pass of the clustering model: soft class assignment, mapping
/// layer, and reconstruction.
pub fn clustering_forward(model: &ClusteringModel, x: &[f64]) -> Result<(Vector, Vector, Vector)> {
    let class = Activation::Softmax.apply(&model.class_logits(x)?)?;
    let h = model.gated.predict_h(x, &class)?;
    let xhat = model.gated.predict_x(&class, &h)?;
    Ok((class, h, xhat))
}

/// Reconstruction loss of the clustering model under a fixed corruption
/// realization. The class head sees the same corrupted `x` as the gated
/// block; the loss target is the clean `x`.
pub fn clustering_loss(model: &ClusteringModel, x: &[f64], draws: &CorruptionDraws) -> Result<f64> {
    let xt = apply_opt_draw(&draws.x, x);
    let class = Activation::Softmax.apply(&model.class_logits(&xt)?)?;
    loss(&model.gated, x, &class, None, LossMode::ReconstructX, draws)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringGrads {
    pub gated: GatedGrads,
    pub w_ae: Matrix,
    pub b_ae: Vector,
}

impl ClusteringGrads {
    pub fn zeros_like(m: &ClusteringModel) -> Self {
        ClusteringGrads {
            gated: GatedGrads::zeros_like(&m.gated),
            w_ae: Matrix::zeros(m.n_classes(), m.gated.n_x),
            b_ae: vec![0.0; m.n_classes()],
        }
    }

    pub fn add_assign(&mut self, other: &ClusteringGrads) {
        self.gated.add_assign(&other.gated);
        assert_eq!(self.w_ae.data().len(), other.w_ae.data().len(), "gradient blocks differ");
        for (d, &s) in self.w_ae.data_mut().iter_mut().zip(other.w_ae.data()) {
            *d += s;
        }
        vec_add_assign(&mut self.b_ae, &other.b_ae);
    }

    pub fn scale(&mut self, s: f64) {
        self.gated.scale(s);
        scale_assign(self.w_ae.data_mut(), s);
        scale_assign(&mut self.b_ae, s);
    }

    /// Flat gradient in [`ClusteringModel::param_vec`] order.
    pub fn to_vec(&self) -> Vector {
        let mut v = self.gated.to_vec();
        v.extend_from_slice(self.w_ae.data());
        v.extend_from_slice(&self.b_ae);
        v
    }
}

/// Joint loss and gradient: the gated block's gradient with respect to its
/// class input is pushed back through the softmax into the class head.
pub fn clustering_backward(
    model: &ClusteringModel,
    x: &[f64],
    draws: &CorruptionDraws,
) -> Result<(f64, ClusteringGrads)> {
    let xt = apply_opt_draw(&draws.x, x);
    let z_ae = model.class_logits(&xt)?;
    let class = Activation::Softmax.apply(&z_ae)?;
    let (l, g_gated) = backward(&model.gated, x, &class, None, LossMode::ReconstructX, draws)?;

    let mut g = ClusteringGrads {
        gated: g_gated,
        w_ae: Matrix::zeros(model.n_classes(), model.gated.n_x),
        b_ae: vec![0.0; model.n_classes()],
    };
    // class = softmax(z_ae); dJ/dz = J_softmax^T (dJ/dclass)
    let dz = Activation::Softmax.backward(&z_ae, &g.gated.d_y)?;
    g.w_ae.add_outer(&dz, &xt);
    vec_add_assign(&mut g.b_ae, &dz);
    Ok((l, g))
}

/// Joint training of the gated block and the class head on `x`
/// reconstruction. The dataset's `y` side is ignored; the class vector is
/// produced by the model itself.
pub fn clustering_train(
    model: ClusteringModel,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(ClusteringModel, Vector)> {
    clustering_train_observed(model, data, config, |_, _| {})
}

/// Like [`clustering_train`], invoking `on_epoch(epoch, mean_loss)` as
/// each epoch finishes.
pub fn clustering_train_observed(
    mut model: ClusteringModel,
    data: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(ClusteringModel, Vector)> {
    config.validate()?;
    if config.loss != LossMode::ReconstructX {
        return Err(Error::invalid(
            "clustering_train",
            format!("clustering trains on reconstruct-x, not {}", config.loss.name()),
        ));
    }
    if data.is_empty() {
        return Err(Error::invalid("clustering_train", "dataset is empty"));
    }
    if data.n_x != model.gated.n_x {
        return Err(Error::shape(
            "clustering_train",
            format!("model n_x {}", model.gated.n_x),
            format!("dataset n_x {}", data.n_x),
        ));
    }

    let mut rng = Rng::new(config.seed);
    let mut vel = ClusteringGrads::zeros_like(&model);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for batch in data.examples.chunks(config.batch_size) {
            let mut acc = ClusteringGrads::zeros_like(&model);
            for ex in batch {
                let draws = draw_corruption(&config.corruption, &model.gated, &mut rng);
                let (l, g) = clustering_backward(&model, &ex.x, &draws)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss became {l} in epoch {epoch}; lower the learning rate"
                    )));
                }
                epoch_loss += l;
                acc.add_assign(&g);
            }
            acc.scale(1.0 / batch.len() as f64);
            sgd_step(&mut model.gated, &acc.gated, config.lr, config.momentum, &mut vel.gated)?;
            for ((t, &gi), vi) in model
                .w_ae
                .data_mut()
                .iter_mut()
                .zip(acc.w_ae.data())
                .zip(vel.w_ae.data_mut().iter_mut())
            {
                *vi = config.momentum * *vi - config.lr * gi;
                *t += *vi;
            }
            for ((t, &gi), vi) in model.b_ae.iter_mut().zip(&acc.b_ae).zip(vel.b_ae.iter_mut()) {
                *vi = config.momentum * *vi - config.lr * gi;
                *t += *vi;
            }
        }
        let mean = epoch_loss / data.len() as f64;
        on_epoch(epoch, mean);
        trace.push(mean);
    }
    Ok((model, trace))
}

/// Fraction of examples whose argmax class assignment agrees with the
/// majority true label of that class — requires a labeled dataset.
pub fn cluster_purity(model: &ClusteringModel, data: &Dataset) -> Result<f64> {
    let label_len = data.label_len();
    if data.is_empty() || label_len == 0 {
        return Err(Error::invalid("cluster_purity", "needs a nonempty labeled dataset"));
    }
    let k = model.n_classes();
    let mut counts = vec![vec![0usize; label_len]; k];
    for ex in &data.examples {
        let (class, _, _) = clustering_forward(model, &ex.x)?;
        let assigned = argmax(&class);
        let truth = argmax(ex.label.as_ref().unwrap());
        counts[assigned][truth] += 1;
    }
    let majority_sum: usize = counts.iter().map(|row| row.iter().max().copied().unwrap_or(0)).sum();
    Ok(majority_sum as f64 / data.len() as f64)
}

/// Finite-difference check of the joint clustering gradient on toy models.
pub(crate) fn check_clustering_grid(seeds: &[u64], eps: f64) -> Result<GridReport> {
    let mut report = GridReport::new();
    for &seed in seeds {
        let mut rng = Rng::new(seed.wrapping_mul(0x517C_C1B7).wrapping_add(3));
        let model =
            ClusteringModel::init_with_sigma(3, 2, 2, 3, Activation::Identity, 0.6, &mut rng);
        let x: Vector = (0..3).map(|_| rng.next_gaussian()).collect();
        let draws = CorruptionDraws::none();

        let (_, grads) = clustering_backward(&model, &x, &draws)?;
        let analytic = grads.to_vec();
        let theta0 = model.param_vec();
        let mut scratch = model.clone();
        let numeric = numeric_grad(
            |t| {
                scratch.set_param_vec(t)?;
                clustering_loss(&scratch, &x, &draws)
            },
            &theta0,
            eps,
        )?;
        let err = rel_error(&analytic, &numeric);
        report.record(err, || format!("clustering joint gradient / seed {seed}"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::gen_blobs;
    use crate::gradcheck::{DEFAULT_EPS, DEFAULT_TOLERANCE};
    use crate::training::{CorruptionKind, CorruptionSpec, CorruptionTarget};

    #[test]
    fn analogy_unfolds_to_predict_composition() {
        let mut rng = Rng::new(13);
        let m = GatedModel::init_with_sigma(
            4, 4, 3, 5,
            TyingMode::Tied,
            [Activation::Identity, Activation::Identity, Activation::Sigmoid],
            0.5,
            &mut rng,
        );
        let a: Vector = (0..4).map(|_| rng.next_gaussian()).collect();
        let b: Vector = (0..4).map(|_| rng.next_gaussian()).collect();
        let lhs = analogy(&m, &a, &b, &a).unwrap();
        let rhs = m.predict_y(&a, &m.predict_h(&a, &b).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn analogy_zero_model_outputs_zero() {
        let m = GatedModel::zeros(3, 3, 2, 4, TyingMode::Tied);
        let out = analogy(&m, &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0], &[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn one_hot_label_selects_a_column() {
        let mut rng = Rng::new(21);
        let mut m = GatedModel::init_with_sigma(
            3, 4, 2, 5,
            TyingMode::Tied,
            [Activation::Sigmoid, Activation::Sigmoid, Activation::Relu],
            0.7,
            &mut rng,
        );
        for v in m.b_fy.iter_mut() {
            *v = 0.2 * rng.next_gaussian();
        }
        let label = crate::numerics::one_hot(2, 4);
        let fy = m.project_factor(crate::gated::LayerId::Y, &label).unwrap();
        for (f, &v) in fy.iter().enumerate() {
            assert!((v - (m.w_y_in.get(f, 2) + m.b_fy[f])).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_selected_columns_give_identical_reconstructions() {
        let mut rng = Rng::new(31);
        let m1 = GatedModel::init_with_sigma(
            3, 4, 2, 5,
            TyingMode::Tied,
            [Activation::Sigmoid, Activation::Sigmoid, Activation::Relu],
            0.7,
            &mut rng,
        );
        // different W_y_in except column 2, which matches m1's
        let mut m2 = m1.clone();
        m2.w_y_in = Matrix::gaussian(5, 4, 0.7, &mut rng);
        for f in 0..5 {
            m2.w_y_in.set(f, 2, m1.w_y_in.get(f, 2));
        }
        let label = crate::numerics::one_hot(2, 4);
        let x = [0.4, -0.2, 0.9];
        assert_eq!(
            class_conditional_forward(&m1, &x, &label).unwrap(),
            class_conditional_forward(&m2, &x, &label).unwrap()
        );
    }

    #[test]
    fn class_conditional_rejects_bad_labels_and_activation() {
        let mut m = GatedModel::zeros(3, 4, 2, 5, TyingMode::Tied);
        m.act_h = Activation::Relu;
        let x = [0.0, 0.0, 0.0];
        assert!(class_conditional_forward(&m, &x, &[0.5, 0.5, 0.0, 0.0]).is_err());
        assert!(class_conditional_forward(&m, &x, &[1.0, 1.0, 0.0, 0.0]).is_err());
        assert!(class_conditional_forward(&m, &x, &[0.0, 0.0, 0.0, 0.0]).is_err());
        m.act_h = Activation::Sigmoid;
        assert!(class_conditional_forward(&m, &x, &[1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn clustering_forward_uniform_when_head_is_zero() {
        let mut rng = Rng::new(41);
        let mut m = ClusteringModel::init_with_sigma(4, 3, 2, 4, Activation::Identity, 0.5, &mut rng);
        m.w_ae = Matrix::zeros(3, 4);
        m.b_ae = vec![0.0; 3];
        let (class, _, _) = clustering_forward(&m, &[0.3, -0.8, 0.1, 0.5]).unwrap();
        for &c in &class {
            assert!((c - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn clustering_class_is_a_probability_vector() {
        let mut rng = Rng::new(43);
        let m = ClusteringModel::init_with_sigma(4, 3, 2, 4, Activation::Identity, 0.8, &mut rng);
        for _ in 0..20 {
            let x: Vector = (0..4).map(|_| 2.0 * rng.next_gaussian()).collect();
            let (class, _, _) = clustering_forward(&m, &x).unwrap();
            assert!(class.iter().all(|&c| c >= 0.0));
            assert!((class.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn clustering_joint_gradient_matches_finite_differences() {
        let report = check_clustering_grid(&[0, 1, 2], DEFAULT_EPS).unwrap();
        assert!(
            report.max_rel_err < DEFAULT_TOLERANCE,
            "max rel err {} at {}",
            report.max_rel_err,
            report.worst
        );

        // and with input corruption active
        let mut rng = Rng::new(55);
        let model = ClusteringModel::init_with_sigma(3, 2, 2, 3, Activation::Identity, 0.6, &mut rng);
        let x: Vector = (0..3).map(|_| rng.next_gaussian()).collect();
        let spec = CorruptionSpec {
            kind: CorruptionKind::Masking(0.4),
            target: CorruptionTarget::InputX,
        };
        let draws = draw_corruption(&spec, &model.gated, &mut rng);
        let (_, grads) = clustering_backward(&model, &x, &draws).unwrap();
        let theta0 = model.param_vec();
        let mut scratch = model.clone();
        let numeric = numeric_grad(
            |t| {
                scratch.set_param_vec(t)?;
                clustering_loss(&scratch, &x, &draws)
            },
            &theta0,
            DEFAULT_EPS,
        )
        .unwrap();
        let err = rel_error(&grads.to_vec(), &numeric);
        assert!(err < DEFAULT_TOLERANCE, "corrupted joint gradient rel err {err}");
    }

    #[test]
    fn clustering_train_lr_zero_is_identity_and_trace_sized() {
        let mut rng = Rng::new(3);
        let model = ClusteringModel::init_with_sigma(4, 2, 2, 3, Activation::Identity, 0.4, &mut rng);
        let data = gen_blobs(&mut rng, 10, 4, &[vec![1.0; 4], vec![-1.0; 4]], 0.2).unwrap();
        let config = TrainConfig {
            loss: LossMode::ReconstructX,
            lr: 0.0,
            epochs: 4,
            ..TrainConfig::default()
        };
        let before = model.param_vec();
        let (after, trace) = clustering_train(model, &data, &config).unwrap();
        assert_eq!(after.param_vec(), before);
        assert_eq!(trace.len(), 4);
    }

    #[test]
    fn clustering_train_rejects_other_losses() {
        let mut rng = Rng::new(3);
        let model = ClusteringModel::init_with_sigma(4, 2, 2, 3, Activation::Identity, 0.4, &mut rng);
        let data = gen_blobs(&mut rng, 6, 4, &[vec![1.0; 4], vec![-1.0; 4]], 0.2).unwrap();
        let config = TrainConfig {
            loss: LossMode::Symmetric,
            ..TrainConfig::default()
        };
        assert!(clustering_train(model, &data, &config).is_err());
    }

    #[test]
    fn clustering_train_reduces_loss_on_blobs() {
        let mut rng = Rng::new(42);
        let model = ClusteringModel::init_with_sigma(6, 2, 3, 4, Activation::Identity, 0.3, &mut rng);
        let data = gen_blobs(&mut rng, 40, 6, &[vec![1.0; 6], vec![-1.0; 6]], 0.3).unwrap();
        let config = TrainConfig {
            loss: LossMode::ReconstructX,
            corruption: CorruptionSpec::none(),
            lr: 0.01,
            momentum: 0.5,
            epochs: 80,
            batch_size: 10,
            seed: 42,
        };
        let (_, trace) = clustering_train(model, &data, &config).unwrap();
        assert!(
            trace.last().unwrap() < &trace[0],
            "loss did not decrease: {} -> {}",
            trace[0],
            trace.last().unwrap()
        );
    }
}
