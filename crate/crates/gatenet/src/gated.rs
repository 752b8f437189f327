//! The factored gated architecture.
//!
//! Three external layers `x`, `y`, `h` are projected onto factor layers of a
//! common size `n_f`:
//!
//! - `f_x = W_x_in · x + b_fx`, and likewise for `y` and `h`.
//!
//! The central three-way interaction is a parameter-free element-wise
//! product of two factor layers, projected back out through the third:
//!
//! - `y_hat = act_y(W_y_out · (f_x ⊗ f_h) + b_y)`
//! - `x_hat = act_x(W_x_out · (f_y ⊗ f_h) + b_x)`
//! - `h_hat = act_h(W_h_out · (f_x ⊗ f_y) + b_h)`
//!
//! Under weight tying each `W_out` is the transpose of the matching `W_in`
//! and is not stored. This factored form is algebraically a constrained
//! dense 3-way tensor `w[i][j][k] = sum_f W_x[f][i] W_y[f][j] W_h[f][k]`;
//! [`GatedModel::materialize_tensor`] builds that tensor explicitly and
//! [`DenseTensor`] evaluates it by brute-force triple sums, which serves as
//! the exact oracle for the factored predictions.

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::numerics::{hadamard, matvec, matvec_t, vec_add_assign, Matrix, Rng, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TyingMode {
    /// `W_out = W_in^T` for every layer; only the in-matrices are stored.
    Tied,
    /// Six independent projection matrices.
    Untied,
}

/// Names one of the three external layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerId {
    X,
    Y,
    H,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedModel {
    pub n_x: usize,
    pub n_y: usize,
    pub n_h: usize,
    pub n_f: usize,
    pub tying: TyingMode,
    /// Input projections, stored factor-major: `n_f x n_layer`.
    pub w_x_in: Matrix,
    pub w_y_in: Matrix,
    pub w_h_in: Matrix,
    /// Output projections (`n_layer x n_f`), present only when untied.
    pub w_x_out: Option<Matrix>,
    pub w_y_out: Option<Matrix>,
    pub w_h_out: Option<Matrix>,
    /// Factor biases, length `n_f`.
    pub b_fx: Vector,
    pub b_fy: Vector,
    pub b_fh: Vector,
    /// Output biases, one per external layer.
    pub b_x: Vector,
    pub b_y: Vector,
    pub b_h: Vector,
    pub act_x: Activation,
    pub act_y: Activation,
    pub act_h: Activation,
}

impl GatedModel {
    /// Zero-weight, zero-bias model with identity activations.
    pub fn zeros(n_x: usize, n_y: usize, n_h: usize, n_f: usize, tying: TyingMode) -> Self {
        let out = |n| match tying {
            TyingMode::Tied => None,
            TyingMode::Untied => Some(Matrix::zeros(n, n_f)),
        };
        GatedModel {
            n_x,
            n_y,
            n_h,
            n_f,
            tying,
            w_x_in: Matrix::zeros(n_f, n_x),
            w_y_in: Matrix::zeros(n_f, n_y),
            w_h_in: Matrix::zeros(n_f, n_h),
            w_x_out: out(n_x),
            w_y_out: out(n_y),
            w_h_out: out(n_h),
            b_fx: vec![0.0; n_f],
            b_fy: vec![0.0; n_f],
            b_fh: vec![0.0; n_f],
            b_x: vec![0.0; n_x],
            b_y: vec![0.0; n_y],
            b_h: vec![0.0; n_h],
            act_x: Activation::Identity,
            act_y: Activation::Identity,
            act_h: Activation::Identity,
        }
    }

    /// Gaussian-initialized model: weights `N(0, sigma^2)`, biases zero.
    #[allow(clippy::too_many_arguments)]
    pub fn init_with_sigma(
        n_x: usize,
        n_y: usize,
        n_h: usize,
        n_f: usize,
        tying: TyingMode,
        acts: [Activation; 3],
        sigma: f64,
        rng: &mut Rng,
    ) -> Self {
        let mut m = GatedModel::zeros(n_x, n_y, n_h, n_f, tying);
        m.act_x = acts[0];
        m.act_y = acts[1];
        m.act_h = acts[2];
        m.w_x_in = Matrix::gaussian(n_f, n_x, sigma, rng);
        m.w_y_in = Matrix::gaussian(n_f, n_y, sigma, rng);
        m.w_h_in = Matrix::gaussian(n_f, n_h, sigma, rng);
        if let TyingMode::Untied = tying {
            m.w_x_out = Some(Matrix::gaussian(n_x, n_f, sigma, rng));
            m.w_y_out = Some(Matrix::gaussian(n_y, n_f, sigma, rng));
            m.w_h_out = Some(Matrix::gaussian(n_h, n_f, sigma, rng));
        }
        m
    }

    /// Default initialization: `sigma = 0.01 / sqrt(n_f)`, small enough to
    /// keep softplus and softmax layers unsaturated at the start.
    pub fn init(
        n_x: usize,
        n_y: usize,
        n_h: usize,
        n_f: usize,
        tying: TyingMode,
        acts: [Activation; 3],
        rng: &mut Rng,
    ) -> Self {
        Self::init_with_sigma(n_x, n_y, n_h, n_f, tying, acts, 0.01 / (n_f as f64).sqrt(), rng)
    }

    pub fn layer_size(&self, which: LayerId) -> usize {
        match which {
            LayerId::X => self.n_x,
            LayerId::Y => self.n_y,
            LayerId::H => self.n_h,
        }
    }

    fn in_mat(&self, which: LayerId) -> &Matrix {
        match which {
            LayerId::X => &self.w_x_in,
            LayerId::Y => &self.w_y_in,
            LayerId::H => &self.w_h_in,
        }
    }

    fn factor_bias(&self, which: LayerId) -> &Vector {
        match which {
            LayerId::X => &self.b_fx,
            LayerId::Y => &self.b_fy,
            LayerId::H => &self.b_fh,
        }
    }

    /// Projects an external layer onto its factor layer:
    /// `W_in · v + b_f`. Factors carry no activation of their own.
    pub fn project_factor(&self, which: LayerId, v: &[f64]) -> Result<Vector> {
        let expect = self.layer_size(which);
        if v.len() != expect {
            return Err(Error::shape(
                "project_factor",
                format!("layer {which:?} size {expect}"),
                format!("input len {}", v.len()),
            ));
        }
        let mut f = matvec(self.in_mat(which), v);
        vec_add_assign(&mut f, self.factor_bias(which));
        Ok(f)
    }

    /// `W_out · f` for the named layer, using the transposed in-matrix when
    /// tied.
    pub(crate) fn out_matvec(&self, which: LayerId, f: &[f64]) -> Vector {
        let out = match which {
            LayerId::X => &self.w_x_out,
            LayerId::Y => &self.w_y_out,
            LayerId::H => &self.w_h_out,
        };
        match out {
            Some(m) => matvec(m, f),
            None => matvec_t(self.in_mat(which), f),
        }
    }

    /// `W_out^T · v` for the named layer (the backward counterpart of
    /// [`GatedModel::out_matvec`]).
    pub(crate) fn out_matvec_t(&self, which: LayerId, v: &[f64]) -> Vector {
        let out = match which {
            LayerId::X => &self.w_x_out,
            LayerId::Y => &self.w_y_out,
            LayerId::H => &self.w_h_out,
        };
        match out {
            Some(m) => matvec_t(m, v),
            None => matvec(self.in_mat(which), v),
        }
    }

    /// `y_hat = act_y(W_y_out · (f_x ⊗ f_h) + b_y)`.
    pub fn predict_y(&self, x: &[f64], h: &[f64]) -> Result<Vector> {
        let fx = self.project_factor(LayerId::X, x)?;
        let fh = self.project_factor(LayerId::H, h)?;
        let mut z = self.out_matvec(LayerId::Y, &hadamard(&fx, &fh));
        vec_add_assign(&mut z, &self.b_y);
        self.act_y.apply(&z)
    }

    /// `x_hat = act_x(W_x_out · (f_y ⊗ f_h) + b_x)`.
    pub fn predict_x(&self, y: &[f64], h: &[f64]) -> Result<Vector> {
        let fy = self.project_factor(LayerId::Y, y)?;
        let fh = self.project_factor(LayerId::H, h)?;
        let mut z = self.out_matvec(LayerId::X, &hadamard(&fy, &fh));
        vec_add_assign(&mut z, &self.b_x);
        self.act_x.apply(&z)
    }

    /// `h_hat = act_h(W_h_out · (f_x ⊗ f_y) + b_h)`.
    pub fn predict_h(&self, x: &[f64], y: &[f64]) -> Result<Vector> {
        let fx = self.project_factor(LayerId::X, x)?;
        let fy = self.project_factor(LayerId::Y, y)?;
        let mut z = self.out_matvec(LayerId::H, &hadamard(&fx, &fy));
        vec_add_assign(&mut z, &self.b_h);
        self.act_h.apply(&z)
    }

    /// Expands the factored weights into the dense 3-way tensor
    /// `w[i][j][k] = sum_f W_x[f][i] W_y[f][j] W_h[f][k]`.
    ///
    /// The dense form has no counterpart for factor biases, so this is only
    /// defined for models whose factor biases are all zero.
    pub fn materialize_tensor(&self) -> Result<DenseTensor> {
        let biased = self
            .b_fx
            .iter()
            .chain(&self.b_fy)
            .chain(&self.b_fh)
            .any(|&b| b != 0.0);
        if biased {
            return Err(Error::invalid(
                "materialize_tensor",
                "factor biases must be zero: the dense tensor form has no factor-bias term",
            ));
        }
        let mut t = DenseTensor::zeros(self.n_x, self.n_y, self.n_h);
        for f in 0..self.n_f {
            let wx = self.w_x_in.row(f);
            let wy = self.w_y_in.row(f);
            let wh = self.w_h_in.row(f);
            for (i, &wxi) in wx.iter().enumerate() {
                for (j, &wyj) in wy.iter().enumerate() {
                    let xy = wxi * wyj;
                    for (k, &whk) in wh.iter().enumerate() {
                        *t.get_mut(i, j, k) += xy * whk;
                    }
                }
            }
        }
        Ok(t)
    }

    /// Weight and bias counts. Tied models store one matrix per layer,
    /// untied models two.
    pub fn param_count(&self) -> ParamCount {
        let per_role = self.n_f * (self.n_x + self.n_y + self.n_h);
        let weights = match self.tying {
            TyingMode::Tied => per_role,
            TyingMode::Untied => 2 * per_role,
        };
        ParamCount {
            weights,
            biases: 3 * self.n_f + self.n_x + self.n_y + self.n_h,
        }
    }

    /// Total number of trainable scalars (weights plus biases).
    pub fn n_params(&self) -> usize {
        let pc = self.param_count();
        pc.weights + pc.biases
    }

    /// Flattens every trainable parameter into one vector, in the canonical
    /// order `W_x_in, W_y_in, W_h_in, [W_x_out, W_y_out, W_h_out if untied],
    /// b_fx, b_fy, b_fh, b_x, b_y, b_h` (matrices row-major). This order is
    /// shared by the gradient container and the model file format.
    pub fn param_vec(&self) -> Vector {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(self.w_x_in.data());
        v.extend_from_slice(self.w_y_in.data());
        v.extend_from_slice(self.w_h_in.data());
        for m in [&self.w_x_out, &self.w_y_out, &self.w_h_out].into_iter().flatten() {
            v.extend_from_slice(m.data());
        }
        for b in [&self.b_fx, &self.b_fy, &self.b_fh, &self.b_x, &self.b_y, &self.b_h] {
            v.extend_from_slice(b);
        }
        v
    }

    /// Inverse of [`GatedModel::param_vec`]: writes the flat vector back
    /// into the parameter blocks.
    pub fn set_param_vec(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_params() {
            return Err(Error::shape(
                "set_param_vec",
                format!("{} params", self.n_params()),
                format!("vector of len {}", v.len()),
            ));
        }
        fn take<'a>(v: &'a [f64], pos: &mut usize, n: usize) -> &'a [f64] {
            let s = &v[*pos..*pos + n];
            *pos += n;
            s
        }
        let p = &mut 0;
        self.w_x_in.data_mut().copy_from_slice(take(v, p, self.n_f * self.n_x));
        self.w_y_in.data_mut().copy_from_slice(take(v, p, self.n_f * self.n_y));
        self.w_h_in.data_mut().copy_from_slice(take(v, p, self.n_f * self.n_h));
        let (n_x, n_y, n_h, n_f) = (self.n_x, self.n_y, self.n_h, self.n_f);
        if let Some(m) = &mut self.w_x_out {
            m.data_mut().copy_from_slice(take(v, p, n_x * n_f));
        }
        if let Some(m) = &mut self.w_y_out {
            m.data_mut().copy_from_slice(take(v, p, n_y * n_f));
        }
        if let Some(m) = &mut self.w_h_out {
            m.data_mut().copy_from_slice(take(v, p, n_h * n_f));
        }
        self.b_fx.copy_from_slice(take(v, p, n_f));
        self.b_fy.copy_from_slice(take(v, p, n_f));
        self.b_fh.copy_from_slice(take(v, p, n_f));
        self.b_x.copy_from_slice(take(v, p, n_x));
        self.b_y.copy_from_slice(take(v, p, n_y));
        self.b_h.copy_from_slice(take(v, p, n_h));
        Ok(())
    }

    /// Exchanges the functional roles of the `x` and `y` layers, swapping
    /// their matrices, biases and activations. The architecture is symmetric
    /// in its external layers, so `swapped.predict_h(y, x)` is bitwise equal
    /// to `self.predict_h(x, y)`.
    pub fn swap_xy(&self) -> GatedModel {
        let mut m = self.clone();
        std::mem::swap(&mut m.n_x, &mut m.n_y);
        std::mem::swap(&mut m.w_x_in, &mut m.w_y_in);
        std::mem::swap(&mut m.w_x_out, &mut m.w_y_out);
        std::mem::swap(&mut m.b_fx, &mut m.b_fy);
        std::mem::swap(&mut m.b_x, &mut m.b_y);
        std::mem::swap(&mut m.act_x, &mut m.act_y);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub weights: usize,
    pub biases: usize,
}

/// The unconstrained dense 3-way tensor, used as the brute-force oracle for
/// the factored predictions. Its parameter count is `n_x * n_y * n_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub n_x: usize,
    pub n_y: usize,
    pub n_h: usize,
    w: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(n_x: usize, n_y: usize, n_h: usize) -> Self {
        DenseTensor {
            n_x,
            n_y,
            n_h,
            w: vec![0.0; n_x * n_y * n_h],
        }
    }

    pub fn from_fn(n_x: usize, n_y: usize, n_h: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = DenseTensor::zeros(n_x, n_y, n_h);
        for i in 0..n_x {
            for j in 0..n_y {
                for k in 0..n_h {
                    *t.get_mut(i, j, k) = f(i, j, k);
                }
            }
        }
        t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.w[(i * self.n_y + j) * self.n_h + k]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize, k: usize) -> &mut f64 {
        &mut self.w[(i * self.n_y + j) * self.n_h + k]
    }

    pub fn param_count(&self) -> usize {
        self.w.len()
    }

    fn check(&self, op: &'static str, a: &[f64], a_dim: usize, b: &[f64], b_dim: usize) -> Result<()> {
        if a.len() != a_dim || b.len() != b_dim {
            return Err(Error::shape(
                op,
                format!("tensor {}x{}x{}", self.n_x, self.n_y, self.n_h),
                format!("inputs {} and {}", a.len(), b.len()),
            ));
        }
        Ok(())
    }

    /// `y_hat[j] = act(sum_i sum_k w[i][j][k] x[i] h[k])` by brute force.
    pub fn predict_y(&self, x: &[f64], h: &[f64], act: Activation) -> Result<Vector> {
        self.check("dense_predict_y", x, self.n_x, h, self.n_h)?;
        let mut z = vec![0.0; self.n_y];
        for (j, zj) in z.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &xi) in x.iter().enumerate() {
                for (k, &hk) in h.iter().enumerate() {
                    acc += self.get(i, j, k) * xi * hk;
                }
            }
            *zj = acc;
        }
        act.apply(&z)
    }

    /// `x_hat[i] = act(sum_j sum_k w[i][j][k] y[j] h[k])`.
    pub fn predict_x(&self, y: &[f64], h: &[f64], act: Activation) -> Result<Vector> {
        self.check("dense_predict_x", y, self.n_y, h, self.n_h)?;
        let mut z = vec![0.0; self.n_x];
        for (i, zi) in z.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &yj) in y.iter().enumerate() {
                for (k, &hk) in h.iter().enumerate() {
                    acc += self.get(i, j, k) * yj * hk;
                }
            }
            *zi = acc;
        }
        act.apply(&z)
    }

    /// `h_hat[k] = act(sum_i sum_j w[i][j][k] x[i] y[j])`.
    pub fn predict_h(&self, x: &[f64], y: &[f64], act: Activation) -> Result<Vector> {
        self.check("dense_predict_h", x, self.n_x, y, self.n_y)?;
        let mut z = vec![0.0; self.n_h];
        for (k, zk) in z.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &xi) in x.iter().enumerate() {
                for (j, &yj) in y.iter().enumerate() {
                    acc += self.get(i, j, k) * xi * yj;
                }
            }
            *zk = acc;
        }
        act.apply(&z)
    }
}

/// Parameter count of the dense tensor for given layer sizes.
pub fn dense_param_count(n_x: usize, n_y: usize, n_h: usize) -> usize {
    n_x * n_y * n_h
}

#[cfg(test)]
mod tests {
    use super::*;

    /// n-dimensional model whose in-matrices are identity and whose
    /// activations are identity: factors are copies of the inputs.
    fn identity_model(n: usize) -> GatedModel {
        let mut m = GatedModel::zeros(n, n, n, n, TyingMode::Tied);
        m.w_x_in = Matrix::identity(n);
        m.w_y_in = Matrix::identity(n);
        m.w_h_in = Matrix::identity(n);
        m
    }

    fn random_model(tying: TyingMode, sizes: (usize, usize, usize, usize), seed: u64) -> GatedModel {
        let mut rng = Rng::new(seed);
        let (n_x, n_y, n_h, n_f) = sizes;
        GatedModel::init_with_sigma(
            n_x,
            n_y,
            n_h,
            n_f,
            tying,
            [Activation::Identity; 3],
            0.8,
            &mut rng,
        )
    }

    #[test]
    fn project_factor_identity_and_bias() {
        let m = identity_model(2);
        assert_eq!(m.project_factor(LayerId::X, &[2.0, 3.0]).unwrap(), vec![2.0, 3.0]);

        let mut m = identity_model(2);
        m.b_fx = vec![1.0, 1.0];
        assert_eq!(m.project_factor(LayerId::X, &[0.0, 0.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn project_factor_matches_double_loop() {
        let m = random_model(TyingMode::Tied, (4, 3, 2, 3), 17);
        let x = [0.3, -1.2, 0.5, 2.0];
        let got = m.project_factor(LayerId::X, &x).unwrap();
        for (f, &g) in got.iter().enumerate() {
            let mut acc = 0.0;
            for (i, &xi) in x.iter().enumerate() {
                acc += m.w_x_in.get(f, i) * xi;
            }
            acc += m.b_fx[f];
            assert!((g - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn project_factor_rejects_wrong_size() {
        let m = identity_model(2);
        assert!(m.project_factor(LayerId::X, &[1.0]).is_err());
    }

    #[test]
    fn predict_y_identity_model() {
        let m = identity_model(2);
        let y = m.predict_y(&[2.0, 3.0], &[5.0, 7.0]).unwrap();
        assert_eq!(y, vec![10.0, 21.0]);
        // zero input is absorbing under zero biases
        let y = m.predict_y(&[0.0, 0.0], &[5.0, 7.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn predict_x_identity_model() {
        let m = identity_model(2);
        assert_eq!(m.predict_x(&[2.0, 3.0], &[5.0, 7.0]).unwrap(), vec![10.0, 21.0]);
        assert_eq!(m.predict_x(&[2.0, 3.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn predict_h_identity_model_and_softmax() {
        let m = identity_model(2);
        assert_eq!(m.predict_h(&[2.0, 3.0], &[5.0, 7.0]).unwrap(), vec![10.0, 21.0]);

        let mut m = random_model(TyingMode::Tied, (3, 3, 4, 5), 23);
        m.act_h = Activation::Softmax;
        let h = m.predict_h(&[0.2, -0.4, 1.0], &[0.5, 0.1, -0.3]).unwrap();
        let sum: f64 = h.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predict_rejects_wrong_sizes() {
        let m = identity_model(2);
        assert!(m.predict_y(&[1.0], &[1.0, 2.0]).is_err());
        assert!(m.predict_x(&[1.0, 2.0], &[1.0]).is_err());
        assert!(m.predict_h(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn materialize_single_factor() {
        let mut m = GatedModel::zeros(2, 1, 2, 1, TyingMode::Tied);
        m.w_x_in = Matrix::from_rows(&[&[1.0, 2.0]]);
        m.w_y_in = Matrix::from_rows(&[&[3.0]]);
        m.w_h_in = Matrix::from_rows(&[&[1.0, 1.0]]);
        let t = m.materialize_tensor().unwrap();
        assert_eq!(t.get(0, 0, 0), 3.0);
        assert_eq!(t.get(1, 0, 0), 6.0);
        assert_eq!(t.get(0, 0, 1), 3.0);
        assert_eq!(t.get(1, 0, 1), 6.0);
    }

    #[test]
    fn materialize_zero_h_matrix_gives_zero_tensor() {
        let mut m = random_model(TyingMode::Tied, (3, 2, 2, 4), 5);
        m.w_h_in = Matrix::zeros(4, 2);
        let t = m.materialize_tensor().unwrap();
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..2 {
                    assert_eq!(t.get(i, j, k), 0.0);
                }
            }
        }
    }

    #[test]
    fn materialize_rejects_factor_bias() {
        let mut m = identity_model(2);
        m.b_fy[0] = 0.5;
        let err = m.materialize_tensor().unwrap_err();
        assert!(err.to_string().contains("factor biases"));
    }

    #[test]
    fn single_factor_tensor_unfoldings_have_rank_one() {
        // Every mode unfolding of a tensor built from one factor is an outer
        // product, so all 2x2 minors vanish.
        let m = random_model(TyingMode::Tied, (3, 4, 2, 1), 29);
        let t = m.materialize_tensor().unwrap();
        // mode-x unfolding: rows indexed by i, columns by (j, k)
        let rows = t.n_x;
        let cols = t.n_y * t.n_h;
        let unfold = |i: usize, c: usize| t.get(i, c / t.n_h, c % t.n_h);
        for r1 in 0..rows {
            for r2 in (r1 + 1)..rows {
                for c1 in 0..cols {
                    for c2 in (c1 + 1)..cols {
                        let det = unfold(r1, c1) * unfold(r2, c2) - unfold(r1, c2) * unfold(r2, c1);
                        assert!(det.abs() < 1e-12, "minor ({r1},{r2})x({c1},{c2}) = {det}");
                    }
                }
            }
        }
    }

    #[test]
    fn dense_predict_trivial_cases() {
        let t = DenseTensor::from_fn(1, 1, 1, |_, _, _| 1.0);
        assert_eq!(t.predict_y(&[2.0], &[3.0], Activation::Identity).unwrap(), vec![6.0]);

        let z = DenseTensor::zeros(2, 3, 2);
        let out = z.predict_y(&[1.0, 1.0], &[1.0, 1.0], Activation::Identity).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn factored_matches_dense_oracle_all_directions() {
        for seed in 0..20u64 {
            let m = random_model(TyingMode::Tied, (3, 3, 3, 4), 100 + seed);
            let t = m.materialize_tensor().unwrap();
            let mut rng = Rng::new(999 + seed);
            let x: Vector = (0..3).map(|_| rng.next_gaussian()).collect();
            let y: Vector = (0..3).map(|_| rng.next_gaussian()).collect();
            let h: Vector = (0..3).map(|_| rng.next_gaussian()).collect();

            let pairs = [
                (m.predict_y(&x, &h).unwrap(), t.predict_y(&x, &h, m.act_y).unwrap()),
                (m.predict_x(&y, &h).unwrap(), t.predict_x(&y, &h, m.act_x).unwrap()),
                (m.predict_h(&x, &y).unwrap(), t.predict_h(&x, &y, m.act_h).unwrap()),
            ];
            for (fac, dense) in pairs {
                for (a, b) in fac.iter().zip(dense.iter()) {
                    assert!((a - b).abs() < 1e-10, "factored {a} vs dense {b}");
                }
            }
        }
    }

    #[test]
    fn bilinearity_superposition() {
        let m = random_model(TyingMode::Untied, (4, 3, 3, 5), 41);
        let mut rng = Rng::new(77);
        let x1: Vector = (0..4).map(|_| rng.next_gaussian()).collect();
        let x2: Vector = (0..4).map(|_| rng.next_gaussian()).collect();
        let h: Vector = (0..3).map(|_| rng.next_gaussian()).collect();

        let sum_inputs: Vector = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
        let lhs = m.predict_y(&sum_inputs, &h).unwrap();
        let y1 = m.predict_y(&x1, &h).unwrap();
        let y2 = m.predict_y(&x2, &h).unwrap();
        for i in 0..3 {
            assert!((lhs[i] - (y1[i] + y2[i])).abs() < 1e-10);
        }

        // and linear in h for fixed x
        let h2: Vector = (0..3).map(|_| rng.next_gaussian()).collect();
        let sum_h: Vector = h.iter().zip(&h2).map(|(a, b)| a + b).collect();
        let lhs = m.predict_y(&x1, &sum_h).unwrap();
        let a = m.predict_y(&x1, &h).unwrap();
        let b = m.predict_y(&x1, &h2).unwrap();
        for i in 0..3 {
            assert!((lhs[i] - (a[i] + b[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn role_swap_leaves_predict_h_bitwise_identical() {
        let m = random_model(TyingMode::Untied, (4, 3, 2, 5), 53);
        let mut rng = Rng::new(60);
        let x: Vector = (0..4).map(|_| rng.next_gaussian()).collect();
        let y: Vector = (0..3).map(|_| rng.next_gaussian()).collect();
        let swapped = m.swap_xy();
        assert_eq!(m.predict_h(&x, &y).unwrap(), swapped.predict_h(&y, &x).unwrap());
    }

    #[test]
    fn param_count_formulas() {
        let tied = GatedModel::zeros(100, 100, 100, 50, TyingMode::Tied);
        assert_eq!(tied.param_count().weights, 15_000);
        assert_eq!(dense_param_count(100, 100, 100), 1_000_000);

        let untied = GatedModel::zeros(100, 100, 100, 50, TyingMode::Untied);
        assert_eq!(untied.param_count().weights, 2 * tied.param_count().weights);
        assert_eq!(tied.param_count().biases, untied.param_count().biases);
    }

    #[test]
    fn param_vec_roundtrip_both_tyings() {
        for tying in [TyingMode::Tied, TyingMode::Untied] {
            let m = random_model(tying, (3, 4, 2, 5), 83);
            let v = m.param_vec();
            assert_eq!(v.len(), m.n_params());
            let mut back = GatedModel::zeros(3, 4, 2, 5, tying);
            back.act_x = m.act_x;
            back.act_y = m.act_y;
            back.act_h = m.act_h;
            back.set_param_vec(&v).unwrap();
            assert_eq!(back, m);
            assert!(back.set_param_vec(&v[1..]).is_err());
        }
    }

    #[test]
    fn overcomplete_factors_allowed() {
        // n_f larger than every layer size is legal
        let m = random_model(TyingMode::Tied, (2, 2, 2, 9), 71);
        assert!(m.predict_y(&[1.0, 2.0], &[0.5, -0.5]).is_ok());
    }
}
