//! Unsupervised training of gated autoencoders.
//!
//! The autoencoder reading of the gated architecture: the mapping layer is
//! the latent code, `h = o(x, y)`, and the decoder reconstructs one (or
//! both) of the external layers from the other plus the code,
//!
//! - `x_hat = p(y, o(x, y))`
//! - `y_hat = q(x, o(x, y))`.
//!
//! Note that the decoder reuses the *same* factor projections as the
//! encoder (`f_y` appears in both the encoder product and the `x` decoder
//! product), so gradients accumulate from every appearance. Under weight
//! tying, a matrix additionally collects both its in-role and its
//! (transposed) out-role contribution.
//!
//! Denoising: corruption is drawn per example as an affine `(mask, offset)`
//! pair and applied to the configured target (raw inputs or factor layers).
//! The loss always compares against the clean data; gradients flow through
//! the corruption (`d corrupted / d clean = mask`). Keeping the draw
//! explicit makes the loss a deterministic function of `(params, draw)`,
//! which is what the finite-difference checks differentiate.

use crate::activations::{softplus, Activation};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::gated::{GatedModel, LayerId, TyingMode};
use crate::numerics::{
    add_scaled, hadamard, matvec_t, scale_assign, vec_add_assign, vec_sub, Matrix, Rng, Vector,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossMode {
    /// `J = 1/2 ||x_hat - x||^2` with `x_hat = p(y, o(x,y))`.
    ReconstructX,
    /// `J = 1/2 ||y_hat - y||^2` with `y_hat = q(x, o(x,y))`.
    ReconstructY,
    /// Both reconstructions at once: the sum of the two halves.
    Symmetric,
    /// Bernoulli cross-entropy on the `x` reconstruction; requires a
    /// sigmoid `x` output and targets in `[0, 1]`.
    CrossEntropyX,
    /// `w * Symmetric + (1 - w) * supervised`, where the supervised term is
    /// softmax cross-entropy of the mapping layer against a one-hot label.
    Hybrid(f64),
}

impl LossMode {
    pub fn validate(&self) -> Result<()> {
        if let LossMode::Hybrid(w) = self {
            if !(0.0..=1.0).contains(w) || !w.is_finite() {
                return Err(Error::invalid(
                    "loss mode",
                    format!("hybrid weight {w} outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }

    fn wants_x_decoder(&self) -> bool {
        !matches!(self, LossMode::ReconstructY)
    }

    fn wants_y_decoder(&self) -> bool {
        matches!(self, LossMode::ReconstructY | LossMode::Symmetric | LossMode::Hybrid(_))
    }

    pub fn name(&self) -> String {
        match self {
            LossMode::ReconstructX => "reconstruct-x".into(),
            LossMode::ReconstructY => "reconstruct-y".into(),
            LossMode::Symmetric => "symmetric".into(),
            LossMode::CrossEntropyX => "cross-entropy-x".into(),
            LossMode::Hybrid(w) => format!("hybrid:{w}"),
        }
    }

    /// Parses `reconstruct-x`, `reconstruct-y`, `symmetric`,
    /// `cross-entropy-x`, or `hybrid:W`.
    pub fn parse(s: &str) -> Option<LossMode> {
        match s {
            "reconstruct-x" => Some(LossMode::ReconstructX),
            "reconstruct-y" => Some(LossMode::ReconstructY),
            "symmetric" => Some(LossMode::Symmetric),
            "cross-entropy-x" => Some(LossMode::CrossEntropyX),
            _ => {
                let w = s.strip_prefix("hybrid:")?.parse::<f64>().ok()?;
                let m = LossMode::Hybrid(w);
                m.validate().ok()?;
                Some(m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorruptionKind {
    None,
    /// Adds `N(0, sigma^2)` noise per entry.
    Gaussian(f64),
    /// Zeroes each entry independently with probability `p`.
    Masking(f64),
    /// With probability `p`, forces an entry to 0 or 1 (equal odds).
    SaltPepper(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionTarget {
    InputX,
    InputY,
    BothInputs,
    /// Corrupts the three factor layers (after bias) instead of the raw
    /// inputs.
    Factors,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub target: CorruptionTarget,
}

impl CorruptionSpec {
    pub fn none() -> Self {
        CorruptionSpec {
            kind: CorruptionKind::None,
            target: CorruptionTarget::BothInputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            CorruptionKind::None => Ok(()),
            CorruptionKind::Gaussian(sigma) => {
                if sigma < 0.0 || !sigma.is_finite() {
                    Err(Error::invalid(
                        "corruption",
                        format!("gaussian sigma {sigma} must be finite and >= 0"),
                    ))
                } else {
                    Ok(())
                }
            }
            CorruptionKind::Masking(p) | CorruptionKind::SaltPepper(p) => {
                if !(0.0..=1.0).contains(&p) {
                    Err(Error::invalid(
                        "corruption",
                        format!("probability {p} outside [0, 1]"),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// One sampled corruption realization for a single vector: the corrupted
/// value is `mask ⊗ v + offset`. Affine in `v`, so the backward pass
/// multiplies upstream gradients by `mask`.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub mask: Vector,
    pub offset: Vector,
}

impl Draw {
    pub fn apply(&self, v: &[f64]) -> Vector {
        assert_eq!(
            self.mask.len(),
            v.len(),
            "corruption draw: mask len {} vs vector len {}",
            self.mask.len(),
            v.len()
        );
        v.iter()
            .zip(&self.mask)
            .zip(&self.offset)
            .map(|((&vi, &m), &o)| m * vi + o)
            .collect()
    }
}

/// The per-example corruption realization for every site a
/// [`CorruptionSpec`] can target. `None` at a site means that site passes
/// through untouched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorruptionDraws {
    pub x: Option<Draw>,
    pub y: Option<Draw>,
    pub fx: Option<Draw>,
    pub fy: Option<Draw>,
    pub fh: Option<Draw>,
}

impl CorruptionDraws {
    pub fn none() -> Self {
        CorruptionDraws::default()
    }
}

fn draw_kind(kind: CorruptionKind, len: usize, rng: &mut Rng) -> Option<Draw> {
    match kind {
        CorruptionKind::None => None,
        CorruptionKind::Gaussian(sigma) => {
            let offset: Vector = if sigma == 0.0 {
                vec![0.0; len]
            } else {
                (0..len).map(|_| sigma * rng.next_gaussian()).collect()
            };
            Some(Draw {
                mask: vec![1.0; len],
                offset,
            })
        }
        CorruptionKind::Masking(p) => {
            let mask: Vector = (0..len)
                .map(|_| if rng.next_f64() < p { 0.0 } else { 1.0 })
                .collect();
            Some(Draw {
                mask,
                offset: vec![0.0; len],
            })
        }
        CorruptionKind::SaltPepper(p) => {
            let mut mask = vec![1.0; len];
            let mut offset = vec![0.0; len];
            for i in 0..len {
                if rng.next_f64() < p {
                    mask[i] = 0.0;
                    offset[i] = if rng.next_f64() < 0.5 { 0.0 } else { 1.0 };
                }
            }
            Some(Draw { mask, offset })
        }
    }
}

/// Samples a full corruption realization for one example. Sites are drawn
/// in a fixed order (x, y, fx, fy, fh) so the stream is reproducible.
pub fn draw_corruption(spec: &CorruptionSpec, model: &GatedModel, rng: &mut Rng) -> CorruptionDraws {
    let mut d = CorruptionDraws::none();
    match spec.target {
        CorruptionTarget::InputX => d.x = draw_kind(spec.kind, model.n_x, rng),
        CorruptionTarget::InputY => d.y = draw_kind(spec.kind, model.n_y, rng),
        CorruptionTarget::BothInputs => {
            d.x = draw_kind(spec.kind, model.n_x, rng);
            d.y = draw_kind(spec.kind, model.n_y, rng);
        }
        CorruptionTarget::Factors => {
            d.fx = draw_kind(spec.kind, model.n_f, rng);
            d.fy = draw_kind(spec.kind, model.n_f, rng);
            d.fh = draw_kind(spec.kind, model.n_f, rng);
        }
    }
    d
}

/// Applies one freshly drawn corruption of the given kind to a vector.
/// Salt-and-pepper assumes data in `[0, 1]`; out-of-range values are
/// accepted with a warning on stderr.
pub fn corrupt(spec: &CorruptionSpec, v: &[f64], rng: &mut Rng) -> Result<Vector> {
    spec.validate()?;
    if matches!(spec.kind, CorruptionKind::SaltPepper(_))
        && v.iter().any(|&x| !(0.0..=1.0).contains(&x))
    {
        eprintln!("warning: salt-and-pepper corruption applied to data outside [0, 1]");
    }
    Ok(match draw_kind(spec.kind, v.len(), rng) {
        Some(d) => d.apply(v),
        None => v.to_vec(),
    })
}

fn apply_site(d: &Option<Draw>, v: Vector) -> Vector {
    match d {
        Some(draw) => draw.apply(&v),
        None => v,
    }
}

/// Applies an optional fixed draw to a borrowed vector. The clustering
/// front-end uses this to corrupt `x` with the same realization the gated
/// block will use.
pub(crate) fn apply_opt_draw(d: &Option<Draw>, v: &[f64]) -> Vector {
    match d {
        Some(draw) => draw.apply(v),
        None => v.to_vec(),
    }
}

/// Upstream gradient through a corruption site: multiply by the mask.
fn grad_site(d: &Option<Draw>, mut g: Vector) -> Vector {
    if let Some(draw) = d {
        for (gi, m) in g.iter_mut().zip(&draw.mask) {
            *gi *= m;
        }
    }
    g
}

struct Pass {
    xt: Vector,
    yt: Vector,
    /// Corrupted factor projections of the (corrupted) inputs.
    fx: Vector,
    fy: Vector,
    /// Encoder: ph = fx ⊗ fy, zh its projection, h the mapping layer.
    ph: Vector,
    zh: Vector,
    h: Vector,
    /// Corrupted factor projection of h.
    fh: Vector,
    /// x decoder (when the loss needs it): px = fy ⊗ fh.
    px: Option<Vector>,
    zx: Option<Vector>,
    xhat: Option<Vector>,
    /// y decoder: py = fx ⊗ fh.
    py: Option<Vector>,
    zy: Option<Vector>,
    yhat: Option<Vector>,
}

fn check_mode(model: &GatedModel, mode: LossMode) -> Result<()> {
    mode.validate()?;
    if matches!(mode, LossMode::CrossEntropyX) && model.act_x != Activation::Sigmoid {
        return Err(Error::invalid(
            "loss",
            format!(
                "cross-entropy-x requires a sigmoid x output, model has {}",
                model.act_x.name()
            ),
        ));
    }
    Ok(())
}

fn run_forward(
    model: &GatedModel,
    x: &[f64],
    y: &[f64],
    mode: LossMode,
    draws: &CorruptionDraws,
) -> Result<Pass> {
    let xt = apply_site(&draws.x, x.to_vec());
    let yt = apply_site(&draws.y, y.to_vec());
    let fx = apply_site(&draws.fx, model.project_factor(LayerId::X, &xt)?);
    let fy = apply_site(&draws.fy, model.project_factor(LayerId::Y, &yt)?);

    let ph = hadamard(&fx, &fy);
    let mut zh = model.out_matvec(LayerId::H, &ph);
    vec_add_assign(&mut zh, &model.b_h);
    let h = model.act_h.apply(&zh)?;

    let fh = apply_site(&draws.fh, model.project_factor(LayerId::H, &h)?);

    let (mut px, mut zx, mut xhat) = (None, None, None);
    if mode.wants_x_decoder() {
        let p = hadamard(&fy, &fh);
        let mut z = model.out_matvec(LayerId::X, &p);
        vec_add_assign(&mut z, &model.b_x);
        xhat = Some(model.act_x.apply(&z)?);
        px = Some(p);
        zx = Some(z);
    }
    let (mut py, mut zy, mut yhat) = (None, None, None);
    if mode.wants_y_decoder() {
        let p = hadamard(&fx, &fh);
        let mut z = model.out_matvec(LayerId::Y, &p);
        vec_add_assign(&mut z, &model.b_y);
        yhat = Some(model.act_y.apply(&z)?);
        py = Some(p);
        zy = Some(z);
    }

    Ok(Pass {
        xt,
        yt,
        fx,
        fy,
        ph,
        zh,
        h,
        fh,
        px,
        zx,
        xhat,
        py,
        zy,
        yhat,
    })
}

fn half_squared(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            0.5 * d * d
        })
        .sum()
}

/// Numerically stable `-sum_i t_i log softmax(h)_i`.
fn softmax_nll(h: &[f64], target: &[f64]) -> f64 {
    let max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = h.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    target
        .iter()
        .zip(h)
        .map(|(&t, &v)| -t * (v - max - log_z))
        .sum()
}

fn softmax_of(h: &[f64]) -> Vector {
    let max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vector = h.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

fn hybrid_label<'a>(model: &GatedModel, label: Option<&'a [f64]>) -> Result<&'a [f64]> {
    let l = label.ok_or_else(|| {
        Error::invalid("loss", "hybrid loss needs a labeled dataset (one-hot label per example)")
    })?;
    if l.len() != model.n_h {
        return Err(Error::shape(
            "loss",
            format!("mapping layer of size {}", model.n_h),
            format!("label of len {}", l.len()),
        ));
    }
    Ok(l)
}

fn loss_of_pass(
    model: &GatedModel,
    pass: &Pass,
    x: &[f64],
    y: &[f64],
    label: Option<&[f64]>,
    mode: LossMode,
) -> Result<f64> {
    Ok(match mode {
        LossMode::ReconstructX => half_squared(pass.xhat.as_ref().unwrap(), x),
        LossMode::ReconstructY => half_squared(pass.yhat.as_ref().unwrap(), y),
        LossMode::Symmetric => {
            half_squared(pass.xhat.as_ref().unwrap(), x)
                + half_squared(pass.yhat.as_ref().unwrap(), y)
        }
        LossMode::CrossEntropyX => {
            if x.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
                return Err(Error::invalid(
                    "loss",
                    "cross-entropy-x target has entries outside [0, 1]",
                ));
            }
            // -sum x log xhat + (1-x) log(1-xhat), written on the logits so
            // saturated sigmoids cannot produce log(0)
            pass.zx
                .as_ref()
                .unwrap()
                .iter()
                .zip(x)
                .map(|(&z, &t)| softplus(z) - t * z)
                .sum()
        }
        LossMode::Hybrid(w) => {
            let l = hybrid_label(model, label)?;
            let sym = half_squared(pass.xhat.as_ref().unwrap(), x)
                + half_squared(pass.yhat.as_ref().unwrap(), y);
            w * sym + (1.0 - w) * softmax_nll(&pass.h, l)
        }
    })
}

/// Loss of one example under the given corruption realization. The loss
/// targets are always the *clean* `x`/`y`; corruption only alters the
/// network's view of its inputs.
pub fn loss(
    model: &GatedModel,
    x: &[f64],
    y: &[f64],
    label: Option<&[f64]>,
    mode: LossMode,
    draws: &CorruptionDraws,
) -> Result<f64> {
    check_mode(model, mode)?;
    let pass = run_forward(model, x, y, mode, draws)?;
    loss_of_pass(model, &pass, x, y, label, mode)
}

/// Gradient of the loss with respect to every trainable parameter, plus the
/// gradients with respect to the (clean) inputs themselves — the latter let
/// composite models (such as the clustering front-end) backpropagate
/// through a gated block.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedGrads {
    pub w_x_in: Matrix,
    pub w_y_in: Matrix,
    pub w_h_in: Matrix,
    pub w_x_out: Option<Matrix>,
    pub w_y_out: Option<Matrix>,
    pub w_h_out: Option<Matrix>,
    pub b_fx: Vector,
    pub b_fy: Vector,
    pub b_fh: Vector,
    pub b_x: Vector,
    pub b_y: Vector,
    pub b_h: Vector,
    /// dJ/dx and dJ/dy (through the corruption, where applicable).
    pub d_x: Vector,
    pub d_y: Vector,
}

impl GatedGrads {
    pub fn zeros_like(m: &GatedModel) -> Self {
        let out = |n: usize, present: &Option<Matrix>| {
            present.as_ref().map(|_| Matrix::zeros(n, m.n_f))
        };
        GatedGrads {
            w_x_in: Matrix::zeros(m.n_f, m.n_x),
            w_y_in: Matrix::zeros(m.n_f, m.n_y),
            w_h_in: Matrix::zeros(m.n_f, m.n_h),
            w_x_out: out(m.n_x, &m.w_x_out),
            w_y_out: out(m.n_y, &m.w_y_out),
            w_h_out: out(m.n_h, &m.w_h_out),
            b_fx: vec![0.0; m.n_f],
            b_fy: vec![0.0; m.n_f],
            b_fh: vec![0.0; m.n_f],
            b_x: vec![0.0; m.n_x],
            b_y: vec![0.0; m.n_y],
            b_h: vec![0.0; m.n_h],
            d_x: vec![0.0; m.n_x],
            d_y: vec![0.0; m.n_y],
        }
    }

    fn for_each_block(&mut self, other: &GatedGrads, f: impl Fn(&mut f64, f64)) {
        let pairs: [(&mut [f64], &[f64]); 6] = [
            (self.w_x_in.data_mut(), other.w_x_in.data()),
            (self.w_y_in.data_mut(), other.w_y_in.data()),
            (self.w_h_in.data_mut(), other.w_h_in.data()),
            (&mut self.b_fx, &other.b_fx),
            (&mut self.b_fy, &other.b_fy),
            (&mut self.b_fh, &other.b_fh),
        ];
        for (dst, src) in pairs {
            assert_eq!(dst.len(), src.len(), "gradient blocks differ in shape");
            for (d, &s) in dst.iter_mut().zip(src) {
                f(d, s);
            }
        }
        let out_pairs = [
            (&mut self.w_x_out, &other.w_x_out),
            (&mut self.w_y_out, &other.w_y_out),
            (&mut self.w_h_out, &other.w_h_out),
        ];
        for (dst, src) in out_pairs {
            match (dst, src) {
                (Some(d), Some(s)) => {
                    assert_eq!(d.data().len(), s.data().len(), "gradient blocks differ in shape");
                    for (di, &si) in d.data_mut().iter_mut().zip(s.data()) {
                        f(di, si);
                    }
                }
                (None, None) => {}
                _ => panic!("gradient blocks differ in tying mode"),
            }
        }
        let bias_pairs: [(&mut [f64], &[f64]); 5] = [
            (&mut self.b_x, &other.b_x),
            (&mut self.b_y, &other.b_y),
            (&mut self.b_h, &other.b_h),
            (&mut self.d_x, &other.d_x),
            (&mut self.d_y, &other.d_y),
        ];
        for (dst, src) in bias_pairs {
            assert_eq!(dst.len(), src.len(), "gradient blocks differ in shape");
            for (d, &s) in dst.iter_mut().zip(src) {
                f(d, s);
            }
        }
    }

    /// Accumulates `other` into `self` (fixed order keeps minibatch sums
    /// deterministic).
    pub fn add_assign(&mut self, other: &GatedGrads) {
        self.for_each_block(other, |d, s| *d += s);
    }

    pub fn scale(&mut self, s: f64) {
        for m in [&mut self.w_x_in, &mut self.w_y_in, &mut self.w_h_in] {
            scale_assign(m.data_mut(), s);
        }
        for m in [&mut self.w_x_out, &mut self.w_y_out, &mut self.w_h_out]
            .into_iter()
            .flatten()
        {
            scale_assign(m.data_mut(), s);
        }
        for b in [
            &mut self.b_fx,
            &mut self.b_fy,
            &mut self.b_fh,
            &mut self.b_x,
            &mut self.b_y,
            &mut self.b_h,
            &mut self.d_x,
            &mut self.d_y,
        ] {
            scale_assign(b, s);
        }
    }

    /// Flattens the parameter gradients in the same canonical order as
    /// [`GatedModel::param_vec`] (input gradients excluded).
    pub fn to_vec(&self) -> Vector {
        let mut v = Vec::new();
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
}

/// Loss and analytic gradient of one example. Matrices absent from the
/// active decoder composition (for example `W_y_out` under `ReconstructX`
/// with untied weights) receive exactly zero gradient.
pub fn backward(
    model: &GatedModel,
    x: &[f64],
    y: &[f64],
    label: Option<&[f64]>,
    mode: LossMode,
    draws: &CorruptionDraws,
) -> Result<(f64, GatedGrads)> {
    check_mode(model, mode)?;
    let pass = run_forward(model, x, y, mode, draws)?;
    let loss = loss_of_pass(model, &pass, x, y, label, mode)?;
    let mut g = GatedGrads::zeros_like(model);
    let tied = model.tying == TyingMode::Tied;

    // Accumulated gradients on the (corrupted) factor layers.
    let mut dfx = vec![0.0; model.n_f];
    let mut dfy = vec![0.0; model.n_f];
    let mut dfh = vec![0.0; model.n_f];

    // x decoder: zx = W_x_out (fy ⊗ fh) + b_x
    if let (Some(zx), Some(xhat), Some(px)) = (&pass.zx, &pass.xhat, &pass.px) {
        let weight = match mode {
            LossMode::Hybrid(w) => w,
            _ => 1.0,
        };
        let dzx = if mode == LossMode::CrossEntropyX {
            // d/dz [softplus(z) - t z] = sigmoid(z) - t = xhat - t
            vec_sub(xhat, x)
        } else {
            let mut r = vec_sub(xhat, x);
            scale_assign(&mut r, weight);
            model.act_x.backward(zx, &r)?
        };
        vec_add_assign(&mut g.b_x, &dzx);
        match &mut g.w_x_out {
            Some(m) => m.add_outer(&dzx, px),
            None => g.w_x_in.add_outer(px, &dzx), // tied: out-role, transposed
        }
        let dpx = model.out_matvec_t(LayerId::X, &dzx);
        add_scaled(&mut dfy, &hadamard(&dpx, &pass.fh), 1.0);
        add_scaled(&mut dfh, &hadamard(&dpx, &pass.fy), 1.0);
    }

    // y decoder: zy = W_y_out (fx ⊗ fh) + b_y
    if let (Some(zy), Some(yhat), Some(py)) = (&pass.zy, &pass.yhat, &pass.py) {
        let weight = match mode {
            LossMode::Hybrid(w) => w,
            _ => 1.0,
        };
        let mut r = vec_sub(yhat, y);
        scale_assign(&mut r, weight);
        let dzy = model.act_y.backward(zy, &r)?;
        vec_add_assign(&mut g.b_y, &dzy);
        match &mut g.w_y_out {
            Some(m) => m.add_outer(&dzy, py),
            None => g.w_y_in.add_outer(py, &dzy),
        }
        let dpy = model.out_matvec_t(LayerId::Y, &dzy);
        add_scaled(&mut dfx, &hadamard(&dpy, &pass.fh), 1.0);
        add_scaled(&mut dfh, &hadamard(&dpy, &pass.fx), 1.0);
    }

    // fh = corrupt(W_h_in h + b_fh): in-role of W_h_in
    let dfh_raw = grad_site(&draws.fh, dfh);
    g.w_h_in.add_outer(&dfh_raw, &pass.h);
    vec_add_assign(&mut g.b_fh, &dfh_raw);
    let mut dh = matvec_t(&model.w_h_in, &dfh_raw);

    // supervised hybrid term acts directly on the mapping layer
    if let LossMode::Hybrid(w) = mode {
        let l = hybrid_label(model, label)?;
        let s = softmax_of(&pass.h);
        for i in 0..model.n_h {
            dh[i] += (1.0 - w) * (s[i] - l[i]);
        }
    }

    // encoder: h = act_h(W_h_out (fx ⊗ fy) + b_h)
    let dzh = model.act_h.backward(&pass.zh, &dh)?;
    vec_add_assign(&mut g.b_h, &dzh);
    match &mut g.w_h_out {
        Some(m) => m.add_outer(&dzh, &pass.ph),
        None => g.w_h_in.add_outer(&pass.ph, &dzh), // tied: out-role
    }
    let dph = model.out_matvec_t(LayerId::H, &dzh);
    add_scaled(&mut dfx, &hadamard(&dph, &pass.fy), 1.0);
    add_scaled(&mut dfy, &hadamard(&dph, &pass.fx), 1.0);

    // factor projections: f = corrupt(W_in v + b_f)
    let dfx_raw = grad_site(&draws.fx, dfx);
    g.w_x_in.add_outer(&dfx_raw, &pass.xt);
    vec_add_assign(&mut g.b_fx, &dfx_raw);
    g.d_x = grad_site(&draws.x, matvec_t(&model.w_x_in, &dfx_raw));

    let dfy_raw = grad_site(&draws.fy, dfy);
    g.w_y_in.add_outer(&dfy_raw, &pass.yt);
    vec_add_assign(&mut g.b_fy, &dfy_raw);
    g.d_y = grad_site(&draws.y, matvec_t(&model.w_y_in, &dfy_raw));

    debug_assert!(tied == g.w_x_out.is_none());
    Ok((loss, g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossMode,
    pub corruption: CorruptionSpec,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossMode::Symmetric,
            corruption: CorruptionSpec::none(),
            lr: 0.1,
            momentum: 0.9,
            epochs: 50,
            batch_size: 10,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.corruption.validate()?;
        // lr = 0 is allowed as an explicit no-op (useful for dry runs)
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::invalid("train config", format!("lr {} must be >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(
                "train config",
                format!("momentum {} outside [0, 1)", self.momentum),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train config", "batch_size must be at least 1"));
        }
        Ok(())
    }
}

fn check_shapes_match(model: &GatedModel, g: &GatedGrads, op: &'static str) -> Result<()> {
    let ok = g.w_x_in.rows() == model.n_f
        && g.w_x_in.cols() == model.n_x
        && g.w_y_in.cols() == model.n_y
        && g.w_h_in.cols() == model.n_h
        && g.w_x_out.is_some() == model.w_x_out.is_some()
        && g.b_x.len() == model.n_x
        && g.b_y.len() == model.n_y
        && g.b_h.len() == model.n_h
        && g.b_fx.len() == model.n_f;
    if !ok {
        return Err(Error::shape(
            op,
            format!(
                "model ({}, {}, {}, {}, {:?})",
                model.n_x, model.n_y, model.n_h, model.n_f, model.tying
            ),
            "gradient/velocity with different dimensions".to_string(),
        ));
    }
    Ok(())
}

/// One SGD-with-momentum update: `v <- momentum v - lr g; theta <- theta + v`.
/// The velocity lives in a [`GatedGrads`]-shaped container owned by the
/// caller (start it at [`GatedGrads::zeros_like`]).
pub fn sgd_step(
    model: &mut GatedModel,
    grads: &GatedGrads,
    lr: f64,
    momentum: f64,
    velocity: &mut GatedGrads,
) -> Result<()> {
    check_shapes_match(model, grads, "sgd_step")?;
    check_shapes_match(model, velocity, "sgd_step")?;

    fn upd(theta: &mut [f64], g: &[f64], v: &mut [f64], lr: f64, momentum: f64) {
        for ((t, &gi), vi) in theta.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = momentum * *vi - lr * gi;
            *t += *vi;
        }
    }

    upd(model.w_x_in.data_mut(), grads.w_x_in.data(), velocity.w_x_in.data_mut(), lr, momentum);
    upd(model.w_y_in.data_mut(), grads.w_y_in.data(), velocity.w_y_in.data_mut(), lr, momentum);
    upd(model.w_h_in.data_mut(), grads.w_h_in.data(), velocity.w_h_in.data_mut(), lr, momentum);
    if let (Some(t), Some(g), Some(v)) = (&mut model.w_x_out, &grads.w_x_out, &mut velocity.w_x_out)
    {
        upd(t.data_mut(), g.data(), v.data_mut(), lr, momentum);
    }
    if let (Some(t), Some(g), Some(v)) = (&mut model.w_y_out, &grads.w_y_out, &mut velocity.w_y_out)
    {
        upd(t.data_mut(), g.data(), v.data_mut(), lr, momentum);
    }
    if let (Some(t), Some(g), Some(v)) = (&mut model.w_h_out, &grads.w_h_out, &mut velocity.w_h_out)
    {
        upd(t.data_mut(), g.data(), v.data_mut(), lr, momentum);
    }
    upd(&mut model.b_fx, &grads.b_fx, &mut velocity.b_fx, lr, momentum);
    upd(&mut model.b_fy, &grads.b_fy, &mut velocity.b_fy, lr, momentum);
    upd(&mut model.b_fh, &grads.b_fh, &mut velocity.b_fh, lr, momentum);
    upd(&mut model.b_x, &grads.b_x, &mut velocity.b_x, lr, momentum);
    upd(&mut model.b_y, &grads.b_y, &mut velocity.b_y, lr, momentum);
    upd(&mut model.b_h, &grads.b_h, &mut velocity.b_h, lr, momentum);
    Ok(())
}

/// Minibatch SGD over the dataset: corruption is redrawn per example per
/// epoch, minibatch gradients are means over the batch, and the returned
/// trace holds one mean-loss entry per epoch (losses as seen during the
/// epoch, before that batch's update). Deterministic for a fixed seed.
pub fn train(
    model: GatedModel,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(GatedModel, Vector)> {
    train_observed(model, data, config, |_, _| {})
}

/// Like [`train`], invoking `on_epoch(epoch, mean_loss)` as each epoch
/// finishes — the command-line front end uses this to timestamp metrics
/// rows as they are produced.
pub fn train_observed(
    mut model: GatedModel,
    data: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(GatedModel, Vector)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("train", "dataset is empty"));
    }
    if data.n_x != model.n_x || data.n_y != model.n_y {
        return Err(Error::shape(
            "train",
            format!("model ({}, {})", model.n_x, model.n_y),
            format!("dataset ({}, {})", data.n_x, data.n_y),
        ));
    }
    check_mode(&model, config.loss)?;
    if matches!(config.loss, LossMode::Hybrid(_)) && data.label_len() != model.n_h {
        return Err(Error::invalid(
            "train",
            format!(
                "hybrid loss needs one-hot labels of the mapping-layer size {}, dataset has label length {}",
                model.n_h,
                data.label_len()
            ),
        ));
    }
    if matches!(config.corruption.kind, CorruptionKind::SaltPepper(_)) {
        let out_of_range = data
            .examples
            .iter()
            .flat_map(|e| e.x.iter().chain(&e.y))
            .any(|&v| !(0.0..=1.0).contains(&v));
        if out_of_range {
            eprintln!("warning: salt-and-pepper corruption configured for data outside [0, 1]");
        }
    }

    let mut rng = Rng::new(config.seed);
    let mut velocity = GatedGrads::zeros_like(&model);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for batch in data.examples.chunks(config.batch_size) {
            let mut acc = GatedGrads::zeros_like(&model);
            for ex in batch {
                let draws = draw_corruption(&config.corruption, &model, &mut rng);
                let (l, g) = backward(
                    &model,
                    &ex.x,
                    &ex.y,
                    ex.label.as_deref(),
                    config.loss,
                    &draws,
                )?;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss became {l} in epoch {epoch}; lower the learning rate"
                    )));
                }
                epoch_loss += l;
                acc.add_assign(&g);
            }
            acc.scale(1.0 / batch.len() as f64);
            sgd_step(&mut model, &acc, config.lr, config.momentum, &mut velocity)?;
        }
        let mean = epoch_loss / data.len() as f64;
        on_epoch(epoch, mean);
        trace.push(mean);
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::gen_shift_pairs;

    fn identity_model(n: usize) -> GatedModel {
        let mut m = GatedModel::zeros(n, n, n, n, TyingMode::Tied);
        m.w_x_in = Matrix::identity(n);
        m.w_y_in = Matrix::identity(n);
        m.w_h_in = Matrix::identity(n);
        m
    }

    fn random_model(tying: TyingMode, acts: [Activation; 3], seed: u64) -> GatedModel {
        let mut rng = Rng::new(seed);
        GatedModel::init_with_sigma(3, 4, 2, 3, tying, acts, 0.6, &mut rng)
    }

    #[test]
    fn corrupt_trivial_kinds() {
        let v = vec![0.3, 0.8, 0.1, 0.9];
        let mut rng = Rng::new(1);
        let id = CorruptionSpec { kind: CorruptionKind::Masking(0.0), target: CorruptionTarget::InputX };
        assert_eq!(corrupt(&id, &v, &mut rng).unwrap(), v);

        let zero = CorruptionSpec { kind: CorruptionKind::Masking(1.0), target: CorruptionTarget::InputX };
        assert_eq!(corrupt(&zero, &v, &mut rng).unwrap(), vec![0.0; 4]);

        let gauss0 = CorruptionSpec { kind: CorruptionKind::Gaussian(0.0), target: CorruptionTarget::InputX };
        assert_eq!(corrupt(&gauss0, &v, &mut rng).unwrap(), v);

        let none = CorruptionSpec::none();
        assert_eq!(corrupt(&none, &v, &mut rng).unwrap(), v);
    }

    #[test]
    fn salt_pepper_sets_entries_to_zero_or_one() {
        let v = vec![0.5; 200];
        let mut rng = Rng::new(7);
        let sp = CorruptionSpec { kind: CorruptionKind::SaltPepper(0.5), target: CorruptionTarget::InputX };
        let out = corrupt(&sp, &v, &mut rng).unwrap();
        let changed = out.iter().filter(|&&o| o != 0.5).count();
        assert!(changed > 50, "expected roughly half the entries corrupted, got {changed}");
        for &o in &out {
            assert!(o == 0.0 || o == 1.0 || o == 0.5);
        }
        assert!(out.contains(&0.0));
        assert!(out.contains(&1.0));
    }

    #[test]
    fn corruption_spec_validation() {
        assert!(CorruptionSpec { kind: CorruptionKind::Masking(1.5), target: CorruptionTarget::InputX }
            .validate()
            .is_err());
        assert!(CorruptionSpec { kind: CorruptionKind::Gaussian(-0.1), target: CorruptionTarget::Factors }
            .validate()
            .is_err());
    }

    #[test]
    fn loss_perfect_reconstruction_is_zero() {
        // identity model with x = y = (1,1): h = x ⊗ y = (1,1),
        // xhat = y ⊗ h = (1,1) = x
        let m = identity_model(2);
        let ones = vec![1.0, 1.0];
        let l = loss(&m, &ones, &ones, None, LossMode::ReconstructX, &CorruptionDraws::none()).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn loss_half_squared_substitution() {
        // zero-weight model reconstructs 0; target (1, 0) gives 1/2
        let m = GatedModel::zeros(2, 2, 2, 2, TyingMode::Tied);
        let l = loss(&m, &[1.0, 0.0], &[0.5, 0.5], None, LossMode::ReconstructX, &CorruptionDraws::none())
            .unwrap();
        assert_eq!(l, 0.5);
    }

    #[test]
    fn cross_entropy_uniform_half_is_ln2() {
        let mut m = GatedModel::zeros(1, 1, 1, 1, TyingMode::Tied);
        m.act_x = Activation::Sigmoid;
        let l = loss(&m, &[1.0], &[0.3], None, LossMode::CrossEntropyX, &CorruptionDraws::none()).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_rejects_bad_targets_and_activations() {
        let mut m = GatedModel::zeros(2, 2, 2, 2, TyingMode::Tied);
        m.act_x = Activation::Sigmoid;
        let bad_target = loss(&m, &[1.5, 0.0], &[0.0, 0.0], None, LossMode::CrossEntropyX, &CorruptionDraws::none());
        assert!(bad_target.is_err());

        m.act_x = Activation::Identity;
        let bad_act = loss(&m, &[1.0, 0.0], &[0.0, 0.0], None, LossMode::CrossEntropyX, &CorruptionDraws::none());
        assert!(bad_act.unwrap_err().to_string().contains("sigmoid"));
    }

    #[test]
    fn symmetric_is_sum_of_both_reconstructions() {
        let m = random_model(TyingMode::Untied, [Activation::Sigmoid; 3], 5);
        let x = [0.2, 0.9, 0.4];
        let y = [0.1, 0.5, 0.8, 0.3];
        let none = CorruptionDraws::none();
        let sym = loss(&m, &x, &y, None, LossMode::Symmetric, &none).unwrap();
        let lx = loss(&m, &x, &y, None, LossMode::ReconstructX, &none).unwrap();
        let ly = loss(&m, &x, &y, None, LossMode::ReconstructY, &none).unwrap();
        assert!((sym - (lx + ly)).abs() < 1e-15);
    }

    #[test]
    fn reconstruct_x_equals_predict_composition() {
        let m = random_model(TyingMode::Tied, [Activation::Softplus; 3], 11);
        let x = [0.2, -0.4, 1.1];
        let y = [0.7, 0.3, -0.2, 0.5];
        let h = m.predict_h(&x, &y).unwrap();
        let xhat = m.predict_x(&y, &h).unwrap();
        let by_hand: f64 = xhat.iter().zip(&x).map(|(p, t)| 0.5 * (p - t) * (p - t)).sum();
        let l = loss(&m, &x, &y, None, LossMode::ReconstructX, &CorruptionDraws::none()).unwrap();
        assert!((l - by_hand).abs() < 1e-15);
    }

    #[test]
    fn covariance_configuration_doubles_reconstruct_x() {
        // x == y and a role-symmetric model: the symmetric loss is exactly
        // twice the one-sided loss
        let mut m = random_model(TyingMode::Tied, [Activation::Sigmoid; 3], 19);
        let mut m2 = GatedModel::zeros(3, 3, 2, 3, TyingMode::Tied);
        m2.w_x_in = m.w_x_in.clone();
        m2.w_y_in = m.w_x_in.clone();
        m2.w_h_in = m.w_h_in.clone();
        m2.act_x = Activation::Sigmoid;
        m2.act_y = Activation::Sigmoid;
        m2.act_h = Activation::Sigmoid;
        m = m2;
        let x = [0.4, -0.6, 0.9];
        let none = CorruptionDraws::none();
        let sym = loss(&m, &x, &x, None, LossMode::Symmetric, &none).unwrap();
        let lx = loss(&m, &x, &x, None, LossMode::ReconstructX, &none).unwrap();
        assert!((sym - 2.0 * lx).abs() < 1e-14, "sym {sym} vs 2*lx {}", 2.0 * lx);
    }

    #[test]
    fn hybrid_with_weight_one_equals_symmetric() {
        let m = random_model(TyingMode::Tied, [Activation::Sigmoid; 3], 23);
        let x = [0.2, 0.8, 0.5];
        let y = [0.1, 0.9, 0.3, 0.6];
        let label = vec![0.0, 1.0]; // n_h = 2
        let none = CorruptionDraws::none();
        let hy = loss(&m, &x, &y, Some(&label), LossMode::Hybrid(1.0), &none).unwrap();
        let sym = loss(&m, &x, &y, None, LossMode::Symmetric, &none).unwrap();
        assert!((hy - sym).abs() < 1e-15);

        // hybrid needs a label of the mapping-layer size
        assert!(loss(&m, &x, &y, None, LossMode::Hybrid(0.5), &none).is_err());
        assert!(loss(&m, &x, &y, Some(&[1.0, 0.0, 0.0]), LossMode::Hybrid(0.5), &none).is_err());
    }

    #[test]
    fn corruption_changes_inputs_not_targets() {
        // identity model, x = y = (1,1): clean loss is 0; masking the whole
        // x input kills the reconstruction, and the loss is measured
        // against the clean x
        let m = identity_model(2);
        let ones = vec![1.0, 1.0];
        let draws = CorruptionDraws {
            x: Some(Draw { mask: vec![0.0, 0.0], offset: vec![0.0, 0.0] }),
            ..CorruptionDraws::none()
        };
        let l = loss(&m, &ones, &ones, None, LossMode::ReconstructX, &draws).unwrap();
        // xt = 0 → h = 0 → fh = 0 → xhat = 0; J = 1/2 (1 + 1) = 1
        assert_eq!(l, 1.0);
    }

    #[test]
    fn backward_zero_residual_gives_zero_gradients() {
        let m = identity_model(2);
        let ones = vec![1.0, 1.0];
        let (l, g) = backward(&m, &ones, &ones, None, LossMode::ReconstructX, &CorruptionDraws::none())
            .unwrap();
        assert_eq!(l, 0.0);
        assert!(g.to_vec().iter().all(|&v| v == 0.0));
        assert!(g.d_x.iter().chain(&g.d_y).all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruct_x_leaves_w_y_out_untouched() {
        let m = random_model(TyingMode::Untied, [Activation::Sigmoid; 3], 31);
        let mut rng = Rng::new(100);
        for _ in 0..10 {
            let x: Vector = (0..3).map(|_| rng.next_gaussian()).collect();
            let y: Vector = (0..4).map(|_| rng.next_gaussian()).collect();
            let (_, g) = backward(&m, &x, &y, None, LossMode::ReconstructX, &CorruptionDraws::none())
                .unwrap();
            assert!(g.w_y_out.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
            // while the x decoder's matrix does move
            assert!(g.w_x_out.as_ref().unwrap().data().iter().any(|&v| v != 0.0));
        }
        // and symmetrically under ReconstructY
        let (_, g) = backward(&m, &[0.1, 0.2, 0.3], &[0.4, 0.3, 0.2, 0.1], None, LossMode::ReconstructY, &CorruptionDraws::none()).unwrap();
        assert!(g.w_x_out.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sgd_single_step_and_momentum_sequence() {
        // single-parameter model: theta = 1, g = 2, lr = 0.1 → 0.8
        let mut m = GatedModel::zeros(1, 1, 1, 1, TyingMode::Tied);
        m.w_x_in = Matrix::from_rows(&[&[1.0]]);
        let mut g = GatedGrads::zeros_like(&m);
        g.w_x_in = Matrix::from_rows(&[&[2.0]]);
        let mut vel = GatedGrads::zeros_like(&m);
        sgd_step(&mut m, &g, 0.1, 0.0, &mut vel).unwrap();
        assert!((m.w_x_in.get(0, 0) - 0.8).abs() < 1e-15);

        // two steps with momentum 0.5, g = 1, lr = 0.1, from 0:
        // v1 = -0.1, v2 = -0.15, theta = -0.25
        let mut m = GatedModel::zeros(1, 1, 1, 1, TyingMode::Tied);
        let mut g = GatedGrads::zeros_like(&m);
        g.w_x_in = Matrix::from_rows(&[&[1.0]]);
        let mut vel = GatedGrads::zeros_like(&m);
        sgd_step(&mut m, &g, 0.1, 0.5, &mut vel).unwrap();
        sgd_step(&mut m, &g, 0.1, 0.5, &mut vel).unwrap();
        assert!((m.w_x_in.get(0, 0) + 0.25).abs() < 1e-15);

        // zero gradient leaves the model untouched
        let snapshot = m.clone();
        let zero = GatedGrads::zeros_like(&m);
        sgd_step(&mut m, &zero, 0.1, 0.0, &mut vel).unwrap();
        // (velocity has decayed to momentum * v, here 0)
        assert_eq!(m.param_vec(), snapshot.param_vec());
    }

    #[test]
    fn sgd_rejects_mismatched_shapes() {
        let mut m = GatedModel::zeros(2, 2, 2, 2, TyingMode::Tied);
        let other = GatedModel::zeros(3, 2, 2, 2, TyingMode::Tied);
        let g = GatedGrads::zeros_like(&other);
        let mut vel = GatedGrads::zeros_like(&m);
        assert!(sgd_step(&mut m, &g, 0.1, 0.0, &mut vel).is_err());
    }

    #[test]
    fn train_lr_zero_leaves_model_bitwise_unchanged() {
        let mut rng = Rng::new(4);
        let model = GatedModel::init_with_sigma(
            6, 6, 3, 4, TyingMode::Tied,
            [Activation::Identity, Activation::Identity, Activation::Sigmoid],
            0.3, &mut rng,
        );
        let data = gen_shift_pairs(&mut rng, 12, 6, 1, 0.5).unwrap();
        let config = TrainConfig { lr: 0.0, epochs: 3, ..TrainConfig::default() };
        let before = model.param_vec();
        let (after, trace) = train(model, &data, &config).unwrap();
        assert_eq!(after.param_vec(), before);
        assert_eq!(trace.len(), 3);
    }

    #[test]
    fn train_trace_has_one_entry_per_epoch_and_is_deterministic() {
        let mut rng = Rng::new(9);
        let model = GatedModel::init_with_sigma(
            5, 5, 2, 4, TyingMode::Tied,
            [Activation::Sigmoid; 3],
            0.4, &mut rng,
        );
        let data = gen_shift_pairs(&mut rng, 10, 5, 1, 0.4).unwrap();
        let config = TrainConfig {
            loss: LossMode::Symmetric,
            corruption: CorruptionSpec { kind: CorruptionKind::Masking(0.3), target: CorruptionTarget::BothInputs },
            lr: 0.2,
            momentum: 0.5,
            epochs: 7,
            batch_size: 3,
            seed: 77,
        };
        let (m1, t1) = train(model.clone(), &data, &config).unwrap();
        let (m2, t2) = train(model, &data, &config).unwrap();
        assert_eq!(t1.len(), 7);
        assert_eq!(t1, t2);
        assert_eq!(m1.param_vec(), m2.param_vec());
    }

    #[test]
    fn train_single_example_converges() {
        // one example, symmetric loss, 200 epochs at lr 0.05
        let mut rng = Rng::new(42);
        let model = GatedModel::init_with_sigma(
            4, 4, 2, 4, TyingMode::Tied,
            [Activation::Identity, Activation::Identity, Activation::Sigmoid],
            0.5, &mut rng,
        );
        let mut data = Dataset::new(4, 4, "single");
        data.push(vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0], None).unwrap();
        let config = TrainConfig {
            loss: LossMode::Symmetric,
            corruption: CorruptionSpec::none(),
            lr: 0.05,
            momentum: 0.9,
            epochs: 200,
            batch_size: 1,
            seed: 42,
        };
        let (_, trace) = train(model, &data, &config).unwrap();
        assert!(
            trace[199] < 0.1 * trace[0],
            "no convergence: first {} last {}",
            trace[0],
            trace[199]
        );
    }

    #[test]
    fn train_rejects_empty_and_mismatched_data() {
        let model = GatedModel::zeros(3, 3, 2, 2, TyingMode::Tied);
        let empty = Dataset::new(3, 3, "none");
        assert!(train(model.clone(), &empty, &TrainConfig::default()).is_err());

        let mut wrong = Dataset::new(4, 3, "wrong");
        wrong.push(vec![0.0; 4], vec![0.0; 3], None).unwrap();
        assert!(train(model, &wrong, &TrainConfig::default()).is_err());
    }

    #[test]
    fn train_aborts_on_divergence() {
        let mut rng = Rng::new(8);
        let model = GatedModel::init_with_sigma(
            4, 4, 3, 4, TyingMode::Tied,
            [Activation::Identity; 3],
            1.0, &mut rng,
        );
        let data = gen_shift_pairs(&mut rng, 8, 4, 1, 0.8).unwrap();
        let config = TrainConfig {
            lr: 1e6,
            momentum: 0.0,
            epochs: 50,
            loss: LossMode::Symmetric,
            ..TrainConfig::default()
        };
        let err = train(model, &data, &config).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("diverged") || msg.contains("finite") || msg.contains("non-finite"),
            "unexpected error: {msg}"
        );
    }

    #[test]
    fn loss_mode_parse_roundtrip() {
        for mode in [
            LossMode::ReconstructX,
            LossMode::ReconstructY,
            LossMode::Symmetric,
            LossMode::CrossEntropyX,
            LossMode::Hybrid(0.25),
        ] {
            assert_eq!(LossMode::parse(&mode.name()), Some(mode));
        }
        assert_eq!(LossMode::parse("hybrid:1.5"), None);
        assert_eq!(LossMode::parse("nonsense"), None);
    }
}
