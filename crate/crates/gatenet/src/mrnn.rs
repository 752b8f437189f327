//! Multiplicative recurrent network: the hidden state is fed through a
//! factored gating of the current input, so each input symbol effectively
//! selects its own transition matrix.
//!
//! Per step: `f_t = (W_fx x_t) ⊗ (W_fh h_{t-1})`, `h_t = tanh(W_hf f_t +
//! W_hx x_t)`, `ŷ_t = W_out h_t + b_y`. The elementwise product is the
//! literal `diag(W_fx x_t) · W_fh h_{t-1}` — multiplying by a diagonal
//! matrix scales rows, nothing more, and the two forms agree bitwise.
//!
//! Training is full-sequence backpropagation through time with momentum
//! SGD and gradient clipping; the initial hidden state `h0` is a trainable
//! parameter.

use crate::activations::{argmax, Activation};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::gradcheck::{numeric_grad, rel_error, GridReport};
use crate::numerics::{
    dot, hadamard, matvec, matvec_t, scale_assign, vec_add_assign, vec_sub, Matrix, Rng, Vector,
};
use crate::training::{LossMode, TrainConfig};

/// Gradients are clipped to this global L2 norm during training; raw
/// BPTT gradients (as used by the finite-difference checks) are never
/// clipped.
pub const MRNN_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MRnnModel {
    pub n_x: usize,
    pub n_h: usize,
    pub n_f: usize,
    /// `n_f x n_x` — input side of the gating.
    pub w_fx: Matrix,
    /// `n_f x n_h` — hidden side of the gating.
    pub w_fh: Matrix,
    /// `n_h x n_f` — factors back into the hidden layer.
    pub w_hf: Matrix,
    /// `n_h x n_x` — direct input-to-hidden path.
    pub w_hx: Matrix,
    /// `n_x x n_h` — hidden-to-output readout.
    pub w_out: Matrix,
    pub b_y: Vector,
    /// Trainable initial hidden state.
    pub h0: Vector,
}

impl MRnnModel {
    pub fn zeros(n_x: usize, n_h: usize, n_f: usize) -> Self {
        MRnnModel {
            n_x,
            n_h,
            n_f,
            w_fx: Matrix::zeros(n_f, n_x),
            w_fh: Matrix::zeros(n_f, n_h),
            w_hf: Matrix::zeros(n_h, n_f),
            w_hx: Matrix::zeros(n_h, n_x),
            w_out: Matrix::zeros(n_x, n_h),
            b_y: vec![0.0; n_x],
            h0: vec![0.0; n_h],
        }
    }

    /// Gaussian initialization of all weight matrices; biases and `h0`
    /// start at zero.
    pub fn init_with_sigma(n_x: usize, n_h: usize, n_f: usize, sigma: f64, rng: &mut Rng) -> Self {
        MRnnModel {
            n_x,
            n_h,
            n_f,
            w_fx: Matrix::gaussian(n_f, n_x, sigma, rng),
            w_fh: Matrix::gaussian(n_f, n_h, sigma, rng),
            w_hf: Matrix::gaussian(n_h, n_f, sigma, rng),
            w_hx: Matrix::gaussian(n_h, n_x, sigma, rng),
            w_out: Matrix::gaussian(n_x, n_h, sigma, rng),
            b_y: vec![0.0; n_x],
            h0: vec![0.0; n_h],
        }
    }

    pub fn n_params(&self) -> usize {
        self.w_fx.data().len()
            + self.w_fh.data().len()
            + self.w_hf.data().len()
            + self.w_hx.data().len()
            + self.w_out.data().len()
            + self.b_y.len()
            + self.h0.len()
    }

    /// Canonical flat order: `W_fx, W_fh, W_hf, W_hx, W_out, b_y, h0`,
    /// matrices row-major.
    pub fn param_vec(&self) -> Vector {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(self.w_fx.data());
        v.extend_from_slice(self.w_fh.data());
        v.extend_from_slice(self.w_hf.data());
        v.extend_from_slice(self.w_hx.data());
        v.extend_from_slice(self.w_out.data());
        v.extend_from_slice(&self.b_y);
        v.extend_from_slice(&self.h0);
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
        let mut pos = 0;
        for block in [
            self.w_fx.data_mut(),
            self.w_fh.data_mut(),
            self.w_hf.data_mut(),
            self.w_hx.data_mut(),
            self.w_out.data_mut(),
            &mut self.b_y[..],
            &mut self.h0[..],
        ] {
            block.copy_from_slice(&v[pos..pos + block.len()]);
            pos += block.len();
        }
        Ok(())
    }
}

/// One recurrence step; returns the new hidden state and the output.
pub fn mrnn_step(model: &MRnnModel, x_t: &[f64], h_prev: &[f64]) -> Result<(Vector, Vector)> {
    if x_t.len() != model.n_x {
        return Err(Error::shape(
            "mrnn_step",
            format!("n_x {}", model.n_x),
            format!("input len {}", x_t.len()),
        ));
    }
    if h_prev.len() != model.n_h {
        return Err(Error::shape(
            "mrnn_step",
            format!("n_h {}", model.n_h),
            format!("hidden len {}", h_prev.len()),
        ));
    }
    let u = matvec(&model.w_fx, x_t);
    let v = matvec(&model.w_fh, h_prev);
    let f = hadamard(&u, &v);
    let mut z = matvec(&model.w_hf, &f);
    vec_add_assign(&mut z, &matvec(&model.w_hx, x_t));
    let h: Vector = z.iter().map(|&zi| zi.tanh()).collect();
    let mut y = matvec(&model.w_out, &h);
    vec_add_assign(&mut y, &model.b_y);
    Ok((h, y))
}

/// Runs the recurrence from `h0` over a whole input sequence.
pub fn mrnn_forward(model: &MRnnModel, xs: &[Vector]) -> Result<Vec<Vector>> {
    if xs.is_empty() {
        return Err(Error::invalid("mrnn_forward", "empty sequence"));
    }
    let mut h = model.h0.clone();
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let (h_next, y) = mrnn_step(model, x, &h)?;
        h = h_next;
        out.push(y);
    }
    Ok(out)
}

/// An aligned (inputs, targets) pair of equal-length vector sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub inputs: Vec<Vector>,
    pub targets: Vec<Vector>,
}

impl Sequence {
    pub fn new(inputs: Vec<Vector>, targets: Vec<Vector>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("Sequence::new", "empty sequence"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::invalid(
                "Sequence::new",
                format!("{} inputs vs {} targets", inputs.len(), targets.len()),
            ));
        }
        Ok(Sequence { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Reinterprets a dataset's examples, in order, as sequences of at most
/// `seq_len` consecutive (x, y) steps. The final chunk may be shorter.
pub fn dataset_to_sequences(data: &Dataset, seq_len: usize) -> Result<Vec<Sequence>> {
    if seq_len == 0 {
        return Err(Error::invalid("dataset_to_sequences", "seq_len must be >= 1"));
    }
    if data.is_empty() {
        return Err(Error::invalid("dataset_to_sequences", "dataset is empty"));
    }
    data.examples
        .chunks(seq_len)
        .map(|chunk| {
            Sequence::new(
                chunk.iter().map(|e| e.x.clone()).collect(),
                chunk.iter().map(|e| e.y.clone()).collect(),
            )
        })
        .collect()
}

/// Output-layer loss for sequence training. Squared error is the default;
/// the cross-entropy variant treats `ŷ_t` as logits of a softmax over
/// symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MRnnLoss {
    Squared,
    SoftmaxCrossEntropy,
}

impl MRnnLoss {
    /// The config's loss field selects the output loss: `CrossEntropyX`
    /// maps to the softmax variant, everything else to squared error.
    pub fn from_config(mode: &LossMode) -> MRnnLoss {
        match mode {
            LossMode::CrossEntropyX => MRnnLoss::SoftmaxCrossEntropy,
            _ => MRnnLoss::Squared,
        }
    }
}

/// Per-step loss and output-layer gradient `dJ/dŷ`.
fn output_loss(yhat: &[f64], target: &[f64], loss: MRnnLoss) -> (f64, Vector) {
    match loss {
        MRnnLoss::Squared => {
            let d = vec_sub(yhat, target);
            let l = 0.5 * d.iter().map(|e| e * e).sum::<f64>();
            (l, d)
        }
        MRnnLoss::SoftmaxCrossEntropy => {
            // J = (Σ_i t_i)·logsumexp(ŷ) − t·ŷ, exact for any target, which
            // reduces to −Σ t_i ln softmax(ŷ)_i when the target sums to 1.
            let max = yhat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + yhat.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
            let ts: f64 = target.iter().sum();
            let l = ts * lse - dot(target, yhat);
            let p = Activation::Softmax.apply(yhat).expect("softmax on finite logits");
            let d: Vector = p.iter().zip(target).map(|(&pi, &ti)| ts * pi - ti).collect();
            (l, d)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MRnnGrads {
    pub w_fx: Matrix,
    pub w_fh: Matrix,
    pub w_hf: Matrix,
    pub w_hx: Matrix,
    pub w_out: Matrix,
    pub b_y: Vector,
    pub h0: Vector,
}

impl MRnnGrads {
    pub fn zeros_like(m: &MRnnModel) -> Self {
        MRnnGrads {
            w_fx: Matrix::zeros(m.n_f, m.n_x),
            w_fh: Matrix::zeros(m.n_f, m.n_h),
            w_hf: Matrix::zeros(m.n_h, m.n_f),
            w_hx: Matrix::zeros(m.n_h, m.n_x),
            w_out: Matrix::zeros(m.n_x, m.n_h),
            b_y: vec![0.0; m.n_x],
            h0: vec![0.0; m.n_h],
        }
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.w_fx.data_mut(),
            self.w_fh.data_mut(),
            self.w_hf.data_mut(),
            self.w_hx.data_mut(),
            self.w_out.data_mut(),
            &mut self.b_y[..],
            &mut self.h0[..],
        ]
    }

    fn blocks(&self) -> [&[f64]; 7] {
        [
            self.w_fx.data(),
            self.w_fh.data(),
            self.w_hf.data(),
            self.w_hx.data(),
            self.w_out.data(),
            &self.b_y[..],
            &self.h0[..],
        ]
    }

    pub fn add_assign(&mut self, other: &MRnnGrads) {
        let theirs = other.blocks();
        for (mine, others) in self.blocks_mut().into_iter().zip(theirs) {
            assert_eq!(mine.len(), others.len(), "gradient blocks differ");
            for (d, &s) in mine.iter_mut().zip(others) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for block in self.blocks_mut() {
            scale_assign(block, s);
        }
    }

    /// Flat gradient in [`MRnnModel::param_vec`] order.
    pub fn to_vec(&self) -> Vector {
        let mut v = Vec::new();
        for block in self.blocks() {
            v.extend_from_slice(block);
        }
        v
    }

    pub fn global_norm(&self) -> f64 {
        let sq: f64 = self.blocks().into_iter().map(|b| dot(b, b)).sum();
        sq.sqrt()
    }

    /// Rescales in place so the global L2 norm is at most `max_norm`.
    pub fn clip_to(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
    }
}

/// Total loss over one sequence.
pub fn mrnn_loss(model: &MRnnModel, seq: &Sequence, loss: MRnnLoss) -> Result<f64> {
    let outputs = mrnn_forward(model, &seq.inputs)?;
    let mut total = 0.0;
    for (yhat, target) in outputs.iter().zip(&seq.targets) {
        if yhat.len() != target.len() {
            return Err(Error::shape(
                "mrnn_loss",
                format!("output len {}", yhat.len()),
                format!("target len {}", target.len()),
            ));
        }
        total += output_loss(yhat, target, loss).0;
    }
    Ok(total)
}

/// Full-sequence backpropagation through time. Returns the sequence loss
/// and the raw (unclipped) gradient, including `dJ/dh0`.
pub fn mrnn_backward(model: &MRnnModel, seq: &Sequence, loss: MRnnLoss) -> Result<(f64, MRnnGrads)> {
    struct StepTrace {
        u: Vector,
        v: Vector,
        f: Vector,
        h: Vector,
        yhat: Vector,
    }

    // Forward, retaining every intermediate the backward pass reuses.
    let mut traces: Vec<StepTrace> = Vec::with_capacity(seq.len());
    let mut total = 0.0;
    {
        let mut h_prev: &[f64] = &model.h0;
        for (x, target) in seq.inputs.iter().zip(&seq.targets) {
            if x.len() != model.n_x {
                return Err(Error::shape(
                    "mrnn_backward",
                    format!("n_x {}", model.n_x),
                    format!("input len {}", x.len()),
                ));
            }
            if target.len() != model.n_x {
                return Err(Error::shape(
                    "mrnn_backward",
                    format!("n_x {}", model.n_x),
                    format!("target len {}", target.len()),
                ));
            }
            let u = matvec(&model.w_fx, x);
            let v = matvec(&model.w_fh, h_prev);
            let f = hadamard(&u, &v);
            let mut z = matvec(&model.w_hf, &f);
            vec_add_assign(&mut z, &matvec(&model.w_hx, x));
            let h: Vector = z.iter().map(|&zi| zi.tanh()).collect();
            let mut yhat = matvec(&model.w_out, &h);
            vec_add_assign(&mut yhat, &model.b_y);
            total += output_loss(&yhat, target, loss).0;
            traces.push(StepTrace { u, v, f, h, yhat });
            h_prev = &traces.last().unwrap().h;
        }
    }

    let mut g = MRnnGrads::zeros_like(model);
    // dJ/dh_t carried backwards through the recurrence.
    let mut carry = vec![0.0; model.n_h];
    for t in (0..seq.len()).rev() {
        let tr = &traces[t];
        let h_prev: &[f64] = if t == 0 { &model.h0 } else { &traces[t - 1].h };

        let (_, dy) = output_loss(&tr.yhat, &seq.targets[t], loss);
        g.w_out.add_outer(&dy, &tr.h);
        vec_add_assign(&mut g.b_y, &dy);

        let mut dh = matvec_t(&model.w_out, &dy);
        vec_add_assign(&mut dh, &carry);
        // tanh'(z) = 1 - h^2
        let dz: Vector = tr.h.iter().zip(&dh).map(|(&hi, &di)| (1.0 - hi * hi) * di).collect();
        g.w_hf.add_outer(&dz, &tr.f);
        g.w_hx.add_outer(&dz, &seq.inputs[t]);

        let df = matvec_t(&model.w_hf, &dz);
        let du = hadamard(&df, &tr.v);
        let dv = hadamard(&df, &tr.u);
        g.w_fx.add_outer(&du, &seq.inputs[t]);
        g.w_fh.add_outer(&dv, h_prev);
        carry = matvec_t(&model.w_fh, &dv);
    }
    g.h0.copy_from_slice(&carry);
    Ok((total, g))
}

/// Supervised sequence training with momentum SGD and gradient clipping
/// at global L2 norm [`MRNN_CLIP_NORM`]. The output loss is selected by
/// `config.loss` (see [`MRnnLoss::from_config`]); corruption settings do
/// not apply to sequence training and are ignored. Returns the trained
/// model and the per-epoch mean sequence loss.
pub fn mrnn_train(
    model: MRnnModel,
    sequences: &[Sequence],
    config: &TrainConfig,
) -> Result<(MRnnModel, Vector)> {
    mrnn_train_observed(model, sequences, config, |_, _| {})
}

/// Like [`mrnn_train`], invoking `on_epoch(epoch, mean_loss)` as each
/// epoch finishes.
pub fn mrnn_train_observed(
    mut model: MRnnModel,
    sequences: &[Sequence],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(MRnnModel, Vector)> {
    config.validate()?;
    if sequences.is_empty() {
        return Err(Error::invalid("mrnn_train", "no sequences"));
    }
    let loss = MRnnLoss::from_config(&config.loss);

    let mut vel = MRnnGrads::zeros_like(&model);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for batch in sequences.chunks(config.batch_size) {
            let mut acc = MRnnGrads::zeros_like(&model);
            for seq in batch {
                let (l, g) = mrnn_backward(&model, seq, loss)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss became {l} in epoch {epoch}; lower the learning rate"
                    )));
                }
                epoch_loss += l;
                acc.add_assign(&g);
            }
            acc.scale(1.0 / batch.len() as f64);
            acc.clip_to(MRNN_CLIP_NORM);

            let gflat = acc.to_vec();
            let mut vflat = vel.to_vec();
            let mut theta = model.param_vec();
            for ((t, v), &gi) in theta.iter_mut().zip(vflat.iter_mut()).zip(&gflat) {
                *v = config.momentum * *v - config.lr * gi;
                *t += *v;
            }
            model.set_param_vec(&theta)?;
            set_grads_from_vec(&mut vel, &vflat);
        }
        let mean = epoch_loss / sequences.len() as f64;
        on_epoch(epoch, mean);
        trace.push(mean);
    }
    Ok((model, trace))
}

fn set_grads_from_vec(g: &mut MRnnGrads, v: &[f64]) {
    let mut pos = 0;
    for block in g.blocks_mut() {
        block.copy_from_slice(&v[pos..pos + block.len()]);
        pos += block.len();
    }
}

/// Fraction of steps where the predicted argmax symbol matches the
/// target's argmax — the headline metric for one-hot sequence tasks.
pub fn next_symbol_accuracy(model: &MRnnModel, sequences: &[Sequence]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for seq in sequences {
        let outputs = mrnn_forward(model, &seq.inputs)?;
        for (yhat, target) in outputs.iter().zip(&seq.targets) {
            if argmax(yhat) == argmax(target) {
                hits += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("next_symbol_accuracy", "no steps"));
    }
    Ok(hits as f64 / total as f64)
}

/// Finite-difference check of BPTT on 2-unit models over length-3
/// sequences.
pub(crate) fn check_mrnn_grid(seeds: &[u64], eps: f64) -> Result<GridReport> {
    let mut report = GridReport::new();
    for &seed in seeds {
        let mut rng = Rng::new(seed.wrapping_mul(0x2545_F491).wrapping_add(11));
        let mut model = MRnnModel::init_with_sigma(2, 2, 2, 0.7, &mut rng);
        for h in model.h0.iter_mut() {
            *h = 0.3 * rng.next_gaussian();
        }
        let inputs: Vec<Vector> =
            (0..3).map(|_| (0..2).map(|_| rng.next_gaussian()).collect()).collect();
        let targets: Vec<Vector> =
            (0..3).map(|_| (0..2).map(|_| rng.next_gaussian()).collect()).collect();
        let seq = Sequence::new(inputs, targets)?;

        let (_, grads) = mrnn_backward(&model, &seq, MRnnLoss::Squared)?;
        let analytic = grads.to_vec();
        let theta0 = model.param_vec();
        let mut scratch = model.clone();
        let numeric = numeric_grad(
            |t| {
                scratch.set_param_vec(t)?;
                mrnn_loss(&scratch, &seq, MRnnLoss::Squared)
            },
            &theta0,
            eps,
        )?;
        let err = rel_error(&analytic, &numeric);
        report.record(err, || format!("mrnn bptt / seed {seed}"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::gen_periodic;
    use crate::gradcheck::{DEFAULT_EPS, DEFAULT_TOLERANCE};
    use crate::numerics::one_hot;

    fn random_model(seed: u64, n_x: usize, n_h: usize, n_f: usize) -> MRnnModel {
        let mut rng = Rng::new(seed);
        MRnnModel::init_with_sigma(n_x, n_h, n_f, 0.6, &mut rng)
    }

    #[test]
    fn zero_weights_pass_bias_through() {
        let mut m = MRnnModel::zeros(2, 3, 2);
        m.b_y = vec![1.0, 0.0];
        let (h, y) = mrnn_step(&m, &[0.7, -0.3], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(y, vec![1.0, 0.0]);
    }

    #[test]
    fn scalar_substitution_case() {
        let mut m = MRnnModel::zeros(1, 1, 1);
        m.w_fx.set(0, 0, 1.0);
        m.w_fh.set(0, 0, 1.0);
        m.w_hf.set(0, 0, 1.0);
        m.w_out.set(0, 0, 1.0);
        let (h, y) = mrnn_step(&m, &[2.0], &[3.0]).unwrap();
        // f = (1*2) * (1*3) = 6, h = tanh(6)
        assert_eq!(h[0], 6.0_f64.tanh());
        assert!((h[0] - 0.999988).abs() < 1e-6);
        assert_eq!(y[0], h[0]);
    }

    #[test]
    fn elementwise_form_equals_diag_matrix_form_bitwise() {
        for seed in 0..10 {
            let mut rng = Rng::new(100 + seed);
            let m = MRnnModel::init_with_sigma(3, 4, 5, 0.8, &mut rng);
            let x: Vector = (0..3).map(|_| rng.next_gaussian()).collect();
            let h: Vector = (0..4).map(|_| rng.next_gaussian()).collect();
            let u = matvec(&m.w_fx, &x);
            let v = matvec(&m.w_fh, &h);
            let mut diag = Matrix::zeros(5, 5);
            for (i, &ui) in u.iter().enumerate() {
                diag.set(i, i, ui);
            }
            assert_eq!(hadamard(&u, &v), matvec(&diag, &v));
        }
    }

    #[test]
    fn hidden_state_stays_inside_unit_interval() {
        // strictly inside (-1, 1) for moderate pre-activations; double
        // precision rounds tanh to exactly 1.0 only past |z| ~ 19, so the
        // extreme-input sweep asserts the closed bound
        let mut rng = Rng::new(8);
        let m = MRnnModel::init_with_sigma(3, 6, 4, 0.4, &mut rng);
        let mut h = m.h0.clone();
        for _ in 0..50 {
            let x: Vector = (0..3).map(|_| rng.next_gaussian()).collect();
            let (h_next, _) = mrnn_step(&m, &x, &h).unwrap();
            assert!(h_next.iter().all(|&v| v > -1.0 && v < 1.0));
            h = h_next;
        }
        let big = vec![1e6, -1e6, 1e6];
        let (h_sat, _) = mrnn_step(&m, &big, &h).unwrap();
        assert!(h_sat.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn forward_length_one_equals_single_step() {
        let m = random_model(11, 3, 4, 4);
        let x = vec![0.2, -0.5, 1.0];
        let out = mrnn_forward(&m, std::slice::from_ref(&x)).unwrap();
        let (_, y) = mrnn_step(&m, &x, &m.h0).unwrap();
        assert_eq!(out, vec![y]);
    }

    #[test]
    fn forward_is_pure() {
        let m = random_model(12, 2, 3, 3);
        let xs: Vec<Vector> = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(mrnn_forward(&m, &xs).unwrap(), mrnn_forward(&m, &xs).unwrap());
    }

    #[test]
    fn forward_rejects_empty_sequence() {
        let m = random_model(13, 2, 3, 3);
        assert!(mrnn_forward(&m, &[]).is_err());
    }

    #[test]
    fn zero_gating_weights_make_the_network_memoryless() {
        let mut m = random_model(14, 3, 4, 4);
        m.w_fh = Matrix::zeros(4, 4);
        let mut rng = Rng::new(15);
        let xs: Vec<Vector> =
            (0..5).map(|_| (0..3).map(|_| rng.next_gaussian()).collect()).collect();
        let out = mrnn_forward(&m, &xs).unwrap();
        let perm = [3usize, 0, 4, 1, 2];
        let xs_perm: Vec<Vector> = perm.iter().map(|&i| xs[i].clone()).collect();
        let out_perm = mrnn_forward(&m, &xs_perm).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(out_perm[j], out[i], "output at permuted position differs");
        }
    }

    #[test]
    fn param_vec_roundtrip_is_bitwise() {
        let m = random_model(16, 3, 4, 5);
        let v = m.param_vec();
        assert_eq!(v.len(), m.n_params());
        let mut m2 = MRnnModel::zeros(3, 4, 5);
        m2.set_param_vec(&v).unwrap();
        assert_eq!(m2, m);
        assert!(m2.set_param_vec(&v[1..]).is_err());
    }

    #[test]
    fn sequence_validation_rejects_misalignment() {
        assert!(Sequence::new(vec![], vec![]).is_err());
        assert!(Sequence::new(vec![vec![1.0]], vec![]).is_err());
        assert!(Sequence::new(vec![vec![1.0]], vec![vec![1.0], vec![2.0]]).is_err());
        assert!(Sequence::new(vec![vec![1.0]], vec![vec![2.0]]).is_ok());
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let report = check_mrnn_grid(&[0, 1, 2, 3, 4], DEFAULT_EPS).unwrap();
        assert!(
            report.max_rel_err < DEFAULT_TOLERANCE,
            "max rel err {} at {}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn bptt_matches_finite_differences_for_softmax_loss() {
        let mut rng = Rng::new(77);
        let mut model = MRnnModel::init_with_sigma(3, 2, 2, 0.7, &mut rng);
        for h in model.h0.iter_mut() {
            *h = 0.3 * rng.next_gaussian();
        }
        let inputs: Vec<Vector> = (0..3).map(|i| one_hot(i % 3, 3)).collect();
        let targets: Vec<Vector> = (0..3).map(|i| one_hot((i + 1) % 3, 3)).collect();
        let seq = Sequence::new(inputs, targets).unwrap();
        let (_, grads) = mrnn_backward(&model, &seq, MRnnLoss::SoftmaxCrossEntropy).unwrap();
        let theta0 = model.param_vec();
        let mut scratch = model.clone();
        let numeric = numeric_grad(
            |t| {
                scratch.set_param_vec(t)?;
                mrnn_loss(&scratch, &seq, MRnnLoss::SoftmaxCrossEntropy)
            },
            &theta0,
            DEFAULT_EPS,
        )
        .unwrap();
        let err = rel_error(&grads.to_vec(), &numeric);
        assert!(err < DEFAULT_TOLERANCE, "rel err {err}");
    }

    #[test]
    fn clipping_caps_the_global_norm_and_leaves_small_gradients_alone() {
        let m = MRnnModel::zeros(2, 2, 2);
        let mut g = MRnnGrads::zeros_like(&m);
        g.b_y = vec![30.0, 40.0]; // norm 50
        g.clip_to(MRNN_CLIP_NORM);
        assert!((g.global_norm() - MRNN_CLIP_NORM).abs() < 1e-12);
        assert!((g.b_y[0] - 3.0).abs() < 1e-12);

        let mut small = MRnnGrads::zeros_like(&m);
        small.b_y = vec![0.1, 0.2];
        let before = small.clone();
        small.clip_to(MRNN_CLIP_NORM);
        assert_eq!(small, before);
    }

    #[test]
    fn lr_zero_leaves_model_bitwise_unchanged() {
        let m = random_model(20, 4, 3, 3);
        let data = gen_periodic(12, 4).unwrap();
        let seqs = dataset_to_sequences(&data, 6).unwrap();
        let before = m.param_vec();
        let config = TrainConfig { lr: 0.0, epochs: 3, ..TrainConfig::default() };
        let (after, trace) = mrnn_train(m, &seqs, &config).unwrap();
        assert_eq!(after.param_vec(), before);
        assert_eq!(trace.len(), 3);
        assert_eq!(trace[0], trace[2]);
    }

    #[test]
    fn training_reduces_loss_on_a_periodic_task() {
        let mut rng = Rng::new(21);
        let m = MRnnModel::init_with_sigma(4, 8, 8, 0.3, &mut rng);
        let data = gen_periodic(80, 4).unwrap();
        let seqs = dataset_to_sequences(&data, 20).unwrap();
        let config = TrainConfig {
            lr: 0.05,
            momentum: 0.9,
            epochs: 60,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (trained, trace) = mrnn_train(m, &seqs, &config).unwrap();
        assert!(
            trace.last().unwrap() < &(0.5 * trace[0]),
            "loss did not halve: {} -> {}",
            trace[0],
            trace.last().unwrap()
        );
        let acc = next_symbol_accuracy(&trained, &seqs).unwrap();
        assert!(acc > 0.5, "accuracy only {acc}");
    }

    #[test]
    fn dataset_chunking_shapes() {
        let data = gen_periodic(10, 3).unwrap();
        let seqs = dataset_to_sequences(&data, 4).unwrap();
        assert_eq!(seqs.len(), 3);
        assert_eq!(seqs[0].len(), 4);
        assert_eq!(seqs[2].len(), 2);
        assert_eq!(seqs[0].inputs[1], one_hot(1, 3));
        assert_eq!(seqs[0].targets[1], one_hot(2, 3));
        assert!(dataset_to_sequences(&data, 0).is_err());
    }
}
