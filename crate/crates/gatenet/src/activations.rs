//! Activation functions and their derivatives.
//!
//! All kinds except `Softmax` act pointwise. `Softmax` is applied to the
//! whole layer jointly and normalizes activities to sum to 1; its backward
//! pass uses the full Jacobian `J[i][j] = s_i (delta_ij - s_j)`.

use crate::error::{Error, Result};
use crate::numerics::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Relu,
    Softplus,
    Softmax,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Overflow-safe softplus: `max(z, 0) + ln(1 + exp(-|z|))`.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_finite(op: &'static str, z: &[f64]) -> Result<()> {
    if let Some(bad) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(
            op,
            format!("non-finite input {} at index {bad}", z[bad]),
        ));
    }
    Ok(())
}

impl Activation {
    /// Forward value on a whole layer.
    pub fn apply(self, z: &[f64]) -> Result<Vector> {
        check_finite("activate", z)?;
        Ok(match self {
            Activation::Identity => z.to_vec(),
            Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Softplus => z.iter().map(|&v| softplus(v)).collect(),
            Activation::Softmax => softmax(z),
        })
    }

    /// Backward pass: returns `J^T · upstream` where `J` is the Jacobian of
    /// [`Activation::apply`] at `z`.
    pub fn backward(self, z: &[f64], upstream: &[f64]) -> Result<Vector> {
        if z.len() != upstream.len() {
            return Err(Error::shape("activate_grad", z.len(), upstream.len()));
        }
        check_finite("activate_grad", z)?;
        Ok(match self {
            Activation::Identity => upstream.to_vec(),
            Activation::Sigmoid => z
                .iter()
                .zip(upstream)
                .map(|(&v, &u)| {
                    let s = sigmoid(v);
                    s * (1.0 - s) * u
                })
                .collect(),
            // Subgradient at exactly 0 is taken as 0.
            Activation::Relu => z
                .iter()
                .zip(upstream)
                .map(|(&v, &u)| if v > 0.0 { u } else { 0.0 })
                .collect(),
            // softplus'(z) = sigmoid(z)
            Activation::Softplus => z
                .iter()
                .zip(upstream)
                .map(|(&v, &u)| sigmoid(v) * u)
                .collect(),
            Activation::Softmax => {
                let s = softmax(z);
                let su: f64 = s.iter().zip(upstream).map(|(&si, &ui)| si * ui).sum();
                s.iter()
                    .zip(upstream)
                    .map(|(&si, &ui)| si * (ui - su))
                    .collect()
            }
        })
    }

    /// Serialization tag. Codes are part of the model file format.
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Sigmoid => 1,
            Activation::Relu => 2,
            Activation::Softplus => 3,
            Activation::Softmax => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Sigmoid,
            2 => Activation::Relu,
            3 => Activation::Softplus,
            4 => Activation::Softmax,
            _ => return None,
        })
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "identity" => Activation::Identity,
            "sigmoid" => Activation::Sigmoid,
            "relu" => Activation::Relu,
            "softplus" => Activation::Softplus,
            "softmax" => Activation::Softmax,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
            Activation::Softmax => "softmax",
        }
    }
}

/// Softmax with max-subtraction so large inputs do not overflow.
fn softmax(z: &[f64]) -> Vector {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vector = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Hard winner-takes-all: a one-hot vector at the argmax (first index on
/// ties). Kept separate from [`Activation`] so it never enters a gradient
/// path.
pub fn argmax_onehot(v: &[f64]) -> Vector {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    let mut out = vec![0.0; v.len()];
    out[best] = 1.0;
    out
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Sigmoid,
        Activation::Relu,
        Activation::Softplus,
        Activation::Softmax,
    ];

    #[test]
    fn softplus_at_zero_is_ln2() {
        let out = Activation::Softplus.apply(&[0.0]).unwrap();
        assert!((out[0] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn softmax_symmetric_pair() {
        let out = Activation::Softmax.apply(&[0.0, 0.0]).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-15);
        assert!((out[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariant_ratio() {
        // (c, c + ln 3) maps to (0.25, 0.75) for any c, including values
        // where a naive exp would overflow.
        for c in [-1000.0, -2.0, 0.0, 3.5, 1000.0] {
            let out = Activation::Softmax.apply(&[c, c + 3.0_f64.ln()]).unwrap();
            assert!((out[0] - 0.25).abs() < 1e-12, "c={c}: {out:?}");
            assert!((out[1] - 0.75).abs() < 1e-12, "c={c}: {out:?}");
        }
    }

    #[test]
    fn softmax_normalizes() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let z: Vec<f64> = (0..6).map(|_| 3.0 * rng.next_gaussian()).collect();
            let s = Activation::Softmax.apply(&z).unwrap();
            let sum: f64 = s.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(s.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = Rng::new(8);
        for _ in 0..20 {
            let z: Vec<f64> = (0..5).map(|_| rng.next_gaussian()).collect();
            let shifted: Vec<f64> = z.iter().map(|&v| v + 17.25).collect();
            let a = Activation::Softmax.apply(&z).unwrap();
            let b = Activation::Softmax.apply(&shifted).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigmoid_grad_at_zero() {
        let g = Activation::Sigmoid.backward(&[0.0], &[1.0]).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn relu_dead_unit_blocks_gradient() {
        let g = Activation::Relu.backward(&[-1.0], &[5.0]).unwrap();
        assert_eq!(g[0], 0.0);
        // subgradient at exactly zero is zero
        let g = Activation::Relu.backward(&[0.0], &[5.0]).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn softplus_derivative_equals_sigmoid() {
        let mut rng = Rng::new(13);
        for _ in 0..50 {
            let z: Vec<f64> = (0..4).map(|_| 5.0 * rng.next_gaussian()).collect();
            let ones = vec![1.0; z.len()];
            let dsp = Activation::Softplus.backward(&z, &ones).unwrap();
            let sig = Activation::Sigmoid.apply(&z).unwrap();
            for (a, b) in dsp.iter().zip(sig.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softplus_dominates_relu_by_at_most_ln2() {
        let mut rng = Rng::new(21);
        for _ in 0..200 {
            let z = 50.0 * rng.next_gaussian();
            let sp = Activation::Softplus.apply(&[z]).unwrap()[0];
            let re = Activation::Relu.apply(&[z]).unwrap()[0];
            assert!(sp >= re, "softplus({z}) = {sp} < relu = {re}");
            assert!(sp - re <= std::f64::consts::LN_2 + 1e-15);
        }
    }

    #[test]
    fn pointwise_kinds_are_monotone() {
        let mut zs: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.25).collect();
        zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for kind in [
            Activation::Identity,
            Activation::Sigmoid,
            Activation::Relu,
            Activation::Softplus,
        ] {
            let out = kind.apply(&zs).unwrap();
            for w in out.windows(2) {
                assert!(w[1] >= w[0], "{kind:?} not monotone");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        // For g(z) = dot(apply(z), u), dg/dz_i from central differences must
        // match backward(z, u) to relative error < 1e-6.
        let eps = 1e-5;
        let mut rng = Rng::new(31);
        for kind in ALL {
            for _ in 0..5 {
                let z: Vec<f64> = (0..4).map(|_| rng.next_gaussian()).collect();
                let u: Vec<f64> = (0..4).map(|_| rng.next_gaussian()).collect();
                let analytic = kind.backward(&z, &u).unwrap();
                let mut numeric = vec![0.0; 4];
                for i in 0..4 {
                    let mut zp = z.clone();
                    zp[i] += eps;
                    let mut zm = z.clone();
                    zm[i] -= eps;
                    let gp: f64 = kind
                        .apply(&zp)
                        .unwrap()
                        .iter()
                        .zip(&u)
                        .map(|(a, b)| a * b)
                        .sum();
                    let gm: f64 = kind
                        .apply(&zm)
                        .unwrap()
                        .iter()
                        .zip(&u)
                        .map(|(a, b)| a * b)
                        .sum();
                    numeric[i] = (gp - gm) / (2.0 * eps);
                }
                let diff: f64 = analytic
                    .iter()
                    .zip(&numeric)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let scale = crate::numerics::l2_norm(&analytic)
                    .max(crate::numerics::l2_norm(&numeric))
                    .max(1e-12);
                assert!(diff / scale < 1e-6, "{kind:?}: rel err {}", diff / scale);
            }
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        assert!(Activation::Sigmoid.apply(&[f64::NAN]).is_err());
        assert!(Activation::Softmax.apply(&[1.0, f64::INFINITY]).is_err());
        assert!(Activation::Relu.backward(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn backward_rejects_length_mismatch() {
        assert!(Activation::Identity.backward(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn argmax_onehot_picks_first_max() {
        assert_eq!(argmax_onehot(&[0.1, 0.7, 0.2]), vec![0.0, 1.0, 0.0]);
        assert_eq!(argmax_onehot(&[0.5, 0.5]), vec![1.0, 0.0]);
    }

    #[test]
    fn activation_codes_roundtrip() {
        for kind in ALL {
            assert_eq!(Activation::from_code(kind.code()), Some(kind));
            assert_eq!(Activation::parse(kind.name()), Some(kind));
        }
        assert_eq!(Activation::from_code(9), None);
    }
}
