//! Dense row-major linear algebra and seeded randomness.
//!
//! Everything in this crate computes in `f64`. Summation order inside
//! [`matvec`] / [`matvec_t`] is fixed (ascending column index), so results
//! are bitwise deterministic across runs and platforms.
//!
//! Shape mismatches between a matrix and a vector are programmer error and
//! panic via `assert!` with a message naming both shapes. Operations that
//! take external data (models, datasets) validate sizes and return
//! [`crate::Result`] instead.

/// A dense vector of 64-bit reals.
pub type Vector = Vec<f64>;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dims must be >= 1, got {rows}x{cols}");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length is not `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {rows}x{cols}",
            data.len()
        );
        assert!(rows >= 1 && cols >= 1, "matrix dims must be >= 1, got {rows}x{cols}");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    /// Fills a matrix with Gaussian draws of the given sigma.
    pub fn gaussian(rows: usize, cols: usize, sigma: f64, rng: &mut Rng) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for w in m.data.iter_mut() {
            *w = sigma * rng.next_gaussian();
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self[i][j] += a[i] * b[j]` — rank-one gradient accumulation.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), self.rows, "outer: lhs len {} vs {} rows", a.len(), self.rows);
        assert_eq!(b.len(), self.cols, "outer: rhs len {} vs {} cols", b.len(), self.cols);
        for (i, &ai) in a.iter().enumerate() {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, &bj) in row.iter_mut().zip(b.iter()) {
                *r += ai * bj;
            }
        }
    }
}

/// `result[i] = sum_j m[i][j] * v[j]`, summed in ascending column order.
pub fn matvec(m: &Matrix, v: &[f64]) -> Vector {
    assert_eq!(
        v.len(),
        m.cols,
        "matvec: matrix is {}x{} but vector has len {}",
        m.rows,
        m.cols,
        v.len()
    );
    let mut out = vec![0.0; m.rows];
    for (i, o) in out.iter_mut().enumerate() {
        let row = m.row(i);
        let mut acc = 0.0;
        for (w, x) in row.iter().zip(v.iter()) {
            acc += w * x;
        }
        *o = acc;
    }
    out
}

/// `result[j] = sum_i m[i][j] * v[i]` — multiply by the transpose without
/// materializing it. Summation order is ascending row index, which equals
/// the ascending column order of the transposed matrix.
pub fn matvec_t(m: &Matrix, v: &[f64]) -> Vector {
    assert_eq!(
        v.len(),
        m.rows,
        "matvec_t: matrix is {}x{} but vector has len {}",
        m.rows,
        m.cols,
        v.len()
    );
    let mut out = vec![0.0; m.cols];
    for (i, &vi) in v.iter().enumerate() {
        let row = m.row(i);
        for (o, &w) in out.iter_mut().zip(row.iter()) {
            *o += w * vi;
        }
    }
    out
}

/// Element-wise product of two equal-length vectors.
pub fn hadamard(a: &[f64], b: &[f64]) -> Vector {
    assert_eq!(a.len(), b.len(), "hadamard: len {} vs len {}", a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).collect()
}

pub fn vec_sub(a: &[f64], b: &[f64]) -> Vector {
    assert_eq!(a.len(), b.len(), "vec_sub: len {} vs len {}", a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
}

pub fn vec_add_assign(a: &mut [f64], b: &[f64]) {
    assert_eq!(a.len(), b.len(), "vec_add_assign: len {} vs len {}", a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b.iter()) {
        *x += y;
    }
}

/// `a += s * b`.
pub fn add_scaled(a: &mut [f64], b: &[f64], s: f64) {
    assert_eq!(a.len(), b.len(), "add_scaled: len {} vs len {}", a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b.iter()) {
        *x += s * y;
    }
}

pub fn scale_assign(a: &mut [f64], s: f64) {
    for x in a.iter_mut() {
        *x *= s;
    }
}

/// Unit basis vector: all zeros except a 1 at `index`.
pub fn one_hot(index: usize, len: usize) -> Vector {
    assert!(index < len, "one_hot: index {index} out of range for len {len}");
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: len {} vs len {}", a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Root-mean-square difference between two equal-length vectors.
pub fn rms_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rms_error: len {} vs len {}", a.len(), b.len());
    let ss: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seeded pseudo-random generator: xorshift64* over a SplitMix64-initialized
/// state. Gaussian draws use the Marsaglia polar method on top of the
/// integer stream. Both algorithms use only integer and `f64` arithmetic,
/// so a seed reproduces the same draw sequence on every platform.
///
/// File formats produced by this crate are versioned; format version 1 pins
/// exactly this generator (xorshift64*, polar Gaussians).
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    seed: u64,
    spare_gaussian: Option<f64>,
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut state = splitmix64(seed);
        if state == 0 {
            // xorshift state must be nonzero
            state = GOLDEN_GAMMA;
        }
        Rng {
            state,
            seed,
            spare_gaussian: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n` via the multiply-shift reduction.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_index: empty range");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw (Marsaglia polar method; the second value of
    /// each pair is cached and returned on the next call).
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(g) = self.spare_gaussian.take() {
            return g;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare_gaussian = Some(v * factor);
                return u * factor;
            }
        }
    }

    /// `n` Gaussian draws with the given mean and sigma. `sigma == 0`
    /// returns the constant mean without consuming generator state.
    pub fn draw_gaussian(&mut self, mean: f64, sigma: f64, n: usize) -> crate::Result<Vector> {
        if sigma < 0.0 {
            return Err(crate::Error::invalid(
                "draw_gaussian",
                format!("sigma must be >= 0, got {sigma}"),
            ));
        }
        if sigma == 0.0 {
            return Ok(vec![mean; n]);
        }
        Ok((0..n).map(|_| mean + sigma * self.next_gaussian()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity_is_identity() {
        let m = Matrix::identity(2);
        assert_eq!(matvec(&m, &[3.0, 4.0]), vec![3.0, 4.0]);
    }

    #[test]
    fn matvec_hand_arithmetic() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matvec(&m, &[1.0, 1.0]), vec![3.0, 7.0]);
    }

    #[test]
    #[should_panic(expected = "matvec: matrix is 2x3 but vector has len 2")]
    fn matvec_rejects_bad_shapes() {
        let m = Matrix::zeros(2, 3);
        matvec(&m, &[1.0, 2.0]);
    }

    #[test]
    fn matvec_t_hand_arithmetic() {
        let m = Matrix::identity(2);
        assert_eq!(matvec_t(&m, &[3.0, 4.0]), vec![3.0, 4.0]);
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matvec_t(&m, &[1.0, 1.0]), vec![4.0, 6.0]);
    }

    #[test]
    fn matvec_t_matches_explicit_transpose() {
        // Transpose oracle: matvec_t(m, v) must equal matvec(transpose(m), v)
        // bitwise, since both sum in the same index order.
        let mut rng = Rng::new(7);
        for _ in 0..20 {
            let m = Matrix::gaussian(3, 4, 1.0, &mut rng);
            let v: Vector = (0..3).map(|_| rng.next_gaussian()).collect();
            let direct = matvec_t(&m, &v);
            let oracle = matvec(&m.transpose(), &v);
            assert_eq!(direct, oracle);
        }
    }

    #[test]
    fn hadamard_basics() {
        assert_eq!(hadamard(&[1.0, 2.0], &[3.0, 4.0]), vec![3.0, 8.0]);
        let v = vec![0.5, -1.5, 2.0];
        assert_eq!(hadamard(&v, &[1.0, 1.0, 1.0]), v);
        assert_eq!(hadamard(&v, &[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn hadamard_commutative_associative() {
        let mut rng = Rng::new(11);
        for _ in 0..50 {
            let a: Vector = (0..5).map(|_| rng.next_gaussian()).collect();
            let b: Vector = (0..5).map(|_| rng.next_gaussian()).collect();
            let c: Vector = (0..5).map(|_| rng.next_gaussian()).collect();
            // commutativity is exact in IEEE arithmetic
            assert_eq!(hadamard(&a, &b), hadamard(&b, &a));
            // associativity only holds up to rounding
            let lhs = hadamard(&hadamard(&a, &b), &c);
            let rhs = hadamard(&a, &hadamard(&b, &c));
            for (l, r) in lhs.iter().zip(&rhs) {
                assert!((l - r).abs() <= 1e-15 * l.abs().max(r.abs()));
            }
        }
    }

    #[test]
    fn matvec_identity_property() {
        let mut rng = Rng::new(3);
        for n in 1..6 {
            let v: Vector = (0..n).map(|_| rng.next_gaussian()).collect();
            assert_eq!(matvec(&Matrix::identity(n), &v), v);
        }
    }

    #[test]
    fn rng_sigma_zero_is_constant_mean() {
        let mut rng = Rng::new(1);
        assert_eq!(rng.draw_gaussian(1.0, 0.0, 3).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn rng_rejects_negative_sigma() {
        let mut rng = Rng::new(1);
        assert!(rng.draw_gaussian(0.0, -1.0, 3).is_err());
    }

    #[test]
    fn rng_same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        let va = a.draw_gaussian(0.0, 1.0, 100).unwrap();
        let vb = b.draw_gaussian(0.0, 1.0, 100).unwrap();
        assert_eq!(va, vb);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn rng_gaussian_sample_mean() {
        // Law of large numbers at a fixed seed: 1e5 standard normal draws
        // have sample mean within 0.02 of zero.
        let mut rng = Rng::new(123);
        let v = rng.draw_gaussian(0.0, 1.0, 100_000).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.02, "sample mean {mean}");
    }

    #[test]
    fn rng_index_in_range() {
        let mut rng = Rng::new(5);
        let mut seen = [false; 4];
        for _ in 0..1000 {
            let i = rng.next_index(4);
            assert!(i < 4);
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn transpose_roundtrip() {
        let mut rng = Rng::new(9);
        let m = Matrix::gaussian(3, 5, 1.0, &mut rng);
        assert_eq!(m.transpose().transpose(), m);
    }
}
