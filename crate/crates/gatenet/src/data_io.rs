//! Synthetic transformation-pair datasets and their binary persistence.
//!
//! The gated models in this crate learn *relations* between two vectors, so
//! the experimental substrate is pairs `(x, y)` where `y` is a known
//! transformation of `x`: circular shifts of binary patterns, right-angle
//! rotations of small images, or (for clustering) Gaussian blobs paired with
//! themselves. All generators are deterministic functions of the seed.
//!
//! Datasets persist in a small binary format, magic `GND1`: four
//! little-endian `u32` header fields (example count, `n_x`, `n_y`, label
//! length with `0` meaning unlabeled), the packed little-endian `f64`
//! payload (per example: `x`, then `y`, then the optional label), and a
//! length-prefixed UTF-8 metadata string. Round-trips are bitwise lossless.

use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::numerics::{one_hot, Rng, Vector};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vector,
    pub y: Vector,
    pub label: Option<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_x: usize,
    pub n_y: usize,
    pub examples: Vec<Example>,
    /// Human-readable description of how the data was generated.
    pub meta: String,
}

impl Dataset {
    pub fn new(n_x: usize, n_y: usize, meta: impl Into<String>) -> Self {
        Dataset {
            n_x,
            n_y,
            examples: Vec::new(),
            meta: meta.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Label length shared by all examples; 0 when unlabeled.
    pub fn label_len(&self) -> usize {
        self.examples
            .first()
            .and_then(|e| e.label.as_ref())
            .map_or(0, |l| l.len())
    }

    /// Appends an example, enforcing uniform dimensions and uniform
    /// labeling across the dataset.
    pub fn push(&mut self, x: Vector, y: Vector, label: Option<Vector>) -> Result<()> {
        if x.len() != self.n_x || y.len() != self.n_y {
            return Err(Error::shape(
                "dataset push",
                format!("dataset ({}, {})", self.n_x, self.n_y),
                format!("example ({}, {})", x.len(), y.len()),
            ));
        }
        if !self.examples.is_empty() {
            let expect = self.label_len();
            let got = label.as_ref().map_or(0, |l| l.len());
            if expect != got {
                return Err(Error::invalid(
                    "dataset push",
                    format!("label length {got} differs from the dataset's {expect} (labels must be uniformly present or absent)"),
                ));
            }
        }
        self.examples.push(Example { x, y, label });
        Ok(())
    }
}

/// Circularly shifts `v` so that entry `i` of the input lands at
/// `(i + shift) mod len`. Negative shifts move the other way; any magnitude
/// is accepted.
pub fn circular_shift(v: &[f64], shift: i64) -> Vector {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let s = shift.rem_euclid(n as i64) as usize;
    let mut out = vec![0.0; n];
    for (i, &val) in v.iter().enumerate() {
        out[(i + s) % n] = val;
    }
    out
}

/// Rotates a flattened row-major `side x side` image clockwise by a multiple
/// of 90 degrees (`angle` in {0, 90, 180, 270} — the lossless rotations).
pub fn rotate_image(v: &[f64], side: usize, angle: u32) -> Result<Vector> {
    if v.len() != side * side {
        return Err(Error::shape(
            "rotate_image",
            format!("{side}x{side} image"),
            format!("len {}", v.len()),
        ));
    }
    let src = |r: usize, c: usize| v[r * side + c];
    let mut out = vec![0.0; v.len()];
    for r in 0..side {
        for c in 0..side {
            out[r * side + c] = match angle {
                0 => src(r, c),
                90 => src(side - 1 - c, r),
                180 => src(side - 1 - r, side - 1 - c),
                270 => src(c, side - 1 - r),
                _ => {
                    return Err(Error::invalid(
                        "rotate_image",
                        format!("angle {angle} is not one of 0, 90, 180, 270"),
                    ))
                }
            };
        }
    }
    Ok(out)
}

/// Random binary patterns paired with their circular shift: `x` has each bit
/// set with probability `density`, `y = shift(x)`.
pub fn gen_shift_pairs(
    rng: &mut Rng,
    n: usize,
    width: usize,
    shift: i64,
    density: f64,
) -> Result<Dataset> {
    if width == 0 {
        return Err(Error::invalid("gen_shift_pairs", "width must be at least 1"));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::invalid(
            "gen_shift_pairs",
            format!("density {density} outside [0, 1]"),
        ));
    }
    let mut ds = Dataset::new(
        width,
        width,
        format!("shift-pairs n={n} width={width} shift={shift} density={density}"),
    );
    for _ in 0..n {
        let x: Vector = (0..width)
            .map(|_| if rng.next_f64() < density { 1.0 } else { 0.0 })
            .collect();
        let y = circular_shift(&x, shift);
        ds.push(x, y, None)?;
    }
    Ok(ds)
}

/// Random binary images paired with a right-angle rotation of themselves.
pub fn gen_rotation_pairs(rng: &mut Rng, n: usize, side: usize, angle: u32) -> Result<Dataset> {
    if side == 0 {
        return Err(Error::invalid("gen_rotation_pairs", "side must be at least 1"));
    }
    if !matches!(angle, 0 | 90 | 180 | 270) {
        return Err(Error::invalid(
            "gen_rotation_pairs",
            format!("angle {angle} is not one of 0, 90, 180, 270"),
        ));
    }
    let dim = side * side;
    let mut ds = Dataset::new(
        dim,
        dim,
        format!("rotation-pairs n={n} side={side} angle={angle}"),
    );
    for _ in 0..n {
        let x: Vector = (0..dim)
            .map(|_| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 })
            .collect();
        let y = rotate_image(&x, side, angle)?;
        ds.push(x, y, None)?;
    }
    Ok(ds)
}

/// Gaussian blobs around the given centers, labeled with the one-hot center
/// id. `y` is a copy of `x` (the covariance configuration, where the model
/// learns structure within a single vector).
pub fn gen_blobs(
    rng: &mut Rng,
    n: usize,
    dim: usize,
    centers: &[Vector],
    sigma: f64,
) -> Result<Dataset> {
    if centers.len() < 2 {
        return Err(Error::invalid("gen_blobs", "need at least 2 centers"));
    }
    if sigma < 0.0 {
        return Err(Error::invalid("gen_blobs", format!("sigma {sigma} is negative")));
    }
    for (i, c) in centers.iter().enumerate() {
        if c.len() != dim {
            return Err(Error::shape(
                "gen_blobs",
                format!("dim {dim}"),
                format!("center {i} has len {}", c.len()),
            ));
        }
    }
    let k = centers.len();
    let mut ds = Dataset::new(
        dim,
        dim,
        format!("blobs n={n} dim={dim} k={k} sigma={sigma}"),
    );
    for _ in 0..n {
        let c = rng.next_index(k);
        let x: Vector = centers[c]
            .iter()
            .map(|&m| m + sigma * rng.next_gaussian())
            .collect();
        ds.push(x.clone(), x, Some(one_hot(c, k)))?;
    }
    Ok(ds)
}

/// A single deterministic periodic one-hot sequence for next-symbol
/// prediction: `x_t = onehot(t mod alphabet)`, `y_t = onehot((t+1) mod
/// alphabet)`. Example order carries the temporal order.
pub fn gen_periodic(n: usize, alphabet: usize) -> Result<Dataset> {
    if alphabet == 0 {
        return Err(Error::invalid("gen_periodic", "alphabet must be at least 1"));
    }
    let mut ds = Dataset::new(
        alphabet,
        alphabet,
        format!("periodic n={n} alphabet={alphabet}"),
    );
    for t in 0..n {
        ds.push(
            one_hot(t % alphabet, alphabet),
            one_hot((t + 1) % alphabet, alphabet),
            None,
        )?;
    }
    Ok(ds)
}

const DATASET_MAGIC: &[u8; 4] = b"GND1";

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = Writer::new(DATASET_MAGIC);
    w.u32(ds.len() as u32);
    w.u32(ds.n_x as u32);
    w.u32(ds.n_y as u32);
    let label_len = ds.label_len();
    w.u32(label_len as u32);
    for e in &ds.examples {
        w.f64_slice(&e.x);
        w.f64_slice(&e.y);
        if let Some(l) = &e.label {
            w.f64_slice(l);
        }
    }
    let meta = ds.meta.as_bytes();
    w.u32(meta.len() as u32);
    w.bytes(meta);
    w.write_to(path)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let buf = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut r = Reader::new(&buf, path);
    r.magic(DATASET_MAGIC)?;
    let n = r.len_u32("example")?;
    let n_x = r.len_u32("n_x")?;
    let n_y = r.len_u32("n_y")?;
    let label_len = r.len_u32("label length")?;
    let mut ds = Dataset::new(n_x, n_y, String::new());
    for _ in 0..n {
        let x = r.f64_vec(n_x)?;
        let y = r.f64_vec(n_y)?;
        let label = if label_len > 0 {
            Some(r.f64_vec(label_len)?)
        } else {
            None
        };
        ds.push(x, y, label)?;
    }
    let meta_len = r.len_u32("metadata byte")?;
    ds.meta = r.utf8(meta_len)?;
    r.finish()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn shift_zero_and_full_width_are_identity() {
        let mut rng = Rng::new(1);
        let ds = gen_shift_pairs(&mut rng, 20, 8, 0, 0.5).unwrap();
        for e in &ds.examples {
            assert_eq!(e.x, e.y);
        }
        let mut rng = Rng::new(1);
        let ds = gen_shift_pairs(&mut rng, 20, 8, 8, 0.5).unwrap();
        for e in &ds.examples {
            assert_eq!(e.x, e.y);
        }
    }

    #[test]
    fn shift_then_unshift_recovers_input() {
        let mut rng = Rng::new(7);
        for shift in [-3i64, 1, 5, 13] {
            let ds = gen_shift_pairs(&mut rng, 10, 6, shift, 0.4).unwrap();
            for e in &ds.examples {
                assert_eq!(circular_shift(&e.y, -shift), e.x);
            }
        }
    }

    #[test]
    fn shift_moves_entries_where_expected() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(circular_shift(&v, 1), vec![4.0, 1.0, 2.0, 3.0]);
        assert_eq!(circular_shift(&v, -1), vec![2.0, 3.0, 4.0, 1.0]);
    }

    #[test]
    fn rotation_identities() {
        let mut rng = Rng::new(3);
        let ds = gen_rotation_pairs(&mut rng, 5, 4, 0).unwrap();
        for e in &ds.examples {
            assert_eq!(e.x, e.y);
        }

        let img: Vector = (0..16).map(|i| i as f64).collect();
        let mut r = img.clone();
        for _ in 0..4 {
            r = rotate_image(&r, 4, 90).unwrap();
        }
        assert_eq!(r, img);

        let twice = rotate_image(&rotate_image(&img, 4, 180).unwrap(), 4, 180).unwrap();
        assert_eq!(twice, img);

        // 90 twice equals 180
        let twice90 = rotate_image(&rotate_image(&img, 4, 90).unwrap(), 4, 90).unwrap();
        assert_eq!(twice90, rotate_image(&img, 4, 180).unwrap());
    }

    #[test]
    fn rotation_rejects_odd_angles() {
        let mut rng = Rng::new(3);
        assert!(gen_rotation_pairs(&mut rng, 5, 4, 45).is_err());
        assert!(rotate_image(&[0.0; 16], 4, 30).is_err());
    }

    #[test]
    fn generators_are_deterministic_per_seed() {
        let a = gen_shift_pairs(&mut Rng::new(11), 30, 10, 2, 0.3).unwrap();
        let b = gen_shift_pairs(&mut Rng::new(11), 30, 10, 2, 0.3).unwrap();
        assert_eq!(a, b);
        let c = gen_shift_pairs(&mut Rng::new(12), 30, 10, 2, 0.3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blobs_sigma_zero_hits_centers_exactly() {
        let centers = vec![vec![1.0, -2.0, 0.5], vec![-1.0, 3.0, 2.0]];
        let ds = gen_blobs(&mut Rng::new(5), 40, 3, &centers, 0.0).unwrap();
        for e in &ds.examples {
            let label = e.label.as_ref().unwrap();
            let c = label.iter().position(|&v| v == 1.0).unwrap();
            assert_eq!(e.x, centers[c]);
            assert_eq!(e.y, e.x);
        }
    }

    #[test]
    fn blob_labels_partition_examples() {
        let centers = vec![vec![2.0; 4], vec![-2.0; 4], vec![0.0; 4]];
        let n = 90;
        let ds = gen_blobs(&mut Rng::new(9), n, 4, &centers, 0.1).unwrap();
        let mut counts = [0usize; 3];
        for e in &ds.examples {
            let label = e.label.as_ref().unwrap();
            assert_eq!(label.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(label.iter().filter(|&&v| v == 0.0).count(), 2);
            counts[label.iter().position(|&v| v == 1.0).unwrap()] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), n);
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn blob_group_means_concentrate_on_centers() {
        let centers = vec![vec![2.0; 6], vec![-2.0; 6]];
        let sigma = 0.5;
        let n = 400;
        let k = centers.len();
        let ds = gen_blobs(&mut Rng::new(21), n, 6, &centers, sigma).unwrap();
        for (c, center) in centers.iter().enumerate() {
            let group: Vec<&Example> = ds
                .examples
                .iter()
                .filter(|e| e.label.as_ref().unwrap()[c] == 1.0)
                .collect();
            let m = group.len() as f64;
            for (d, &cd) in center.iter().enumerate() {
                let mean = group.iter().map(|e| e.x[d]).sum::<f64>() / m;
                let bound = 3.0 * sigma / (n as f64 / k as f64).sqrt();
                assert!(
                    (mean - cd).abs() < bound,
                    "group {c} dim {d}: mean {mean} vs center {cd} (bound {bound})"
                );
            }
        }
    }

    #[test]
    fn periodic_sequence_wraps() {
        let ds = gen_periodic(9, 4).unwrap();
        assert_eq!(ds.examples[0].x, one_hot(0, 4));
        assert_eq!(ds.examples[0].y, one_hot(1, 4));
        assert_eq!(ds.examples[3].x, one_hot(3, 4));
        assert_eq!(ds.examples[3].y, one_hot(0, 4));
        assert_eq!(ds.examples[8].x, ds.examples[4].x);
    }

    #[test]
    fn push_rejects_mixed_labeling_and_bad_dims() {
        let mut ds = Dataset::new(2, 2, "t");
        ds.push(vec![0.0; 2], vec![0.0; 2], Some(vec![1.0, 0.0])).unwrap();
        assert!(ds.push(vec![0.0; 2], vec![0.0; 2], None).is_err());
        assert!(ds.push(vec![0.0; 3], vec![0.0; 2], Some(vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn roundtrip_is_bitwise_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.gnd");

        let mut rng = Rng::new(33);
        let mut ds = gen_blobs(&mut rng, 25, 5, &[vec![1.0; 5], vec![-1.0; 5]], 0.7).unwrap();
        ds.meta.push_str(" — résumé ✓"); // non-ASCII metadata survives
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(ds, back);

        // and an unlabeled dataset
        let ds = gen_shift_pairs(&mut rng, 12, 9, 4, 0.5).unwrap();
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);

        // save → load → save is byte-stable
        let bytes1 = fs::read(&path).unwrap();
        save_dataset(&load_dataset(&path).unwrap(), &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes1);
    }

    #[test]
    fn load_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.gnd");
        fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("GND1"), "{err}");
    }

    #[test]
    fn load_rejects_truncation_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.gnd");
        let ds = gen_shift_pairs(&mut Rng::new(2), 6, 5, 1, 0.5).unwrap();
        save_dataset(&ds, &path).unwrap();
        let full = fs::read(&path).unwrap();
        fs::write(&path, &full[..full.len() / 2]).unwrap();
        let err = load_dataset(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("byte"), "no position info: {msg}");
    }

    #[test]
    fn load_rejects_trailing_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trail.gnd");
        let ds = gen_shift_pairs(&mut Rng::new(2), 3, 4, 1, 0.5).unwrap();
        save_dataset(&ds, &path).unwrap();
        let mut full = fs::read(&path).unwrap();
        full.extend_from_slice(b"junk");
        fs::write(&path, &full).unwrap();
        assert!(load_dataset(&path).is_err());
    }
}
