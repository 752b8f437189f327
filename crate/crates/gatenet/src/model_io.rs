//! Binary model persistence.
//!
//! Three sibling formats, one per architecture, all little-endian and
//! bit-exact on round-trip:
//!
//! * `GNM1` — gated model: magic, version byte, architecture descriptor
//!   (layer sizes as u32, tying byte, three activation codes, loss code
//!   plus one auxiliary real for the hybrid weight), then the packed
//!   parameter blocks in canonical order (`W_x_in, W_y_in, W_h_in`, the
//!   out-matrices when untied, factor biases, output biases).
//! * `GNC1` — clustering model: the gated descriptor and blocks, then
//!   `W_ae` and `b_ae`.
//! * `GNR1` — recurrent model: sizes, then `W_fx, W_fh, W_hf, W_hx,
//!   W_out, b_y, h0`.
//!
//! The stored loss mode makes a gated model file self-contained: loading
//! it recovers everything needed to keep training or to evaluate.

use std::path::Path;

use crate::activations::Activation;
use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::gated::{GatedModel, TyingMode};
use crate::mrnn::MRnnModel;
use crate::training::LossMode;
use crate::variants::ClusteringModel;

pub const GATED_MAGIC: &[u8; 4] = b"GNM1";
pub const CLUSTERING_MAGIC: &[u8; 4] = b"GNC1";
pub const MRNN_MAGIC: &[u8; 4] = b"GNR1";
const FORMAT_VERSION: u8 = 1;

fn loss_code(mode: &LossMode) -> (u8, f64) {
    match mode {
        LossMode::ReconstructX => (0, 0.0),
        LossMode::ReconstructY => (1, 0.0),
        LossMode::Symmetric => (2, 0.0),
        LossMode::CrossEntropyX => (3, 0.0),
        LossMode::Hybrid(w) => (4, *w),
    }
}

fn loss_from_code(code: u8, aux: f64) -> Option<LossMode> {
    match code {
        0 => Some(LossMode::ReconstructX),
        1 => Some(LossMode::ReconstructY),
        2 => Some(LossMode::Symmetric),
        3 => Some(LossMode::CrossEntropyX),
        4 => Some(LossMode::Hybrid(aux)),
        _ => None,
    }
}

fn read_version(r: &mut Reader) -> Result<()> {
    let v = r.u8()?;
    if v != FORMAT_VERSION {
        return Err(r.error(format!("unsupported format version {v}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

fn read_activation(r: &mut Reader) -> Result<Activation> {
    let code = r.u8()?;
    Activation::from_code(code).ok_or_else(|| r.error(format!("unknown activation code {code}")))
}

fn write_gated_body(w: &mut Writer, model: &GatedModel, loss: &LossMode) {
    w.u8(FORMAT_VERSION);
    w.u32(model.n_x as u32);
    w.u32(model.n_y as u32);
    w.u32(model.n_h as u32);
    w.u32(model.n_f as u32);
    w.u8(match model.tying {
        TyingMode::Tied => 0,
        TyingMode::Untied => 1,
    });
    w.u8(model.act_x.code());
    w.u8(model.act_y.code());
    w.u8(model.act_h.code());
    let (code, aux) = loss_code(loss);
    w.u8(code);
    w.f64(aux);
    w.f64_slice(&model.param_vec());
}

fn read_gated_body(r: &mut Reader) -> Result<(GatedModel, LossMode)> {
    read_version(r)?;
    let n_x = r.u32()? as usize;
    let n_y = r.u32()? as usize;
    let n_h = r.u32()? as usize;
    let n_f = r.u32()? as usize;
    let tying = match r.u8()? {
        0 => TyingMode::Tied,
        1 => TyingMode::Untied,
        b => return Err(r.error(format!("unknown tying byte {b}"))),
    };
    let act_x = read_activation(r)?;
    let act_y = read_activation(r)?;
    let act_h = read_activation(r)?;
    let code = r.u8()?;
    let aux = r.f64()?;
    let loss =
        loss_from_code(code, aux).ok_or_else(|| r.error(format!("unknown loss code {code}")))?;
    loss.validate().map_err(|e| r.error(format!("stored loss is invalid: {e}")))?;

    let mut model = GatedModel::zeros(n_x, n_y, n_h, n_f, tying);
    model.act_x = act_x;
    model.act_y = act_y;
    model.act_h = act_h;
    let params = r.f64_vec(model.n_params())?;
    model.set_param_vec(&params).map_err(|e| r.error(format!("parameter block: {e}")))?;
    Ok((model, loss))
}

/// Writes a gated model and its training loss mode.
pub fn save_gated(path: &Path, model: &GatedModel, loss: &LossMode) -> Result<()> {
    let mut w = Writer::new(GATED_MAGIC);
    write_gated_body(&mut w, model, loss);
    w.write_to(path)
}

pub fn load_gated(path: &Path) -> Result<(GatedModel, LossMode)> {
    let buf = read_file(path)?;
    let mut r = Reader::new(&buf, path);
    r.magic(GATED_MAGIC)?;
    let out = read_gated_body(&mut r)?;
    r.finish()?;
    Ok(out)
}

/// Writes a clustering model: the gated block (its loss is always
/// reconstruct-x) followed by the class head.
pub fn save_clustering(path: &Path, model: &ClusteringModel) -> Result<()> {
    let mut w = Writer::new(CLUSTERING_MAGIC);
    write_gated_body(&mut w, &model.gated, &LossMode::ReconstructX);
    w.f64_slice(model.w_ae.data());
    w.f64_slice(&model.b_ae);
    w.write_to(path)
}

pub fn load_clustering(path: &Path) -> Result<ClusteringModel> {
    let buf = read_file(path)?;
    let mut r = Reader::new(&buf, path);
    r.magic(CLUSTERING_MAGIC)?;
    let (gated, _) = read_gated_body(&mut r)?;
    let k = gated.n_y;
    let n_x = gated.n_x;
    let w_ae_data = r.f64_vec(k * n_x)?;
    let b_ae = r.f64_vec(k)?;
    r.finish()?;
    let w_ae = crate::numerics::Matrix::from_vec(k, n_x, w_ae_data);
    Ok(ClusteringModel { gated, w_ae, b_ae })
}

pub fn save_mrnn(path: &Path, model: &MRnnModel) -> Result<()> {
    let mut w = Writer::new(MRNN_MAGIC);
    w.u8(FORMAT_VERSION);
    w.u32(model.n_x as u32);
    w.u32(model.n_h as u32);
    w.u32(model.n_f as u32);
    w.f64_slice(&model.param_vec());
    w.write_to(path)
}

pub fn load_mrnn(path: &Path) -> Result<MRnnModel> {
    let buf = read_file(path)?;
    let mut r = Reader::new(&buf, path);
    r.magic(MRNN_MAGIC)?;
    read_version(&mut r)?;
    let n_x = r.u32()? as usize;
    let n_h = r.u32()? as usize;
    let n_f = r.u32()? as usize;
    let mut model = MRnnModel::zeros(n_x, n_h, n_f);
    let params = r.f64_vec(model.n_params())?;
    model.set_param_vec(&params).map_err(|e| r.error(format!("parameter block: {e}")))?;
    r.finish()?;
    Ok(model)
}

/// Any of the three model kinds, distinguished by magic.
#[derive(Debug, Clone)]
pub enum ModelFile {
    Gated { model: GatedModel, loss: LossMode },
    Clustering(ClusteringModel),
    MRnn(MRnnModel),
}

/// Loads whichever model kind the file holds, keyed by its magic bytes.
pub fn load_any(path: &Path) -> Result<ModelFile> {
    let buf = read_file(path)?;
    if buf.len() >= 4 && &buf[..4] == CLUSTERING_MAGIC {
        return Ok(ModelFile::Clustering(load_clustering(path)?));
    }
    if buf.len() >= 4 && &buf[..4] == MRNN_MAGIC {
        return Ok(ModelFile::MRnn(load_mrnn(path)?));
    }
    let (model, loss) = load_gated(path)?;
    Ok(ModelFile::Gated { model, loss })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use std::fs;

    fn sample_gated(seed: u64, tying: TyingMode) -> GatedModel {
        let mut rng = Rng::new(seed);
        let mut m = GatedModel::init_with_sigma(
            3, 4, 2, 5,
            tying,
            [Activation::Sigmoid, Activation::Identity, Activation::Softplus],
            0.7,
            &mut rng,
        );
        for b in [&mut m.b_fx, &mut m.b_fy, &mut m.b_fh, &mut m.b_x, &mut m.b_y, &mut m.b_h] {
            for v in b.iter_mut() {
                *v = rng.next_gaussian();
            }
        }
        m
    }

    #[test]
    fn gated_roundtrip_is_bitwise_for_both_tyings() {
        let dir = tempfile::tempdir().unwrap();
        for (i, tying) in [TyingMode::Tied, TyingMode::Untied].into_iter().enumerate() {
            let path = dir.path().join(format!("m{i}.gnm"));
            let model = sample_gated(7 + i as u64, tying);
            let loss = LossMode::Hybrid(0.25);
            save_gated(&path, &model, &loss).unwrap();
            let (loaded, loaded_loss) = load_gated(&path).unwrap();
            assert_eq!(loaded, model);
            assert_eq!(loaded_loss, loss);
            // save → load → save is byte-stable
            let bytes1 = fs::read(&path).unwrap();
            save_gated(&path, &loaded, &loaded_loss).unwrap();
            assert_eq!(fs::read(&path).unwrap(), bytes1);
        }
    }

    #[test]
    fn all_loss_modes_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gnm");
        let model = sample_gated(9, TyingMode::Tied);
        for loss in [
            LossMode::ReconstructX,
            LossMode::ReconstructY,
            LossMode::Symmetric,
            LossMode::CrossEntropyX,
            LossMode::Hybrid(0.5),
        ] {
            save_gated(&path, &model, &loss).unwrap();
            assert_eq!(load_gated(&path).unwrap().1, loss);
        }
    }

    #[test]
    fn clustering_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gnc");
        let mut rng = Rng::new(11);
        let model = ClusteringModel::init_with_sigma(5, 3, 2, 4, Activation::Sigmoid, 0.6, &mut rng);
        save_clustering(&path, &model).unwrap();
        let loaded = load_clustering(&path).unwrap();
        assert_eq!(loaded, model);
        let bytes1 = fs::read(&path).unwrap();
        save_clustering(&path, &loaded).unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes1);
    }

    #[test]
    fn mrnn_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gnr");
        let mut rng = Rng::new(13);
        let mut model = MRnnModel::init_with_sigma(3, 4, 5, 0.8, &mut rng);
        for v in model.h0.iter_mut() {
            *v = rng.next_gaussian();
        }
        save_mrnn(&path, &model).unwrap();
        let loaded = load_mrnn(&path).unwrap();
        assert_eq!(loaded, model);
        let bytes1 = fs::read(&path).unwrap();
        save_mrnn(&path, &loaded).unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes1);
    }

    #[test]
    fn load_any_distinguishes_the_three_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::new(17);

        let g = sample_gated(17, TyingMode::Tied);
        let gp = dir.path().join("g.bin");
        save_gated(&gp, &g, &LossMode::Symmetric).unwrap();
        assert!(matches!(load_any(&gp).unwrap(), ModelFile::Gated { .. }));

        let c = ClusteringModel::init_with_sigma(4, 2, 2, 3, Activation::Identity, 0.5, &mut rng);
        let cp = dir.path().join("c.bin");
        save_clustering(&cp, &c).unwrap();
        assert!(matches!(load_any(&cp).unwrap(), ModelFile::Clustering(_)));

        let m = MRnnModel::init_with_sigma(2, 3, 2, 0.5, &mut rng);
        let mp = dir.path().join("r.bin");
        save_mrnn(&mp, &m).unwrap();
        assert!(matches!(load_any(&mp).unwrap(), ModelFile::MRnn(_)));
    }

    #[test]
    fn wrong_magic_is_rejected_with_the_expected_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, b"NOPE\x01").unwrap();
        let err = load_gated(&path).unwrap_err().to_string();
        assert!(err.contains("GNM1"), "error was: {err}");
    }

    #[test]
    fn truncation_and_trailing_garbage_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gnm");
        let model = sample_gated(21, TyingMode::Untied);
        save_gated(&path, &model, &LossMode::Symmetric).unwrap();
        let full = fs::read(&path).unwrap();

        fs::write(&path, &full[..full.len() - 3]).unwrap();
        let err = load_gated(&path).unwrap_err().to_string();
        assert!(err.contains("byte"), "error should carry an offset: {err}");

        let mut extended = full.clone();
        extended.push(0);
        fs::write(&path, &extended).unwrap();
        assert!(load_gated(&path).is_err());
    }

    #[test]
    fn bad_descriptor_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gnm");
        let model = sample_gated(23, TyingMode::Tied);
        save_gated(&path, &model, &LossMode::Symmetric).unwrap();
        let full = fs::read(&path).unwrap();

        // version byte sits right after the magic
        let mut bad = full.clone();
        bad[4] = 9;
        fs::write(&path, &bad).unwrap();
        assert!(load_gated(&path).unwrap_err().to_string().contains("version"));

        // tying byte follows the four u32 sizes
        let mut bad = full.clone();
        bad[4 + 1 + 16] = 7;
        fs::write(&path, &bad).unwrap();
        assert!(load_gated(&path).unwrap_err().to_string().contains("tying"));

        // activation code after tying
        let mut bad = full.clone();
        bad[4 + 1 + 16 + 1] = 200;
        fs::write(&path, &bad).unwrap();
        assert!(load_gated(&path).unwrap_err().to_string().contains("activation"));

        // loss code after the three activations
        let mut bad = full;
        bad[4 + 1 + 16 + 1 + 3] = 99;
        fs::write(&path, &bad).unwrap();
        assert!(load_gated(&path).unwrap_err().to_string().contains("loss"));
    }
}
