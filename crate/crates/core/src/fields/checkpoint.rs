//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!   magic `PHDC` | format version u32 | kind u32 | bounding radius f64
//!   | kind header | parameter count u64 | parameters as f32
//!
//! Kind tags: 0 nerf-pe, 1 nerf-spe, 2 nerf-hash, 3 gs3d.
//! Kind header, MLP kinds: encoding fields (pe/spe: levels u32; hash:
//! levels, base resolution, table size, feature width, each u32), then
//! hidden width u32, hidden layer count u32, dropout layer index u32.
//! Kind header, gs3d: splat count u32.
//! Parameter order, MLP: hash tables row-major (hash kind only), then per
//! layer weight matrix row-major followed by bias. Parameter order, gs3d:
//! centers row-major, log scales, color logits row-major, opacity logits.

use super::encoding::{EncodingConfig, HashConfig};
use super::mlp::MlpNet;
use super::splats::SplatSet;
use super::{FieldModel, MlpField, ModelKind, SplatField};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"PHDC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

fn kind_tag(kind: ModelKind) -> u32 {
    match kind {
        ModelKind::NerfPe => 0,
        ModelKind::NerfSpe => 1,
        ModelKind::NerfHash => 2,
        ModelKind::Gs3d => 3,
    }
}

pub fn save_checkpoint(path: &Path, model: &FieldModel) -> Result<(), CheckpointError> {
    std::fs::write(path, serialize(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FieldModel, CheckpointError> {
    deserialize(&std::fs::read(path)?)
}

/// Hex sha-256 of a checkpoint file's bytes, recorded in reports so a result
/// can be tied to the exact parameters that produced it.
pub fn checkpoint_digest(path: &Path) -> Result<String, CheckpointError> {
    Ok(crate::report::sha256_file(path)?)
}

pub fn serialize(model: &FieldModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&kind_tag(model.kind()).to_le_bytes());
    out.extend_from_slice(&model.bound().to_le_bytes());

    let mut params: Vec<f32> = Vec::new();
    match model {
        FieldModel::Mlp(m) => {
            match m.net.encoding {
                EncodingConfig::Pe { l } | EncodingConfig::Spe { l } => {
                    out.extend_from_slice(&l.to_le_bytes());
                }
                EncodingConfig::Hash(h) => {
                    for v in [h.levels, h.base_res, h.table_size, h.features] {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            for v in [
                m.net.hidden_width() as u32,
                m.net.hidden_layers() as u32,
                m.net.dropout_layer as u32,
            ] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            if let Some(t) = &m.net.tables {
                params.extend(t.iter());
            }
            for layer in &m.net.layers {
                params.extend(layer.w.iter());
                params.extend(layer.b.iter());
            }
        }
        FieldModel::Splats(s) => {
            out.extend_from_slice(&(s.splats.count() as u32).to_le_bytes());
            params.extend(s.splats.pos.iter());
            params.extend(s.splats.log_scale.iter());
            params.extend(s.splats.color_logit.iter());
            params.extend(s.splats.op_logit.iter());
        }
    }

    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Rd<'a> {
    buf: &'a [u8],
    off: usize,
}

impl<'a> Rd<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.off + n > self.buf.len() {
            return Err(CheckpointError::Format(format!(
                "truncated at byte {} (wanted {n} more of {})",
                self.off,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, CheckpointError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<FieldModel, CheckpointError> {
    let mut rd = Rd { buf: bytes, off: 0 };
    if rd.take(4)? != MAGIC {
        return Err(CheckpointError::Format(
            "bad magic, not a model checkpoint".into(),
        ));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Format(format!(
            "format version {version}, this build reads {VERSION}"
        )));
    }
    let kind = match rd.u32()? {
        0 => ModelKind::NerfPe,
        1 => ModelKind::NerfSpe,
        2 => ModelKind::NerfHash,
        3 => ModelKind::Gs3d,
        k => {
            return Err(CheckpointError::Format(format!(
                "unknown model kind tag {k}"
            )))
        }
    };
    let bound = rd.f64()?;
    if !(bound.is_finite() && bound > 0.0) {
        return Err(CheckpointError::Format(format!(
            "bad bounding radius {bound}"
        )));
    }

    let model = match kind {
        ModelKind::Gs3d => {
            let count = rd.u32()? as usize;
            if count == 0 {
                return Err(CheckpointError::Format("splat count 0".into()));
            }
            let declared = rd.u64()? as usize;
            if declared != count * 8 {
                return Err(CheckpointError::Format(format!(
                    "parameter count {declared} does not match {count} splats"
                )));
            }
            let mut splats = SplatSet::<f32>::new(count, bound, 0);
            for v in splats.pos.iter_mut() {
                *v = rd.f32()?;
            }
            for v in splats.log_scale.iter_mut() {
                *v = rd.f32()?;
            }
            for v in splats.color_logit.iter_mut() {
                *v = rd.f32()?;
            }
            for v in splats.op_logit.iter_mut() {
                *v = rd.f32()?;
            }
            FieldModel::Splats(SplatField { splats, bound })
        }
        _ => {
            let encoding = match kind {
                ModelKind::NerfPe => EncodingConfig::Pe { l: rd.u32()? },
                ModelKind::NerfSpe => EncodingConfig::Spe { l: rd.u32()? },
                _ => EncodingConfig::Hash(HashConfig {
                    levels: rd.u32()?,
                    base_res: rd.u32()?,
                    table_size: rd.u32()?,
                    features: rd.u32()?,
                }),
            };
            encoding
                .validate()
                .map_err(|e| CheckpointError::Format(format!("encoding: {e}")))?;
            let hidden_width = rd.u32()? as usize;
            let hidden_layers = rd.u32()? as usize;
            let dropout_layer = rd.u32()? as usize;
            if hidden_width == 0
                || hidden_layers < 2
                || !(1..hidden_layers).contains(&dropout_layer)
            {
                return Err(CheckpointError::Format(format!(
                    "bad architecture: width {hidden_width}, layers {hidden_layers}, \
                     dropout layer {dropout_layer}"
                )));
            }
            let mut net =
                MlpNet::<f32>::new(encoding, hidden_width, hidden_layers, dropout_layer, 0);
            let declared = rd.u64()? as usize;
            if declared != net.param_count() {
                return Err(CheckpointError::Format(format!(
                    "parameter count {declared} does not match architecture ({})",
                    net.param_count()
                )));
            }
            if let Some(t) = &mut net.tables {
                for v in t.iter_mut() {
                    *v = rd.f32()?;
                }
            }
            for layer in &mut net.layers {
                for v in layer.w.iter_mut() {
                    *v = rd.f32()?;
                }
                for v in layer.b.iter_mut() {
                    *v = rd.f32()?;
                }
            }
            FieldModel::Mlp(MlpField { net, bound, kind })
        }
    };

    if rd.off != bytes.len() {
        return Err(CheckpointError::Format(format!(
            "{} trailing bytes after parameters",
            bytes.len() - rd.off
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn mlp_model(kind: ModelKind, seed: u64) -> FieldModel {
        let encoding = match kind {
            ModelKind::NerfPe => EncodingConfig::Pe { l: 6 },
            ModelKind::NerfSpe => EncodingConfig::Spe { l: 6 },
            _ => EncodingConfig::Hash(HashConfig::default()),
        };
        FieldModel::Mlp(MlpField {
            net: MlpNet::new(encoding, 16, 3, 1, seed),
            bound: 1.5,
            kind,
        })
    }

    #[test]
    fn mlp_roundtrip_is_exact() {
        let dir = tempdir().unwrap();
        for kind in [ModelKind::NerfPe, ModelKind::NerfSpe, ModelKind::NerfHash] {
            let model = mlp_model(kind, 21);
            let path = dir.path().join(format!("{kind}.phdc"));
            save_checkpoint(&path, &model).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(model, back);
        }
    }

    #[test]
    fn splat_roundtrip_is_exact() {
        let dir = tempdir().unwrap();
        let model = FieldModel::Splats(SplatField {
            splats: SplatSet::new(33, 2.0, 4),
            bound: 2.0,
        });
        let path = dir.path().join("gs.phdc");
        save_checkpoint(&path, &model).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), model);
    }

    #[test]
    fn bad_magic_version_kind_are_rejected() {
        let good = serialize(&mlp_model(ModelKind::NerfPe, 1));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(deserialize(&bad), Err(CheckpointError::Format(_))));

        let mut bad = good.clone();
        bad[4] = 99;
        assert!(deserialize(&bad)
            .unwrap_err()
            .to_string()
            .contains("version"));

        let mut bad = good.clone();
        bad[8] = 7;
        assert!(deserialize(&bad).unwrap_err().to_string().contains("kind"));
    }

    #[test]
    fn truncation_and_trailing_bytes_are_rejected() {
        let good = serialize(&mlp_model(ModelKind::NerfHash, 2));
        assert!(deserialize(&good[..good.len() - 3]).is_err());
        let mut long = good.clone();
        long.push(0);
        assert!(deserialize(&long)
            .unwrap_err()
            .to_string()
            .contains("trailing"));
    }

    #[test]
    fn digest_tracks_parameter_changes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.phdc");
        let model = mlp_model(ModelKind::NerfPe, 5);
        save_checkpoint(&path, &model).unwrap();
        let d1 = checkpoint_digest(&path).unwrap();
        save_checkpoint(&path, &model).unwrap();
        assert_eq!(d1, checkpoint_digest(&path).unwrap());

        let mut changed = model.clone();
        if let FieldModel::Mlp(m) = &mut changed {
            m.net.layers[0].b[0] = 0.25;
        }
        save_checkpoint(&path, &changed).unwrap();
        assert_ne!(d1, checkpoint_digest(&path).unwrap());
        assert_eq!(d1.len(), 64);
    }
}
