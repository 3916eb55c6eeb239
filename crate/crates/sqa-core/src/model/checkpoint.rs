//! Self-describing named-tensor checkpoint container.
//!
//! Layout: magic `TNSR`, version u32=1 LE, meta length u32 LE + meta JSON
//! (carries the model configuration plus caller metadata), tensor count
//! u32 LE, then per tensor: name (u16 LE length + bytes), rank u8, dims
//! u32 LE each, payload f32 LE.
//!
//! Parameters are kept f32-representable at rest, so save -> load -> forward
//! is bitwise identical to forward on the saved model.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::params::ModelParams;
use super::ModelConfig;

pub const TNSR_MAGIC: [u8; 4] = *b"TNSR";
pub const TNSR_VERSION: u32 = 1;

#[derive(Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: serde_json::Value,
    /// Tensors beyond the model parameters (optimizer state and the like).
    pub extra: BTreeMap<String, Tensor>,
}

/// Writes the model plus optional extra tensors. `meta_extra` must be a JSON
/// object; the model configuration is stored under the `config` key.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    meta_extra: &serde_json::Value,
    extra_tensors: &[(String, &Tensor)],
) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);

    let mut meta = match meta_extra {
        serde_json::Value::Object(m) => m.clone(),
        serde_json::Value::Null => serde_json::Map::new(),
        _ => {
            return Err(Error::Config("checkpoint metadata must be a JSON object".into()));
        }
    };
    meta.insert(
        "config".into(),
        serde_json::to_value(params.cfg).expect("config serializes"),
    );
    let meta_bytes = serde_json::to_vec(&serde_json::Value::Object(meta)).expect("meta serializes");

    let named = params.named_tensors();
    let total = named.len() + extra_tensors.len();

    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(&TNSR_MAGIC).map_err(io_err)?;
    w.write_all(&TNSR_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(meta_bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&meta_bytes).map_err(io_err)?;
    w.write_all(&(total as u32).to_le_bytes()).map_err(io_err)?;
    for (name, tensor) in named.iter().map(|(n, t)| (n.as_str(), *t)).chain(
        extra_tensors.iter().map(|(n, t)| (n.as_str(), *t)),
    ) {
        write_tensor(&mut w, name, tensor, path)?;
    }
    w.flush().map_err(io_err)
}

fn write_tensor(w: &mut impl Write, name: &str, t: &Tensor, path: &Path) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    let name_bytes = name.as_bytes();
    w.write_all(&(name_bytes.len() as u16).to_le_bytes()).map_err(io_err)?;
    w.write_all(name_bytes).map_err(io_err)?;
    w.write_all(&[t.shape().len() as u8]).map_err(io_err)?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
    }
    for &v in t.data() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);
    let file = File::open(path).map_err(io_err)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if magic != TNSR_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
            expected: TNSR_MAGIC,
        });
    }
    let version = read_u32(&mut r, path)?;
    if version != TNSR_VERSION {
        return Err(Error::BadVersion {
            path: path.into(),
            found: version,
            expected: TNSR_VERSION,
        });
    }
    let meta_len = read_u32(&mut r, path)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes).map_err(io_err)?;
    let meta: serde_json::Value = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Manifest {
        path: path.into(),
        line: 0,
        detail: format!("invalid checkpoint metadata: {e}"),
    })?;
    let cfg: ModelConfig = serde_json::from_value(
        meta.get("config")
            .cloned()
            .ok_or_else(|| Error::MissingTensor {
                name: "config (metadata)".into(),
            })?,
    )
    .map_err(|e| Error::Config(format!("invalid model config in checkpoint: {e}")))?;

    let n_tensors = read_u32(&mut r, path)? as usize;
    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..n_tensors {
        let (name, tensor) = read_tensor(&mut r, path)?;
        tensors.insert(name, tensor);
    }

    let mut params = ModelParams::init(&cfg, 0).zeros_like();
    for (name, dst) in params.named_tensors_mut() {
        let src = tensors.remove(&name).ok_or(Error::MissingTensor { name })?;
        if src.shape() != dst.shape() {
            return Err(Error::Shape {
                context: "load_checkpoint".into(),
                detail: format!("tensor shape {:?} != expected {:?}", src.shape(), dst.shape()),
            });
        }
        *dst = src;
    }
    Ok(Checkpoint {
        params,
        meta,
        extra: tensors,
    })
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_tensor(r: &mut impl Read, path: &Path) -> Result<(String, Tensor)> {
    let io_err = |e| Error::io(path, e);
    let mut len_buf = [0u8; 2];
    r.read_exact(&mut len_buf).map_err(io_err)?;
    let name_len = u16::from_le_bytes(len_buf) as usize;
    let mut name_bytes = vec![0u8; name_len];
    r.read_exact(&mut name_bytes).map_err(io_err)?;
    let name = String::from_utf8(name_bytes).map_err(|_| Error::Manifest {
        path: path.into(),
        line: 0,
        detail: "tensor name is not UTF-8".into(),
    })?;
    let mut rank = [0u8; 1];
    r.read_exact(&mut rank).map_err(io_err)?;
    let mut shape = Vec::with_capacity(rank[0] as usize);
    for _ in 0..rank[0] {
        shape.push(read_u32(r, path)? as usize);
    }
    let count: usize = shape.iter().product();
    let mut payload = vec![0u8; count * 4];
    r.read_exact(&mut payload).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated {
                path: path.into(),
                expected: count * 4,
                found: 0,
            }
        } else {
            Error::io(path, e)
        }
    })?;
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("checkpoint tensor {name}"),
        });
    }
    Ok((name, Tensor::from_vec(&shape, data)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, ModelInput};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("sqa-ckpt-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 9,
            max_len: 16,
            layers: 2,
            model_dim: 8,
            heads: 2,
            ffn_dim: 12,
            local_window: 3,
            dropout: 0.0,
        }
    }

    #[test]
    fn save_load_forward_is_bitwise_identical() {
        let params = ModelParams::init(&cfg(), 77);
        let path = tmp("model.tnsr");
        save_checkpoint(&path, &params, &serde_json::json!({"note": "test"}), &[]).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params, params);
        assert_eq!(loaded.meta["note"], "test");

        let input = ModelInput::new(
            vec![0, 1, 2, 3, 4],
            vec![false, true, true, true, false],
            vec![true, false, false, false, false],
            None,
        )
        .unwrap();
        let (s1, e1) = forward(&params, &input).unwrap();
        let (s2, e2) = forward(&loaded.params, &input).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(e1, e2);

        // Re-saving the loaded model produces identical bytes.
        let path2 = tmp("model2.tnsr");
        save_checkpoint(&path2, &loaded.params, &serde_json::json!({"note": "test"}), &[]).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn extra_tensors_roundtrip() {
        let params = ModelParams::init(&cfg(), 3);
        let extra = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]);
        let path = tmp("extra.tnsr");
        save_checkpoint(
            &path,
            &params,
            &serde_json::Value::Null,
            &[("opt.step_scale".to_string(), &extra)],
        )
        .unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.extra.len(), 1);
        assert_eq!(loaded.extra["opt.step_scale"], extra);
    }

    #[test]
    fn corrupted_files_error_distinctly() {
        let params = ModelParams::init(&cfg(), 1);
        let path = tmp("corrupt.tnsr");
        save_checkpoint(&path, &params, &serde_json::Value::Null, &[]).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::BadMagic { .. })));

        let mut bad_version = bytes.clone();
        bad_version[4] = 42;
        std::fs::write(&path, &bad_version).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::BadVersion { .. })));

        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
