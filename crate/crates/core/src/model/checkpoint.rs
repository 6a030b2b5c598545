//! Binary checkpoint format.
//!
//! ```text
//! b"ACKP" | u32 version | u64 len | config JSON | u32 count |
//!   count × (u32 len | name | u32 ndim | ndim × u64 dim | f32 data)
//! ```
//!
//! Integers and floats are little-endian; tensors appear in sorted-name
//! order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::decoder::DecoderModel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"ACKP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &DecoderModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let json = serde_json::to_vec(model.config())?;
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (name, p) in model.params() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let shape = p.tensor.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in p.tensor.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<DecoderModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("bad magic; not a checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let json_len = r.len()?;
    let config: ModelConfig = serde_json::from_slice(r.take(json_len)?)
        .map_err(|e| Error::Checkpoint(format!("bad config header: {e}")))?;
    let count = r.u32()?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        if ndim == 0 || ndim > 4 {
            return Err(Error::Checkpoint(format!("tensor `{name}` has {ndim} axes")));
        }
        let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint("shape overflow".into()))?;
        let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::Checkpoint("shape overflow".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.insert(name, Tensor::new(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    DecoderModel::from_tensors(&config, tensors)
}

pub fn save_checkpoint(model: &DecoderModel, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<DecoderModel> {
    let bytes = fs::read(path).map_err(|_| Error::NotFound {
        what: "checkpoint",
        path: path.to_path_buf(),
    })?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and checks it was written for `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<DecoderModel> {
    let model = load_checkpoint(path)?;
    if model.config() != expected {
        return Err(Error::Checkpoint(format!(
            "{} was saved with a different model config",
            path.display()
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;
    use crate::tensor::Rng;

    fn sample() -> DecoderModel {
        build_model(&ModelConfig::desk_char(), &mut Rng::new(3)).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = sample();
        let back = decode_checkpoint(&encode_checkpoint(&m).unwrap()).unwrap();
        assert_eq!(back.config(), m.config());
        for (name, p) in m.params() {
            let q = back.param(name).unwrap();
            assert!(p.tensor.data().iter().zip(q.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn corrupt_and_truncated_files_rejected() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).unwrap_err().to_string().contains("magic"));
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(decode_checkpoint(&wrong_version).unwrap_err().to_string().contains("version"));
        let e = decode_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(e.to_string().contains("truncated"), "{e}");
    }

    #[test]
    fn wrong_config_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        let other = ModelConfig {
            d_inner: 32,
            ..ModelConfig::desk_char()
        };
        assert!(load_checkpoint_for(&path, &other).is_err());
        assert!(matches!(
            load_checkpoint(&dir.path().join("missing")),
            Err(Error::NotFound { .. })
        ));
    }
}
