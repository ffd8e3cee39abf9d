//! Checkpoint files.
//!
//! ```text
//! offset  field
//! 0       magic b"HPUNCKPT"                           8 bytes
//! 8       version, u32 LE (currently 1)
//! 12      spec length S, u32 LE
//! 16      model spec, canonical key-value text (TOML), S bytes UTF-8
//! 16+S    manifest length M, u32 LE
//! 20+S    manifest, M bytes UTF-8: one line per parameter,
//!         "<name> <d0> <d1> <d2> <d3>\n", in model order
//! 20+S+M  one tensor dump per manifest line, concatenated
//! ```

use std::path::Path;

use super::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HPUNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn manifest<T: Real>(model: &Model<T>) -> String {
    let mut out = String::new();
    for p in model.params().iter() {
        let [a, b, c, d] = p.tensor.dims();
        out.push_str(&format!("{} {a} {b} {c} {d}\n", p.name));
    }
    out
}

pub fn checkpoint_bytes<T: Real>(model: &Model<T>) -> Vec<u8> {
    let spec = model.spec().to_text();
    let manifest = manifest(model);
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    buf.extend_from_slice(spec.as_bytes());
    buf.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    buf.extend_from_slice(manifest.as_bytes());
    for p in model.params().iter() {
        buf.extend_from_slice(&p.tensor.to_bytes());
    }
    buf
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &checkpoint_bytes(model))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(corrupt(format!("truncated {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn text(&mut self, what: &str) -> Result<&'a str> {
        let n = self.u32(what)? as usize;
        std::str::from_utf8(self.take(n, what)?).map_err(|_| corrupt(format!("{what} is not UTF-8")))
    }
}

fn corrupt(reason: String) -> Error {
    Error::CorruptHeader {
        what: "checkpoint".into(),
        reason,
    }
}

/// Reads a checkpoint. When `expected` is given, the embedded spec must equal it.
pub fn load_checkpoint<T: Real>(bytes: &[u8], expected: Option<&ModelSpec>) -> Result<Model<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let spec_text = r.text("spec")?;
    let spec = ModelSpec::from_text(spec_text).map_err(|e| corrupt(format!("embedded spec: {e}")))?;
    if let Some(want) = expected {
        if want != &spec {
            let diff = if want.scale != spec.scale {
                format!("checkpoint scale {} but {} requested", spec.scale, want.scale)
            } else {
                "checkpoint spec differs from the requested model".to_string()
            };
            return Err(Error::TopologyMismatch(diff));
        }
    }
    let manifest_text = r.text("manifest")?;
    let mut model = Model::<T>::build(&spec, 0)?;
    let expected_manifest = manifest(&model);
    if manifest_text != expected_manifest {
        return Err(Error::TopologyMismatch(
            "layer manifest does not match the topology built from the embedded spec".into(),
        ));
    }
    let mut rest = &bytes[r.pos..];
    for p in model.params_mut().iter_mut() {
        let t = Tensor::<T>::read_from(&mut rest).map_err(|e| match e {
            Error::CorruptHeader { reason, .. } => corrupt(format!("tensor {}: {reason}", p.name)),
            other => other,
        })?;
        if t.dims() != p.tensor.dims() {
            return Err(Error::TopologyMismatch(format!(
                "tensor {} has dims {:?}",
                p.name,
                t.dims()
            )));
        }
        p.tensor.data_mut().copy_from_slice(t.data());
    }
    if !rest.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", rest.len())));
    }
    Ok(model)
}

impl<T: Real> Model<T> {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(self, path)
    }

    pub fn load(path: &Path, expected: Option<&ModelSpec>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        load_checkpoint(&bytes, expected)
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        checkpoint_bytes(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip_exactly() {
        let model = Model::<f32>::build(&ModelSpec::toy(2), 7).unwrap();
        let bytes = model.to_checkpoint_bytes();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        let back = load_checkpoint::<f32>(&bytes, Some(model.spec())).unwrap();
        assert_eq!(back.to_checkpoint_bytes(), bytes);
    }

    #[test]
    fn scale_mismatch_is_topology_error() {
        let bytes = Model::<f32>::build(&ModelSpec::toy(2), 0)
            .unwrap()
            .to_checkpoint_bytes();
        let err = load_checkpoint::<f32>(&bytes, Some(&ModelSpec::toy(3))).err().unwrap();
        assert!(matches!(err, Error::TopologyMismatch(ref m) if m.contains("scale 2")));
    }

    #[test]
    fn damaged_files_are_rejected() {
        let mut bytes = Model::<f32>::build(&ModelSpec::toy(2), 0)
            .unwrap()
            .to_checkpoint_bytes();
        for cut in [4, 20, bytes.len() - 3] {
            let err = load_checkpoint::<f32>(&bytes[..cut], None).err().unwrap();
            assert!(matches!(err, Error::CorruptHeader { .. }), "cut {cut}: {err}");
        }
        bytes.push(0);
        assert!(matches!(
            load_checkpoint::<f32>(&bytes, None),
            Err(Error::CorruptHeader { .. })
        ));
        bytes[0] = b'X';
        assert!(load_checkpoint::<f32>(&bytes, None).is_err());
    }
}
