//! Versioned binary checkpoint format.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic        8 bytes   "BEATCKPT"
//! version      u32       currently 1
//! meta_len     u32       byte length of the metadata block
//! meta         UTF-8     "key=value" lines, sorted by key, '\n'-terminated
//! count        u32       number of tensors
//! count × {
//!   name_len   u32
//!   name       UTF-8     dotted parameter path, e.g. "generator.lstm.w_hidden"
//!   rank       u32
//!   dims       u64 × rank
//!   values     f64 × product(dims), row-major
//! }
//! ```
//!
//! Values are written as raw IEEE-754 bits, so a save/load cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Module, Tensor};

pub const MAGIC: &[u8; 8] = b"BEATCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint has no tensor named {0:?}")]
    Missing(String),
    #[error("tensor {name:?}: checkpoint shape {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("checkpoint metadata: {0}")]
    Meta(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_module<M: Module + ?Sized>(module: &M, meta: BTreeMap<String, String>) -> Self {
        let mut tensors = Vec::new();
        module.visit_params(&mut |name, p| tensors.push((name.to_string(), p.value.clone())));
        Self { meta, tensors }
    }

    /// Copies every tensor the module names into it; shapes must match.
    pub fn load_into<M: Module + ?Sized>(&self, module: &mut M) -> Result<(), CheckpointError> {
        let mut result = Ok(());
        module.visit_params_mut(&mut |name, p| {
            if result.is_err() {
                return;
            }
            match self.tensors.iter().find(|(n, _)| n == name) {
                None => result = Err(CheckpointError::Missing(name.to_string())),
                Some((_, t)) if t.shape() != p.value.shape() => {
                    result = Err(CheckpointError::ShapeMismatch {
                        name: name.to_string(),
                        found: t.shape().to_vec(),
                        expected: p.value.shape().to_vec(),
                    })
                }
                Some((_, t)) => {
                    p.value = t.clone();
                    p.zero_grad();
                }
            }
        });
        result
    }

    pub fn meta_value(&self, key: &str) -> Result<&str, CheckpointError> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::Meta(format!("missing key {key:?}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        let raw = self.meta_value(key)?;
        raw.parse()
            .map_err(|_| CheckpointError::Meta(format!("bad value {raw:?} for {key:?}")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let mut meta = String::new();
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(CheckpointError::Meta(format!("unencodable entry {k:?}")));
            }
            meta.push_str(&format!("{k}={v}\n"));
        }
        write_u32(&mut w, meta.len())?;
        w.write_all(meta.as_bytes())?;
        write_u32(&mut w, self.tensors.len())?;
        for (name, t) in &self.tensors {
            write_u32(&mut w, name.len())?;
            w.write_all(name.as_bytes())?;
            write_u32(&mut w, t.rank())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let meta_text = read_string(&mut r, meta_len)?;
        let mut meta = BTreeMap::new();
        for line in meta_text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CheckpointError::Malformed(format!("metadata line {line:?}")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let count = read_u32(&mut r)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let name = read_string(&mut r, name_len)?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| CheckpointError::Malformed(format!("tensor {name:?} too large")))?;
            let mut bytes = vec![
                0u8;
                n.checked_mul(8)
                    .ok_or_else(|| CheckpointError::Malformed("overflow".into()))?
            ];
            r.read_exact(&mut bytes)?;
            let values = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = Tensor::from_vec(&shape, values).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            tensors.push((name, t));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(CheckpointError::Malformed("trailing bytes after last tensor".into()));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<(), CheckpointError> {
    let v = u32::try_from(v).map_err(|_| CheckpointError::Malformed(format!("length {v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String, CheckpointError> {
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(CheckpointError::Io(io::ErrorKind::UnexpectedEof.into()));
    }
    String::from_utf8(buf).map_err(|_| CheckpointError::Malformed("non-UTF-8 text".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{Dense, Lstm};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = crate::rng::seeded(9);
        let mut layer = Dense::new(4, 3, &mut rng);
        layer.weight.value.data_mut()[0] = f64::MIN_POSITIVE / 3.0;
        layer.weight.value.data_mut()[1] = -0.0;
        let mut meta = BTreeMap::new();
        meta.insert("kind".to_string(), "dense".to_string());
        let ckpt = Checkpoint::from_module(&layer, meta);

        let mut bytes = Vec::new();
        ckpt.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let back = Checkpoint::read_from(&bytes[..]).unwrap();
        assert_eq!(back.meta, ckpt.meta);

        let mut other = Dense::new(4, 3, &mut rng);
        back.load_into(&mut other).unwrap();
        let bits = |m: &Dense| m.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&layer), bits(&other));

        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn rejects_corruption() {
        let mut rng = crate::rng::seeded(9);
        let ckpt = Checkpoint::from_module(&Dense::new(2, 2, &mut rng), BTreeMap::new());
        let mut bytes = Vec::new();
        ckpt.write_to(&mut bytes).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Checkpoint::read_from(&bad_magic[..]),
            Err(CheckpointError::BadMagic)
        ));

        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(matches!(
            Checkpoint::read_from(&bad_version[..]),
            Err(CheckpointError::UnsupportedVersion(9))
        ));

        assert!(Checkpoint::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(Checkpoint::read_from(&trailing[..]).is_err());
    }

    #[test]
    fn load_into_checks_names_and_shapes() {
        let mut rng = crate::rng::seeded(9);
        let ckpt = Checkpoint::from_module(&Dense::new(2, 2, &mut rng), BTreeMap::new());
        let mut wrong_shape = Dense::new(3, 2, &mut rng);
        assert!(matches!(
            ckpt.load_into(&mut wrong_shape),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
        let mut wrong_kind = Lstm::zeroed(1, 1);
        assert!(matches!(
            ckpt.load_into(&mut wrong_kind),
            Err(CheckpointError::Missing(_))
        ));
    }
}
