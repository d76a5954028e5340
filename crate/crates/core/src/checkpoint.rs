//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `SSDC`, `u32` version, `u8` variant code,
//! component architecture strings, alphabet, preprocessing and
//! eight-direction settings, then named `f32` tensors. Strings are a `u32`
//! byte length followed by UTF-8.

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eightdir::EightDirConfig;
use crate::features::Featurizer;
use crate::ink::LabelAlphabet;
use crate::model::{Architecture, Model, ModelError, VariantKind};
use crate::netspec;
use crate::preprocess::{Interpolation, PreprocessConfig};

pub const MAGIC: &[u8; 4] = b"SSDC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {VERSION})")]
    VersionMismatch { found: u32 },
    #[error("corrupt tensor {name:?}: {message}")]
    CorruptTensor { name: String, message: String },
    #[error("malformed checkpoint header: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A trained model with everything needed to featurize raw ink for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub alphabet: LabelAlphabet,
    pub featurizer: Featurizer,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len())?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<usize> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn str(&mut self) -> Option<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }
}

fn header(what: &str) -> CheckpointError {
    CheckpointError::Malformed(format!("truncated or invalid {what}"))
}

impl Checkpoint {
    pub fn new(model: Model<f32>, alphabet: LabelAlphabet, featurizer: Featurizer) -> Self {
        Checkpoint {
            model,
            alphabet,
            featurizer,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(MAGIC.to_vec());
        w.u32(VERSION as usize);
        w.0.push(self.model.kind().code());
        let arch = self.model.architecture();
        let comps = arch.components();
        w.u32(comps.len());
        for (role, spec) in comps {
            w.str(role);
            w.str(&netspec::render(spec));
        }
        w.u32(self.alphabet.len());
        for e in self.alphabet.entries() {
            w.str(e);
        }
        let p = &self.featurizer.preprocess;
        w.f64(p.max_gap);
        w.str(p.method.as_str());
        w.f64(p.drop_prob);
        w.0.extend_from_slice(&p.seed.to_le_bytes());
        w.u32(self.featurizer.map_size);
        w.u32(self.featurizer.stack_depth);
        let e = &self.featurizer.eightdir;
        w.u32(e.grid);
        w.f64(e.sigma);
        w.f64(e.truncate);
        w.u32(e.samples);
        w.f64(e.virtual_weight);
        let names = self.model.param_names();
        let params = self.model.params();
        w.u32(params.len());
        for (name, t) in names.iter().zip(params) {
            w.str(name);
            w.u32(t.shape().len());
            for &d in t.shape() {
                w.u32(d);
            }
            w.u32(t.len());
            for v in t.data() {
                w.0.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4) != Some(MAGIC.as_slice()) {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32().ok_or_else(|| header("version"))? as u32;
        if version != VERSION {
            return Err(CheckpointError::VersionMismatch { found: version });
        }
        let kind = r
            .u8()
            .and_then(VariantKind::from_code)
            .ok_or_else(|| header("variant"))?;
        let n = r.u32().ok_or_else(|| header("component count"))?;
        let mut comps: [Option<String>; 4] = Default::default();
        for _ in 0..n {
            let role = r.str().ok_or_else(|| header("component role"))?;
            let spec = r.str().ok_or_else(|| header("architecture string"))?;
            let slot = ["dcnn", "dir_proj", "rep_proj", "head"]
                .iter()
                .position(|&x| x == role)
                .ok_or_else(|| CheckpointError::Malformed(format!("unknown component {role:?}")))?;
            comps[slot] = Some(spec);
        }
        let head = comps[3].as_deref().ok_or_else(|| header("head architecture"))?;
        let arch = Architecture::from_strings(
            kind,
            comps[0].as_deref(),
            comps[1].as_deref(),
            comps[2].as_deref(),
            head,
        )?;
        let n = r.u32().ok_or_else(|| header("alphabet size"))?;
        let entries = (0..n)
            .map(|_| r.str().ok_or_else(|| header("alphabet entry")))
            .collect::<Result<Vec<_>, _>>()?;
        let alphabet =
            LabelAlphabet::new(entries).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let preprocess = PreprocessConfig {
            max_gap: r.f64().ok_or_else(|| header("max_gap"))?,
            method: r
                .str()
                .and_then(|s| s.parse::<Interpolation>().ok())
                .ok_or_else(|| header("interpolation"))?,
            drop_prob: r.f64().ok_or_else(|| header("drop_prob"))?,
            seed: r.u64().ok_or_else(|| header("seed"))?,
        };
        let map_size = r.u32().ok_or_else(|| header("map size"))?;
        let stack_depth = r.u32().ok_or_else(|| header("stack depth"))?;
        let eightdir = EightDirConfig {
            grid: r.u32().ok_or_else(|| header("grid"))?,
            sigma: r.f64().ok_or_else(|| header("sigma"))?,
            truncate: r.f64().ok_or_else(|| header("truncate"))?,
            samples: r.u32().ok_or_else(|| header("samples"))?,
            virtual_weight: r.f64().ok_or_else(|| header("virtual weight"))?,
        };
        let featurizer = Featurizer {
            kind,
            preprocess,
            map_size,
            stack_depth,
            eightdir,
        };
        let mut model = Model::<f32>::new(arch, 0)?;
        let names = model.param_names();
        let count = r.u32().ok_or_else(|| header("tensor count"))?;
        if count != names.len() {
            return Err(CheckpointError::CorruptTensor {
                name: String::new(),
                message: format!("{count} tensors stored, architecture has {}", names.len()),
            });
        }
        let mut params = model.params_mut();
        for (expected, t) in names.iter().zip(params.iter_mut()) {
            let corrupt = |message: &str| CheckpointError::CorruptTensor {
                name: expected.clone(),
                message: message.to_string(),
            };
            let name = r.str().ok_or_else(|| corrupt("truncated name"))?;
            if &name != expected {
                return Err(corrupt(&format!("found {name:?} in its place")));
            }
            let ndim = r.u32().ok_or_else(|| corrupt("truncated shape"))?;
            let dims = (0..ndim)
                .map(|_| r.u32().ok_or_else(|| corrupt("truncated shape")))
                .collect::<Result<Vec<_>, _>>()?;
            if dims != t.shape() {
                return Err(corrupt(&format!("shape {dims:?}, expected {:?}", t.shape())));
            }
            let len = r.u32().ok_or_else(|| corrupt("truncated length"))?;
            if len != t.len() {
                return Err(corrupt(&format!("{len} values, expected {}", t.len())));
            }
            let raw = r
                .take(len * 4)
                .ok_or_else(|| corrupt(&format!("data truncated at byte {}", bytes.len())))?;
            for (dst, c) in t.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
                *dst = f32::from_le_bytes(c.try_into().unwrap());
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::CorruptTensor {
                name: String::new(),
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Checkpoint {
            model,
            alphabet,
            featurizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Hex SHA-256 of serialized checkpoint bytes.
pub fn checkpoint_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;

    fn sample(kind: VariantKind) -> Checkpoint {
        let model = build_model(kind, 3, 5).unwrap();
        let alphabet = LabelAlphabet::new(["a", "b", "c"]).unwrap();
        let featurizer = Featurizer::for_architecture(model.architecture(), PreprocessConfig::default()).unwrap();
        Checkpoint::new(model, alphabet, featurizer)
    }

    #[test]
    fn round_trip_is_byte_stable() {
        for kind in VariantKind::ALL {
            let ck = sample(kind);
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = sample(VariantKind::Nn8).to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::VersionMismatch { found: 9 })
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 10]),
            Err(CheckpointError::CorruptTensor { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(CheckpointError::CorruptTensor { .. })));
    }
}
