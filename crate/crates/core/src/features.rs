//! Per-sample model inputs and the on-disk feature cache.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eightdir::{extract_with, DirFeature, EightDirConfig, DIRECTIONS};
use crate::ink::{Dataset, InkCharacter, InkError};
use crate::model::{Architecture, VariantKind};
use crate::nn::{chw_to_hwc, Scalar};
use crate::preprocess::{augment_drop_points, preprocess, PreprocessConfig, PreprocessError};
use crate::stroke_maps::{build_stack, to_static_image, BinaryMap, RasterError, StrokeMapStack};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Ink(#[from] InkError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("unsupported input geometry: {0}")]
    Geometry(String),
    #[error("feature cache is corrupt: {0}")]
    CorruptCache(String),
    #[error("feature cache key {found} does not match configuration {expected}")]
    StaleCache { expected: String, found: String },
}

/// Which inputs a variant consumes and how they are produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    pub kind: VariantKind,
    pub preprocess: PreprocessConfig,
    pub map_size: usize,
    pub stack_depth: usize,
    pub eightdir: EightDirConfig,
}

/// The feature kinds a sample carries; absent kinds are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub stack: Option<StrokeMapStack>,
    pub image: Option<BinaryMap>,
    pub dir: Option<DirFeature>,
}

impl SampleFeatures {
    /// Channels-last convolution input (stack or static image).
    pub fn image_hwc<T: Scalar>(&self) -> Option<Vec<T>> {
        let to_t = |c: &u8| if *c != 0 { T::one() } else { T::zero() };
        if let Some(s) = &self.stack {
            let hwc = chw_to_hwc(s.data(), s.depth(), s.size(), s.size());
            return Some(hwc.iter().map(to_t).collect());
        }
        self.image.as_ref().map(|m| m.cells().iter().map(to_t).collect())
    }

    pub fn dir_values<T: Scalar>(&self) -> Option<Vec<T>> {
        self.dir
            .as_ref()
            .map(|d| d.values.iter().map(|&v| T::of(v as f64)).collect())
    }
}

impl Featurizer {
    /// Default geometry for `kind`: 28 maps of 32x32 and 512 direction values.
    pub fn new(kind: VariantKind, preprocess: PreprocessConfig) -> Self {
        Featurizer {
            kind,
            preprocess,
            map_size: crate::stroke_maps::DEFAULT_MAP_SIZE,
            stack_depth: crate::stroke_maps::DEFAULT_STACK_DEPTH,
            eightdir: EightDirConfig::default(),
        }
    }

    /// Geometry read off the architecture's input widths.
    pub fn for_architecture(arch: &Architecture, preprocess: PreprocessConfig) -> Result<Self, FeatureError> {
        let mut f = Featurizer::new(arch.kind, preprocess);
        if let Some([c, h, w]) = arch.image_shape() {
            if h != w {
                return Err(FeatureError::Geometry(format!("maps must be square, got {h}x{w}")));
            }
            f.map_size = h;
            f.stack_depth = c;
        }
        if let Some(len) = arch.dir_len() {
            let n = ((len / DIRECTIONS) as f64).sqrt().round() as usize;
            if n == 0 || DIRECTIONS * n * n != len {
                return Err(FeatureError::Geometry(format!(
                    "direction input of {len} is not 8 * n^2"
                )));
            }
            f.eightdir.samples = n;
        }
        Ok(f)
    }

    /// Stable digest of everything that shapes the features.
    pub fn cache_key(&self) -> String {
        let p = &self.preprocess;
        let e = &self.eightdir;
        let text = format!(
            "kind={} gap={:?} method={} size={} depth={} grid={} sigma={:?} truncate={:?} samples={} virtual={:?}",
            self.kind,
            p.max_gap,
            p.method.as_str(),
            self.map_size,
            self.stack_depth,
            e.grid,
            e.sigma,
            e.truncate,
            e.samples,
            e.virtual_weight
        );
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn normalize(&self, ink: &InkCharacter) -> Result<InkCharacter, FeatureError> {
        ink.check()?;
        Ok(preprocess(ink, &self.preprocess, self.map_size)?)
    }

    pub fn featurize(&self, ink: &InkCharacter) -> Result<SampleFeatures, FeatureError> {
        let norm = self.normalize(ink)?;
        self.features_of_normalized(&norm)
    }

    /// Features of `ink` after dropping interior points with the configured
    /// probability.
    pub fn featurize_augmented(&self, ink: &InkCharacter, seed: u64) -> Result<SampleFeatures, FeatureError> {
        let dropped = augment_drop_points(ink, self.preprocess.drop_prob, seed);
        self.featurize(&dropped)
    }

    fn features_of_normalized(&self, norm: &InkCharacter) -> Result<SampleFeatures, FeatureError> {
        let k = self.kind;
        Ok(SampleFeatures {
            stack: k
                .uses_stack()
                .then(|| build_stack(norm, self.stack_depth, self.map_size))
                .transpose()?,
            image: k
                .uses_static_image()
                .then(|| to_static_image(norm, self.map_size))
                .transpose()?,
            dir: k.uses_dir().then(|| extract_with(norm, &self.eightdir)),
        })
    }

    /// Stack, static image and direction vector regardless of variant.
    pub fn all_views(&self, ink: &InkCharacter) -> Result<SampleFeatures, FeatureError> {
        let norm = self.normalize(ink)?;
        Ok(SampleFeatures {
            stack: Some(build_stack(&norm, self.stack_depth, self.map_size)?),
            image: Some(to_static_image(&norm, self.map_size)?),
            dir: Some(extract_with(&norm, &self.eightdir)),
        })
    }
}

/// Features of every sample in a dataset, tagged with the configuration key.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub key: String,
    pub features: Vec<SampleFeatures>,
}

const CACHE_MAGIC: &[u8; 4] = b"SSDF";

pub fn featurize_dataset(ds: &Dataset, featurizer: &Featurizer) -> Result<FeatureCache, FeatureError> {
    let features = ds
        .samples
        .iter()
        .map(|s| featurizer.featurize(s))
        .collect::<Result<_, _>>()?;
    Ok(FeatureCache {
        key: featurizer.cache_key(),
        features,
    })
}

fn pack_bits(cells: &[u8], out: &mut Vec<u8>) {
    for chunk in cells.chunks(8) {
        let mut b = 0u8;
        for (i, &c) in chunk.iter().enumerate() {
            b |= u8::from(c != 0) << i;
        }
        out.push(b);
    }
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<u8> {
    (0..n).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FeatureError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            FeatureError::CorruptCache(format!("truncated at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, FeatureError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

impl FeatureCache {
    /// Little-endian binary form; binary maps are bit-packed.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = CACHE_MAGIC.to_vec();
        let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        put(&mut out, self.key.len());
        out.extend_from_slice(self.key.as_bytes());
        put(&mut out, self.features.len());
        for f in &self.features {
            let flags = u8::from(f.stack.is_some()) | u8::from(f.image.is_some()) << 1 | u8::from(f.dir.is_some()) << 2;
            out.push(flags);
            if let Some(s) = &f.stack {
                put(&mut out, s.depth());
                put(&mut out, s.size());
                pack_bits(s.data(), &mut out);
            }
            if let Some(m) = &f.image {
                put(&mut out, m.size());
                pack_bits(m.cells(), &mut out);
            }
            if let Some(d) = &f.dir {
                put(&mut out, d.values.len());
                for v in &d.values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeatureError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != CACHE_MAGIC {
            return Err(FeatureError::CorruptCache("bad magic".into()));
        }
        let klen = r.u32()?;
        let key = String::from_utf8(r.take(klen)?.to_vec())
            .map_err(|_| FeatureError::CorruptCache("key is not UTF-8".into()))?;
        let n = r.u32()?;
        let mut features = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let flags = r.take(1)?[0];
            let stack = if flags & 1 != 0 {
                let (depth, size) = (r.u32()?, r.u32()?);
                let cells = depth * size * size;
                let bits = unpack_bits(r.take(cells.div_ceil(8))?, cells);
                StrokeMapStack::from_cells(depth, size, bits)
            } else {
                None
            };
            let image = if flags & 2 != 0 {
                let size = r.u32()?;
                let bits = unpack_bits(r.take((size * size).div_ceil(8))?, size * size);
                BinaryMap::from_cells(size, bits)
            } else {
                None
            };
            let dir = if flags & 4 != 0 {
                let len = r.u32()?;
                let raw = r.take(len * 4)?;
                Some(DirFeature {
                    values: raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                })
            } else {
                None
            };
            features.push(SampleFeatures { stack, image, dir });
        }
        if r.pos != bytes.len() {
            return Err(FeatureError::CorruptCache(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(FeatureCache { key, features })
    }

    /// Fails unless the cache was produced by an identically configured
    /// featurizer.
    pub fn check_key(&self, featurizer: &Featurizer) -> Result<(), FeatureError> {
        let expected = featurizer.cache_key();
        if expected != self.key {
            return Err(FeatureError::StaleCache {
                expected,
                found: self.key.clone(),
            });
        }
        Ok(())
    }
}
