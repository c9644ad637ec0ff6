//! Pluggable codecs.
//!
//! A [`Codec`] turns a block of samples (one axial slice or a whole volume)
//! into an opaque byte string and back. The pipeline never looks inside
//! payloads, so any codec that implements the trait, including an external
//! program driven over standard streams, can be swapped in.

mod deflate;
mod external;
mod quant;
mod raw;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use deflate::DeflateCodec;
pub use external::{ExternalCodec, ExternalCommand, Frame, FRAME_MAGIC};
pub use quant::{QuantCodec, QUANT_MAGIC};
pub use raw::RawCodec;

use crate::error::CodecError;
use crate::volume::{Dims, Dtype, Volume};

pub const MAX_ID_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeSupport {
    pub slice2d: bool,
    pub volume3d: bool,
}

impl ModeSupport {
    pub const BOTH: Self = Self {
        slice2d: true,
        volume3d: true,
    };
    pub const SLICE_ONLY: Self = Self {
        slice2d: true,
        volume3d: false,
    };
}

/// Borrowed samples plus the shape and type needed to encode them. Slices
/// have `dims.nz == 1`.
#[derive(Debug, Clone, Copy)]
pub struct Block<'a> {
    pub dims: Dims,
    pub dtype: Dtype,
    pub samples: &'a [f32],
}

pub trait Codec: Send + Sync {
    fn id(&self) -> &str;
    /// Inclusive quality range.
    fn quality_range(&self) -> (i16, i16);
    fn default_quality(&self) -> i16;
    fn modes(&self) -> ModeSupport;
    /// Whether decode(encode(x)) == x for every input at this quality.
    fn is_lossless(&self, quality: i16) -> bool;
    fn encode(&self, quality: i16, block: Block<'_>) -> Result<Vec<u8>, CodecError>;
    fn decode(
        &self,
        quality: i16,
        bytes: &[u8],
        dims: Dims,
        dtype: Dtype,
    ) -> Result<Vec<f32>, CodecError>;
}

/// A codec id and quality level together with the codec's capabilities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecSpec {
    pub id: String,
    pub quality: i16,
    pub modes: ModeSupport,
    pub lossless: bool,
}

impl fmt::Display for CodecSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.id, self.quality)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPayload {
    pub bytes: Vec<u8>,
    pub source_dims: Dims,
    pub bit_depth: u8,
}

/// 2D scalar grid, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub dtype: Dtype,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, dtype: Dtype, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "plane data length");
        Self {
            width,
            height,
            dtype,
            data,
        }
    }

    fn block(&self) -> Block<'_> {
        Block {
            dims: Dims::new(self.width, self.height, 1),
            dtype: self.dtype,
            samples: &self.data,
        }
    }
}

pub fn validate_id(id: &str) -> Result<(), CodecError> {
    if id.is_empty() || id.len() > MAX_ID_LEN || !id.is_ascii() {
        return Err(CodecError::InvalidId(id.to_string()));
    }
    Ok(())
}

/// A codec resolved from the registry, fixed at one quality level.
#[derive(Clone)]
pub struct BoundCodec {
    codec: Arc<dyn Codec>,
    spec: CodecSpec,
}

impl fmt::Debug for BoundCodec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundCodec").field("spec", &self.spec).finish()
    }
}

impl BoundCodec {
    pub fn new(codec: Arc<dyn Codec>, quality: i16) -> Result<Self, CodecError> {
        validate_id(codec.id())?;
        let (min, max) = codec.quality_range();
        if !(min..=max).contains(&quality) {
            return Err(CodecError::QualityOutOfRange {
                id: codec.id().to_string(),
                quality,
                min,
                max,
            });
        }
        let spec = CodecSpec {
            id: codec.id().to_string(),
            quality,
            modes: codec.modes(),
            lossless: codec.is_lossless(quality),
        };
        Ok(Self { codec, spec })
    }

    pub fn spec(&self) -> &CodecSpec {
        &self.spec
    }

    fn require(&self, slice: bool) -> Result<(), CodecError> {
        let ok = if slice {
            self.spec.modes.slice2d
        } else {
            self.spec.modes.volume3d
        };
        if ok {
            Ok(())
        } else {
            Err(CodecError::UnsupportedMode {
                id: self.spec.id.clone(),
                mode: if slice { "2d slice" } else { "3d volume" },
            })
        }
    }

    /// Encodes any block whose shape matches the requested mode.
    pub fn encode_block(&self, block: Block<'_>, slice: bool) -> Result<EncodedPayload, CodecError> {
        self.require(slice)?;
        let bytes = self.codec.encode(self.spec.quality, block)?;
        Ok(EncodedPayload {
            bytes,
            source_dims: block.dims,
            bit_depth: block.dtype.bits(),
        })
    }

    pub fn decode_block(
        &self,
        bytes: &[u8],
        dims: Dims,
        dtype: Dtype,
        slice: bool,
    ) -> Result<Vec<f32>, CodecError> {
        self.require(slice)?;
        let out = self.codec.decode(self.spec.quality, bytes, dims, dtype)?;
        if out.len() != dims.voxel_count() {
            return Err(CodecError::Decode {
                id: self.spec.id.clone(),
                msg: format!("decoded {} samples, expected {}", out.len(), dims.voxel_count()),
            });
        }
        Ok(out)
    }

    pub fn encode_slice(&self, slice: &Plane) -> Result<EncodedPayload, CodecError> {
        self.encode_block(slice.block(), true)
    }

    pub fn decode_slice(&self, payload: &EncodedPayload, dtype: Dtype) -> Result<Plane, CodecError> {
        let d = payload.source_dims;
        let data = self.decode_block(&payload.bytes, Dims::new(d.nx, d.ny, 1), dtype, true)?;
        Ok(Plane::new(d.nx, d.ny, dtype, data))
    }

    pub fn encode_volume(&self, volume: &Volume) -> Result<EncodedPayload, CodecError> {
        self.encode_block(
            Block {
                dims: volume.dims(),
                dtype: volume.dtype,
                samples: volume.data(),
            },
            false,
        )
    }

    pub fn decode_volume(&self, payload: &EncodedPayload, dtype: Dtype) -> Result<Volume, CodecError> {
        let data = self.decode_block(&payload.bytes, payload.source_dims, dtype, false)?;
        Volume::new(payload.source_dims, data, dtype).map_err(|e| CodecError::Decode {
            id: self.spec.id.clone(),
            msg: e.to_string(),
        })
    }
}

/// Codecs addressable by id.
#[derive(Clone, Default)]
pub struct CodecRegistry {
    codecs: BTreeMap<String, Arc<dyn Codec>>,
}

impl CodecRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `raw`, `deflate` and `quant`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(RawCodec)).expect("builtin id");
        r.register(Arc::new(DeflateCodec)).expect("builtin id");
        r.register(Arc::new(QuantCodec)).expect("builtin id");
        r
    }

    /// Built-ins plus every external codec configured through
    /// `MEDROI_CODEC_<ID>` environment variables.
    pub fn from_env() -> Self {
        let mut r = Self::builtin();
        for codec in ExternalCodec::all_from_env() {
            // invalid ids in the environment are skipped
            let _ = r.register(Arc::new(codec));
        }
        r
    }

    pub fn register(&mut self, codec: Arc<dyn Codec>) -> Result<(), CodecError> {
        validate_id(codec.id())?;
        self.codecs.insert(codec.id().to_string(), codec);
        Ok(())
    }

    pub fn ids(&self) -> Vec<String> {
        self.codecs.keys().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn Codec>, CodecError> {
        self.codecs
            .get(id)
            .cloned()
            .ok_or_else(|| CodecError::UnknownCodec {
                id: id.to_string(),
                known: self.ids(),
            })
    }

    pub fn bind(&self, id: &str, quality: i16) -> Result<BoundCodec, CodecError> {
        BoundCodec::new(self.get(id)?, quality)
    }

    pub fn bind_default(&self, id: &str) -> Result<BoundCodec, CodecError> {
        let c = self.get(id)?;
        let q = c.default_quality();
        BoundCodec::new(c, q)
    }
}

fn decode_err(id: &str, msg: impl Into<String>) -> CodecError {
    CodecError::Decode {
        id: id.to_string(),
        msg: msg.into(),
    }
}
