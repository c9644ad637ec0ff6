//! Uniform scalar quantizer followed by DEFLATE.
//!
//! Payload: `"MQ01"`, `u8 q`, `f32 min`, `f32 max` (little-endian), then the
//! deflated one-byte bin indices. The block's `[min, max]` range is split into
//! `2^q` equal bins and each sample is reconstructed at its bin midpoint, so
//! `|x - x'| <= (max - min) / 2^(q+1)`. Integer blocks whose range fits in
//! `2^q` levels are stored as exact offsets from `min`.

use super::deflate::{deflate, inflate_exact};
use super::{decode_err, Block, Codec, ModeSupport};
use crate::error::CodecError;
use crate::volume::{Dims, Dtype};

pub const QUANT_MAGIC: &[u8; 4] = b"MQ01";
const HEADER_LEN: usize = 13;
const INDEX_DEFLATE_LEVEL: u32 = 6;

#[derive(Debug, Clone, Copy, Default)]
pub struct QuantCodec;

#[derive(Debug, Clone, Copy)]
enum Scheme {
    /// All samples equal `min`.
    Constant,
    /// Integer samples stored as `x - min`.
    Offset,
    Bins { levels: f64, width: f64 },
}

fn scheme(q: u8, dtype: Dtype, min: f32, max: f32) -> Scheme {
    let range = max as f64 - min as f64;
    let levels = (1u32 << q) as f64;
    if range <= 0.0 {
        Scheme::Constant
    } else if dtype.is_integer() && range <= levels - 1.0 {
        Scheme::Offset
    } else {
        Scheme::Bins {
            levels,
            width: range / levels,
        }
    }
}

fn finite_range(samples: &[f32]) -> (f32, f32) {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in samples.iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

impl QuantCodec {
    fn check_q(quality: i16) -> Result<u8, CodecError> {
        if (1..=8).contains(&quality) {
            Ok(quality as u8)
        } else {
            Err(CodecError::QualityOutOfRange {
                id: "quant".into(),
                quality,
                min: 1,
                max: 8,
            })
        }
    }
}

impl Codec for QuantCodec {
    fn id(&self) -> &str {
        "quant"
    }

    fn quality_range(&self) -> (i16, i16) {
        (1, 8)
    }

    fn default_quality(&self) -> i16 {
        6
    }

    fn modes(&self) -> ModeSupport {
        ModeSupport::BOTH
    }

    fn is_lossless(&self, _quality: i16) -> bool {
        false
    }

    fn encode(&self, quality: i16, block: Block<'_>) -> Result<Vec<u8>, CodecError> {
        let q = Self::check_q(quality)?;
        let (min, max) = finite_range(block.samples);
        let top = ((1u32 << q) - 1) as f64;
        let indices: Vec<u8> = match scheme(q, block.dtype, min, max) {
            Scheme::Constant => vec![0; block.samples.len()],
            Scheme::Offset => block
                .samples
                .iter()
                .map(|&v| (v as f64 - min as f64).clamp(0.0, top) as u8)
                .collect(),
            Scheme::Bins { width, .. } => block
                .samples
                .iter()
                .map(|&v| {
                    let v = if v.is_finite() { v as f64 } else { min as f64 };
                    ((v - min as f64) / width).floor().clamp(0.0, top) as u8
                })
                .collect(),
        };
        let mut out = Vec::with_capacity(HEADER_LEN + indices.len() / 2);
        out.extend_from_slice(QUANT_MAGIC);
        out.push(q);
        out.extend_from_slice(&min.to_le_bytes());
        out.extend_from_slice(&max.to_le_bytes());
        out.extend_from_slice(&deflate(&indices, INDEX_DEFLATE_LEVEL));
        Ok(out)
    }

    fn decode(
        &self,
        _quality: i16,
        bytes: &[u8],
        dims: Dims,
        dtype: Dtype,
    ) -> Result<Vec<f32>, CodecError> {
        if bytes.len() < HEADER_LEN {
            return Err(decode_err(self.id(), "payload shorter than header"));
        }
        if &bytes[..4] != QUANT_MAGIC {
            return Err(decode_err(self.id(), "bad quantizer magic"));
        }
        let q = bytes[4];
        if !(1..=8).contains(&q) {
            return Err(decode_err(self.id(), format!("bad bit count {q}")));
        }
        let min = f32::from_le_bytes(bytes[5..9].try_into().unwrap());
        let max = f32::from_le_bytes(bytes[9..13].try_into().unwrap());
        if !(min.is_finite() && max.is_finite() && min <= max) {
            return Err(decode_err(self.id(), "bad quantizer range"));
        }
        let indices = inflate_exact(self.id(), &bytes[HEADER_LEN..], dims.voxel_count())?;
        let base = min as f64;
        let out = match scheme(q, dtype, min, max) {
            Scheme::Constant => vec![min; indices.len()],
            Scheme::Offset => indices.iter().map(|&i| (base + i as f64) as f32).collect(),
            Scheme::Bins { levels, width } => {
                if indices.iter().any(|&i| i as f64 >= levels) {
                    return Err(decode_err(self.id(), "bin index out of range"));
                }
                indices
                    .iter()
                    .map(|&i| (base + (i as f64 + 0.5) * width) as f32)
                    .collect()
            }
        };
        Ok(out)
    }
}
