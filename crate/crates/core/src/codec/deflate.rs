use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use super::{decode_err, Block, Codec, ModeSupport};
use crate::error::CodecError;
use crate::volume::{Dims, Dtype};

/// Lossless codec: the canonical little-endian sample stream compressed as a
/// raw DEFLATE (RFC 1951) bitstream. Quality is the compression level.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeflateCodec;

pub(super) fn deflate(bytes: &[u8], level: u32) -> Vec<u8> {
    let mut enc = DeflateEncoder::new(Vec::with_capacity(bytes.len() / 2), Compression::new(level));
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

/// Inflates exactly `expected` bytes; anything else is an error.
pub(super) fn inflate_exact(id: &str, bytes: &[u8], expected: usize) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(expected);
    DeflateDecoder::new(bytes)
        .take(expected as u64 + 1)
        .read_to_end(&mut out)
        .map_err(|e| decode_err(id, format!("inflate: {e}")))?;
    if out.len() != expected {
        return Err(decode_err(
            id,
            format!("inflated {} bytes, expected {expected}", out.len()),
        ));
    }
    Ok(out)
}

impl Codec for DeflateCodec {
    fn id(&self) -> &str {
        "deflate"
    }

    fn quality_range(&self) -> (i16, i16) {
        (1, 9)
    }

    fn default_quality(&self) -> i16 {
        6
    }

    fn modes(&self) -> ModeSupport {
        ModeSupport::BOTH
    }

    fn is_lossless(&self, _quality: i16) -> bool {
        true
    }

    fn encode(&self, quality: i16, block: Block<'_>) -> Result<Vec<u8>, CodecError> {
        Ok(deflate(&block.dtype.encode_le(block.samples), quality as u32))
    }

    fn decode(
        &self,
        _quality: i16,
        bytes: &[u8],
        dims: Dims,
        dtype: Dtype,
    ) -> Result<Vec<f32>, CodecError> {
        let expected = dims.voxel_count() * dtype.bytes_per_voxel();
        Ok(dtype.decode_le(&inflate_exact(self.id(), bytes, expected)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_plain_rfc1951() {
        // a zlib wrapper would start with 0x78; raw deflate is decodable by
        // any RFC 1951 inflater, here miniz via a fresh decoder
        let data: Vec<u8> = (0..1000u32).map(|i| (i % 7) as u8).collect();
        let z = deflate(&data, 6);
        assert_ne!(z[0], 0x78);
        let mut back = Vec::new();
        flate2::read::DeflateDecoder::new(&z[..]).read_to_end(&mut back).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn rejects_oversized_stream() {
        let z = deflate(&[1u8; 100], 6);
        assert!(inflate_exact("deflate", &z, 99).is_err());
        assert!(inflate_exact("deflate", &z, 101).is_err());
        assert_eq!(inflate_exact("deflate", &z, 100).unwrap(), vec![1u8; 100]);
    }
}
