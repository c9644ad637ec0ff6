use super::{decode_err, Block, Codec, ModeSupport};
use crate::error::CodecError;
use crate::volume::{Dims, Dtype};

/// Identity codec: samples as little-endian bytes of the source type.
#[derive(Debug, Clone, Copy, Default)]
pub struct RawCodec;

impl Codec for RawCodec {
    fn id(&self) -> &str {
        "raw"
    }

    fn quality_range(&self) -> (i16, i16) {
        (0, 0)
    }

    fn default_quality(&self) -> i16 {
        0
    }

    fn modes(&self) -> ModeSupport {
        ModeSupport::BOTH
    }

    fn is_lossless(&self, _quality: i16) -> bool {
        true
    }

    fn encode(&self, _quality: i16, block: Block<'_>) -> Result<Vec<u8>, CodecError> {
        Ok(block.dtype.encode_le(block.samples))
    }

    fn decode(
        &self,
        _quality: i16,
        bytes: &[u8],
        dims: Dims,
        dtype: Dtype,
    ) -> Result<Vec<f32>, CodecError> {
        let expected = dims.voxel_count() * dtype.bytes_per_voxel();
        if bytes.len() != expected {
            return Err(decode_err(
                self.id(),
                format!("payload is {} bytes, expected {expected}", bytes.len()),
            ));
        }
        Ok(dtype.decode_le(bytes))
    }
}
