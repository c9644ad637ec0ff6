//! ROI-centric compression for 3D medical volumes.
//!
//! A volume is cropped to the bounding box of its above-mean-intensity
//! voxels, the crop is compressed with a pluggable codec, and a 54-byte
//! record is stored next to the payloads so the original grid and affine
//! can be rebuilt on decompression.

pub mod codec;
pub mod container;
pub mod error;
pub mod eval;
pub mod metadata;
pub mod metrics;
pub mod nifti;
pub mod phantom;
pub mod pipeline;
pub mod roi;
pub mod stats;
pub mod volume;

pub use codec::{BoundCodec, Codec, CodecRegistry, CodecSpec, EncodedPayload, ModeSupport, Plane};
pub use container::{deserialize, serialize, Archive, DimMode, Mode};
pub use error::{
    CodecError, ContainerError, EvalError, MetadataError, MetricsError, NiftiError, PhantomError, PipelineError,
    RoiError, StatsError, VolumeError,
};
pub use eval::{evaluate, Measurement};
pub use metadata::{decode_metadata, encode_metadata, restore_affine, RoiMetadata, METADATA_LEN};
pub use metrics::{bits_per_pixel, compression_ratio, psnr, ssim, timed, EvalRecord};
pub use nifti::{read_nifti, write_nifti};
pub use phantom::{generate_phantom, PhantomSpec};
pub use pipeline::{
    compress_box, compress_full, compress_roi, decompress, decompress_with, PipelineOptions, RoiCompression,
};
pub use roi::{compute_bbox, compute_threshold, extract_roi, miss_rate, RoiBox, RoiReport};
pub use stats::{holm_correction, paired_t_test, TTest};
pub use volume::{Affine, Dims, Dtype, Volume};
