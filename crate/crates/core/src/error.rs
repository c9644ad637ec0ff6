//! Error types, one enum per subsystem.

use std::io;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VolumeError {
    #[error("dimension {axis}={value} outside 1..=32767")]
    DimOutOfRange { axis: &'static str, value: usize },
    #[error("data holds {actual} samples, dims require {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("affine bottom row must be (0, 0, 0, 1)")]
    BadAffine,
}

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed gzip stream: {0}")]
    Gzip(io::Error),
    #[error("not a single-file NIfTI-1 volume (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("header is {0} bytes, need 348")]
    ShortHeader(usize),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported dimensionality: dim = {0:?}")]
    UnsupportedDimensionality([i16; 8]),
    #[error("data section truncated: need {expected} bytes from offset {offset}, file has {actual}")]
    Truncated {
        offset: usize,
        expected: usize,
        actual: usize,
    },
    #[error("invalid vox_offset {0}")]
    BadVoxOffset(f32),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoiError {
    #[error("volume has no nonzero voxels; no ROI exists")]
    AllZeroVolume,
    #[error("no voxel reaches threshold {tau}")]
    EmptyTissueSet { tau: f64 },
    #[error("box {0} does not fit volume")]
    BoxOutOfBounds(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetadataError {
    #[error("metadata record must be 54 bytes, got {0}")]
    WrongLength(usize),
    #[error("invalid box on {axis} axis: min {min} > max {max}")]
    InvalidBox { axis: &'static str, min: i16, max: i16 },
    #[error("{field} value {value} does not fit int16")]
    FieldOverflow { field: &'static str, value: i64 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unknown codec {id:?}; registered: {}", known.join(", "))]
    UnknownCodec { id: String, known: Vec<String> },
    #[error("codec {id} does not support {mode} input")]
    UnsupportedMode { id: String, mode: &'static str },
    #[error("codec {id} quality {quality} outside {min}..={max}")]
    QualityOutOfRange {
        id: String,
        quality: i16,
        min: i16,
        max: i16,
    },
    #[error("invalid codec id {0:?}: must be 1..=16 ASCII bytes")]
    InvalidId(String),
    #[error("codec {id} failed to encode: {msg}")]
    Encode { id: String, msg: String },
    #[error("codec {id} failed to decode: {msg}")]
    Decode { id: String, msg: String },
    #[error("external codec {id}: {msg}")]
    External { id: String, msg: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContainerError {
    #[error("bad magic {0:?}, expected \"MROI\"")]
    BadMagic(Vec<u8>),
    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u8),
    #[error("archive truncated in {section}")]
    Truncated { section: String },
    #[error("archive truncated in payload {index}")]
    TruncatedPayload { index: usize },
    #[error("invalid {field} value {value}")]
    InvalidField { field: &'static str, value: u32 },
    #[error("archive must hold at least one payload")]
    NoPayloads,
    #[error("payload {index} is {len} bytes, above the u32 length limit")]
    PayloadTooLarge { index: usize, len: usize },
    #[error("roi mode requires a metadata record and full mode forbids one")]
    MetadataMismatch,
    #[error("{0} trailing bytes after last payload")]
    TrailingBytes(usize),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0} (hint: compress in full mode instead)")]
    Roi(#[from] RoiError),
    #[error("slice {index}: {source}")]
    Slice { index: usize, source: CodecError },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("archive inconsistent: {0}")]
    Shape(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("volume dims differ: {0} vs {1}")]
    DimensionMismatch(String, String),
    #[error("region {0} outside volume")]
    RegionOutOfBounds(String),
    #[error("region {width}x{height} smaller than the {window}x{window} window")]
    SmallRegion {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("byte counts must be positive")]
    ZeroBytes,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("sample lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired samples, got {0}")]
    TooFewSamples(usize),
    #[error("p-value at position {0} outside [0, 1]")]
    PValueOutOfRange(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("repeats must be at least 1")]
    NoRepeats,
}
