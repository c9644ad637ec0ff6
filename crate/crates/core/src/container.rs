//! The `.mroi` archive.
//!
//! Layout (little-endian):
//!
//! ```text
//! "MROI" | version u8 = 1 | mode u8 | dim_mode u8 | dtype u8
//! | id_len u8 | id bytes | quality i16 | shape 3 x u16 | flags u8
//! | [54-byte metadata record]      flags bit 0 (roi mode only)
//! | [12-byte translation sidecar]  flags bit 1 (roi mode only)
//! | [48-byte affine record]        flags bit 2 (full mode only)
//! | payload count u32 | { u32 length | bytes } * count
//! ```
//!
//! The serialized length is the compressed size used for every ratio.

use std::fmt;

use crate::codec::validate_id;
use crate::error::ContainerError;
use crate::metadata::{
    decode_metadata, decode_translation, encode_metadata, encode_translation, RoiMetadata,
    METADATA_LEN, TRANSLATION_SIDECAR_LEN,
};
use crate::volume::{Affine, Dims, Dtype};

pub const MAGIC: &[u8; 4] = b"MROI";
pub const VERSION: u8 = 1;
/// Bytes of header that do not depend on the codec id or optional records.
pub const FIXED_HEADER_LEN: usize = 4 + 1 + 1 + 1 + 1 + 1 + 2 + 6 + 1 + 4;
pub const PAYLOAD_PREFIX_LEN: usize = 4;
/// 3x4 f32 top rows of the full-mode affine.
pub const AFFINE_RECORD_LEN: usize = 48;

const FLAG_METADATA: u8 = 1;
const FLAG_TRANSLATION: u8 = 2;
const FLAG_AFFINE: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Full,
    Roi,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Roi => "roi",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DimMode {
    Slice2D,
    Volume3D,
}

impl DimMode {
    pub fn name(self) -> &'static str {
        match self {
            DimMode::Slice2D => "2d",
            DimMode::Volume3D => "3d",
        }
    }
}

impl fmt::Display for DimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub mode: Mode,
    pub dim_mode: DimMode,
    pub dtype: Dtype,
    pub codec_id: String,
    pub quality: i16,
    /// Original volume shape.
    pub shape: Dims,
    pub metadata: Option<RoiMetadata>,
    /// Exact translation of the original affine (roi mode, optional).
    pub translation: Option<[f32; 3]>,
    /// Top three rows of the original affine (full mode, optional).
    pub affine: Option<[[f32; 4]; 3]>,
    pub payloads: Vec<Vec<u8>>,
}

impl Archive {
    /// Dims of the region the payloads encode.
    pub fn encoded_dims(&self) -> Dims {
        match (&self.mode, &self.metadata) {
            (Mode::Roi, Some(m)) => m.roi.dims(),
            _ => self.shape,
        }
    }

    pub fn expected_payloads(&self) -> usize {
        match self.dim_mode {
            DimMode::Slice2D => self.encoded_dims().nz,
            DimMode::Volume3D => 1,
        }
    }

    pub fn payload_bytes(&self) -> usize {
        self.payloads.iter().map(Vec::len).sum()
    }

    /// Size of [`serialize`]'s output, from the layout alone.
    pub fn serialized_len(&self) -> usize {
        FIXED_HEADER_LEN
            + self.codec_id.len()
            + self.metadata.map_or(0, |_| METADATA_LEN)
            + self.translation.map_or(0, |_| TRANSLATION_SIDECAR_LEN)
            + self.affine.map_or(0, |_| AFFINE_RECORD_LEN)
            + self.payloads.len() * PAYLOAD_PREFIX_LEN
            + self.payload_bytes()
    }

    pub fn affine_record(affine: &Affine) -> [[f32; 4]; 3] {
        let mut out = [[0f32; 4]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = affine.0[r][c] as f32;
            }
        }
        out
    }

    fn validate(&self) -> Result<(), ContainerError> {
        validate_id(&self.codec_id)?;
        match (self.mode, &self.metadata) {
            (Mode::Roi, Some(m)) => {
                if m.original_shape != self.shape || !m.roi.is_valid_for(self.shape) {
                    return Err(ContainerError::MetadataMismatch);
                }
            }
            (Mode::Full, None) => {}
            _ => return Err(ContainerError::MetadataMismatch),
        }
        if (self.translation.is_some() && self.mode != Mode::Roi)
            || (self.affine.is_some() && self.mode != Mode::Full)
        {
            return Err(ContainerError::MetadataMismatch);
        }
        for (axis, n) in self.shape.as_array().into_iter().enumerate() {
            if n == 0 || n > u16::MAX as usize {
                return Err(ContainerError::InvalidField {
                    field: ["width", "height", "depth"][axis],
                    value: n as u32,
                });
            }
        }
        if self.payloads.is_empty() {
            return Err(ContainerError::NoPayloads);
        }
        if self.payloads.len() != self.expected_payloads() {
            return Err(ContainerError::InvalidField {
                field: "payload count",
                value: self.payloads.len() as u32,
            });
        }
        Ok(())
    }
}

pub fn serialize(archive: &Archive) -> Result<Vec<u8>, ContainerError> {
    archive.validate()?;
    for (index, p) in archive.payloads.iter().enumerate() {
        if p.len() > u32::MAX as usize {
            return Err(ContainerError::PayloadTooLarge { index, len: p.len() });
        }
    }
    let mut out = Vec::with_capacity(archive.serialized_len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(match archive.mode {
        Mode::Full => 0,
        Mode::Roi => 1,
    });
    out.push(match archive.dim_mode {
        DimMode::Slice2D => 0,
        DimMode::Volume3D => 1,
    });
    out.push(archive.dtype.tag());
    out.push(archive.codec_id.len() as u8);
    out.extend_from_slice(archive.codec_id.as_bytes());
    out.extend_from_slice(&archive.quality.to_le_bytes());
    for n in archive.shape.as_array() {
        out.extend_from_slice(&(n as u16).to_le_bytes());
    }
    let mut flags = 0;
    if archive.metadata.is_some() {
        flags |= FLAG_METADATA;
    }
    if archive.translation.is_some() {
        flags |= FLAG_TRANSLATION;
    }
    if archive.affine.is_some() {
        flags |= FLAG_AFFINE;
    }
    out.push(flags);
    if let Some(m) = &archive.metadata {
        out.extend_from_slice(&encode_metadata(m)?);
    }
    if let Some(t) = archive.translation {
        out.extend_from_slice(&encode_translation(t.map(|v| v as f64)));
    }
    if let Some(a) = &archive.affine {
        for v in a.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(archive.payloads.len() as u32).to_le_bytes());
    for p in &archive.payloads {
        out.extend_from_slice(&(p.len() as u32).to_le_bytes());
        out.extend_from_slice(p);
    }
    debug_assert_eq!(out.len(), archive.serialized_len());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8], ContainerError> {
        if self.bytes.len() - self.pos < n {
            return Err(ContainerError::Truncated {
                section: section.to_string(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, section: &str) -> Result<u8, ContainerError> {
        Ok(self.take(1, section)?[0])
    }

    fn u16(&mut self, section: &str) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2, section)?.try_into().unwrap()))
    }

    fn u32(&mut self, section: &str) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<Archive, ContainerError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(ContainerError::BadMagic(magic.to_vec()));
    }
    let version = c.u8("version")?;
    if version != VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let mode = match c.u8("mode")? {
        0 => Mode::Full,
        1 => Mode::Roi,
        v => return Err(ContainerError::InvalidField { field: "mode", value: v as u32 }),
    };
    let dim_mode = match c.u8("dim_mode")? {
        0 => DimMode::Slice2D,
        1 => DimMode::Volume3D,
        v => {
            return Err(ContainerError::InvalidField {
                field: "dim_mode",
                value: v as u32,
            })
        }
    };
    let tag = c.u8("dtype")?;
    let dtype = Dtype::from_tag(tag).ok_or(ContainerError::InvalidField {
        field: "dtype",
        value: tag as u32,
    })?;
    let id_len = c.u8("codec id")? as usize;
    let id_bytes = c.take(id_len, "codec id")?;
    let codec_id = String::from_utf8(id_bytes.to_vec()).map_err(|_| ContainerError::InvalidField {
        field: "codec id",
        value: id_len as u32,
    })?;
    validate_id(&codec_id)?;
    let quality = i16::from_le_bytes(c.take(2, "quality")?.try_into().unwrap());
    let mut shape = [0usize; 3];
    for s in shape.iter_mut() {
        *s = c.u16("shape")? as usize;
    }
    let shape = Dims::new(shape[0], shape[1], shape[2]);
    let flags = c.u8("flags")?;
    if flags & !(FLAG_METADATA | FLAG_TRANSLATION | FLAG_AFFINE) != 0 {
        return Err(ContainerError::InvalidField {
            field: "flags",
            value: flags as u32,
        });
    }
    let metadata = if flags & FLAG_METADATA != 0 {
        Some(decode_metadata(c.take(METADATA_LEN, "metadata")?)?)
    } else {
        None
    };
    let translation = if flags & FLAG_TRANSLATION != 0 {
        Some(decode_translation(c.take(TRANSLATION_SIDECAR_LEN, "translation")?)?)
    } else {
        None
    };
    let affine = if flags & FLAG_AFFINE != 0 {
        let raw = c.take(AFFINE_RECORD_LEN, "affine")?;
        let mut a = [[0f32; 4]; 3];
        for (i, v) in a.iter_mut().flatten().enumerate() {
            *v = f32::from_le_bytes(raw[4 * i..4 * i + 4].try_into().unwrap());
        }
        Some(a)
    } else {
        None
    };
    let count = c.u32("payload count")? as usize;
    // each payload needs at least its length prefix
    if count > (bytes.len() - c.pos) / PAYLOAD_PREFIX_LEN + 1 {
        return Err(ContainerError::TruncatedPayload { index: 0 });
    }
    let mut payloads = Vec::with_capacity(count);
    for index in 0..count {
        let len = c
            .u32("payload length")
            .map_err(|_| ContainerError::TruncatedPayload { index })? as usize;
        let body = c
            .take(len, "payload")
            .map_err(|_| ContainerError::TruncatedPayload { index })?;
        payloads.push(body.to_vec());
    }
    if c.pos != bytes.len() {
        return Err(ContainerError::TrailingBytes(bytes.len() - c.pos));
    }
    let archive = Archive {
        mode,
        dim_mode,
        dtype,
        codec_id,
        quality,
        shape,
        metadata,
        translation,
        affine,
        payloads,
    };
    archive.validate()?;
    Ok(archive)
}
