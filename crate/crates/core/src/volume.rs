//! The in-memory volume type shared by every stage of the toolkit.

use std::fmt;

use crate::error::VolumeError;

/// Largest extent along any axis. Bounds and shapes are stored as int16 in
/// the restoration record, so every dimension must fit.
pub const MAX_DIM: usize = i16::MAX as usize;

/// Voxel counts along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn voxel_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Number of voxels in one axial (fixed z) slice.
    pub fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    /// Canonical (x fastest, then y, then z) linear index.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        for (axis, &n) in ["x", "y", "z"].iter().zip(self.as_array().iter()) {
            if n == 0 || n > MAX_DIM {
                return Err(VolumeError::DimOutOfRange { axis, value: n });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// On-disk sample type a volume came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    U8,
    I16,
    U16,
    F32,
}

impl Dtype {
    pub fn bytes_per_voxel(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::I16 | Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }

    pub fn bits(self) -> u8 {
        (self.bytes_per_voxel() * 8) as u8
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, Dtype::F32)
    }

    /// NIfTI-1 `datatype` code.
    pub fn nifti_code(self) -> i16 {
        match self {
            Dtype::U8 => 2,
            Dtype::I16 => 4,
            Dtype::F32 => 16,
            Dtype::U16 => 512,
        }
    }

    pub fn from_nifti_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(Dtype::U8),
            4 => Some(Dtype::I16),
            16 => Some(Dtype::F32),
            512 => Some(Dtype::U16),
            _ => None,
        }
    }

    /// Compact tag used inside `.mroi` archives.
    pub fn tag(self) -> u8 {
        match self {
            Dtype::U8 => 0,
            Dtype::I16 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Dtype::U8),
            1 => Some(Dtype::I16),
            2 => Some(Dtype::U16),
            3 => Some(Dtype::F32),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::U8 => "u8",
            Dtype::I16 => "i16",
            Dtype::U16 => "u16",
            Dtype::F32 => "f32",
        }
    }

    /// Rounds and saturates a value into the representable range.
    pub fn saturate(self, v: f32) -> f32 {
        match self {
            Dtype::U8 => v.round().clamp(0.0, u8::MAX as f32),
            Dtype::I16 => v.round().clamp(i16::MIN as f32, i16::MAX as f32),
            Dtype::U16 => v.round().clamp(0.0, u16::MAX as f32),
            Dtype::F32 => v,
        }
    }

    /// Appends `v` as little-endian bytes of this type.
    pub fn push_le(self, v: f32, out: &mut Vec<u8>) {
        match self {
            Dtype::U8 => out.push(self.saturate(v) as u8),
            Dtype::I16 => out.extend_from_slice(&(self.saturate(v) as i16).to_le_bytes()),
            Dtype::U16 => out.extend_from_slice(&(self.saturate(v) as u16).to_le_bytes()),
            Dtype::F32 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }

    /// Reads one little-endian sample; `bytes` must hold exactly one.
    pub fn read_le(self, bytes: &[u8]) -> f32 {
        match self {
            Dtype::U8 => bytes[0] as f32,
            Dtype::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f32,
            Dtype::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f32,
            Dtype::F32 => f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
        }
    }

    pub fn encode_le(self, samples: &[f32]) -> Vec<u8> {
        let mut out = Vec::with_capacity(samples.len() * self.bytes_per_voxel());
        for &v in samples {
            self.push_le(v, &mut out);
        }
        out
    }

    pub fn decode_le(self, bytes: &[u8]) -> Vec<f32> {
        bytes
            .chunks_exact(self.bytes_per_voxel())
            .map(|c| self.read_le(c))
            .collect()
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Row-major 4x4 voxel-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine(pub [[f64; 4]; 4]);

impl Affine {
    pub fn identity() -> Self {
        Self::diagonal([1.0, 1.0, 1.0])
    }

    pub fn diagonal(scale: [f64; 3]) -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, s) in scale.iter().enumerate() {
            m[i][i] = *s;
        }
        m[3][3] = 1.0;
        Affine(m)
    }

    pub fn from_parts(rot_scale: [[f64; 3]; 3], translation: [f64; 3]) -> Self {
        let mut m = [[0.0; 4]; 4];
        for r in 0..3 {
            m[r][..3].copy_from_slice(&rot_scale[r]);
            m[r][3] = translation[r];
        }
        m[3][3] = 1.0;
        Affine(m)
    }

    pub fn rot_scale(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]
    }

    pub fn translation(&self) -> [f64; 3] {
        [self.0[0][3], self.0[1][3], self.0[2][3]]
    }

    /// World coordinates of voxel index `(i, j, k)`.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2] + m[r][3];
        }
        out
    }

    pub fn has_valid_bottom_row(&self) -> bool {
        self.0[3] == [0.0, 0.0, 0.0, 1.0]
    }
}

impl Default for Affine {
    fn default() -> Self {
        Self::identity()
    }
}

/// Size of the uncompressed single-file NIfTI-1 representation this crate
/// writes: 348-byte header, 4-byte extension flag, then voxel data.
pub fn nifti_file_len(dims: Dims, dtype: Dtype) -> u64 {
    352 + (dims.voxel_count() * dtype.bytes_per_voxel()) as u64
}

/// A 3D scalar grid. Samples are kept as `f32`, which represents every
/// supported source type exactly; `dtype` records what they were on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    data: Vec<f32>,
    pub dtype: Dtype,
    pub affine: Affine,
    /// Stored but never applied before compression.
    pub scl_slope: f64,
    pub scl_inter: f64,
    /// Byte length of the uncompressed on-disk file (header + data).
    pub source_byte_len: u64,
}

impl Volume {
    /// Builds a volume with an identity affine and the byte length a fresh
    /// NIfTI file of this shape would have.
    pub fn new(dims: Dims, data: Vec<f32>, dtype: Dtype) -> Result<Self, VolumeError> {
        Self::with_affine(dims, data, dtype, Affine::identity())
    }

    pub fn with_affine(
        dims: Dims,
        data: Vec<f32>,
        dtype: Dtype,
        affine: Affine,
    ) -> Result<Self, VolumeError> {
        dims.validate()?;
        if data.len() != dims.voxel_count() {
            return Err(VolumeError::DataLength {
                expected: dims.voxel_count(),
                actual: data.len(),
            });
        }
        if !affine.has_valid_bottom_row() {
            return Err(VolumeError::BadAffine);
        }
        Ok(Self {
            dims,
            data,
            dtype,
            affine,
            scl_slope: 1.0,
            scl_inter: 0.0,
            source_byte_len: nifti_file_len(dims, dtype),
        })
    }

    pub fn zeros(dims: Dims, dtype: Dtype) -> Result<Self, VolumeError> {
        Self::new(dims, vec![0.0; dims.voxel_count()], dtype)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.dims.index(x, y, z);
        self.data[i] = v;
    }

    /// Axial slice `z` as a contiguous x-fastest plane.
    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.dims.slice_len();
        &self.data[z * n..(z + 1) * n]
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}
