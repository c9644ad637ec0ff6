//! NIfTI-1 single-file reader and writer.
//!
//! Reads little- and big-endian headers, plain or gzip-wrapped. Writes plain
//! little-endian files (gzip-wrapped when the path ends in `.gz`) with the
//! affine carried in the sform rows.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::NiftiError;
use crate::volume::{Affine, Dims, Dtype, Volume, MAX_DIM};

pub const HEADER_SIZE: usize = 348;
/// Data offset used on write: header plus the 4-byte extension flag.
pub const WRITE_VOX_OFFSET: usize = 352;
pub const MAGIC: &[u8; 4] = b"n+1\0";

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl HeaderReader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

/// Reads a `.nii` or `.nii.gz` file.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume, NiftiError> {
    let raw = fs::read(path)?;
    parse_nifti(&raw)
}

/// Parses an in-memory NIfTI-1 file, transparently inflating gzip input.
pub fn parse_nifti(raw: &[u8]) -> Result<Volume, NiftiError> {
    if raw.len() >= 2 && raw[..2] == GZIP_MAGIC {
        let mut inflated = Vec::new();
        MultiGzDecoder::new(raw)
            .read_to_end(&mut inflated)
            .map_err(NiftiError::Gzip)?;
        parse_plain(&inflated)
    } else {
        parse_plain(raw)
    }
}

fn parse_plain(bytes: &[u8]) -> Result<Volume, NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::ShortHeader(bytes.len()));
    }
    let endian = if i32::from_le_bytes(bytes[0..4].try_into().unwrap()) == 348 {
        Endian::Little
    } else if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == 348 {
        Endian::Big
    } else {
        return Err(NiftiError::ShortHeader(
            i32::from_le_bytes(bytes[0..4].try_into().unwrap()).max(0) as usize,
        ));
    };
    let magic: [u8; 4] = bytes[344..348].try_into().unwrap();
    if &magic != MAGIC {
        return Err(NiftiError::BadMagic(magic));
    }
    let h = HeaderReader { bytes, endian };

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = h.i16(40 + 2 * i);
    }
    let is_3d = match dim[0] {
        3 => true,
        4 => dim[4] == 1,
        _ => false,
    };
    if !is_3d || dim[1..4].iter().any(|&d| d < 1) {
        return Err(NiftiError::UnsupportedDimensionality(dim));
    }
    let dims = Dims::new(dim[1] as usize, dim[2] as usize, dim[3] as usize);

    let code = h.i16(70);
    let dtype = Dtype::from_nifti_code(code).ok_or(NiftiError::UnsupportedDatatype(code))?;

    let vox_offset = h.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(NiftiError::BadVoxOffset(vox_offset));
    }
    let offset = vox_offset as usize;
    let nbytes = dims.voxel_count() * dtype.bytes_per_voxel();
    if bytes.len() < offset + nbytes {
        return Err(NiftiError::Truncated {
            offset,
            expected: nbytes,
            actual: bytes.len(),
        });
    }

    let bpv = dtype.bytes_per_voxel();
    let section = &bytes[offset..offset + nbytes];
    let data: Vec<f32> = match endian {
        Endian::Little => dtype.decode_le(section),
        Endian::Big => section
            .chunks_exact(bpv)
            .map(|c| {
                let mut le = c.to_vec();
                le.reverse();
                dtype.read_le(&le)
            })
            .collect(),
    };

    let affine = header_affine(&h);
    let mut volume = Volume::with_affine(dims, data, dtype, affine)?;
    let slope = h.f32(112) as f64;
    volume.scl_slope = if slope == 0.0 || !slope.is_finite() { 1.0 } else { slope };
    let inter = h.f32(116) as f64;
    volume.scl_inter = if inter.is_finite() { inter } else { 0.0 };
    volume.source_byte_len = bytes.len() as u64;
    Ok(volume)
}

fn header_affine(h: &HeaderReader<'_>) -> Affine {
    let qform_code = h.i16(252);
    let sform_code = h.i16(254);
    let pixdim: Vec<f64> = (0..8).map(|i| h.f32(76 + 4 * i) as f64).collect();

    if sform_code > 0 {
        let mut m = [[0.0; 4]; 4];
        for (r, row) in m.iter_mut().take(3).enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = h.f32(280 + 16 * r + 4 * c) as f64;
            }
        }
        m[3][3] = 1.0;
        return Affine(m);
    }
    if qform_code > 0 {
        let b = h.f32(256) as f64;
        let c = h.f32(260) as f64;
        let d = h.f32(264) as f64;
        let offsets = [h.f32(268) as f64, h.f32(272) as f64, h.f32(276) as f64];
        return quaternion_affine([b, c, d], offsets, &pixdim);
    }
    Affine::diagonal([
        voxel_size(pixdim[1]),
        voxel_size(pixdim[2]),
        voxel_size(pixdim[3]),
    ])
}

fn voxel_size(p: f64) -> f64 {
    if p.is_finite() && p != 0.0 {
        p.abs()
    } else {
        1.0
    }
}

fn quaternion_affine(bcd: [f64; 3], offsets: [f64; 3], pixdim: &[f64]) -> Affine {
    let [mut b, mut c, mut d] = bcd;
    let mut a = 1.0 - (b * b + c * c + d * d);
    if a < 1e-7 {
        // Nearly 180 degree rotation: renormalize with a = 0.
        let norm = (b * b + c * c + d * d).sqrt();
        b /= norm;
        c /= norm;
        d /= norm;
        a = 0.0;
    } else {
        a = a.sqrt();
    }
    let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
    let (dx, dy, dz) = (
        voxel_size(pixdim[1]),
        voxel_size(pixdim[2]),
        voxel_size(pixdim[3]) * qfac,
    );
    let r = [
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - c * c - b * b,
        ],
    ];
    let mut rs = [[0.0; 3]; 3];
    for i in 0..3 {
        rs[i] = [r[i][0] * dx, r[i][1] * dy, r[i][2] * dz];
    }
    Affine::from_parts(rs, offsets)
}

/// Serializes a volume as a little-endian NIfTI-1 single file.
pub fn encode_nifti(volume: &Volume) -> Result<Vec<u8>, NiftiError> {
    let dims = volume.dims();
    dims.validate()?;
    if dims.as_array().iter().any(|&n| n > MAX_DIM) {
        return Err(NiftiError::UnsupportedDimensionality([0; 8]));
    }
    let dtype = volume.dtype;
    let mut hdr = vec![0u8; HEADER_SIZE];
    let put_i16 = |hdr: &mut Vec<u8>, off: usize, v: i16| {
        hdr[off..off + 2].copy_from_slice(&v.to_le_bytes());
    };
    let put_f32 = |hdr: &mut Vec<u8>, off: usize, v: f32| {
        hdr[off..off + 4].copy_from_slice(&v.to_le_bytes());
    };

    hdr[0..4].copy_from_slice(&348i32.to_le_bytes());
    hdr[38] = b'r';
    let dim = [3, dims.nx as i16, dims.ny as i16, dims.nz as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put_i16(&mut hdr, 40 + 2 * i, *d);
    }
    put_i16(&mut hdr, 70, dtype.nifti_code());
    put_i16(&mut hdr, 72, dtype.bits() as i16);

    let rs = volume.affine.rot_scale();
    put_f32(&mut hdr, 76, 1.0);
    for col in 0..3 {
        let norm = (0..3).map(|r| rs[r][col] * rs[r][col]).sum::<f64>().sqrt();
        put_f32(&mut hdr, 80 + 4 * col, norm as f32);
    }
    for i in 4..8 {
        put_f32(&mut hdr, 76 + 4 * i, 1.0);
    }
    put_f32(&mut hdr, 108, WRITE_VOX_OFFSET as f32);
    put_f32(&mut hdr, 112, volume.scl_slope as f32);
    put_f32(&mut hdr, 116, volume.scl_inter as f32);
    // xyzt_units: millimetres
    hdr[123] = 2;
    put_i16(&mut hdr, 252, 0);
    put_i16(&mut hdr, 254, 1);
    for r in 0..3 {
        for c in 0..4 {
            put_f32(&mut hdr, 280 + 16 * r + 4 * c, volume.affine.0[r][c] as f32);
        }
    }
    hdr[344..348].copy_from_slice(MAGIC);

    let mut out = hdr;
    out.reserve(4 + dims.voxel_count() * dtype.bytes_per_voxel());
    out.extend_from_slice(&[0u8; 4]);
    for &v in volume.data() {
        dtype.push_le(v, &mut out);
    }
    Ok(out)
}

/// Writes `volume` to `path`, gzip-wrapping when the extension is `.gz`.
/// Parent directories are created if missing.
pub fn write_nifti(volume: &Volume, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    let path = path.as_ref();
    let bytes = encode_nifti(volume)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let gz = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("gz"))
        .unwrap_or(false);
    if gz {
        let mut enc = GzEncoder::new(fs::File::create(path)?, Compression::default());
        enc.write_all(&bytes)?;
        enc.finish()?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn minimal_header(dims: [i16; 3], code: i16, bitpix: i16) -> Vec<u8> {
        let mut h = vec![0u8; HEADER_SIZE];
        h[0..4].copy_from_slice(&348i32.to_le_bytes());
        let dim = [3, dims[0], dims[1], dims[2], 1, 1, 1, 1];
        for (i, d) in dim.iter().enumerate() {
            h[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
        }
        h[70..72].copy_from_slice(&code.to_le_bytes());
        h[72..74].copy_from_slice(&bitpix.to_le_bytes());
        for i in 0..4 {
            h[76 + 4 * i..80 + 4 * i].copy_from_slice(&1f32.to_le_bytes());
        }
        h[108..112].copy_from_slice(&348f32.to_le_bytes());
        h[344..348].copy_from_slice(MAGIC);
        h
    }

    /// Flips every multi-byte header field and sample to big-endian.
    fn to_big_endian(le: &[u8], bpv: usize) -> Vec<u8> {
        let mut be = le.to_vec();
        let swap = |buf: &mut [u8], off: usize, n: usize| buf[off..off + n].reverse();
        swap(&mut be, 0, 4);
        for off in (40..56).step_by(2) {
            swap(&mut be, off, 2);
        }
        for off in [56, 60, 64] {
            swap(&mut be, off, 4);
        }
        for off in [68, 70, 72, 74] {
            swap(&mut be, off, 2);
        }
        for off in (76..120).step_by(4) {
            swap(&mut be, off, 4);
        }
        swap(&mut be, 120, 2);
        for off in (124..148).step_by(4) {
            swap(&mut be, off, 4);
        }
        swap(&mut be, 252, 2);
        swap(&mut be, 254, 2);
        for off in (256..328).step_by(4) {
            swap(&mut be, off, 4);
        }
        let vox = f32::from_le_bytes(le[108..112].try_into().unwrap()) as usize;
        for off in (vox..le.len()).step_by(bpv) {
            swap(&mut be, off, bpv);
        }
        be
    }

    #[test]
    fn reads_smallest_legal_file() {
        let mut bytes = minimal_header([2, 2, 2], 2, 8);
        bytes.extend(1u8..=8);
        let v = parse_nifti(&bytes).unwrap();
        assert_eq!(v.dims(), Dims::new(2, 2, 2));
        assert_eq!(v.data(), &[1., 2., 3., 4., 5., 6., 7., 8.]);
        assert_eq!(v.get(1, 0, 0), 2.0);
        assert_eq!(v.get(0, 1, 0), 3.0);
        assert_eq!(v.get(0, 0, 1), 5.0);
        assert_eq!(v.dtype, Dtype::U8);
        assert_eq!(v.source_byte_len, 356);
        assert_eq!(v.affine, Affine::identity());
    }

    #[test]
    fn sform_takes_precedence() {
        let mut bytes = minimal_header([2, 2, 2], 2, 8);
        bytes[252..254].copy_from_slice(&1i16.to_le_bytes());
        bytes[254..256].copy_from_slice(&1i16.to_le_bytes());
        let rows = [[2f32, 0., 0., 1.], [0., 2., 0., 2.], [0., 0., 2., 3.]];
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let off = 280 + 16 * r + 4 * c;
                bytes[off..off + 4].copy_from_slice(&v.to_le_bytes());
            }
        }
        bytes.extend([0u8; 8]);
        let v = parse_nifti(&bytes).unwrap();
        assert_eq!(
            v.affine,
            Affine::from_parts(
                [[2., 0., 0.], [0., 2., 0.], [0., 0., 2.]],
                [1., 2., 3.]
            )
        );
    }

    #[test]
    fn qform_then_pixdim_fallbacks() {
        let mut bytes = minimal_header([2, 2, 2], 2, 8);
        bytes[80..84].copy_from_slice(&0.5f32.to_le_bytes());
        bytes[84..88].copy_from_slice(&2f32.to_le_bytes());
        bytes[88..92].copy_from_slice(&3f32.to_le_bytes());
        bytes.extend([0u8; 8]);
        let v = parse_nifti(&bytes).unwrap();
        assert_eq!(v.affine, Affine::diagonal([0.5, 2.0, 3.0]));

        // qform with identity quaternion and offsets
        bytes[252..254].copy_from_slice(&1i16.to_le_bytes());
        bytes[268..272].copy_from_slice(&(-10f32).to_le_bytes());
        bytes[272..276].copy_from_slice(&4f32.to_le_bytes());
        bytes[276..280].copy_from_slice(&7f32.to_le_bytes());
        let v = parse_nifti(&bytes).unwrap();
        assert_eq!(
            v.affine,
            Affine::from_parts(
                [[0.5, 0., 0.], [0., 2., 0.], [0., 0., 3.]],
                [-10., 4., 7.]
            )
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut bytes = minimal_header([2, 2, 2], 8, 32);
        bytes.extend([0u8; 32]);
        assert!(matches!(
            parse_nifti(&bytes),
            Err(NiftiError::UnsupportedDatatype(8))
        ));

        let mut bytes = minimal_header([2, 2, 2], 2, 8);
        bytes.extend([0u8; 7]);
        assert!(matches!(parse_nifti(&bytes), Err(NiftiError::Truncated { .. })));

        let mut bytes = minimal_header([2, 2, 2], 2, 8);
        bytes[48..50].copy_from_slice(&3i16.to_le_bytes());
        bytes[40..42].copy_from_slice(&4i16.to_le_bytes());
        bytes.extend([0u8; 24]);
        assert!(matches!(
            parse_nifti(&bytes),
            Err(NiftiError::UnsupportedDimensionality(_))
        ));
        // singleton 4th dimension is accepted
        bytes[48..50].copy_from_slice(&1i16.to_le_bytes());
        assert_eq!(parse_nifti(&bytes).unwrap().dims(), Dims::new(2, 2, 2));

        let mut bytes = minimal_header([2, 2, 2], 2, 8);
        bytes[344] = b'x';
        bytes.extend([0u8; 8]);
        assert!(matches!(parse_nifti(&bytes), Err(NiftiError::BadMagic(_))));

        let garbage = [0x1f, 0x8b, 0x08, 0x00, 0x01, 0x02];
        assert!(matches!(parse_nifti(&garbage), Err(NiftiError::Gzip(_))));
    }

    #[test]
    fn single_voxel_file_is_353_bytes() {
        let v = Volume::new(Dims::new(1, 1, 1), vec![7.0], Dtype::U8).unwrap();
        let bytes = encode_nifti(&v).unwrap();
        assert_eq!(bytes.len(), 353);
        assert_eq!(bytes[352], 7);
        assert_eq!(parse_nifti(&bytes).unwrap(), v);
    }

    #[test]
    fn f32_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dims = Dims::new(5, 4, 3);
        let data: Vec<f32> = (0..dims.voxel_count())
            .map(|_| f32::from_bits(rng.gen::<u32>() & 0x7f7f_ffff))
            .collect();
        let affine = Affine::from_parts(
            [[0.9, 0.1, 0.0], [-0.1, 0.9, 0.0], [0.0, 0.0, 1.2]],
            [-90.0, 126.0, -72.0],
        );
        let v = Volume::with_affine(dims, data, Dtype::F32, affine).unwrap();
        let back = parse_nifti(&encode_nifti(&v).unwrap()).unwrap();
        let bits = |v: &Volume| v.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&v));
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(back.affine.0[r][c], v.affine.0[r][c] as f32 as f64);
            }
        }
    }

    #[test]
    fn all_zero_round_trip() {
        let v = Volume::zeros(Dims::new(4, 4, 4), Dtype::I16).unwrap();
        assert_eq!(parse_nifti(&encode_nifti(&v).unwrap()).unwrap(), v);
    }

    #[test]
    fn big_endian_twin_reads_identically() {
        for (dtype, vals) in [
            (Dtype::U8, vec![0.0, 1.0, 200.0, 255.0]),
            (Dtype::I16, vec![-32768.0, -1.0, 300.0, 32767.0]),
            (Dtype::U16, vec![0.0, 65535.0, 1234.0, 7.0]),
            (Dtype::F32, vec![-1.5, 3.25e7, 0.0, 1e-30]),
        ] {
            let mut v = Volume::new(Dims::new(2, 2, 1), vals, dtype).unwrap();
            v.affine = Affine::from_parts(
                [[1.5, 0., 0.], [0., 1.5, 0.], [0., 0., 2.0]],
                [3.0, -4.0, 5.0],
            );
            let le = encode_nifti(&v).unwrap();
            let be = to_big_endian(&le, dtype.bytes_per_voxel());
            assert_ne!(le, be);
            assert_eq!(parse_nifti(&be).unwrap(), parse_nifti(&le).unwrap());
        }
    }

    #[test]
    fn gzip_wrapping_keeps_source_len() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = Volume::new(Dims::new(3, 3, 3), (0..27).map(|i| i as f32).collect(), Dtype::U16)
            .unwrap();
        v.scl_slope = 2.0;
        v.scl_inter = -1.0;
        let plain = dir.path().join("a.nii");
        let gz = dir.path().join("sub/a.nii.gz");
        write_nifti(&v, &plain).unwrap();
        write_nifti(&v, &gz).unwrap();
        let raw_gz = fs::read(&gz).unwrap();
        assert_eq!(&raw_gz[..2], &GZIP_MAGIC);
        let a = read_nifti(&plain).unwrap();
        let b = read_nifti(&gz).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source_byte_len, 352 + 54);
        assert_eq!(a.scl_slope, 2.0);
        assert_eq!(a.scl_inter, -1.0);
        // scaling is stored, not applied
        assert_eq!(a.data()[5], 5.0);
    }
}
