//! The fixed 54-byte restoration record.
//!
//! Layout, all little-endian:
//!
//! | bytes  | field                                   | type      |
//! |--------|-----------------------------------------|-----------|
//! | 0..12  | x_min, x_max, y_min, y_max, z_min, z_max | 6 x int16 |
//! | 12..18 | original W, H, D                        | 3 x int16 |
//! | 18..54 | rotation-scaling submatrix, row-major   | 9 x f32   |
//!
//! The translation is not stored. [`restore_affine`] rebuilds it with a
//! center-origin convention; callers that need the exact original translation
//! can carry [`TRANSLATION_SIDECAR_LEN`] extra bytes alongside the record.

use crate::error::MetadataError;
use crate::roi::RoiBox;
use crate::volume::{Affine, Dims};

pub const METADATA_LEN: usize = 54;
/// Optional exact translation: 3 x f32.
pub const TRANSLATION_SIDECAR_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiMetadata {
    pub roi: RoiBox,
    pub original_shape: Dims,
    pub rot_scale: [[f32; 3]; 3],
}

impl RoiMetadata {
    /// Captures the record for cropping `roi` out of a volume of `shape`
    /// whose voxel-to-world transform is `affine`.
    pub fn new(roi: RoiBox, shape: Dims, affine: &Affine) -> Self {
        let rs = affine.rot_scale();
        let mut rot_scale = [[0f32; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                rot_scale[r][c] = rs[r][c] as f32;
            }
        }
        Self {
            roi,
            original_shape: shape,
            rot_scale,
        }
    }
}

fn to_i16(field: &'static str, v: usize) -> Result<i16, MetadataError> {
    i16::try_from(v).map_err(|_| MetadataError::FieldOverflow {
        field,
        value: v as i64,
    })
}

pub fn encode_metadata(m: &RoiMetadata) -> Result<[u8; METADATA_LEN], MetadataError> {
    const BOX_FIELDS: [&str; 6] = ["x_min", "x_max", "y_min", "y_max", "z_min", "z_max"];
    const SHAPE_FIELDS: [&str; 3] = ["width", "height", "depth"];
    let mut out = [0u8; METADATA_LEN];
    for (i, (&v, name)) in m.roi.bounds().iter().zip(BOX_FIELDS).enumerate() {
        out[2 * i..2 * i + 2].copy_from_slice(&to_i16(name, v)?.to_le_bytes());
    }
    for (i, (&v, name)) in m.original_shape.as_array().iter().zip(SHAPE_FIELDS).enumerate() {
        out[12 + 2 * i..14 + 2 * i].copy_from_slice(&to_i16(name, v)?.to_le_bytes());
    }
    for r in 0..3 {
        for c in 0..3 {
            let off = 18 + 4 * (3 * r + c);
            out[off..off + 4].copy_from_slice(&m.rot_scale[r][c].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_metadata(bytes: &[u8]) -> Result<RoiMetadata, MetadataError> {
    if bytes.len() != METADATA_LEN {
        return Err(MetadataError::WrongLength(bytes.len()));
    }
    let i16_at = |i: usize| i16::from_le_bytes([bytes[2 * i], bytes[2 * i + 1]]);
    let b: Vec<i16> = (0..6).map(i16_at).collect();
    let s: Vec<i16> = (6..9).map(i16_at).collect();

    for (axis, (&lo, &hi)) in ["x", "y", "z"]
        .into_iter()
        .zip(b.iter().step_by(2).zip(b.iter().skip(1).step_by(2)))
    {
        if lo < 0 || lo > hi {
            return Err(MetadataError::InvalidBox { axis, min: lo, max: hi });
        }
    }
    for (field, &v) in ["width", "height", "depth"].into_iter().zip(&s) {
        if v < 1 {
            return Err(MetadataError::FieldOverflow {
                field,
                value: v as i64,
            });
        }
    }

    let mut rot_scale = [[0f32; 3]; 3];
    for (r, row) in rot_scale.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let off = 18 + 4 * (3 * r + c);
            *v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        }
    }
    let u = |v: i16| v as usize;
    Ok(RoiMetadata {
        roi: RoiBox::new(u(b[0]), u(b[1]), u(b[2]), u(b[3]), u(b[4]), u(b[5])),
        original_shape: Dims::new(u(s[0]), u(s[1]), u(s[2])),
        rot_scale,
    })
}

fn rot_scale_f64(m: &RoiMetadata) -> [[f64; 3]; 3] {
    m.rot_scale.map(|row| row.map(|v| v as f64))
}

/// Original-volume affine under the center-origin convention: world origin
/// at the geometric center of the original voxel grid.
pub fn restore_affine(m: &RoiMetadata) -> Affine {
    let rs = rot_scale_f64(m);
    let c = m.original_shape.as_array().map(|n| (n as f64 - 1.0) / 2.0);
    let mut t = [0.0; 3];
    for (r, tr) in t.iter_mut().enumerate() {
        *tr = -(rs[r][0] * c[0] + rs[r][1] * c[1] + rs[r][2] * c[2]);
    }
    Affine::from_parts(rs, t)
}

/// Original-volume affine from the record plus an exact stored translation.
pub fn restore_affine_exact(m: &RoiMetadata, translation: [f32; 3]) -> Affine {
    Affine::from_parts(rot_scale_f64(m), translation.map(|v| v as f64))
}

pub fn encode_translation(t: [f64; 3]) -> [u8; TRANSLATION_SIDECAR_LEN] {
    let mut out = [0u8; TRANSLATION_SIDECAR_LEN];
    for (i, v) in t.iter().enumerate() {
        out[4 * i..4 * i + 4].copy_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_translation(bytes: &[u8]) -> Result<[f32; 3], MetadataError> {
    if bytes.len() != TRANSLATION_SIDECAR_LEN {
        return Err(MetadataError::WrongLength(bytes.len()));
    }
    Ok([0, 1, 2].map(|i| f32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const IDENTITY: [[f32; 3]; 3] = [[1., 0., 0.], [0., 1., 0.], [0., 0., 1.]];

    fn record(b: [usize; 6], s: [usize; 3], rs: [[f32; 3]; 3]) -> RoiMetadata {
        RoiMetadata {
            roi: RoiBox::new(b[0], b[1], b[2], b[3], b[4], b[5]),
            original_shape: Dims::new(s[0], s[1], s[2]),
            rot_scale: rs,
        }
    }

    #[test]
    fn little_endian_layout() {
        let bytes = encode_metadata(&record([1, 2, 3, 4, 5, 6], [10, 11, 12], IDENTITY)).unwrap();
        assert_eq!(bytes.len(), 54);
        assert_eq!(&bytes[0..2], &[0x01, 0x00]);
        assert_eq!(&bytes[10..12], &[0x06, 0x00]);
        assert_eq!(&bytes[12..18], &[10, 0, 11, 0, 12, 0]);
        assert_eq!(&bytes[18..22], &[0x00, 0x00, 0x80, 0x3f]);
        // (1, 1) of the matrix: 4th float
        assert_eq!(&bytes[18 + 16..18 + 20], &[0x00, 0x00, 0x80, 0x3f]);
        assert_eq!(&bytes[22..34], &[0u8; 12]);
    }

    #[test]
    fn zero_record() {
        let bytes = encode_metadata(&record([0; 6], [1, 1, 1], [[0.0; 3]; 3])).unwrap();
        let mut expected = [0u8; 54];
        expected[12..18].copy_from_slice(&[1, 0, 1, 0, 1, 0]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode_metadata(&[0u8; 53]), Err(MetadataError::WrongLength(53)));
        assert_eq!(decode_metadata(&[0u8; 55]), Err(MetadataError::WrongLength(55)));
        let mut bytes = encode_metadata(&record([0, 9, 0, 9, 0, 9], [10, 10, 10], IDENTITY)).unwrap();
        bytes[0..2].copy_from_slice(&5i16.to_le_bytes());
        bytes[2..4].copy_from_slice(&2i16.to_le_bytes());
        assert_eq!(
            decode_metadata(&bytes),
            Err(MetadataError::InvalidBox { axis: "x", min: 5, max: 2 })
        );
    }

    #[test]
    fn encode_rejects_overflow() {
        let m = record([0, 40000, 0, 1, 0, 1], [40001, 2, 2], IDENTITY);
        assert!(matches!(
            encode_metadata(&m),
            Err(MetadataError::FieldOverflow { field: "x_max", .. })
        ));
    }

    #[test]
    fn seeded_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        for _ in 0..1000 {
            let mut b = [0usize; 6];
            let mut s = [0usize; 3];
            for a in 0..3 {
                s[a] = rng.gen_range(1..=32767);
                let lo = rng.gen_range(0..s[a]);
                b[2 * a] = lo;
                b[2 * a + 1] = rng.gen_range(lo..s[a]);
            }
            let rs = [[0f32; 3]; 3].map(|r| r.map(|_| rng.gen_range(-4.0f32..4.0)));
            let m = record(b, s, rs);
            let bytes = encode_metadata(&m).unwrap();
            assert_eq!(bytes.len(), METADATA_LEN);
            assert_eq!(decode_metadata(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn restore_affine_examples() {
        let a = restore_affine(&record([0; 6], [3, 3, 3], IDENTITY));
        assert_eq!(a.translation(), [-1.0, -1.0, -1.0]);
        assert_eq!(a.0[3], [0.0, 0.0, 0.0, 1.0]);
        let two = [[2., 0., 0.], [0., 2., 0.], [0., 0., 2.]];
        let a = restore_affine(&record([0; 6], [5, 5, 5], two));
        assert_eq!(a.translation(), [-4.0, -4.0, -4.0]);
    }

    #[test]
    fn restore_affine_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let rs = [[0f32; 3]; 3].map(|r| r.map(|_| rng.gen_range(-3.0f32..3.0)));
            let shape = [0; 3].map(|_| rng.gen_range(1..400usize));
            let m = record([0; 6], shape, rs);
            let a = restore_affine(&m);
            let c = shape.map(|n| (n as f64 - 1.0) / 2.0);
            for r in 0..3 {
                let mut dot = 0.0;
                for k in 0..3 {
                    dot += rs[r][k] as f64 * c[k];
                }
                assert!((a.0[r][3] + dot).abs() < 1e-9);
                // the geometric center maps to the world origin
                assert!(a.apply(c)[r].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn translation_sidecar() {
        let m = record([0; 6], [4, 4, 4], IDENTITY);
        let t = decode_translation(&encode_translation([1.5, -2.0, 90.25])).unwrap();
        assert_eq!(restore_affine_exact(&m, t).translation(), [1.5, -2.0, 90.25]);
        assert!(decode_translation(&[0; 11]).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_encode(bytes in prop::collection::vec(any::<u8>(), 54)) {
            // any byte string that decodes re-encodes to itself
            if let Ok(m) = decode_metadata(&bytes) {
                let again = encode_metadata(&m).unwrap();
                // NaN payloads are preserved bitwise, so compare bytes
                prop_assert_eq!(&again[..], &bytes[..]);
            }
        }
    }
}
