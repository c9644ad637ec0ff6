//! Tissue bounding-box extraction.
//!
//! The threshold is the mean of all nonzero voxels; tissue is every voxel at
//! or above it. The tight box around tissue is grown once by [`PAD_VOXELS`]
//! on every face when it leaves more than [`MISS_RATE_LIMIT`] of the nonzero
//! voxels outside.

use std::fmt;

use crate::error::RoiError;
use crate::volume::{Affine, Dims, Volume};

pub const MISS_RATE_LIMIT: f64 = 0.002;
pub const PAD_VOXELS: usize = 3;

/// Inclusive axis-aligned box in voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoiBox {
    pub x_min: usize,
    pub x_max: usize,
    pub y_min: usize,
    pub y_max: usize,
    pub z_min: usize,
    pub z_max: usize,
}

impl RoiBox {
    pub const fn new(
        x_min: usize,
        x_max: usize,
        y_min: usize,
        y_max: usize,
        z_min: usize,
        z_max: usize,
    ) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
            z_min,
            z_max,
        }
    }

    pub fn full(dims: Dims) -> Self {
        Self::new(0, dims.nx - 1, 0, dims.ny - 1, 0, dims.nz - 1)
    }

    pub fn dims(&self) -> Dims {
        Dims::new(
            self.x_max - self.x_min + 1,
            self.y_max - self.y_min + 1,
            self.z_max - self.z_min + 1,
        )
    }

    pub fn voxel_count(&self) -> usize {
        self.dims().voxel_count()
    }

    pub fn origin(&self) -> [usize; 3] {
        [self.x_min, self.y_min, self.z_min]
    }

    /// `[x_min, x_max, y_min, y_max, z_min, z_max]`
    pub fn bounds(&self) -> [usize; 6] {
        [
            self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max,
        ]
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        (self.x_min..=self.x_max).contains(&x)
            && (self.y_min..=self.y_max).contains(&y)
            && (self.z_min..=self.z_max).contains(&z)
    }

    pub fn is_valid_for(&self, dims: Dims) -> bool {
        self.x_min <= self.x_max
            && self.y_min <= self.y_max
            && self.z_min <= self.z_max
            && self.x_max < dims.nx
            && self.y_max < dims.ny
            && self.z_max < dims.nz
    }

    fn check(&self, dims: Dims) -> Result<(), RoiError> {
        if self.is_valid_for(dims) {
            Ok(())
        } else {
            Err(RoiError::BoxOutOfBounds(format!("{self} in {dims}")))
        }
    }

    /// Grows every face by `amount`, clamped to `dims`.
    pub fn padded(&self, amount: usize, dims: Dims) -> Self {
        Self::new(
            self.x_min.saturating_sub(amount),
            (self.x_max + amount).min(dims.nx - 1),
            self.y_min.saturating_sub(amount),
            (self.y_max + amount).min(dims.ny - 1),
            self.z_min.saturating_sub(amount),
            (self.z_max + amount).min(dims.nz - 1),
        )
    }
}

impl fmt::Display for RoiBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "x[{}..={}] y[{}..={}] z[{}..={}]",
            self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiReport {
    pub tau: f64,
    /// Tight box around voxels at or above `tau`.
    pub tight: RoiBox,
    /// Box to crop to: `tight`, or `tight` padded when the miss rate demands it.
    pub roi: RoiBox,
    pub pre_pad_miss_rate: f64,
    pub post_pad_miss_rate: f64,
    pub padded: bool,
}

struct Scan {
    sum: f64,
    /// Finite nonzero voxels; the threshold's denominator.
    tissue: usize,
    /// Every voxel `!= 0`; the miss rate's denominator.
    nonzero: usize,
}

fn scan(volume: &Volume) -> Scan {
    let mut s = Scan { sum: 0.0, tissue: 0, nonzero: 0 };
    for &v in volume.data() {
        if v != 0.0 {
            s.nonzero += 1;
            if v.is_finite() {
                s.sum += v as f64;
                s.tissue += 1;
            }
        }
    }
    s
}

fn threshold_of(s: &Scan) -> Result<f64, RoiError> {
    if s.tissue == 0 {
        return Err(RoiError::AllZeroVolume);
    }
    Ok(s.sum / s.tissue as f64)
}

/// Mean intensity over strictly nonzero voxels, accumulated in `f64` in
/// canonical order.
pub fn compute_threshold(volume: &Volume) -> Result<f64, RoiError> {
    threshold_of(&scan(volume))
}

/// Tight inclusive box of `{x : I(x) >= tau}`.
pub fn compute_bbox(volume: &Volume, tau: f64) -> Result<RoiBox, RoiError> {
    let dims = volume.dims();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut found = false;
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            let row = &volume.data()[dims.index(0, y, z)..dims.index(0, y, z) + dims.nx];
            let first = row.iter().position(|&v| v as f64 >= tau);
            let Some(first) = first else { continue };
            let last = row.iter().rposition(|&v| v as f64 >= tau).unwrap();
            found = true;
            lo[0] = lo[0].min(first);
            hi[0] = hi[0].max(last);
            lo[1] = lo[1].min(y);
            hi[1] = hi[1].max(y);
            lo[2] = lo[2].min(z);
            hi[2] = hi[2].max(z);
        }
    }
    if !found {
        return Err(RoiError::EmptyTissueSet { tau });
    }
    Ok(RoiBox::new(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2]))
}

fn nonzero_inside(volume: &Volume, roi: &RoiBox) -> usize {
    let dims = volume.dims();
    let mut n = 0;
    for z in roi.z_min..=roi.z_max {
        for y in roi.y_min..=roi.y_max {
            let start = dims.index(roi.x_min, y, z);
            let end = dims.index(roi.x_max, y, z) + 1;
            n += volume.data()[start..end].iter().filter(|&&v| v != 0.0).count();
        }
    }
    n
}

fn miss_of(volume: &Volume, roi: &RoiBox, nonzero: usize) -> f64 {
    if nonzero == 0 {
        return 0.0;
    }
    (nonzero - nonzero_inside(volume, roi)) as f64 / nonzero as f64
}

/// Fraction of nonzero voxels lying outside `roi`; 0 for an all-zero volume.
pub fn miss_rate(volume: &Volume, roi: &RoiBox) -> Result<f64, RoiError> {
    roi.check(volume.dims())?;
    Ok(miss_of(volume, roi, scan(volume).nonzero))
}

pub fn extract_roi(volume: &Volume) -> Result<RoiReport, RoiError> {
    let s = scan(volume);
    let tau = threshold_of(&s)?;
    let tight = compute_bbox(volume, tau)?;
    let pre = miss_of(volume, &tight, s.nonzero);
    let (roi, post, padded) = if pre > MISS_RATE_LIMIT {
        let roi = tight.padded(PAD_VOXELS, volume.dims());
        (roi, miss_of(volume, &roi, s.nonzero), true)
    } else {
        (tight, pre, false)
    };
    Ok(RoiReport {
        tau,
        tight,
        roi,
        pre_pad_miss_rate: pre,
        post_pad_miss_rate: post,
        padded,
    })
}

/// Copies the voxels inside `roi` into a new volume whose affine maps the
/// retained voxels to the same world coordinates.
pub fn crop(volume: &Volume, roi: &RoiBox) -> Result<Volume, RoiError> {
    let src = volume.dims();
    roi.check(src)?;
    let out_dims = roi.dims();
    let mut data = Vec::with_capacity(out_dims.voxel_count());
    for z in roi.z_min..=roi.z_max {
        for y in roi.y_min..=roi.y_max {
            let start = src.index(roi.x_min, y, z);
            data.extend_from_slice(&volume.data()[start..start + out_dims.nx]);
        }
    }
    let rs = volume.affine.rot_scale();
    let t = volume.affine.translation();
    let o = roi.origin().map(|v| v as f64);
    let mut t2 = t;
    for r in 0..3 {
        t2[r] += rs[r][0] * o[0] + rs[r][1] * o[1] + rs[r][2] * o[2];
    }
    let affine = Affine::from_parts(rs, t2);
    let mut out = Volume::with_affine(out_dims, data, volume.dtype, affine)
        .expect("cropped dims are valid");
    out.scl_slope = volume.scl_slope;
    out.scl_inter = volume.scl_inter;
    Ok(out)
}

/// Writes `region` into `target` at the origin of `roi`. Inverse of [`crop`]
/// on the box interior.
pub fn paste(target: &mut Volume, roi: &RoiBox, region: &[f32]) -> Result<(), RoiError> {
    let dims = target.dims();
    roi.check(dims)?;
    let rd = roi.dims();
    if region.len() != rd.voxel_count() {
        return Err(RoiError::BoxOutOfBounds(format!(
            "{roi}: region holds {} voxels",
            region.len()
        )));
    }
    for z in 0..rd.nz {
        for y in 0..rd.ny {
            let dst = dims.index(roi.x_min, roi.y_min + y, roi.z_min + z);
            let src = rd.index(0, y, z);
            target.data_mut()[dst..dst + rd.nx].copy_from_slice(&region[src..src + rd.nx]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomSpec};
    use crate::volume::Dtype;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vol(dims: Dims, data: Vec<f32>) -> Volume {
        Volume::new(dims, data, Dtype::F32).unwrap()
    }

    fn phantom(seed: u64) -> Volume {
        generate_phantom(&PhantomSpec {
            seed,
            dims: Dims::new(32, 32, 32),
            ..PhantomSpec::default()
        })
        .unwrap()
    }

    /// Exhaustive scan oracle for the tissue box.
    fn brute_bbox(v: &Volume, tau: f64) -> Option<RoiBox> {
        let d = v.dims();
        let mut b: Option<RoiBox> = None;
        for z in 0..d.nz {
            for y in 0..d.ny {
                for x in 0..d.nx {
                    if v.get(x, y, z) as f64 >= tau {
                        b = Some(match b {
                            None => RoiBox::new(x, x, y, y, z, z),
                            Some(b) => RoiBox::new(
                                b.x_min.min(x),
                                b.x_max.max(x),
                                b.y_min.min(y),
                                b.y_max.max(y),
                                b.z_min.min(z),
                                b.z_max.max(z),
                            ),
                        });
                    }
                }
            }
        }
        b
    }

    #[test]
    fn threshold_examples() {
        let v = vol(Dims::new(5, 1, 1), vec![0., 0., 2., 4., 6.]);
        assert_eq!(compute_threshold(&v).unwrap(), 4.0);
        let v = vol(Dims::new(2, 2, 2), vec![5.0; 8]);
        assert_eq!(compute_threshold(&v).unwrap(), 5.0);
        let v = vol(Dims::new(2, 2, 2), vec![0.0; 8]);
        assert_eq!(compute_threshold(&v), Err(RoiError::AllZeroVolume));
        assert_eq!(extract_roi(&v), Err(RoiError::AllZeroVolume));
    }

    #[test]
    fn threshold_matches_direct_sum_on_phantom() {
        let v = phantom(1);
        let nz: Vec<f64> = v.data().iter().filter(|&&x| x != 0.0).map(|&x| x as f64).collect();
        let oracle = nz.iter().sum::<f64>() / nz.len() as f64;
        assert_eq!(compute_threshold(&v).unwrap(), oracle);
    }

    #[test]
    fn bbox_examples() {
        let dims = Dims::new(8, 8, 8);
        let mut v = Volume::zeros(dims, Dtype::F32).unwrap();
        v.set(3, 4, 5, 10.0);
        assert_eq!(compute_bbox(&v, 10.0).unwrap(), RoiBox::new(3, 3, 4, 4, 5, 5));
        assert!(matches!(
            compute_bbox(&v, 11.0),
            Err(RoiError::EmptyTissueSet { .. })
        ));
        let c = vol(dims, vec![7.0; 512]);
        assert_eq!(compute_bbox(&c, 7.0).unwrap(), RoiBox::full(dims));
        for seed in 1..4 {
            let v = phantom(seed);
            let tau = compute_threshold(&v).unwrap();
            assert_eq!(Some(compute_bbox(&v, tau).unwrap()), brute_bbox(&v, tau));
        }
    }

    #[test]
    fn miss_rate_arithmetic() {
        // 1000 nonzero voxels, 3 of them outside the box
        let dims = Dims::new(10, 10, 11);
        let mut v = Volume::zeros(dims, Dtype::U8).unwrap();
        for z in 0..10 {
            for y in 0..10 {
                for x in 0..10 {
                    v.set(x, y, z, 1.0);
                }
            }
        }
        let roi = RoiBox::new(0, 9, 0, 9, 0, 9);
        assert_eq!(miss_rate(&v, &roi).unwrap(), 0.0);
        v.set(0, 0, 9, 0.0);
        v.set(1, 0, 9, 0.0);
        v.set(2, 0, 9, 0.0);
        v.set(0, 0, 10, 1.0);
        v.set(1, 0, 10, 1.0);
        v.set(2, 0, 10, 1.0);
        assert_eq!(miss_rate(&v, &roi).unwrap(), 0.003);
        let empty = Volume::zeros(dims, Dtype::U8).unwrap();
        assert_eq!(miss_rate(&empty, &roi).unwrap(), 0.0);
        assert!(miss_rate(&v, &RoiBox::new(0, 10, 0, 0, 0, 0)).is_err());
    }

    #[test]
    fn noise_free_phantom_needs_no_padding() {
        let v = phantom(1);
        let r = extract_roi(&v).unwrap();
        assert!(!r.padded);
        assert_eq!(r.pre_pad_miss_rate, 0.0);
        assert_eq!(r.post_pad_miss_rate, 0.0);
        assert_eq!(r.roi, r.tight);
    }

    #[test]
    fn dim_halo_triggers_single_padding() {
        // bright 10x10x10 core plus a dim layer on the +x face
        let dims = Dims::new(20, 20, 20);
        let mut v = Volume::zeros(dims, Dtype::F32).unwrap();
        for z in 5..15 {
            for y in 5..15 {
                for x in 5..15 {
                    v.set(x, y, z, 100.0);
                }
            }
        }
        // 5 dim voxels in front of the +x face: 5/1005 ~ 0.5% missed
        for y in 5..10 {
            v.set(15, y, 7, 1.0);
        }
        let r = extract_roi(&v).unwrap();
        assert_eq!(r.tight, RoiBox::new(5, 14, 5, 14, 5, 14));
        let oracle = 5.0 / 1005.0;
        assert_eq!(r.pre_pad_miss_rate, oracle);
        assert!(r.padded);
        assert_eq!(r.roi, RoiBox::new(2, 17, 2, 17, 2, 17));
        assert_eq!(r.post_pad_miss_rate, 0.0);
    }

    #[test]
    fn padding_clamps_at_edges() {
        let dims = Dims::new(8, 8, 8);
        let mut v = Volume::zeros(dims, Dtype::F32).unwrap();
        for z in 0..8 {
            for y in 0..8 {
                for x in 2..=5 {
                    v.set(x, y, z, 50.0);
                }
            }
        }
        // dim voxels outside the tight x-span, tight box already spans y and z
        for y in 0..8 {
            v.set(0, y, 0, 1.0);
        }
        let r = extract_roi(&v).unwrap();
        assert_eq!(r.tight, RoiBox::new(2, 5, 0, 7, 0, 7));
        assert!(r.padded);
        assert!(r.roi.is_valid_for(dims));
        assert_eq!(r.roi, RoiBox::full(dims));
    }

    #[test]
    fn crop_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dims = Dims::new(8, 8, 8);
        let data: Vec<f32> = (0..512).map(|_| rng.gen_range(0.0..100.0)).collect();
        let mut v = vol(dims, data);
        v.affine = Affine::from_parts(
            [[0.0, -1.5, 0.0], [2.0, 0.0, 0.0], [0.0, 0.3, 1.0]],
            [10.0, 20.0, 30.0],
        );
        let same = crop(&v, &RoiBox::full(dims)).unwrap();
        assert_eq!(same.data(), v.data());
        assert_eq!(same.affine, v.affine);

        let one = crop(&v, &RoiBox::new(3, 3, 4, 4, 5, 5)).unwrap();
        assert_eq!(one.dims(), Dims::new(1, 1, 1));
        assert_eq!(one.data(), &[v.get(3, 4, 5)]);

        for _ in 0..50 {
            let mut pick = |n: usize| {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                (a.min(b), a.max(b))
            };
            let (x0, x1) = pick(8);
            let (y0, y1) = pick(8);
            let (z0, z1) = pick(8);
            let b = RoiBox::new(x0, x1, y0, y1, z0, z1);
            let c = crop(&v, &b).unwrap();
            let cd = c.dims();
            for z in 0..cd.nz {
                for y in 0..cd.ny {
                    for x in 0..cd.nx {
                        assert_eq!(c.get(x, y, z), v.get(x + x0, y + y0, z + z0));
                        let w1 = c.affine.apply([x as f64, y as f64, z as f64]);
                        let w0 = v.affine.apply([(x + x0) as f64, (y + y0) as f64, (z + z0) as f64]);
                        for a in 0..3 {
                            assert!((w1[a] - w0[a]).abs() < 1e-12);
                        }
                    }
                }
            }
        }
        assert!(crop(&v, &RoiBox::new(0, 8, 0, 1, 0, 1)).is_err());
    }

    #[test]
    fn paste_inverts_crop() {
        let v = phantom(5);
        let r = extract_roi(&v).unwrap();
        let c = crop(&v, &r.roi).unwrap();
        let mut out = Volume::zeros(v.dims(), v.dtype).unwrap();
        paste(&mut out, &r.roi, c.data()).unwrap();
        assert_eq!(out.data(), v.data());
    }

    fn arb_volume() -> impl Strategy<Value = Volume> {
        (1usize..7, 1usize..7, 1usize..7)
            .prop_flat_map(|(nx, ny, nz)| {
                let n = nx * ny * nz;
                (
                    Just(Dims::new(nx, ny, nz)),
                    prop::collection::vec(
                        prop_oneof![3 => Just(0.0f32), 2 => 0.5f32..100.0],
                        n,
                    ),
                )
            })
            .prop_filter("needs a nonzero voxel", |(_, d)| d.iter().any(|&v| v != 0.0))
            .prop_map(|(dims, data)| vol(dims, data))
    }

    proptest! {
        #[test]
        fn scale_invariance(v in arb_volume(), c in 0.5f64..8.0) {
            let tau = compute_threshold(&v).unwrap();
            let scaled: Vec<f32> = v.data().iter().map(|&x| (x as f64 * c) as f32).collect();
            let sv = vol(v.dims(), scaled);
            let stau = compute_threshold(&sv).unwrap();
            prop_assert!((stau - c * tau).abs() <= 1e-5 * c * tau);
            // power-of-two scaling is exact in f32, so S is identical
            let p2 = vol(v.dims(), v.data().iter().map(|&x| x * 4.0).collect());
            prop_assert_eq!(
                compute_bbox(&p2, compute_threshold(&p2).unwrap()).unwrap(),
                compute_bbox(&v, tau).unwrap()
            );
        }

        #[test]
        fn tight_box_and_padding_properties(v in arb_volume()) {
            let r = extract_roi(&v).unwrap();
            prop_assert_eq!(Some(r.tight), brute_bbox(&v, r.tau));
            prop_assert!(r.post_pad_miss_rate <= r.pre_pad_miss_rate);
            prop_assert_eq!(r.padded, r.pre_pad_miss_rate > MISS_RATE_LIMIT);
            prop_assert!(r.roi.is_valid_for(v.dims()));
            // shrinking any face drops a tissue voxel
            let t = r.tight;
            let in_s = |b: &RoiBox| {
                let d = v.dims();
                let mut n = 0;
                for z in 0..d.nz { for y in 0..d.ny { for x in 0..d.nx {
                    if v.get(x, y, z) as f64 >= r.tau && b.contains(x, y, z) { n += 1; }
                }}}
                n
            };
            let all = in_s(&t);
            let b = t.bounds();
            for face in 0..6 {
                let mut s = b;
                if face % 2 == 0 {
                    if s[face] == s[face + 1] { continue; }
                    s[face] += 1;
                } else {
                    if s[face] == s[face - 1] { continue; }
                    s[face] -= 1;
                }
                let shrunk = RoiBox::new(s[0], s[1], s[2], s[3], s[4], s[5]);
                prop_assert!(in_s(&shrunk) < all);
            }
            prop_assert!(crop(&v, &r.roi).is_ok());
        }
    }
}
