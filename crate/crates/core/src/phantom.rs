//! Seeded synthetic brain-like volumes.
//!
//! A phantom is a centered ellipsoid of "tissue" in an otherwise empty (or
//! noisy) field. Tissue intensity falls off gently with normalized radius and
//! carries a seeded ripple, so the mean-intensity threshold splits the tissue
//! into a bright majority and scattered dim voxels.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::PhantomError;
use crate::roi::RoiBox;
use crate::volume::{Affine, Dims, Dtype, Volume};

/// Minimum extent per axis.
pub const MIN_DIM: usize = 8;

const BASE_LEVEL: f64 = 0.9;
const FALLOFF: f64 = 0.06;
const RIPPLE: f64 = 0.1;
const FLOOR: f64 = 0.31;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub seed: u64,
    pub dims: Dims,
    /// Fraction of each axis covered by the ellipsoid's bounding box.
    pub tissue_fraction: f64,
    /// Background is uniform in `[0, noise_amplitude]`; exactly zero when 0.
    pub noise_amplitude: f64,
    pub intensity_peak: f64,
    pub dtype: Dtype,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            dims: Dims::new(64, 64, 64),
            tissue_fraction: 0.5,
            noise_amplitude: 0.0,
            intensity_peak: 1000.0,
            dtype: Dtype::I16,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |msg: String| Err(PhantomError::InvalidSpec(msg));
        self.dims.validate()?;
        if self.dims.as_array().iter().any(|&n| n < MIN_DIM) {
            return bad(format!("dims {} below {MIN_DIM} on some axis", self.dims));
        }
        if !(self.tissue_fraction > 0.0 && self.tissue_fraction <= 1.0) {
            return bad(format!("tissue_fraction {} not in (0, 1]", self.tissue_fraction));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return bad(format!("noise_amplitude {} must be >= 0", self.noise_amplitude));
        }
        if !(self.intensity_peak > 0.0 && self.intensity_peak.is_finite()) {
            return bad(format!("intensity_peak {} must be > 0", self.intensity_peak));
        }
        if self.dtype.is_integer() {
            let max = self.dtype.saturate(f32::MAX) as f64;
            if self.intensity_peak > max || self.noise_amplitude > max {
                return bad(format!("intensities exceed {} range", self.dtype));
            }
            if self.intensity_peak * FLOOR < 1.0 {
                return bad("intensity_peak too small for an integer dtype".into());
            }
        }
        Ok(())
    }

    /// The ellipsoid's designed bounding box.
    pub fn tissue_box(&self) -> RoiBox {
        let e = self.extents();
        RoiBox::new(
            e[0].0,
            e[0].0 + e[0].1 - 1,
            e[1].0,
            e[1].0 + e[1].1 - 1,
            e[2].0,
            e[2].0 + e[2].1 - 1,
        )
    }

    /// `(start, length)` of the tissue extent along each axis.
    fn extents(&self) -> [(usize, usize); 3] {
        let mut out = [(0, 0); 3];
        for (o, &n) in out.iter_mut().zip(self.dims.as_array().iter()) {
            let len = ((self.tissue_fraction * n as f64).round() as usize).clamp(1, n);
            *o = ((n - len) / 2, len);
        }
        out
    }
}

/// One seeded sinusoid per axis; their average is the ripple field.
struct Ripple {
    freq: [f64; 3],
    phase: [f64; 3],
}

impl Ripple {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut freq = [0.0; 3];
        let mut phase = [0.0; 3];
        for a in 0..3 {
            freq[a] = 2.0 * PI / rng.gen_range(4.0..7.0);
            phase[a] = rng.gen_range(0.0..2.0 * PI);
        }
        Self { freq, phase }
    }

    fn at(&self, p: [usize; 3]) -> f64 {
        (0..3)
            .map(|a| (self.freq[a] * p[a] as f64 + self.phase[a]).sin())
            .sum::<f64>()
            / 3.0
    }
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Volume, PhantomError> {
    spec.validate()?;
    let dims = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ripple = Ripple::new(&mut rng);
    // Separate stream so the tissue pattern does not depend on noise settings.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);

    let ext = spec.extents();
    let center: Vec<f64> = ext.iter().map(|&(s, n)| s as f64 + n as f64 / 2.0).collect();
    let semi: Vec<f64> = ext.iter().map(|&(_, n)| n as f64 / 2.0).collect();
    let min_tissue = if spec.dtype.is_integer() { 1.0 } else { f32::MIN_POSITIVE };

    let mut data = Vec::with_capacity(dims.voxel_count());
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let p = [x, y, z];
                let rho2: f64 = (0..3)
                    .map(|a| {
                        let u = (p[a] as f64 + 0.5 - center[a]) / semi[a];
                        u * u
                    })
                    .sum();
                let v = if rho2 <= 1.0 {
                    let level = (BASE_LEVEL - FALLOFF * rho2 + RIPPLE * ripple.at(p))
                        .clamp(FLOOR, 1.0);
                    spec.dtype
                        .saturate((level * spec.intensity_peak) as f32)
                        .max(min_tissue)
                } else if spec.noise_amplitude > 0.0 {
                    let n = noise_rng.gen::<f64>() * spec.noise_amplitude;
                    spec.dtype.saturate(n as f32)
                } else {
                    0.0
                };
                data.push(v);
            }
        }
    }
    let affine = Affine::from_parts(
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        [
            -(dims.nx as f64) / 2.0,
            -(dims.ny as f64) / 2.0,
            -(dims.nz as f64) / 2.0,
        ],
    );
    Ok(Volume::with_affine(dims, data, spec.dtype, affine)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roi::extract_roi;

    fn spec(seed: u64, n: usize, frac: f64, noise: f64) -> PhantomSpec {
        PhantomSpec {
            seed,
            dims: Dims::new(n, n, n),
            tissue_fraction: frac,
            noise_amplitude: noise,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn zero_outside_designed_box() {
        let s = spec(1, 32, 0.5, 0.0);
        let v = generate_phantom(&s).unwrap();
        let b = s.tissue_box();
        assert_eq!(b, RoiBox::new(8, 23, 8, 23, 8, 23));
        let mut reach = [usize::MAX, 0, usize::MAX, 0, usize::MAX, 0];
        for z in 0..32 {
            for y in 0..32 {
                for x in 0..32 {
                    let val = v.get(x, y, z);
                    if !b.contains(x, y, z) {
                        assert_eq!(val, 0.0);
                    } else if val != 0.0 {
                        reach[0] = reach[0].min(x);
                        reach[1] = reach[1].max(x);
                        reach[2] = reach[2].min(y);
                        reach[3] = reach[3].max(y);
                        reach[4] = reach[4].min(z);
                        reach[5] = reach[5].max(z);
                    }
                }
            }
        }
        // the ellipsoid touches every face of its box
        assert_eq!(reach, [8, 23, 8, 23, 8, 23]);
    }

    #[test]
    fn tissue_intensities_in_band() {
        let s = spec(4, 24, 0.75, 0.0);
        let v = generate_phantom(&s).unwrap();
        for &x in v.data().iter().filter(|&&x| x != 0.0) {
            assert!(x as f64 > 0.3 * s.intensity_peak && x as f64 <= s.intensity_peak);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate_phantom(&spec(7, 16, 0.5, 20.0)).unwrap();
        let b = generate_phantom(&spec(7, 16, 0.5, 20.0)).unwrap();
        let c = generate_phantom(&spec(8, 16, 0.5, 20.0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data(), c.data());
        let a0 = generate_phantom(&spec(7, 16, 0.5, 0.0)).unwrap();
        let c0 = generate_phantom(&spec(8, 16, 0.5, 0.0)).unwrap();
        assert_ne!(a0.data(), c0.data());
    }

    #[test]
    fn noise_stays_in_range() {
        let s = spec(3, 16, 0.5, 40.0);
        let v = generate_phantom(&s).unwrap();
        let b = s.tissue_box();
        let mut nonzero = 0;
        for z in 0..16 {
            for y in 0..16 {
                for x in 0..16 {
                    if !b.contains(x, y, z) {
                        let n = v.get(x, y, z);
                        assert!((0.0..=40.0).contains(&n));
                        nonzero += (n > 0.0) as usize;
                    }
                }
            }
        }
        assert!(nonzero > 100);
    }

    #[test]
    fn full_fraction_spans_volume() {
        for seed in [1, 2, 3] {
            let v = generate_phantom(&spec(seed, 32, 1.0, 0.0)).unwrap();
            let report = extract_roi(&v).unwrap();
            assert_eq!(report.roi, RoiBox::new(0, 31, 0, 31, 0, 31), "seed {seed}");
        }
    }

    #[test]
    fn mean_threshold_split_is_nontrivial() {
        let v = generate_phantom(&spec(1, 32, 0.5, 0.0)).unwrap();
        let report = extract_roi(&v).unwrap();
        let below = v
            .data()
            .iter()
            .filter(|&&x| x > 0.0 && (x as f64) < report.tau)
            .count();
        let nonzero = v.data().iter().filter(|&&x| x > 0.0).count();
        assert!(below > nonzero / 10 && below < nonzero * 9 / 10);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_phantom(&spec(0, 7, 0.5, 0.0)).is_err());
        assert!(generate_phantom(&spec(0, 8, 0.0, 0.0)).is_err());
        assert!(generate_phantom(&spec(0, 8, 1.5, 0.0)).is_err());
        assert!(generate_phantom(&spec(0, 8, 0.5, -1.0)).is_err());
        let mut s = spec(0, 8, 0.5, 0.0);
        s.dtype = Dtype::U8;
        assert!(generate_phantom(&s).is_err()); // peak 1000 > 255
        s.intensity_peak = 255.0;
        assert!(generate_phantom(&s).is_ok());
    }
}
