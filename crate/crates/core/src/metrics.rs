//! Rate and distortion measures.
//!
//! Intensities are normalized by the reference volume's maximum before PSNR
//! and SSIM, so both are independent of the stored sample type. Slice-wise
//! (2D) evaluation averages per-axial-slice scores over the slices the region
//! covers; volumetric (3D) evaluation scores the region as a whole.

use std::fmt;
use std::time::Instant;

use crate::container::{DimMode, Mode};
use crate::error::MetricsError;
use crate::roi::RoiBox;
use crate::volume::{Dims, Volume};

/// Reported PSNR for an exact match, and the ceiling for every PSNR.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Compensated summation in a fixed order.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::default();
        for v in iter {
            k.add(v);
        }
        k
    }
}

pub fn compression_ratio(original_bytes: u64, archive_bytes: u64) -> Result<f64, MetricsError> {
    if original_bytes == 0 || archive_bytes == 0 {
        return Err(MetricsError::ZeroBytes);
    }
    Ok(original_bytes as f64 / archive_bytes as f64)
}

/// Compressed bits per voxel of the original volume.
pub fn bits_per_pixel(archive_bytes: u64, original: Dims) -> f64 {
    8.0 * archive_bytes as f64 / original.voxel_count() as f64
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP_DB)
    }
}

fn peak_of(reference: &Volume) -> f64 {
    let peak = reference
        .data()
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, &v| m.max((v as f64).abs()));
    if peak > 0.0 {
        peak
    } else {
        1.0
    }
}

/// PSNR between two equal-length sample arrays normalized by `peak`.
pub fn psnr_planes(reference: &[f32], test: &[f32], peak: f64) -> f64 {
    let mse = reference
        .iter()
        .zip(test)
        .map(|(&a, &b)| {
            let d = (a as f64 - b as f64) / peak;
            d * d
        })
        .collect::<KahanSum>()
        .value()
        / reference.len() as f64;
    psnr_from_mse(mse)
}

fn check_pair(
    reference: &Volume,
    test: &Volume,
    region: Option<RoiBox>,
) -> Result<RoiBox, MetricsError> {
    if reference.dims() != test.dims() {
        return Err(MetricsError::DimensionMismatch(
            reference.dims().to_string(),
            test.dims().to_string(),
        ));
    }
    let region = region.unwrap_or_else(|| RoiBox::full(reference.dims()));
    if !region.is_valid_for(reference.dims()) {
        return Err(MetricsError::RegionOutOfBounds(region.to_string()));
    }
    Ok(region)
}

/// Squared normalized error summed over one slice of the region.
fn slice_sq_err(reference: &Volume, test: &Volume, region: &RoiBox, z: usize, peak: f64) -> KahanSum {
    let dims = reference.dims();
    let mut acc = KahanSum::default();
    for y in region.y_min..=region.y_max {
        let start = dims.index(region.x_min, y, z);
        let end = start + region.x_max - region.x_min + 1;
        for (&a, &b) in reference.data()[start..end].iter().zip(&test.data()[start..end]) {
            let d = (a as f64 - b as f64) / peak;
            acc.add(d * d);
        }
    }
    acc
}

pub fn psnr(
    reference: &Volume,
    test: &Volume,
    region: Option<RoiBox>,
    dim_mode: DimMode,
) -> Result<f64, MetricsError> {
    let region = check_pair(reference, test, region)?;
    let peak = peak_of(reference);
    let per_slice = (region.x_max - region.x_min + 1) * (region.y_max - region.y_min + 1);
    match dim_mode {
        DimMode::Volume3D => {
            let mut total = KahanSum::default();
            for z in region.z_min..=region.z_max {
                total.add(slice_sq_err(reference, test, &region, z, peak).value());
            }
            Ok(psnr_from_mse(total.value() / region.voxel_count() as f64))
        }
        DimMode::Slice2D => {
            let scores: KahanSum = (region.z_min..=region.z_max)
                .map(|z| {
                    psnr_from_mse(slice_sq_err(reference, test, &region, z, peak).value() / per_slice as f64)
                })
                .collect();
            Ok(scores.value() / region.dims().nz as f64)
        }
    }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable 'valid' filtering of a `w x h` image.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                s += kv * img[y * w + x + i];
            }
            rows[y * ow + x] = s;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                s += kv * rows[(y + i) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

/// Sum of local SSIM values over every window position, and the count.
/// Two constant images score 1 everywhere.
fn ssim_slice(a: &[f64], b: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> (f64, usize) {
    let n = (w - SSIM_WINDOW + 1) * (h - SSIM_WINDOW + 1);
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(a) && constant(b) {
        return (n as f64, n);
    }
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, w, h, k);
    let mu_b = filter_valid(b, w, h, k);
    let e_aa = filter_valid(&aa, w, h, k);
    let e_bb = filter_valid(&bb, w, h, k);
    let e_ab = filter_valid(&ab, w, h, k);
    let mut acc = KahanSum::default();
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        acc.add(((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)));
    }
    (acc.value(), n)
}

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03) on
/// intensities normalized by the reference maximum.
pub fn ssim(
    reference: &Volume,
    test: &Volume,
    region: Option<RoiBox>,
    dim_mode: DimMode,
) -> Result<f64, MetricsError> {
    let region = check_pair(reference, test, region)?;
    let rd = region.dims();
    if rd.nx < SSIM_WINDOW || rd.ny < SSIM_WINDOW {
        return Err(MetricsError::SmallRegion {
            width: rd.nx,
            height: rd.ny,
            window: SSIM_WINDOW,
        });
    }
    let peak = peak_of(reference);
    let k = gaussian_kernel();
    let dims = reference.dims();
    let extract = |v: &Volume, z: usize| {
        let mut out = Vec::with_capacity(rd.nx * rd.ny);
        for y in region.y_min..=region.y_max {
            let s = dims.index(region.x_min, y, z);
            out.extend(v.data()[s..s + rd.nx].iter().map(|&x| x as f64 / peak));
        }
        out
    };
    let mut per_slice = KahanSum::default();
    let mut pooled = KahanSum::default();
    let mut windows = 0usize;
    for z in region.z_min..=region.z_max {
        let (sum, n) = ssim_slice(&extract(reference, z), &extract(test, z), rd.nx, rd.ny, &k);
        per_slice.add(sum / n as f64);
        pooled.add(sum);
        windows += n;
    }
    Ok(match dim_mode {
        DimMode::Slice2D => per_slice.value() / rd.nz as f64,
        DimMode::Volume3D => pooled.value() / windows as f64,
    })
}

/// Runs `action` and returns its result with elapsed wall-clock seconds.
pub fn timed<T>(action: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = action();
    (out, start.elapsed().as_secs_f64())
}

pub const CSV_HEADER: [&str; 11] = [
    "volume_id",
    "codec",
    "quality",
    "mode",
    "dim_mode",
    "cr",
    "bpp",
    "psnr_db",
    "ssim",
    "compress_s",
    "decompress_s",
];

/// One measurement: a volume under one codec configuration and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub volume_id: String,
    pub codec: String,
    pub quality: i16,
    pub mode: Mode,
    pub dim_mode: DimMode,
    pub cr: f64,
    pub bpp: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    /// Includes ROI extraction in roi mode.
    pub compress_s: f64,
    pub decompress_s: f64,
}

impl EvalRecord {
    pub fn to_fields(&self) -> Vec<String> {
        vec![
            self.volume_id.clone(),
            self.codec.clone(),
            self.quality.to_string(),
            self.mode.name().to_string(),
            self.dim_mode.name().to_string(),
            self.cr.to_string(),
            self.bpp.to_string(),
            self.psnr_db.to_string(),
            self.ssim.to_string(),
            self.compress_s.to_string(),
            self.decompress_s.to_string(),
        ]
    }

    pub fn from_fields(fields: &[&str]) -> Result<Self, String> {
        if fields.len() != CSV_HEADER.len() {
            return Err(format!("expected {} fields, got {}", CSV_HEADER.len(), fields.len()));
        }
        let num = |i: usize| -> Result<f64, String> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("{}: {e}", CSV_HEADER[i]))
        };
        let mode = match fields[3].trim() {
            "full" => Mode::Full,
            "roi" => Mode::Roi,
            m => return Err(format!("unknown mode {m:?}")),
        };
        let dim_mode = match fields[4].trim() {
            "2d" => DimMode::Slice2D,
            "3d" => DimMode::Volume3D,
            d => return Err(format!("unknown dim_mode {d:?}")),
        };
        Ok(Self {
            volume_id: fields[0].to_string(),
            codec: fields[1].to_string(),
            quality: fields[2]
                .trim()
                .parse()
                .map_err(|e| format!("quality: {e}"))?,
            mode,
            dim_mode,
            cr: num(5)?,
            bpp: num(6)?,
            psnr_db: num(7)?,
            ssim: num(8)?,
            compress_s: num(9)?,
            decompress_s: num(10)?,
        })
    }
}

impl fmt::Display for EvalRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}@{} {}/{}: CR {:.3} BPP {:.4} PSNR {:.2} dB SSIM {:.4} ({:.4} s / {:.4} s)",
            self.volume_id,
            self.codec,
            self.quality,
            self.mode,
            self.dim_mode,
            self.cr,
            self.bpp,
            self.psnr_db,
            self.ssim,
            self.compress_s,
            self.decompress_s
        )
    }
}
