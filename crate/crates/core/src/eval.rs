//! One measurement of a volume under one codec configuration.
//!
//! Compression time covers ROI extraction (roi mode), cropping, encoding and
//! serialization. Decompression time covers deserialization, decoding and
//! restoration onto the original grid. Quality is scored inside the ROI in
//! roi mode and over the whole volume in full mode.

use crate::codec::{BoundCodec, CodecRegistry};
use crate::container::{deserialize, serialize, Archive, DimMode, Mode};
use crate::error::{EvalError, MetricsError};
use crate::metrics::{bits_per_pixel, compression_ratio, psnr, ssim, timed, EvalRecord};
use crate::pipeline::{compress_full, compress_roi, decompress_with, PipelineOptions};
use crate::roi::RoiBox;
use crate::volume::Volume;

#[derive(Debug, Clone)]
pub struct Measurement {
    pub record: EvalRecord,
    pub archive_bytes: usize,
    /// Scored region; the whole volume in full mode.
    pub region: RoiBox,
    /// Every repeat, in run order.
    pub compress_runs: Vec<f64>,
    pub decompress_runs: Vec<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn compress_once(
    volume: &Volume,
    codec: &BoundCodec,
    mode: Mode,
    dim_mode: DimMode,
    opts: PipelineOptions,
) -> Result<(Archive, Vec<u8>), EvalError> {
    let archive = match mode {
        Mode::Full => compress_full(volume, codec, dim_mode, opts)?,
        Mode::Roi => compress_roi(volume, codec, dim_mode, opts)?.archive,
    };
    let bytes = serialize(&archive)?;
    Ok((archive, bytes))
}

/// Runs compression and decompression `repeats` times serially; timings are
/// the per-phase medians. Rate and quality come from the first run.
pub fn evaluate(
    volume_id: &str,
    volume: &Volume,
    codec: &BoundCodec,
    registry: &CodecRegistry,
    mode: Mode,
    dim_mode: DimMode,
    repeats: usize,
) -> Result<Measurement, EvalError> {
    if repeats == 0 {
        return Err(EvalError::NoRepeats);
    }
    let opts = PipelineOptions::default();
    let mut compress_runs = Vec::with_capacity(repeats);
    let mut decompress_runs = Vec::with_capacity(repeats);
    let mut first: Option<(Archive, usize, Volume)> = None;
    for _ in 0..repeats {
        let (res, c_s) = timed(|| compress_once(volume, codec, mode, dim_mode, opts));
        let (archive, bytes) = res?;
        let (restored, d_s) = timed(|| -> Result<Volume, EvalError> {
            let parsed = deserialize(&bytes)?;
            Ok(decompress_with(&parsed, registry, opts)?)
        });
        let restored = restored?;
        compress_runs.push(c_s);
        decompress_runs.push(d_s);
        if first.is_none() {
            first = Some((archive, bytes.len(), restored));
        }
    }
    let (archive, archive_bytes, restored) = first.expect("repeats >= 1");
    let region = match &archive.metadata {
        Some(m) => m.roi,
        None => RoiBox::full(volume.dims()),
    };
    let scored = (mode == Mode::Roi).then_some(region);
    let psnr_db = psnr(volume, &restored, scored, dim_mode)?;
    let ssim = match ssim(volume, &restored, scored, dim_mode) {
        Ok(s) => s,
        Err(MetricsError::SmallRegion { .. }) => f64::NAN,
        Err(e) => return Err(e.into()),
    };
    let record = EvalRecord {
        volume_id: volume_id.to_string(),
        codec: codec.spec().id.clone(),
        quality: codec.spec().quality,
        mode,
        dim_mode,
        cr: compression_ratio(volume.source_byte_len, archive_bytes as u64)?,
        bpp: bits_per_pixel(archive_bytes as u64, volume.dims()),
        psnr_db,
        ssim,
        compress_s: median(&compress_runs),
        decompress_s: median(&decompress_runs),
    };
    Ok(Measurement {
        record,
        archive_bytes,
        region,
        compress_runs,
        decompress_runs,
    })
}
