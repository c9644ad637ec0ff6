//! Full-volume and ROI compression, and restoration.

use rayon::prelude::*;

use crate::codec::{Block, BoundCodec, CodecRegistry};
use crate::container::{Archive, DimMode, Mode};
use crate::error::{CodecError, PipelineError};
use crate::metadata::{restore_affine, restore_affine_exact, RoiMetadata};
use crate::roi::{crop, extract_roi, paste, RoiBox, RoiReport};
use crate::volume::{Affine, Dims, Volume};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineOptions {
    /// Store the exact original translation (roi mode, +12 bytes) or the
    /// full affine (full mode, +48 bytes).
    pub exact_affine: bool,
    /// Encode and decode slices on the rayon pool. Archives are identical
    /// either way.
    pub parallel: bool,
}

#[derive(Debug, Clone)]
pub struct RoiCompression {
    pub archive: Archive,
    pub report: RoiReport,
}

fn encode_region(
    region: &Volume,
    codec: &BoundCodec,
    dim_mode: DimMode,
    parallel: bool,
) -> Result<Vec<Vec<u8>>, PipelineError> {
    match dim_mode {
        DimMode::Volume3D => Ok(vec![codec.encode_volume(region)?.bytes]),
        DimMode::Slice2D => {
            let d = region.dims();
            let encode = |z: usize| {
                codec
                    .encode_block(
                        Block {
                            dims: Dims::new(d.nx, d.ny, 1),
                            dtype: region.dtype,
                            samples: region.slice(z),
                        },
                        true,
                    )
                    .map(|p| p.bytes)
                    .map_err(|source| PipelineError::Slice { index: z, source })
            };
            if parallel {
                (0..d.nz).into_par_iter().map(encode).collect()
            } else {
                (0..d.nz).map(encode).collect()
            }
        }
    }
}

pub fn compress_full(
    volume: &Volume,
    codec: &BoundCodec,
    dim_mode: DimMode,
    opts: PipelineOptions,
) -> Result<Archive, PipelineError> {
    let payloads = encode_region(volume, codec, dim_mode, opts.parallel)?;
    Ok(Archive {
        mode: Mode::Full,
        dim_mode,
        dtype: volume.dtype,
        codec_id: codec.spec().id.clone(),
        quality: codec.spec().quality,
        shape: volume.dims(),
        metadata: None,
        translation: None,
        affine: opts
            .exact_affine
            .then(|| Archive::affine_record(&volume.affine)),
        payloads,
    })
}

pub fn compress_roi(
    volume: &Volume,
    codec: &BoundCodec,
    dim_mode: DimMode,
    opts: PipelineOptions,
) -> Result<RoiCompression, PipelineError> {
    let report = extract_roi(volume)?;
    let archive = compress_box(volume, &report.roi, codec, dim_mode, opts)?;
    Ok(RoiCompression { archive, report })
}

/// Roi-mode compression of a caller-chosen box.
pub fn compress_box(
    volume: &Volume,
    roi: &RoiBox,
    codec: &BoundCodec,
    dim_mode: DimMode,
    opts: PipelineOptions,
) -> Result<Archive, PipelineError> {
    let metadata = RoiMetadata::new(*roi, volume.dims(), &volume.affine);
    let region = crop(volume, roi)?;
    let payloads = encode_region(&region, codec, dim_mode, opts.parallel)?;
    let t = volume.affine.translation();
    Ok(Archive {
        mode: Mode::Roi,
        dim_mode,
        dtype: volume.dtype,
        codec_id: codec.spec().id.clone(),
        quality: codec.spec().quality,
        shape: volume.dims(),
        metadata: Some(metadata),
        translation: opts.exact_affine.then(|| t.map(|v| v as f32)),
        affine: None,
        payloads,
    })
}

/// Affine the restored volume carries.
pub fn archive_affine(archive: &Archive) -> Affine {
    match (&archive.metadata, archive.translation, &archive.affine) {
        (Some(m), Some(t), _) => restore_affine_exact(m, t),
        (Some(m), None, _) => restore_affine(m),
        (None, _, Some(a)) => {
            let mut m = [[0.0; 4]; 4];
            for r in 0..3 {
                for c in 0..4 {
                    m[r][c] = a[r][c] as f64;
                }
            }
            m[3][3] = 1.0;
            Affine(m)
        }
        (None, _, None) => restore_affine(&RoiMetadata::new(
            RoiBox::full(archive.shape),
            archive.shape,
            &Affine::identity(),
        )),
    }
}

fn decode_region(
    archive: &Archive,
    codec: &BoundCodec,
    parallel: bool,
) -> Result<Vec<f32>, PipelineError> {
    let region = archive.encoded_dims();
    if archive.payloads.len() != archive.expected_payloads() {
        return Err(PipelineError::Shape(format!(
            "{} payloads for a {region} region in {} mode",
            archive.payloads.len(),
            archive.dim_mode
        )));
    }
    match archive.dim_mode {
        DimMode::Volume3D => {
            Ok(codec.decode_block(&archive.payloads[0], region, archive.dtype, false)?)
        }
        DimMode::Slice2D => {
            let plane = Dims::new(region.nx, region.ny, 1);
            let decode = |(z, p): (usize, &Vec<u8>)| {
                codec
                    .decode_block(p, plane, archive.dtype, true)
                    .map_err(|source: CodecError| PipelineError::Slice { index: z, source })
            };
            let slices: Vec<Vec<f32>> = if parallel {
                archive.payloads.par_iter().enumerate().map(decode).collect::<Result<_, _>>()?
            } else {
                archive.payloads.iter().enumerate().map(decode).collect::<Result<_, _>>()?
            };
            Ok(slices.concat())
        }
    }
}

pub fn decompress(archive: &Archive, registry: &CodecRegistry) -> Result<Volume, PipelineError> {
    decompress_with(archive, registry, PipelineOptions::default())
}

pub fn decompress_with(
    archive: &Archive,
    registry: &CodecRegistry,
    opts: PipelineOptions,
) -> Result<Volume, PipelineError> {
    let codec = registry.bind(&archive.codec_id, archive.quality)?;
    let data = decode_region(archive, &codec, opts.parallel)?;
    let affine = archive_affine(archive);
    match (archive.mode, &archive.metadata) {
        (Mode::Full, _) => Ok(Volume::with_affine(archive.shape, data, archive.dtype, affine)?),
        (Mode::Roi, Some(m)) => {
            let mut out = Volume::zeros(m.original_shape, archive.dtype)?;
            out.affine = affine;
            paste(&mut out, &m.roi, &data)?;
            Ok(out)
        }
        (Mode::Roi, None) => Err(PipelineError::Shape("roi archive without metadata".into())),
    }
}
