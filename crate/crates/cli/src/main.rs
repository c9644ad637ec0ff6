mod config;
mod eval;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use medroi_core::{
    compress_full, compress_roi, decompress_with, deserialize, generate_phantom, read_nifti, serialize,
    timed, write_nifti, CodecError, CodecRegistry, ContainerError, DimMode, Dims, Dtype, Mode, NiftiError,
    PhantomSpec, PipelineError, PipelineOptions, RoiError,
};

use crate::config::Config;

#[derive(Parser)]
#[command(name = "medroi", version, about = "ROI-centric compression for 3D medical volumes")]
struct Cli {
    /// TOML file supplying defaults for any subcommand; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a NIfTI volume into a .mroi archive.
    Compress(CompressArgs),
    /// Restore a .mroi archive to a NIfTI volume on the original grid.
    Decompress(DecompressArgs),
    /// Measure codec configurations over a corpus and write a CSV.
    Eval(eval::EvalArgs),
    /// Summarize an evaluation CSV: means, rate-distortion data, significance.
    Report(report::ReportArgs),
    /// Write synthetic phantom volumes.
    Phantom(PhantomArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Full,
    Roi,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => Mode::Full,
            ModeArg::Roi => Mode::Roi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Deserialize)]
pub enum DimArg {
    #[value(name = "2d")]
    #[serde(rename = "2d")]
    D2,
    #[value(name = "3d")]
    #[serde(rename = "3d")]
    D3,
}

impl From<DimArg> for DimMode {
    fn from(d: DimArg) -> Self {
        match d {
            DimArg::D2 => DimMode::Slice2D,
            DimArg::D3 => DimMode::Volume3D,
        }
    }
}

#[derive(Args)]
struct CompressArgs {
    input: PathBuf,
    /// Output archive; defaults to the input name with a .mroi extension.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    dim: Option<DimArg>,
    #[arg(long)]
    codec: Option<String>,
    /// Codec quality; the codec's default when omitted.
    #[arg(long, allow_hyphen_values = true)]
    quality: Option<i16>,
    /// Also store the exact original translation (roi) or affine (full).
    #[arg(long)]
    exact_affine: bool,
    /// Encode slices in parallel.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct DecompressArgs {
    input: PathBuf,
    /// Output NIfTI path (.nii or .nii.gz).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PhantomArgs {
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// NX[xNYxNZ], e.g. 64 or 96x96x48.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    tissue_fraction: Option<f64>,
    /// Background noise amplitude; 0 gives an exactly zero background.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    /// u8, i16, u16 or f32.
    #[arg(long)]
    dtype: Option<String>,
    #[arg(long)]
    peak: Option<f64>,
}

/// Exit status classes.
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_CODEC: u8 = 4;
const EXIT_EMPTY_ROI: u8 = 5;

#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return match e {
                PipelineError::Roi(RoiError::AllZeroVolume | RoiError::EmptyTissueSet { .. }) => EXIT_EMPTY_ROI,
                PipelineError::Codec(_) | PipelineError::Slice { .. } => EXIT_CODEC,
                PipelineError::Container(ContainerError::Codec(_)) => EXIT_CODEC,
                PipelineError::Container(_) => EXIT_IO,
                _ => 1,
            };
        }
        if cause.is::<CodecError>() {
            return EXIT_CODEC;
        }
        if cause.is::<NiftiError>() || cause.is::<ContainerError>() || cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if cause.is::<csv::Error>() {
            return EXIT_IO;
        }
    }
    1
}

pub fn parse_dims(s: &str) -> Result<Dims> {
    let parts: Vec<usize> = s
        .split(['x', 'X', ','])
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("bad dims {s:?}; expected N or NXxNYxNZ")))?;
    match parts.as_slice() {
        [n] => Ok(Dims::new(*n, *n, *n)),
        [x, y, z] => Ok(Dims::new(*x, *y, *z)),
        _ => Err(usage(format!("bad dims {s:?}; expected N or NXxNYxNZ"))),
    }
}

pub fn parse_dtype(s: &str) -> Result<Dtype> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "u8" | "uint8" => Dtype::U8,
        "i16" | "int16" => Dtype::I16,
        "u16" | "uint16" => Dtype::U16,
        "f32" | "float32" => Dtype::F32,
        _ => return Err(usage(format!("unknown dtype {s:?}; use u8, i16, u16 or f32"))),
    })
}

fn cmd_compress(args: CompressArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.compress;
    let mode: Mode = args.mode.or(c.mode).unwrap_or(ModeArg::Roi).into();
    let dim: DimMode = args.dim.or(c.dim).unwrap_or(DimArg::D2).into();
    let codec_id = args.codec.or_else(|| c.codec.clone()).unwrap_or_else(|| "deflate".into());
    let opts = PipelineOptions {
        exact_affine: args.exact_affine || c.exact_affine.unwrap_or(false),
        parallel: args.parallel || c.parallel.unwrap_or(false),
    };
    let registry = CodecRegistry::from_env();
    let codec = match args.quality.or(c.quality) {
        Some(q) => registry.bind(&codec_id, q)?,
        None => registry.bind_default(&codec_id)?,
    };
    let output = args.output.unwrap_or_else(|| default_archive_path(&args.input));
    let volume = read_nifti(&args.input).with_context(|| format!("reading {}", args.input.display()))?;

    let (res, secs) = timed(|| -> Result<Vec<u8>, PipelineError> {
        let archive = match mode {
            Mode::Full => compress_full(&volume, &codec, dim, opts)?,
            Mode::Roi => compress_roi(&volume, &codec, dim, opts)?.archive,
        };
        Ok(serialize(&archive)?)
    });
    let bytes = res?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&output, &bytes).with_context(|| format!("writing {}", output.display()))?;
    let cr = volume.source_byte_len as f64 / bytes.len() as f64;
    println!(
        "mode={mode} dim={dim} codec={}@{} cr={cr:.3} bytes={} seconds={secs:.4} out={}",
        codec.spec().id,
        codec.spec().quality,
        bytes.len(),
        output.display()
    );
    Ok(())
}

fn default_archive_path(input: &Path) -> PathBuf {
    let name = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".gz").unwrap_or(&name);
    let stem = stem.strip_suffix(".nii").unwrap_or(stem);
    input.with_file_name(format!("{stem}.mroi"))
}

fn cmd_decompress(args: DecompressArgs) -> Result<()> {
    let bytes = fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let registry = CodecRegistry::from_env();
    let (res, secs) = timed(|| -> Result<_, PipelineError> {
        let archive = deserialize(&bytes)?;
        let volume = decompress_with(&archive, &registry, PipelineOptions::default())?;
        Ok((archive, volume))
    });
    let (archive, volume) = res?;
    write_nifti(&volume, &args.output).with_context(|| format!("writing {}", args.output.display()))?;
    println!(
        "mode={} dims={} dtype={} seconds={secs:.4} out={}",
        archive.mode,
        volume.dims(),
        volume.dtype,
        args.output.display()
    );
    Ok(())
}

fn cmd_phantom(args: PhantomArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.phantom;
    let out = args
        .out
        .or_else(|| c.out.clone())
        .ok_or_else(|| usage("phantom needs --out"))?;
    let defaults = PhantomSpec::default();
    let dims = match args.dims.or_else(|| c.dims.clone()) {
        Some(s) => parse_dims(&s)?,
        None => defaults.dims,
    };
    let dtype = match args.dtype.or_else(|| c.dtype.clone()) {
        Some(s) => parse_dtype(&s)?,
        None => defaults.dtype,
    };
    let seed = args.seed.or(c.seed).unwrap_or(0);
    let count = args.count.or(c.count).unwrap_or(1);
    let base = PhantomSpec {
        seed,
        dims,
        tissue_fraction: args.tissue_fraction.or(c.tissue_fraction).unwrap_or(defaults.tissue_fraction),
        noise_amplitude: args.noise.or(c.noise).unwrap_or(defaults.noise_amplitude),
        intensity_peak: args
            .peak
            .or(c.peak)
            .unwrap_or(if dtype == Dtype::U8 { 255.0 } else { defaults.intensity_peak }),
        dtype,
    };
    base.validate().map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for s in seed..seed + count as u64 {
        let v = generate_phantom(&PhantomSpec { seed: s, ..base.clone() })?;
        let path = out.join(format!("phantom_{s:04}.nii.gz"));
        write_nifti(&v, &path).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("wrote {count} phantoms ({dims}, {dtype}) to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Compress(a) => cmd_compress(a, &cfg),
        Command::Decompress(a) => cmd_decompress(a),
        Command::Eval(a) => eval::cmd_eval(a, &cfg),
        Command::Report(a) => report::cmd_report(a, &cfg),
        Command::Phantom(a) => cmd_phantom(a, &cfg),
    }
}

/// The error chain joined with ": ", skipping causes whose text an outer
/// message already includes.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

