use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use medroi_core::metrics::CSV_HEADER;
use medroi_core::{
    evaluate, generate_phantom, read_nifti, BoundCodec, CodecRegistry, DimMode, EvalError, EvalRecord, Mode,
    PhantomSpec, PipelineError, Volume,
};
use rayon::prelude::*;

use crate::config::Config;
use crate::{parse_dims, usage, DimArg, ModeArg};

#[derive(Args)]
pub struct EvalArgs {
    /// Directory of .nii/.nii.gz volumes. When absent or empty, a synthetic
    /// phantom corpus is generated instead.
    pub corpus: Option<PathBuf>,
    /// Codec ids, optionally pinned to one quality as `id:q`.
    #[arg(long, value_delimiter = ',')]
    pub codecs: Vec<String>,
    /// Qualities tried for every codec without a pinned one; values outside
    /// a codec's range are skipped for it.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub qualities: Vec<i16>,
    #[arg(long, value_delimiter = ',', value_enum)]
    pub modes: Vec<ModeArg>,
    #[arg(long, value_delimiter = ',', value_enum)]
    pub dims: Vec<DimArg>,
    /// Output CSV.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// First seed of the synthetic corpus.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Timed repetitions per configuration; the median is reported.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Volumes processed concurrently (default: logical cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Size of the synthetic corpus.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Synthetic phantom dims, N or NXxNYxNZ.
    #[arg(long)]
    pub phantom_dims: Option<String>,
    /// Synthetic background noise amplitude.
    #[arg(long)]
    pub noise: Option<f64>,
}

enum Source {
    File { id: String, path: PathBuf },
    Synthetic { id: String, spec: PhantomSpec },
}

impl Source {
    fn id(&self) -> &str {
        match self {
            Source::File { id, .. } | Source::Synthetic { id, .. } => id,
        }
    }

    fn load(&self) -> Result<Volume> {
        match self {
            Source::File { path, .. } => read_nifti(path).with_context(|| format!("reading {}", path.display())),
            Source::Synthetic { spec, .. } => Ok(generate_phantom(spec)?),
        }
    }
}

fn volume_stem(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .map(str::to_string)
}

fn scan_corpus(dir: &Path) -> Result<Vec<Source>> {
    let mut files: Vec<(String, PathBuf)> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter_map(|p| volume_stem(&p).map(|s| (s, p)))
        .collect();
    files.sort();
    Ok(files.into_iter().map(|(id, path)| Source::File { id, path }).collect())
}

pub struct Configuration {
    pub codec: BoundCodec,
    pub mode: Mode,
    pub dim: DimMode,
}

pub fn configurations(
    registry: &CodecRegistry,
    codecs: &[String],
    qualities: &[i16],
    modes: &[Mode],
    dims: &[DimMode],
) -> Result<Vec<Configuration>> {
    let mut out = Vec::new();
    for entry in codecs {
        let (id, pinned) = match entry.split_once(':') {
            Some((id, q)) => (
                id.trim(),
                Some(q.trim().parse::<i16>().map_err(|_| usage(format!("bad quality in {entry:?}")))?),
            ),
            None => (entry.trim(), None),
        };
        let codec = registry.get(id)?;
        let (lo, hi) = codec.quality_range();
        let qs: Vec<i16> = match pinned {
            Some(q) => vec![q],
            None if qualities.is_empty() => vec![codec.default_quality()],
            None => {
                let qs: Vec<i16> = qualities.iter().copied().filter(|q| (lo..=hi).contains(q)).collect();
                if qs.is_empty() {
                    eprintln!("note: no requested quality fits {id} ({lo}..={hi}); using its default");
                    vec![codec.default_quality()]
                } else {
                    qs
                }
            }
        };
        for q in qs {
            let bound = registry.bind(id, q)?;
            for &dim in dims {
                let supported = match dim {
                    DimMode::Slice2D => codec.modes().slice2d,
                    DimMode::Volume3D => codec.modes().volume3d,
                };
                if !supported {
                    eprintln!("note: {id} does not support {dim} input; skipped");
                    continue;
                }
                for &mode in modes {
                    out.push(Configuration {
                        codec: bound.clone(),
                        mode,
                        dim,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn evaluate_volume(source: &Source, configs: &[Configuration], registry: &CodecRegistry, repeats: usize) -> Result<Vec<EvalRecord>> {
    let volume = source.load()?;
    let mut rows = Vec::with_capacity(configs.len());
    for c in configs {
        match evaluate(source.id(), &volume, &c.codec, registry, c.mode, c.dim, repeats) {
            Ok(m) => rows.push(m.record),
            Err(EvalError::Pipeline(PipelineError::Roi(e))) => {
                eprintln!("note: {}: roi mode skipped: {e}", source.id());
            }
            Err(e) => {
                return Err(e).with_context(|| {
                    format!("{} with {}@{} {}/{}", source.id(), c.codec.spec().id, c.codec.spec().quality, c.mode, c.dim)
                })
            }
        }
    }
    Ok(rows)
}

pub fn write_csv(path: &Path, rows: &[EvalRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.to_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_eval(args: EvalArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.eval;
    let pick = |flag: Vec<String>, conf: &Option<Vec<String>>, default: &[&str]| {
        if !flag.is_empty() {
            flag
        } else {
            conf.clone().unwrap_or_else(|| default.iter().map(|s| s.to_string()).collect())
        }
    };
    let codecs = pick(args.codecs, &c.codecs, &["deflate", "quant"]);
    let qualities = if args.qualities.is_empty() { c.qualities.clone().unwrap_or_default() } else { args.qualities };
    let modes: Vec<Mode> = if args.modes.is_empty() {
        c.modes.clone().unwrap_or(vec![ModeArg::Full, ModeArg::Roi])
    } else {
        args.modes
    }
    .into_iter()
    .map(Mode::from)
    .collect();
    let dims: Vec<DimMode> = if args.dims.is_empty() {
        c.dims.clone().unwrap_or(vec![DimArg::D2, DimArg::D3])
    } else {
        args.dims
    }
    .into_iter()
    .map(DimMode::from)
    .collect();
    let out = args
        .out
        .or_else(|| c.out.clone())
        .unwrap_or_else(|| PathBuf::from("results.csv"));
    let repeats = args.repeats.or(c.repeats).unwrap_or(1);
    if repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let seed = args.seed.or(c.seed).unwrap_or(0);

    let registry = CodecRegistry::from_env();
    let configs = configurations(&registry, &codecs, &qualities, &modes, &dims)?;
    if configs.is_empty() {
        return Err(usage("no codec configuration to evaluate"));
    }

    let corpus = args.corpus.or_else(|| c.corpus.clone());
    let mut sources = match &corpus {
        Some(dir) if dir.is_dir() => scan_corpus(dir)?,
        _ => Vec::new(),
    };
    if sources.is_empty() {
        let count = args.synthetic.or(c.synthetic).unwrap_or(20);
        let pdims = match args.phantom_dims.or_else(|| c.phantom_dims.clone()) {
            Some(s) => parse_dims(&s)?,
            None => PhantomSpec::default().dims,
        };
        let noise = args.noise.or(c.noise).unwrap_or(0.0);
        match &corpus {
            Some(dir) => eprintln!("note: no volumes under {}; using {count} synthetic phantoms", dir.display()),
            None => eprintln!("note: no corpus given; using {count} synthetic phantoms"),
        }
        sources = (seed..seed + count as u64)
            .map(|s| Source::Synthetic {
                id: format!("phantom_{s:04}"),
                spec: PhantomSpec {
                    seed: s,
                    dims: pdims,
                    noise_amplitude: noise,
                    ..PhantomSpec::default()
                },
            })
            .collect();
        if let Some(Source::Synthetic { spec, .. }) = sources.first() {
            spec.validate().map_err(|e| usage(e.to_string()))?;
        }
    }

    let jobs = args.jobs.or(c.jobs).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("starting worker pool")?;
    let per_volume: Vec<Vec<EvalRecord>> = pool.install(|| {
        sources
            .par_iter()
            .map(|s| evaluate_volume(s, &configs, &registry, repeats))
            .collect::<Result<_>>()
    })?;
    let rows: Vec<EvalRecord> = per_volume.into_iter().flatten().collect();
    write_csv(&out, &rows)?;
    println!(
        "evaluated {} volumes x {} configurations: {} rows -> {}",
        sources.len(),
        configs.len(),
        rows.len(),
        out.display()
    );
    Ok(())
}
