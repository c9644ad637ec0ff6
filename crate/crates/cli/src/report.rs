use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use medroi_core::metrics::CSV_HEADER;
use medroi_core::stats::bonferroni_correction;
use medroi_core::{holm_correction, paired_t_test, EvalRecord, Mode};

use crate::config::Config;
use crate::usage;

#[derive(Args)]
pub struct ReportArgs {
    /// CSV written by `medroi eval`.
    pub csv: PathBuf,
    /// Output directory for the report files.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Family-wise significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
}

pub const METRICS: [&str; 6] = ["cr", "bpp", "psnr_db", "ssim", "compress_s", "decompress_s"];

fn metric(r: &EvalRecord, name: &str) -> f64 {
    match name {
        "cr" => r.cr,
        "bpp" => r.bpp,
        "psnr_db" => r.psnr_db,
        "ssim" => r.ssim,
        "compress_s" => r.compress_s,
        "decompress_s" => r.decompress_s,
        _ => unreachable!("unknown metric {name}"),
    }
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let unknown: Vec<&str> = headers.iter().filter(|h| !CSV_HEADER.contains(h)).collect();
    if !unknown.is_empty() {
        return Err(usage(format!("{}: unknown column(s) {}", path.display(), unknown.join(", "))));
    }
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(usage(format!(
            "{}: columns must be exactly {}",
            path.display(),
            CSV_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        let r = EvalRecord::from_fields(&fields).map_err(|e| usage(format!("{} row {}: {e}", path.display(), i + 2)))?;
        rows.push(r);
    }
    Ok(rows)
}

/// Configuration key without the mode: codec, quality, dim mode.
type ConfigKey = (String, i16, String);

fn config_key(r: &EvalRecord) -> ConfigKey {
    (r.codec.clone(), r.quality, r.dim_mode.name().to_string())
}

fn finite_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values.filter(|v| v.is_finite()) {
        s += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub struct SummaryRow {
    pub key: ConfigKey,
    pub mode: Mode,
    pub n: usize,
    pub means: [f64; 6],
}

pub fn summarize(rows: &[EvalRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(ConfigKey, &str), Vec<&EvalRecord>> = BTreeMap::new();
    for r in rows {
        groups.entry((config_key(r), r.mode.name())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((key, _), rs)| SummaryRow {
            key,
            mode: rs[0].mode,
            n: rs.len(),
            means: METRICS.map(|m| finite_mean(rs.iter().map(|r| metric(r, m)))),
        })
        .collect()
}

pub struct SignificanceRow {
    pub key: ConfigKey,
    pub metric: &'static str,
    pub n: usize,
    pub mean_full: f64,
    pub mean_roi: f64,
    pub t: f64,
    pub p: f64,
    pub p_holm: f64,
    pub p_bonferroni: f64,
}

/// Paired roi-vs-full tests per configuration and metric. The Holm and
/// Bonferroni families are all configurations sharing one metric.
pub fn significance(rows: &[EvalRecord]) -> Vec<SignificanceRow> {
    let mut pairs: BTreeMap<ConfigKey, BTreeMap<&str, [Option<&EvalRecord>; 2]>> = BTreeMap::new();
    for r in rows {
        let slot = match r.mode {
            Mode::Full => 0,
            Mode::Roi => 1,
        };
        pairs.entry(config_key(r)).or_default().entry(r.volume_id.as_str()).or_default()[slot] = Some(r);
    }
    let mut out = Vec::new();
    for metric_name in METRICS {
        let start = out.len();
        for (key, by_volume) in &pairs {
            let (mut full, mut roi) = (Vec::new(), Vec::new());
            for [f, r] in by_volume.values() {
                if let (Some(f), Some(r)) = (f, r) {
                    let (a, b) = (metric(f, metric_name), metric(r, metric_name));
                    if a.is_finite() && b.is_finite() {
                        full.push(a);
                        roi.push(b);
                    }
                }
            }
            let (t, p) = match paired_t_test(&roi, &full) {
                Ok(r) => (r.t, r.p),
                Err(_) => (f64::NAN, f64::NAN),
            };
            out.push(SignificanceRow {
                key: key.clone(),
                metric: metric_name,
                n: full.len(),
                mean_full: finite_mean(full.iter().copied()),
                mean_roi: finite_mean(roi.iter().copied()),
                t,
                p,
                p_holm: f64::NAN,
                p_bonferroni: f64::NAN,
            });
        }
        let family: Vec<usize> = (start..out.len()).filter(|&i| out[i].p.is_finite()).collect();
        let raw: Vec<f64> = family.iter().map(|&i| out[i].p).collect();
        let holm = holm_correction(&raw).expect("p-values in [0, 1]");
        let bonf = bonferroni_correction(&raw).expect("p-values in [0, 1]");
        for (j, &i) in family.iter().enumerate() {
            out[i].p_holm = holm[j];
            out[i].p_bonferroni = bonf[j];
        }
    }
    out
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

const GNUPLOT_SCRIPT: &str = r#"# Rate-distortion scatter: mean PSNR against mean compression ratio.
# Usage: gnuplot -persist rd_scatter.gp   (or set a terminal/output first)
set datafile separator ","
set key outside right
set xlabel "Compression ratio"
set ylabel "PSNR (dB)"
set grid
plot "rd_scatter.csv" using ($4 eq "full" ? $6 : 1/0):5 skip 1 with points pt 7 title "full", \
     "rd_scatter.csv" using ($4 eq "roi" ? $6 : 1/0):5 skip 1 with points pt 5 title "roi"
"#;

pub fn cmd_report(args: ReportArgs, cfg: &Config) -> Result<()> {
    let out = args
        .out
        .or_else(|| cfg.report.out.clone())
        .unwrap_or_else(|| PathBuf::from("report"));
    let alpha = args.alpha.or(cfg.report.alpha).unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("--alpha {alpha} not in (0, 1)")));
    }
    let rows = read_records(&args.csv)?;
    if rows.is_empty() {
        return Err(usage(format!("{} has no rows", args.csv.display())));
    }
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let summary = summarize(&rows);
    let mut csv = String::from("codec,quality,dim_mode,mode,n,cr,bpp,psnr_db,ssim,compress_s,decompress_s\n");
    let mut table = format!(
        "{:<10} {:>4} {:>3} {:>5} {:>4} {:>9} {:>8} {:>8} {:>7} {:>10} {:>10}\n",
        "codec", "q", "dim", "mode", "n", "CR", "BPP", "PSNR", "SSIM", "comp(s)", "decomp(s)"
    );
    for s in &summary {
        let (codec, q, dim) = &s.key;
        let m = &s.means;
        writeln!(csv, "{codec},{q},{dim},{},{},{}", s.mode, s.n, m.map(fmt_num).join(","))?;
        writeln!(
            table,
            "{codec:<10} {q:>4} {dim:>3} {:>5} {:>4} {:>9.3} {:>8.4} {:>8.2} {:>7.4} {:>10.5} {:>10.5}",
            s.mode.name(),
            s.n,
            m[0],
            m[1],
            m[2],
            m[3],
            m[4],
            m[5]
        )?;
    }
    write_file(&out.join("summary.csv"), &csv)?;

    let mut rd = String::from("codec,quality,dim_mode,mode,psnr_db,cr\n");
    for s in &summary {
        let (codec, q, dim) = &s.key;
        writeln!(rd, "{codec},{q},{dim},{},{},{}", s.mode, fmt_num(s.means[2]), fmt_num(s.means[0]))?;
    }
    write_file(&out.join("rd_scatter.csv"), &rd)?;
    write_file(&out.join("rd_scatter.gp"), GNUPLOT_SCRIPT)?;

    let sig = significance(&rows);
    let mut sc = String::from("codec,quality,dim_mode,metric,n,mean_full,mean_roi,t,p,p_holm,p_bonferroni,significant\n");
    for r in &sig {
        let (codec, q, dim) = &r.key;
        writeln!(
            sc,
            "{codec},{q},{dim},{},{},{},{},{},{},{},{},{}",
            r.metric,
            r.n,
            fmt_num(r.mean_full),
            fmt_num(r.mean_roi),
            fmt_num(r.t),
            fmt_num(r.p),
            fmt_num(r.p_holm),
            fmt_num(r.p_bonferroni),
            r.p_holm < alpha
        )?;
    }
    write_file(&out.join("significance.csv"), &sc)?;

    print!("{table}");
    let cr_rows: Vec<&SignificanceRow> = sig.iter().filter(|r| r.metric == "cr").collect();
    for r in cr_rows {
        let (codec, q, dim) = &r.key;
        println!(
            "cr roi vs full {codec}@{q} {dim}: {:.3} vs {:.3}, Holm p = {}",
            r.mean_roi,
            r.mean_full,
            fmt_num(r.p_holm)
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}
