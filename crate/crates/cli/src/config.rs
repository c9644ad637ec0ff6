//! Optional TOML defaults. Each table mirrors one subcommand's flags;
//! a flag given on the command line always wins.
//!
//! ```toml
//! [compress]
//! mode = "roi"
//! dim = "3d"
//! codec = "quant"
//! quality = 6
//!
//! [eval]
//! codecs = ["deflate", "quant"]
//! qualities = [2, 4, 6, 8]
//! repeats = 3
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::{usage, DimArg, ModeArg};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub compress: CompressConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub phantom: PhantomConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressConfig {
    pub mode: Option<ModeArg>,
    pub dim: Option<DimArg>,
    pub codec: Option<String>,
    pub quality: Option<i16>,
    pub exact_affine: Option<bool>,
    pub parallel: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub corpus: Option<PathBuf>,
    pub codecs: Option<Vec<String>>,
    pub qualities: Option<Vec<i16>>,
    pub modes: Option<Vec<ModeArg>>,
    pub dims: Option<Vec<DimArg>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub jobs: Option<usize>,
    pub synthetic: Option<usize>,
    pub phantom_dims: Option<String>,
    pub noise: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dims: Option<String>,
    pub tissue_fraction: Option<f64>,
    pub noise: Option<f64>,
    pub count: Option<usize>,
    pub dtype: Option<String>,
    pub peak: Option<f64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_table() {
        let c = Config::parse(
            r#"
            [compress]
            mode = "full"
            dim = "3d"
            quality = 3
            [eval]
            codecs = ["raw", "quant"]
            modes = ["roi"]
            dims = ["2d", "3d"]
            [report]
            alpha = 0.01
            [phantom]
            dims = "32x32x16"
            "#,
        )
        .unwrap();
        assert_eq!(c.compress.mode, Some(ModeArg::Full));
        assert_eq!(c.compress.dim, Some(DimArg::D3));
        assert_eq!(c.eval.dims, Some(vec![DimArg::D2, DimArg::D3]));
        assert_eq!(c.report.alpha, Some(0.01));
        assert_eq!(c.phantom.dims.as_deref(), Some("32x32x16"));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(Config::parse("[compress]\nmodee = \"roi\"").is_err());
        assert!(Config::parse("[other]\nx = 1").is_err());
    }
}
