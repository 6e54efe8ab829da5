use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;

use super::{validate_precision, CResult, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Settings after merging flags over the config file over defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub precision_bits: u32,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub window: Option<String>,
    pub grid: usize,
    pub tol: Option<f64>,
    pub max_precision_bits: u32,
}

pub const DEFAULT_N: usize = 128;
pub const DEFAULT_PRECISION: u32 = 128;
pub const DEFAULT_GRID: usize = 1025;

#[derive(Debug, Default)]
pub(crate) struct Flags {
    pub n: Option<usize>,
    pub precision: Option<u32>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub window: Option<String>,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub max_precision: Option<u32>,
}

const KEYS: [&str; 8] = [
    "n",
    "precision",
    "format",
    "out",
    "window",
    "grid",
    "tol",
    "max_precision",
];

/// Parses `key = value` lines; `#` starts a comment.
pub(crate) fn parse_config(text: &str) -> CResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key = value", i + 1))
        })?;
        let k = k.trim().to_string();
        if !KEYS.contains(&k.as_str()) {
            return Err(CliError::Usage(format!(
                "config line {}: unknown key {k:?}",
                i + 1
            )));
        }
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

pub(crate) fn read_config_file(path: &Path) -> CResult<BTreeMap<String, String>> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn typed<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> CResult<Option<T>> {
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {v:?}")))
        })
        .transpose()
}

impl RunConfig {
    pub(crate) fn merge(flags: Flags, file: BTreeMap<String, String>) -> CResult<RunConfig> {
        let format = match (flags.format, file.get("format")) {
            (Some(f), _) => f,
            (None, Some(v)) => Format::from_str(v, true).map_err(|_| {
                CliError::Usage(format!(
                    "config key format: expected csv or json, got {v:?}"
                ))
            })?,
            (None, None) => Format::default(),
        };
        let cfg = RunConfig {
            n: flags.n.or(typed(&file, "n")?).unwrap_or(DEFAULT_N),
            precision_bits: flags
                .precision
                .or(typed(&file, "precision")?)
                .unwrap_or(DEFAULT_PRECISION),
            format,
            out: flags.out.or_else(|| file.get("out").map(PathBuf::from)),
            window: flags.window.or_else(|| file.get("window").cloned()),
            grid: flags.grid.or(typed(&file, "grid")?).unwrap_or(DEFAULT_GRID),
            tol: flags.tol.or(typed(&file, "tol")?),
            max_precision_bits: flags
                .max_precision
                .or(typed(&file, "max_precision")?)
                .unwrap_or(crate::mp::MAX_PREC),
        };
        if cfg.n < 1 {
            return Err(CliError::Usage("--n must be at least 1".into()));
        }
        validate_precision(cfg.precision_bits)?;
        validate_precision(cfg.max_precision_bits)?;
        if cfg.max_precision_bits < cfg.precision_bits {
            return Err(CliError::Usage(
                "--max-precision is below --precision".into(),
            ));
        }
        Ok(cfg)
    }
}
