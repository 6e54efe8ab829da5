//! The `specpred` command line.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 inapplicable or
//! undecidable input, 3 numerical breakdown (a partial file is written when
//! one exists).

mod config;
pub mod expr;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rug::Float;
use serde_json::json;

use crate::asymptotics::{
    fit_power_law_values, ratio_limit, separation_check, table1, weak_variation, RatioConfig,
    RatioDiagnostics, FIT_THRESHOLD,
};
use crate::integrate::geometric_mean;
use crate::mp::{check_precision, float_to_string, pi};
use crate::predict::{prediction_errors, PredictConfig, PredictionErrorSeries};
use crate::spectra::{PollaczekParams, SpectralDensity};
use crate::Error;

pub use config::{Format, RunConfig};
pub use expr::{parse_density, ParseError};
pub use output::{read_series, series_to_csv, series_to_json};

/// Output directory override for relative `--out` paths and plot files.
pub const OUT_DIR_ENV: &str = "SPECPRED_OUT_DIR";
pub const PRECISIONS: [u32; 5] = [64, 128, 256, 512, 1024];
pub const TABLE1_A: [f64; 10] = [0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 3.3, 3.4, 5.0, 10.0];

#[derive(Debug, Parser)]
#[command(
    name = "specpred",
    version,
    about = "Prediction errors of deterministic stationary processes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
    /// Largest prediction order N.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Working precision in bits: 64, 128, 256, 512 or 1024.
    #[arg(long, global = true)]
    precision: Option<u32>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Output file (a directory for plotdata).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// weakvar: trailing window length. fit: `lo:hi`.
    #[arg(long, global = true)]
    window: Option<String>,
    /// Number of plot samples on [-π, π].
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Ceiling for automatic precision escalation (default 1024).
    #[arg(long, global = true)]
    max_precision: Option<u32>,
    /// Weak-variation tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// `key = value` file; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// f_a and the companion f̂_a.
    Fig1,
    /// f̂_1 and f̂_2.
    Fig2,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Geometric mean G(f) and the Szegő verdict.
    Gm { expr: String },
    /// σ_n² and reflection coefficients for n = 1..N.
    Predict { expr: String },
    /// σ_n²(fg)/σ_n²(f) against G(g).
    Ratio { f: String, g: String },
    /// Rosenblatt factor, Ĉ(a) and C(a).
    Table1 {
        #[arg(long, value_delimiter = ',')]
        a: Vec<f64>,
    },
    /// Two-column samples of densities on a uniform grid.
    Plotdata {
        exprs: Vec<String>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, value_delimiter = ',')]
        a: Vec<f64>,
    },
    /// Weak variation of σ_n from an expression or a series file.
    Weakvar { input: String },
    /// Power-law fit of σ_n² from an expression or a series file.
    Fit { input: String },
    /// σ_n²(small)/σ_n²(big).
    Separation { small: String, big: String },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse { src: String, err: ParseError },
    Io(std::io::Error),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Io(_) => 1,
            CliError::Lib(e) => match e {
                Error::InvalidParameter(_)
                | Error::InvalidConstruction(_)
                | Error::InvalidSeries(_) => 1,
                Error::NotApplicable(_)
                | Error::UndecidableDivergence { .. }
                | Error::Precondition(_)
                | Error::Integrability(_) => 2,
                Error::Precision { .. }
                | Error::Consistency { .. }
                | Error::IllConditioned { .. }
                | Error::PsdViolation { .. } => 3,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Parse { src, err } => err.annotate(src),
            CliError::Io(e) => format!("i/o error: {e}"),
            CliError::Lib(e) => e.to_string(),
        }
    }
}

type CResult<T> = std::result::Result<T, CliError>;

/// Runs with process stdout/stderr and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn parse(src: &str) -> CResult<SpectralDensity> {
    parse_density(src).map_err(|err| CliError::Parse {
        src: src.to_string(),
        err,
    })
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Write-temp-then-rename in the destination directory.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Sends a result to `--out` when given, else to stdout.
fn emit(cfg: &RunConfig, out: &mut dyn Write, contents: &str) -> CResult<()> {
    match &cfg.out {
        Some(p) => {
            let path = resolve_out(p);
            write_atomic(&path, contents)?;
            writeln!(out, "wrote {}", path.display())?;
        }
        None => out.write_all(contents.as_bytes())?,
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CResult<()> {
    let file = match &cli.config {
        Some(p) => config::read_config_file(p)?,
        None => Default::default(),
    };
    let cfg = RunConfig::merge(
        config::Flags {
            n: cli.n,
            precision: cli.precision,
            format: cli.format,
            out: cli.out.clone(),
            window: cli.window.clone(),
            grid: cli.grid,
            tol: cli.tol,
            max_precision: cli.max_precision,
        },
        file,
    )?;
    match cli.cmd {
        Command::Gm { expr } => cmd_gm(&cfg, &expr, out),
        Command::Predict { expr } => cmd_predict(&cfg, &expr, out),
        Command::Ratio { f, g } => cmd_ratio(&cfg, &f, &g, out),
        Command::Table1 { a } => cmd_table1(&cfg, &a, out),
        Command::Plotdata { exprs, preset, a } => cmd_plotdata(&cfg, &exprs, preset, &a, out),
        Command::Weakvar { input } => cmd_weakvar(&cfg, &input, out),
        Command::Fit { input } => cmd_fit(&cfg, &input, out),
        Command::Separation { small, big } => cmd_separation(&cfg, &small, &big, out),
    }
}

fn predict_config(cfg: &RunConfig) -> PredictConfig {
    PredictConfig {
        precision_bits: cfg.precision_bits,
        max_precision_bits: cfg.max_precision_bits,
        ..PredictConfig::default()
    }
}

fn key_values(cfg: &RunConfig, pairs: &[(&str, serde_json::Value)]) -> String {
    match cfg.format {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect();
            format!(
                "{}\n",
                serde_json::to_string_pretty(&map).expect("serializable")
            )
        }
        Format::Csv => {
            let mut s = String::from("quantity,value\n");
            for (k, v) in pairs {
                let text = match v {
                    serde_json::Value::String(t) => t.clone(),
                    other => other.to_string(),
                };
                s.push_str(&format!("{k},{}\n", output::csv_field(&text)));
            }
            s
        }
    }
}

fn cmd_gm(cfg: &RunConfig, src: &str, out: &mut dyn Write) -> CResult<()> {
    let f = parse(src)?;
    let gm = geometric_mean(&f, cfg.precision_bits)?;
    let verdict = if gm.divergent {
        "deterministic"
    } else {
        "nondeterministic"
    };
    let log_mean = gm
        .log_mean
        .as_ref()
        .map(float_to_string)
        .unwrap_or_else(|| "-inf".into());
    let text = key_values(
        cfg,
        &[
            ("density", json!(f.label())),
            ("G", json!(gm.value_f64())),
            ("G_full", json!(float_to_string(&gm.value))),
            ("log_mean", json!(log_mean)),
            ("divergent", json!(gm.divergent)),
            ("error_bound", json!(gm.est_error)),
            ("verdict", json!(verdict)),
            ("precision_bits", json!(cfg.precision_bits)),
        ],
    );
    emit(cfg, out, &text)
}

fn render_series(cfg: &RunConfig, s: &PredictionErrorSeries) -> String {
    match cfg.format {
        Format::Csv => series_to_csv(s),
        Format::Json => series_to_json(s),
    }
}

fn cmd_predict(cfg: &RunConfig, src: &str, out: &mut dyn Write) -> CResult<()> {
    let f = parse(src)?;
    match prediction_errors(&f, cfg.n, predict_config(cfg)) {
        Ok(s) => emit(cfg, out, &render_series(cfg, &s)),
        Err(Error::IllConditioned {
            last_valid_n,
            precision_bits,
            partial,
        }) => {
            if let Some(p) = &partial {
                let mut text = render_series(cfg, p);
                if cfg.format == Format::Csv {
                    text.insert_str(
                        0,
                        &format!("# partial: ill-conditioned after n = {last_valid_n}\n"),
                    );
                }
                emit(cfg, out, &text)?;
            }
            Err(Error::IllConditioned {
                last_valid_n,
                precision_bits,
                partial,
            }
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

fn ratio_text(
    cfg: &RunConfig,
    labels: (&str, &str),
    d: &RatioDiagnostics,
    value_name: &str,
) -> String {
    match cfg.format {
        Format::Json => {
            let v = json!({
                "f": labels.0,
                "g": labels.1,
                "target": d.target,
                "trailing_mean": d.trailing_mean,
                "trailing_slope": d.trailing_slope,
                "octave_means": d.octave_means,
                "basis": d.basis,
                "grid": d.grid,
                value_name: d.ratios,
            });
            format!(
                "{}\n",
                serde_json::to_string_pretty(&v).expect("serializable")
            )
        }
        Format::Csv => {
            let mut s = String::new();
            s.push_str(&format!("# f = {}\n# g = {}\n", labels.0, labels.1));
            s.push_str(&format!("# target = {}\n", d.target));
            s.push_str(&format!("# trailing_mean = {}\n", d.trailing_mean));
            s.push_str(&format!("# trailing_slope = {}\n", d.trailing_slope));
            for o in &d.octave_means {
                s.push_str(&format!(
                    "# octave [{}, {}] mean = {}\n",
                    o.lo, o.hi, o.mean
                ));
            }
            s.push_str(&format!("# basis = {}\n", d.basis));
            s.push_str(&format!("n,{value_name}\n"));
            for (n, r) in d.grid.iter().zip(&d.ratios) {
                s.push_str(&format!("{n},{r}\n"));
            }
            s
        }
    }
}

fn cmd_ratio(cfg: &RunConfig, fs: &str, gs: &str, out: &mut dyn Write) -> CResult<()> {
    let f = parse(fs)?;
    let g = parse(gs)?;
    let rc = RatioConfig {
        predict: predict_config(cfg),
        gm_precision_bits: cfg.precision_bits,
    };
    let d = ratio_limit(&f, &g, cfg.n, rc)?;
    emit(
        cfg,
        out,
        &ratio_text(cfg, (f.label(), g.label()), &d, "ratio"),
    )
}

/// Three decimals, switching to `m.mmm·10^e` from 10⁶ up.
pub fn table_number(v: f64) -> String {
    if v.abs() < 1e6 {
        format!("{v:.3}")
    } else {
        let e = v.abs().log10().floor() as i32;
        let m = v / 10f64.powi(e);
        if format!("{m:.3}").starts_with("10.") {
            format!("{:.3}e{}", m / 10.0, e + 1)
        } else {
            format!("{m:.3}e{e}")
        }
    }
}

fn cmd_table1(cfg: &RunConfig, a: &[f64], out: &mut dyn Write) -> CResult<()> {
    let a: Vec<f64> = if a.is_empty() {
        TABLE1_A.to_vec()
    } else {
        a.to_vec()
    };
    let rows = table1(&a, cfg.precision_bits)?;
    let mut text = format!(
        "{:>6}  {:>12}  {:>12}  {:>12}\n",
        "a", "rosenblatt", "C_hat", "C"
    );
    for r in &rows {
        text.push_str(&format!(
            "{:>6}  {:>12}  {:>12}  {:>12}\n",
            format!("{:.1}", r.a),
            table_number(r.rosenblatt),
            table_number(r.c_hat),
            table_number(r.c)
        ));
    }
    let machine = match cfg.format {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&rows).expect("serializable")
        ),
        Format::Csv => {
            let mut s = String::from("a,rosenblatt,c_hat,c\n");
            for r in &rows {
                s.push_str(&format!("{},{},{},{}\n", r.a, r.rosenblatt, r.c_hat, r.c));
            }
            s
        }
    };
    match (&cfg.out, cfg.format) {
        (Some(_), _) => {
            out.write_all(text.as_bytes())?;
            emit(cfg, out, &machine)
        }
        (None, Format::Json) => emit(cfg, out, &machine),
        (None, Format::Csv) => Ok(out.write_all(text.as_bytes())?),
    }
}

/// `λ_j = π(2j/(g−1) − 1)` at `prec` bits; odd `g` hits 0 and ±π/2 exactly.
pub fn plot_grid(g: usize, prec: u32) -> Vec<Float> {
    let m = (g - 1) as u32;
    (0..g as u32)
        .map(|j| {
            let t = Float::with_val(prec, 2 * j as i64 - m as i64) / m;
            t * pi(prec)
        })
        .collect()
}

fn fmt_a(a: f64) -> String {
    let s = format!("{a}");
    s.replace('.', "p")
}

fn plot_file(cfg: &RunConfig, f: &SpectralDensity, grid: &[Float]) -> String {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .map(|x| (x.to_f64(), f.value(x, cfg.precision_bits).to_f64()))
        .collect();
    match cfg.format {
        Format::Json => {
            let v = json!({
                "density": f.label(),
                "grid": grid.len(),
                "lambda": pts.iter().map(|p| p.0).collect::<Vec<_>>(),
                "value": pts.iter().map(|p| p.1).collect::<Vec<_>>(),
            });
            format!(
                "{}\n",
                serde_json::to_string_pretty(&v).expect("serializable")
            )
        }
        Format::Csv => {
            let mut s = format!(
                "# density = {}\n# grid = {}\n# lambda value\n",
                f.label(),
                grid.len()
            );
            for (x, y) in pts {
                s.push_str(&format!("{x:e} {y:e}\n"));
            }
            s
        }
    }
}

fn cmd_plotdata(
    cfg: &RunConfig,
    exprs: &[String],
    preset: Option<Preset>,
    a: &[f64],
    out: &mut dyn Write,
) -> CResult<()> {
    if cfg.grid < 2 {
        return Err(CliError::Usage("--grid must be at least 2".into()));
    }
    let mut jobs: Vec<(String, SpectralDensity)> = Vec::new();
    let a: Vec<f64> = if a.is_empty() { vec![1.0] } else { a.to_vec() };
    if let Some(p) = preset {
        for &av in &a {
            let tag = fmt_a(av);
            match p {
                Preset::Fig1 => {
                    jobs.push((
                        format!("fig1_pollaczek_a{tag}"),
                        SpectralDensity::pollaczek(PollaczekParams::new(av)?),
                    ));
                    jobs.push((
                        format!("fig1_hat_a{tag}"),
                        SpectralDensity::companion_hat(av)?,
                    ));
                }
                Preset::Fig2 => {
                    jobs.push((
                        format!("fig2_hat1_a{tag}"),
                        SpectralDensity::companion_hat1(av)?,
                    ));
                    jobs.push((
                        format!("fig2_hat2_a{tag}"),
                        SpectralDensity::companion_hat2(av)?,
                    ));
                }
            }
        }
    }
    for (i, src) in exprs.iter().enumerate() {
        jobs.push((format!("density_{i}"), parse(src)?));
    }
    if jobs.is_empty() {
        return Err(CliError::Usage(
            "plotdata needs expressions or --preset".into(),
        ));
    }
    let dir = match &cfg.out {
        Some(p) => resolve_out(p),
        None => std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let ext = match cfg.format {
        Format::Csv => "txt",
        Format::Json => "json",
    };
    let grid = plot_grid(cfg.grid, cfg.precision_bits);
    for (name, f) in jobs {
        let path = dir.join(format!("{name}.{ext}"));
        write_atomic(&path, &plot_file(cfg, &f, &grid))?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(())
}

/// A series file if `input` names one, else an expression evaluated to `--n`.
fn series_input(cfg: &RunConfig, input: &str) -> CResult<PredictionErrorSeries> {
    let path = Path::new(input);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return Ok(read_series(&text)?);
    }
    let f = parse(input)?;
    Ok(prediction_errors(&f, cfg.n, predict_config(cfg))?)
}

fn cmd_weakvar(cfg: &RunConfig, input: &str, out: &mut dyn Write) -> CResult<()> {
    let s = series_input(cfg, input)?;
    let sigma: Vec<f64> = s
        .sigma2()
        .iter()
        .map(|v| Float::with_val(64, v.sqrt_ref()).to_f64())
        .collect();
    let window = match &cfg.window {
        Some(w) => w.trim().parse::<usize>().map_err(|_| {
            CliError::Usage(format!("--window for weakvar is an integer, got {w:?}"))
        })?,
        None => (sigma.len() / 2).max(1),
    };
    let tol = cfg.tol.unwrap_or(0.05);
    let v = weak_variation(&sigma, window, tol)?;
    let text = match cfg.format {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({ "series": "sigma_n", "tol": tol, "result": v }))
                .expect("serializable")
        ),
        Format::Csv => {
            let mut t = format!(
                "# series = sigma_n\n# tol = {tol}\n# window = [{}, {}]\n# max_deviation = {}\n# passed = {}\n",
                v.window.0, v.window.1, v.max_deviation, v.passed
            );
            for sc in &v.strides {
                t.push_str(&format!(
                    "# stride {} tol = {} max_deviation = {} passed = {}\n",
                    sc.stride, sc.tol, sc.max_deviation, sc.passed
                ));
            }
            t.push_str("n,ratio\n");
            for (i, r) in v.ratios.iter().enumerate() {
                t.push_str(&format!("{},{r}\n", i + 1));
            }
            t
        }
    };
    emit(cfg, out, &text)
}

fn fit_window(w: &str) -> CResult<(usize, usize)> {
    let bad = || CliError::Usage(format!("--window for fit is lo:hi, got {w:?}"));
    let (lo, hi) = w.split_once(':').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

fn cmd_fit(cfg: &RunConfig, input: &str, out: &mut dyn Write) -> CResult<()> {
    let s = series_input(cfg, input)?;
    let window = cfg.window.as_deref().map(fit_window).transpose()?;
    let fit = fit_power_law_values(&s.sigma2_f64(), window, FIT_THRESHOLD)?;
    let status = format!("{:?}", fit.status).to_lowercase();
    let text = key_values(
        cfg,
        &[
            ("a_hat", json!(fit.a_hat)),
            ("c_hat", json!(fit.c_hat)),
            ("window_lo", json!(fit.window.0)),
            ("window_hi", json!(fit.window.1)),
            ("residual", json!(fit.residual)),
            ("status", json!(status)),
        ],
    );
    emit(cfg, out, &text)
}

fn cmd_separation(cfg: &RunConfig, small: &str, big: &str, out: &mut dyn Write) -> CResult<()> {
    let a = parse(small)?;
    let b = parse(big)?;
    let t = separation_check(&a, &b, cfg.n, predict_config(cfg))?;
    let text = match cfg.format {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({
                "small": a.label(),
                "big": b.label(),
                "trailing_slope": t.trailing_slope,
                "ratio": t.ratios,
            }))
            .expect("serializable")
        ),
        Format::Csv => {
            let mut s = format!(
                "# small = {}\n# big = {}\n# trailing_slope = {}\nn,ratio\n",
                a.label(),
                b.label(),
                t.trailing_slope
            );
            for (i, r) in t.ratios.iter().enumerate() {
                s.push_str(&format!("{},{r}\n", i + 1));
            }
            s
        }
    };
    emit(cfg, out, &text)
}

pub(crate) fn validate_precision(bits: u32) -> CResult<()> {
    if !PRECISIONS.contains(&bits) {
        return Err(CliError::Usage(format!(
            "--precision must be one of {PRECISIONS:?}, got {bits}"
        )));
    }
    check_precision(bits).map_err(CliError::Lib)
}
