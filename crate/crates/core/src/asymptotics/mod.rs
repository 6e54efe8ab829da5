//! Finite-N diagnostics for limit statements about prediction errors:
//! weak variation, power-law fits, ratio limits and the constants table.

mod gamma;

use std::f64::consts::PI;

use serde::Serialize;

use crate::integrate::{geometric_mean, GeometricMeanResult};
use crate::predict::{prediction_errors, PredictConfig, PredictionErrorSeries};
use crate::spectra::{product, PollaczekParams, SpectralDensity};
use crate::{Error, Result};

pub use gamma::gamma;

/// Residual above which a power-law fit is flagged [`FitStatus::NoFit`].
pub const FIT_THRESHOLD: f64 = 0.05;
/// Geometric n-grid density: points `round(2^{j/GRID_STEPS})`.
pub const GRID_STEPS: u32 = 8;
/// Stride lengths checked alongside the unit step.
pub const STRIDES: [usize; 2] = [2, 3];
/// Two positions closer than this count as the same zero.
const ZERO_MATCH_TOL: f64 = 1e-12;

/// `Γ²((a+1)/2) / (π·2^{2−a})`.
pub fn rosenblatt_constant(a: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "a must be positive, got {a}"
        )));
    }
    let g = gamma((a + 1.0) / 2.0);
    Ok(g * g / (PI * 2f64.powf(2.0 - a)))
}

#[derive(Debug, Clone, Serialize)]
pub struct StrideCheck {
    pub stride: usize,
    pub tol: f64,
    pub max_deviation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakVariation {
    pub passed: bool,
    /// `a_{n+1}/a_n` for `n = 1..len−1`.
    pub ratios: Vec<f64>,
    /// Orders `n` (1-based) whose ratio was tested.
    pub window: (usize, usize),
    pub max_deviation: f64,
    pub strides: Vec<StrideCheck>,
}

impl WeakVariation {
    /// Unit step and every stride variant pass.
    pub fn passed_all(&self) -> bool {
        self.passed && self.strides.iter().all(|s| s.passed)
    }
}

/// Checks `|a_{n+1}/a_n − 1| ≤ tol` over the last `window` ratios of
/// `series` (indexed from n = 1). Strides ν ∈ {2, 3} are checked on the
/// same orders against `ν·tol`, the bound the unit step implies.
pub fn weak_variation(series: &[f64], window: usize, tol: f64) -> Result<WeakVariation> {
    if window == 0 {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    if series.len() < 2 * window {
        return Err(Error::InvalidSeries(format!(
            "length {} is below twice the window {window}",
            series.len()
        )));
    }
    if let Some(i) = series.iter().position(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::InvalidSeries(format!(
            "entry n = {} is zero or not finite",
            i + 1
        )));
    }
    let len = series.len();
    let ratios: Vec<f64> = series.windows(2).map(|w| w[1] / w[0]).collect();
    let lo = len - window;
    let dev = |nu: usize| {
        (lo..=len - nu)
            .map(|n| (series[n + nu - 1] / series[n - 1] - 1.0).abs())
            .fold(0.0, f64::max)
    };
    let max_deviation = dev(1);
    let strides = STRIDES
        .iter()
        .map(|&nu| {
            let d = dev(nu);
            StrideCheck {
                stride: nu,
                tol: nu as f64 * tol,
                max_deviation: d,
                passed: d <= nu as f64 * tol,
            }
        })
        .collect();
    Ok(WeakVariation {
        passed: max_deviation <= tol,
        ratios,
        window: (lo, len - 1),
        max_deviation,
        strides,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitStatus {
    Accepted,
    NoFit,
    /// Constant series: exponent reported as 0.
    Degenerate,
}

/// `σ_n² ≈ c_hat·n^{−a_hat}` on `window` (inclusive orders).
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticFit {
    pub a_hat: f64,
    pub c_hat: f64,
    pub window: (usize, usize),
    /// Max relative deviation of the fitted curve from the data on the window.
    pub residual: f64,
    pub status: FitStatus,
}

pub fn fit_power_law(
    series: &PredictionErrorSeries,
    window: Option<(usize, usize)>,
) -> Result<AsymptoticFit> {
    fit_power_law_values(&series.sigma2_f64(), window, FIT_THRESHOLD)
}

/// Least squares of `ln a_n` against `ln n`. The default window is `[N/4, N]`.
pub fn fit_power_law_values(
    series: &[f64],
    window: Option<(usize, usize)>,
    threshold: f64,
) -> Result<AsymptoticFit> {
    let len = series.len();
    if len == 0 {
        return Err(Error::InvalidSeries("empty series".into()));
    }
    let (lo, hi) = window.unwrap_or(((len / 4).max(1), len));
    if lo < 1 || hi > len || lo > hi {
        return Err(Error::InvalidParameter(format!(
            "window [{lo}, {hi}] outside 1..={len}"
        )));
    }
    let data = &series[lo - 1..hi];
    if data.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::InvalidSeries(
            "fit needs positive finite entries".into(),
        ));
    }
    let first = data[0];
    if data.iter().all(|&v| v == first) {
        return Ok(AsymptoticFit {
            a_hat: 0.0,
            c_hat: first,
            window: (lo, hi),
            residual: 0.0,
            status: FitStatus::Degenerate,
        });
    }
    if lo == hi {
        return Err(Error::InvalidParameter(
            "a single-point window cannot fix two parameters".into(),
        ));
    }
    let xs: Vec<f64> = (lo..=hi).map(|n| (n as f64).ln()).collect();
    let ys: Vec<f64> = data.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(data)
        .map(|(x, v)| ((intercept + slope * x).exp() / v - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(AsymptoticFit {
        a_hat: -slope,
        c_hat: intercept.exp(),
        window: (lo, hi),
        residual,
        status: if residual <= threshold {
            FitStatus::Accepted
        } else {
            FitStatus::NoFit
        },
    })
}

/// Orders `round(2^{j/8}) ≤ n`, deduplicated, always ending at `n`.
pub fn geometric_grid(n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut j = 0u32;
    loop {
        let v = 2f64.powf(j as f64 / GRID_STEPS as f64).round() as usize;
        if v > n {
            break;
        }
        if out.last() != Some(&v) {
            out.push(v);
        }
        j += 1;
    }
    if out.last() != Some(&n) {
        out.push(n);
    }
    out
}

/// Mean of a ratio trace over grid points in one octave `[lo, hi]`.
#[derive(Debug, Clone, Serialize)]
pub struct OctaveMean {
    pub lo: usize,
    pub hi: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioDiagnostics {
    pub grid: Vec<usize>,
    /// Ratio values at `grid`.
    pub ratios: Vec<f64>,
    /// Ratio at every order `1..=N`.
    pub full: Vec<f64>,
    pub target: f64,
    /// Mean over grid points in `[N/2, N]`.
    pub trailing_mean: f64,
    /// Least-squares slope of the ratio against `ln n` on `[N/2, N]`.
    pub trailing_slope: f64,
    /// Octaves `[2^k, 2^{k+1}]` ending at `N`, oldest first.
    pub octave_means: Vec<OctaveMean>,
    /// Sufficient condition under which the limit is expected.
    pub basis: String,
}

impl RatioDiagnostics {
    fn build(full: Vec<f64>, target: f64, basis: String) -> Self {
        let n = full.len();
        let grid = geometric_grid(n);
        let ratios: Vec<f64> = grid.iter().map(|&k| full[k - 1]).collect();
        let (trailing_mean, trailing_slope) = window_stats(&grid, &ratios, n / 2, n);
        let mut octave_means = Vec::new();
        let mut hi = n;
        while hi >= 2 {
            let lo = hi / 2;
            let (mean, _) = window_stats(&grid, &ratios, lo, hi);
            octave_means.push(OctaveMean { lo, hi, mean });
            hi = lo;
        }
        octave_means.reverse();
        RatioDiagnostics {
            grid,
            ratios,
            full,
            target,
            trailing_mean,
            trailing_slope,
            octave_means,
            basis,
        }
    }

    /// Trailing-octave mean as if the run had stopped at `n`.
    pub fn trailing_mean_at(&self, n: usize) -> Option<f64> {
        if n < 1 || n > self.full.len() {
            return None;
        }
        let grid = geometric_grid(n);
        let vals: Vec<f64> = grid.iter().map(|&k| self.full[k - 1]).collect();
        Some(window_stats(&grid, &vals, n / 2, n).0)
    }
}

fn window_stats(grid: &[usize], vals: &[f64], lo: usize, hi: usize) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(vals)
        .filter(|(&k, _)| k >= lo.max(1) && k <= hi)
        .map(|(&k, &v)| ((k as f64).ln(), v))
        .collect();
    let m = pts.len() as f64;
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / m;
    if pts.len() < 2 {
        return (mean, 0.0);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - mean)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (mean, sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioConfig {
    pub predict: PredictConfig,
    /// Working precision of geometric-mean targets.
    pub gm_precision_bits: u32,
}

impl Default for RatioConfig {
    fn default() -> Self {
        RatioConfig {
            predict: PredictConfig::default(),
            gm_precision_bits: 128,
        }
    }
}

fn positive_target(g: &SpectralDensity, bits: u32) -> Result<GeometricMeanResult> {
    let gm = match geometric_mean(g, bits) {
        Ok(gm) => gm,
        Err(Error::UndecidableDivergence { at }) => {
            return Err(Error::NotApplicable(format!(
                "G({g}) cannot be decided (near-zero at λ = {at:.6})"
            )))
        }
        Err(e) => return Err(e),
    };
    if gm.divergent || gm.value.is_zero() {
        return Err(Error::NotApplicable(format!(
            "G({g}) = 0, so {g} cannot be a ratio factor"
        )));
    }
    Ok(gm)
}

fn membership_basis(f: &SpectralDensity, bits: u32) -> Result<String> {
    if !f.has_essential_zero() {
        let gm = geometric_mean(f, bits)?;
        if !gm.divergent {
            return Ok(
                "nondeterministic f: limit is G(fg)/G(f) by the Kolmogorov-Szegő formula".into(),
            );
        }
    }
    Ok(format!(
        "f > 0 a.e. (declared zeros only at {:?}) is sufficient for weakly varying σ_n",
        f.zero_set()
    ))
}

fn two_series(
    f: &SpectralDensity,
    h: &SpectralDensity,
    n: usize,
    config: PredictConfig,
) -> Result<(PredictionErrorSeries, PredictionErrorSeries)> {
    let (a, b) = rayon::join(
        || prediction_errors(f, n, config),
        || prediction_errors(h, n, config),
    );
    Ok((a?, b?))
}

fn ratio_trace(num: &PredictionErrorSeries, den: &PredictionErrorSeries) -> Vec<f64> {
    num.sigma2()
        .iter()
        .zip(den.sigma2())
        .map(|(a, b)| (rug::Float::with_val(64, a / b)).to_f64())
        .collect()
}

/// `σ_n²(fg)/σ_n²(f)` on `n = 1..=N` with target `G(g)`.
pub fn ratio_limit(
    f: &SpectralDensity,
    g: &SpectralDensity,
    n: usize,
    config: RatioConfig,
) -> Result<RatioDiagnostics> {
    let target = positive_target(g, config.gm_precision_bits)?.value_f64();
    if !f.is_integrable() {
        return Err(Error::Integrability(format!("{f} is not integrable")));
    }
    let fg =
        product(f, g).map_err(|e| Error::Precondition(format!("f·g cannot be formed: {e}")))?;
    if !fg.is_integrable() {
        return Err(Error::Integrability(format!(
            "{fg} has a pole of order ≥ 1 (pole orders exceed the zero orders of f)"
        )));
    }
    let basis = membership_basis(f, config.gm_precision_bits)?;
    let (sf, sfg) = two_series(f, &fg, n, config.predict)?;
    Ok(RatioDiagnostics::build(
        ratio_trace(&sfg, &sf),
        target,
        basis,
    ))
}

fn same_zero_sets(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= ZERO_MATCH_TOL)
}

/// `σ_n²(f̂)/σ_n²(f)` for densities sharing their zeros, with target
/// `G(f̂/f)`.
pub fn common_zero_comparison(
    f: &SpectralDensity,
    f_hat: &SpectralDensity,
    n: usize,
    config: RatioConfig,
) -> Result<RatioDiagnostics> {
    let (za, zb) = (f.zero_set(), f_hat.zero_set());
    if !same_zero_sets(&za, &zb) {
        return Err(Error::Precondition(format!(
            "zero sets differ: {za:?} vs {zb:?}"
        )));
    }
    let h = SpectralDensity::quotient(f_hat, f)?;
    let target = positive_target(&h, config.gm_precision_bits)?.value_f64();
    let basis = membership_basis(f, config.gm_precision_bits)?;
    let (sf, sh) = two_series(f, f_hat, n, config.predict)?;
    Ok(RatioDiagnostics::build(
        ratio_trace(&sh, &sf),
        target,
        basis,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub a: f64,
    pub rosenblatt: f64,
    pub c_hat: f64,
    pub c: f64,
}

/// `Ĉ(a) = G(f̂_a/f_a)` and `C(a) = R(a)·Ĉ(a)`.
pub fn table1_row(a: f64, precision_bits: u32) -> Result<Table1Row> {
    let rosenblatt = rosenblatt_constant(a)?;
    let f = SpectralDensity::pollaczek(PollaczekParams::new(a)?);
    let h = SpectralDensity::quotient(&SpectralDensity::companion_hat(a)?, &f)?;
    let c_hat = geometric_mean(&h, precision_bits)?.value_f64();
    Ok(Table1Row {
        a,
        rosenblatt,
        c_hat,
        c: rosenblatt * c_hat,
    })
}

pub fn table1(a_values: &[f64], precision_bits: u32) -> Result<Vec<Table1Row>> {
    use rayon::prelude::*;
    a_values
        .par_iter()
        .map(|&a| table1_row(a, precision_bits))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationTrace {
    /// `σ_n²(f_small)/σ_n²(f_big)` for `n = 1..=N`.
    pub ratios: Vec<f64>,
    /// Slope of `ln ratio` against `ln n` on `[N/2, N]`.
    pub trailing_slope: f64,
}

impl SeparationTrace {
    /// Strictly decreasing on orders `lo..=hi`.
    pub fn decreasing_on(&self, lo: usize, hi: usize) -> bool {
        lo >= 1
            && hi <= self.ratios.len()
            && self.ratios[lo - 1..hi].windows(2).all(|w| w[1] < w[0])
    }

    /// Strictly decreasing along the geometric grid restricted to `lo..=hi`.
    /// Densities with zeros at both 0 and ±π against one with a single zero
    /// produce an even/odd oscillation that this view averages over.
    pub fn decreasing_on_grid(&self, lo: usize, hi: usize) -> bool {
        if lo < 1 || hi > self.ratios.len() {
            return false;
        }
        let pts: Vec<f64> = geometric_grid(hi)
            .into_iter()
            .filter(|&k| k >= lo)
            .map(|k| self.ratios[k - 1])
            .collect();
        pts.windows(2).all(|w| w[1] < w[0])
    }

    pub fn at(&self, n: usize) -> f64 {
        self.ratios[n - 1]
    }
}

pub fn separation_check(
    f_small: &SpectralDensity,
    f_big: &SpectralDensity,
    n: usize,
    config: PredictConfig,
) -> Result<SeparationTrace> {
    for f in [f_small, f_big] {
        if !f.is_integrable() {
            return Err(Error::Integrability(format!("{f} is not integrable")));
        }
    }
    let (s, b) = two_series(f_small, f_big, n, config)?;
    let ratios = ratio_trace(&s, &b);
    let grid: Vec<usize> = ((n / 2).max(1)..=n).collect();
    let logs: Vec<f64> = grid.iter().map(|&k| ratios[k - 1].ln()).collect();
    let trailing_slope = window_stats(&grid, &logs, 1, n).1;
    Ok(SeparationTrace {
        ratios,
        trailing_slope,
    })
}
