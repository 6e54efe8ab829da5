//! One-step prediction errors `σ_n²` from covariances.
//!
//! The Levinson recursion yields `σ_n² = r(0)·∏(1 − |α_k|²)` together with the
//! reflection coefficients `α_k`; a Cholesky-based Toeplitz determinant ratio
//! `D_n/D_{n−1}` serves as an independent oracle for small `n`.
//!
//! `σ_n²` is the error of predicting `X(0)` from `X(−1), …, X(−n)`, so the
//! series starts at `n = 1` and `D_0 = r(0)`.

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{covariance_sequence, CovarianceMethod, CovarianceSequence, SpotCheck};
use crate::mp::{check_precision, Cx, MAX_PREC};
use crate::spectra::SpectralDensity;

/// Largest order accepted by [`determinant_oracle`].
pub const ORACLE_MAX_N: usize = 64;
/// `|α_k| ≥ 1 − BREAKDOWN_MARGIN` counts as a numerical breakdown.
pub const BREAKDOWN_MARGIN: f64 = 1e-10;
/// Orders at which the pipeline cross-checks Levinson against the oracle.
pub const ORACLE_CHECK_ORDERS: [usize; 3] = [8, 16, 32];

/// Levinson against determinant-ratio comparison at one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub n: usize,
    pub levinson: f64,
    pub oracle: f64,
    pub rel_diff: f64,
    pub passed: bool,
}

/// Where a series came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub density: Option<String>,
    pub covariance_method: Option<CovarianceMethod>,
    pub spot_checks: Vec<SpotCheck>,
    pub oracle_checks: Vec<OracleCheck>,
    /// Precisions tried before the one that succeeded.
    pub escalations: Vec<u32>,
    pub normalized: bool,
}

/// `σ_n²` for `n = 1..=N` and the reflection coefficients producing it.
#[derive(Debug, Clone)]
pub struct PredictionErrorSeries {
    sigma2: Vec<Float>,
    reflection: Vec<Cx>,
    r0: Float,
    precision_bits: u32,
    degraded_from: Option<usize>,
    provenance: Provenance,
}

impl PredictionErrorSeries {
    /// Builds a series from given values (e.g. re-read from a file);
    /// `reflection` may be empty.
    pub fn from_parts(
        r0: Float,
        sigma2: Vec<Float>,
        reflection: Vec<Cx>,
        precision_bits: u32,
    ) -> Result<Self> {
        check_precision(precision_bits)?;
        if !reflection.is_empty() && reflection.len() != sigma2.len() {
            return Err(Error::InvalidSeries(
                "reflection and σ² lengths differ".into(),
            ));
        }
        if sigma2.iter().any(|v| !(v.is_finite() && *v > 0)) {
            return Err(Error::InvalidSeries(
                "σ² entries must be positive and finite".into(),
            ));
        }
        Ok(PredictionErrorSeries {
            sigma2,
            reflection,
            r0,
            precision_bits,
            degraded_from: None,
            provenance: Provenance::default(),
        })
    }

    /// Number of computed orders N.
    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    /// `σ_n²` for `n = 1..=N` (index `n − 1`).
    pub fn sigma2(&self) -> &[Float] {
        &self.sigma2
    }

    /// `σ_n²` by order.
    pub fn at(&self, n: usize) -> &Float {
        &self.sigma2[n - 1]
    }

    pub fn sigma2_f64(&self) -> Vec<f64> {
        self.sigma2.iter().map(Float::to_f64).collect()
    }

    pub fn reflection(&self) -> &[Cx] {
        &self.reflection
    }

    pub fn r0(&self) -> &Float {
        &self.r0
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn degraded_from(&self) -> Option<usize> {
        self.degraded_from
    }

    /// Reattaches provenance, e.g. after reading a series back from a file.
    pub fn with_provenance(mut self, provenance: Provenance, degraded_from: Option<usize>) -> Self {
        self.provenance = provenance;
        self.degraded_from = degraded_from;
        self
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// `r(0)·∏_{k≤n}(1 − |α_k|²)` recomputed from the stored coefficients.
    pub fn product_form(&self, n: usize) -> Float {
        let prec = self.precision_bits;
        let mut acc = Float::with_val(prec, &self.r0);
        for a in &self.reflection[..n] {
            let one_minus = Float::with_val(prec, 1) - a.norm_sqr();
            acc *= one_minus;
        }
        acc
    }

    fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.sigma2.truncate(n);
        out.reflection.truncate(n);
        out
    }
}

/// Monic `q_n(z) = z^n + c_1 z^{n−1} + … + c_n` minimizing `∫|q_n(e^{iλ})|² f`.
#[derive(Debug, Clone)]
pub struct PredictorPolynomial {
    coeffs: Vec<Cx>,
    sigma2: Float,
}

impl PredictorPolynomial {
    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// `c_1..c_n`; the leading coefficient 1 is implicit.
    pub fn coefficients(&self) -> &[Cx] {
        &self.coeffs
    }

    /// Weights `ĉ_k = −c_k` of the predictor `X̂(0) = Σ ĉ_k X(−k)`.
    pub fn predictor_weights(&self) -> Vec<Cx> {
        self.coeffs.iter().map(Cx::neg).collect()
    }

    pub fn sigma2(&self) -> &Float {
        &self.sigma2
    }

    /// `E|X(0) − X̂(0)|²` evaluated directly from the covariances.
    pub fn squared_norm(&self, r: &CovarianceSequence) -> Float {
        let n = self.degree();
        let prec = r.precision_bits();
        let mut b = Vec::with_capacity(n + 1);
        b.push(Cx::real(Float::with_val(prec, 1)));
        b.extend(self.coeffs.iter().cloned());
        let gamma = |h: isize| -> Cx {
            let z = r.lag(h.unsigned_abs(), prec);
            if h < 0 {
                z.conj()
            } else {
                z
            }
        };
        let mut acc = Cx::zero(prec);
        for (j, bj) in b.iter().enumerate() {
            for (k, bk) in b.iter().enumerate() {
                let g = gamma(k as isize - j as isize);
                acc.add_mul(&bj.mul(&bk.conj()), &g);
            }
        }
        acc.re
    }
}

/// Precision policy for [`prediction_errors`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictConfig {
    pub precision_bits: u32,
    pub max_precision_bits: u32,
    /// Divide the density by `r(0)` first so that `r(0) = 1`.
    pub normalize: bool,
    /// Cross-check against the determinant oracle at n ∈ {8, 16, 32}.
    pub oracle_checks: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            precision_bits: 128,
            max_precision_bits: MAX_PREC,
            normalize: false,
            oracle_checks: true,
        }
    }
}

struct Breakdown {
    last_valid_n: usize,
    partial: PredictionErrorSeries,
}

struct Recursion {
    series: PredictionErrorSeries,
    predictor: Vec<Cx>,
}

/// One pass of the recursion at `prec` bits; stops at the first breakdown.
fn recurse(
    r: &CovarianceSequence,
    n_max: usize,
    prec: u32,
) -> std::result::Result<Recursion, Breakdown> {
    let gamma: Vec<Cx> = (0..=n_max).map(|k| r.lag(k, prec)).collect();
    let r0 = Float::with_val(prec, &gamma[0].re);
    let mut err = r0.clone();
    let mut a: Vec<Cx> = Vec::with_capacity(n_max);
    let mut sigma2 = Vec::with_capacity(n_max);
    let mut reflection = Vec::with_capacity(n_max);
    let limit = Float::with_val(prec, (1.0 - BREAKDOWN_MARGIN) * (1.0 - BREAKDOWN_MARGIN));
    let series = |sigma2: Vec<Float>, reflection: Vec<Cx>| PredictionErrorSeries {
        sigma2,
        reflection,
        r0: r0.clone(),
        precision_bits: prec,
        degraded_from: None,
        provenance: Provenance::default(),
    };
    for m in 1..=n_max {
        let mut acc = gamma[m].clone();
        for (j, aj) in a.iter().enumerate() {
            let mut t = aj.mul(&gamma[m - 1 - j]);
            t = t.neg();
            acc += &t;
        }
        let alpha = acc.scale(&Float::with_val(prec, err.recip_ref()));
        let mag = alpha.norm_sqr();
        if !(err > 0) || !mag.is_finite() || mag >= limit {
            return Err(Breakdown {
                last_valid_n: m - 1,
                partial: series(sigma2, reflection),
            });
        }
        let mut next = Vec::with_capacity(m);
        for j in 0..m - 1 {
            let mut v = a[j].clone();
            v -= &alpha.mul(&a[m - 2 - j].conj());
            next.push(v);
        }
        next.push(alpha.clone());
        a = next;
        let one_minus = Float::with_val(prec, 1) - mag;
        err *= &one_minus;
        if !(err > 0) {
            return Err(Breakdown {
                last_valid_n: m - 1,
                partial: series(sigma2, reflection),
            });
        }
        sigma2.push(err.clone());
        reflection.push(alpha);
    }
    Ok(Recursion {
        series: series(sigma2, reflection),
        predictor: a,
    })
}

/// Runs the recursion at the precision of `r`, doubling the working
/// precision up to 1024 bits on breakdown.
fn recurse_escalating(r: &CovarianceSequence, n: usize) -> Result<Recursion> {
    if n > r.max_lag() {
        return Err(Error::InvalidParameter(format!(
            "order {n} exceeds the available lags {}",
            r.max_lag()
        )));
    }
    let mut prec = r.precision_bits();
    let mut first_break = None;
    loop {
        match recurse(r, n, prec) {
            Ok(mut rec) => {
                rec.series.degraded_from = first_break;
                return Ok(rec);
            }
            Err(b) => {
                first_break.get_or_insert(b.last_valid_n + 1);
                if prec >= MAX_PREC {
                    return Err(Error::IllConditioned {
                        last_valid_n: b.last_valid_n,
                        precision_bits: prec,
                        partial: Some(Box::new(b.partial)),
                    });
                }
                prec = (prec * 2).min(MAX_PREC);
            }
        }
    }
}

/// `σ_n²`, `n = 1..=N`, by the Levinson recursion.
pub fn levinson(r: &CovarianceSequence, n: usize) -> Result<PredictionErrorSeries> {
    Ok(recurse_escalating(r, n)?.series)
}

/// The optimal monic polynomial of degree `n`.
pub fn predictor_polynomial(r: &CovarianceSequence, n: usize) -> Result<PredictorPolynomial> {
    let rec = recurse_escalating(r, n)?;
    let sigma2 = if n == 0 {
        Float::with_val(r.precision_bits(), r.r0())
    } else {
        rec.series.at(n).clone()
    };
    Ok(PredictorPolynomial {
        coeffs: rec.predictor.iter().map(Cx::neg).collect(),
        sigma2,
    })
}

/// `log D_m` for every leading minor `m = 1..=n+1` of the Hermitian Toeplitz
/// matrix, by Cholesky factorization.
fn log_determinants(r: &CovarianceSequence, n: usize, prec: u32) -> Result<Vec<Float>> {
    let size = n + 1;
    let entry = |i: usize, j: usize| -> Cx {
        if j >= i {
            r.lag(j - i, prec)
        } else {
            r.lag(i - j, prec).conj()
        }
    };
    // lower factor L with T = L·L^H, stored row-major
    let mut l: Vec<Vec<Cx>> = vec![Vec::new(); size];
    let mut logdet = Vec::with_capacity(size);
    let mut running = Float::new(prec);
    for i in 0..size {
        let mut row: Vec<Cx> = Vec::with_capacity(i + 1);
        for j in 0..i {
            // L_ij = (T_ij − Σ_k L_ik conj(L_jk)) / L_jj
            let mut s = entry(i, j);
            for k in 0..j {
                let t = row[k].mul(&l[j][k].conj());
                s -= &t;
            }
            let d = &l[j][j].re;
            row.push(s.scale(&Float::with_val(prec, d.recip_ref())));
        }
        let mut d = entry(i, i).re;
        for v in &row {
            d -= v.norm_sqr();
        }
        if !(d > 0) {
            return Err(Error::PsdViolation { minor: i + 1 });
        }
        running += Float::with_val(prec, d.ln_ref());
        logdet.push(running.clone());
        row.push(Cx::real(d.sqrt()));
        l[i] = row;
    }
    Ok(logdet)
}

/// `σ_n² = D_n/D_{n−1}` from the log-determinants of the `(n+1)×(n+1)` and
/// `n×n` Toeplitz matrices.
pub fn determinant_oracle(r: &CovarianceSequence, n: usize, precision_bits: u32) -> Result<Float> {
    check_precision(precision_bits)?;
    if n == 0 || n > ORACLE_MAX_N {
        return Err(Error::InvalidParameter(format!(
            "oracle order must lie in 1..={ORACLE_MAX_N}, got {n}"
        )));
    }
    if n > r.max_lag() {
        return Err(Error::InvalidParameter(format!(
            "order {n} exceeds the available lags {}",
            r.max_lag()
        )));
    }
    let ld = log_determinants(r, n, precision_bits + 32)?;
    let diff = Float::with_val(precision_bits + 32, &ld[n] - &ld[n - 1]);
    Ok(Float::with_val(precision_bits, diff.exp_ref()))
}

fn relative_gap(a: &Float, b: &Float) -> f64 {
    let d = Float::with_val(64, a - b).abs();
    (d / Float::with_val(64, b.abs_ref())).to_f64()
}

/// End-to-end `σ_n²(f)` for `n = 1..=N`: covariances, recursion and oracle
/// spot checks, rerun wholesale at doubled precision on any breakdown.
pub fn prediction_errors(
    f: &SpectralDensity,
    n: usize,
    config: PredictConfig,
) -> Result<PredictionErrorSeries> {
    check_precision(config.precision_bits)?;
    check_precision(config.max_precision_bits)?;
    if n < 1 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let mut prec = config.precision_bits;
    let mut escalations = Vec::new();
    let mut degraded_from = None;
    loop {
        let mut r = covariance_sequence(f, n, prec)?;
        if config.normalize {
            let r0 = r.r0().clone();
            r = r.scaled(&r0);
        }
        let attempt = recurse(&r, n, prec);
        let (series, trouble) = match attempt {
            Ok(rec) => {
                let mut checks = Vec::new();
                let mut failed = None;
                if config.oracle_checks {
                    let tol = 2f64.powi(-(prec as i32) / 2);
                    for &k in ORACLE_CHECK_ORDERS.iter().filter(|&&k| k <= n) {
                        let o = match determinant_oracle(&r, k, prec) {
                            Ok(o) => o,
                            Err(Error::PsdViolation { minor }) => {
                                failed.get_or_insert(minor.saturating_sub(1).max(1));
                                continue;
                            }
                            Err(e) => return Err(e),
                        };
                        let l = rec.series.at(k);
                        let rel = relative_gap(l, &o);
                        let passed = rel <= tol;
                        if !passed {
                            failed.get_or_insert(k);
                        }
                        checks.push(OracleCheck {
                            n: k,
                            levinson: l.to_f64(),
                            oracle: o.to_f64(),
                            rel_diff: rel,
                            passed,
                        });
                    }
                }
                let mut s = rec.series;
                s.provenance.oracle_checks = checks;
                (Some(s), failed)
            }
            Err(b) => (Some(b.partial), Some(b.last_valid_n + 1)),
        };
        match (series, trouble) {
            (Some(mut s), None) => {
                s.degraded_from = degraded_from;
                s.provenance.density = Some(f.label().to_string());
                s.provenance.covariance_method = Some(r.method());
                s.provenance.spot_checks = r.spot_checks().to_vec();
                s.provenance.escalations = escalations;
                s.provenance.normalized = config.normalize;
                return Ok(s);
            }
            (partial, Some(at)) => {
                degraded_from.get_or_insert(at);
                if prec >= config.max_precision_bits {
                    let last_valid_n = at.saturating_sub(1);
                    let partial = partial.map(|mut p| {
                        p = p.truncated(last_valid_n.min(p.len()));
                        p.degraded_from = degraded_from;
                        p.provenance.density = Some(f.label().to_string());
                        p.provenance.escalations = escalations.clone();
                        Box::new(p)
                    });
                    return Err(Error::IllConditioned {
                        last_valid_n,
                        precision_bits: prec,
                        partial,
                    });
                }
                escalations.push(prec);
                prec = (prec * 2).min(config.max_precision_bits);
            }
            (None, None) => unreachable!(),
        }
    }
}
