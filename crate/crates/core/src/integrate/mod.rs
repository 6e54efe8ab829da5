//! Covariances `r(k) = ∫ e^{−ikλ} f(λ) dλ` over [−π, π], the log-integral
//! behind the geometric mean `G(f) = exp((1/2π)∫ log f)`, and the Szegő
//! verdict built on it.
//!
//! Panels are cut at every declared special point. Densities whose special
//! points are all harmless for a periodic rule (essential zeros, even-order
//! analytic zeros, removable points) get their whole covariance sequence from
//! nested trapezoid sums; everything else goes through composite tanh-sinh
//! pieces no wider than one period of the highest frequency.

pub mod quadrature;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mp::{check_precision, pi, two_pi, Cx, GUARD_BITS};
use crate::spectra::SpectralDensity;
use quadrature::{periodic_trapezoid, tanh_sinh, End, Refined};

/// Extra bits used inside the integrators on top of the requested precision.
const WORK_BITS: u32 = GUARD_BITS + 16;
/// Trapezoid grids start at this multiple of the maximal lag.
pub const GRID_FACTOR: usize = 16;
/// Log-density drop (nats) below the sampled maximum that counts as an
/// unannotated zero.
pub const DIVERGENCE_THRESHOLD: f64 = 230.0;

/// A single covariance with its estimated absolute error.
#[derive(Debug, Clone)]
pub struct FourierCoefficient {
    pub re: Float,
    /// Zero for symmetric densities.
    pub im: Float,
    pub est_error: f64,
}

/// Which route produced a covariance sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceMethod {
    Trapezoid { grid: usize },
    Composite,
    Supplied,
}

/// Spot comparison of the batched sequence against direct quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub lag: usize,
    pub batched: f64,
    pub direct: f64,
    pub bound: f64,
}

/// `r(0..=N)`. Real for symmetric densities; Hermitian (`r(−k) = conj r(k)`)
/// otherwise.
#[derive(Debug, Clone)]
pub struct CovarianceSequence {
    re: Vec<Float>,
    im: Option<Vec<Float>>,
    precision_bits: u32,
    est_error: Vec<f64>,
    method: CovarianceMethod,
    spot_checks: Vec<SpotCheck>,
}

impl CovarianceSequence {
    /// Wraps given real covariances (at least `r(0)`).
    pub fn from_values(values: &[f64], precision_bits: u32) -> Result<Self> {
        check_precision(precision_bits)?;
        let re: Vec<Float> = values
            .iter()
            .map(|&v| Float::with_val(precision_bits, v))
            .collect();
        Self::from_floats(re, None, precision_bits)
    }

    /// Wraps multiprecision covariances; `im` may be omitted for real data.
    pub fn from_floats(
        re: Vec<Float>,
        im: Option<Vec<Float>>,
        precision_bits: u32,
    ) -> Result<Self> {
        check_precision(precision_bits)?;
        if re.is_empty() {
            return Err(Error::InvalidParameter(
                "covariance sequence needs r(0)".into(),
            ));
        }
        if let Some(im) = &im {
            if im.len() != re.len() {
                return Err(Error::InvalidParameter(
                    "real and imaginary parts differ in length".into(),
                ));
            }
            if !im[0].is_zero() {
                return Err(Error::InvalidParameter("r(0) must be real".into()));
            }
        }
        if !(re[0].is_finite() && re[0] > 0) {
            return Err(Error::InvalidParameter(format!(
                "r(0) must be positive, got {}",
                re[0]
            )));
        }
        if re.iter().chain(im.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite covariance".into()));
        }
        let n = re.len();
        Ok(CovarianceSequence {
            re,
            im,
            precision_bits,
            est_error: vec![0.0; n],
            method: CovarianceMethod::Supplied,
            spot_checks: Vec::new(),
        })
    }

    /// Maximal lag N.
    pub fn max_lag(&self) -> usize {
        self.re.len() - 1
    }

    pub fn r0(&self) -> &Float {
        &self.re[0]
    }

    pub fn real_parts(&self) -> &[Float] {
        &self.re
    }

    pub fn imag_parts(&self) -> Option<&[Float]> {
        self.im.as_deref()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_none()
    }

    pub fn lag(&self, k: usize, prec: u32) -> Cx {
        let re = Float::with_val(prec, &self.re[k]);
        let im = match &self.im {
            Some(im) => Float::with_val(prec, &im[k]),
            None => Float::new(prec),
        };
        Cx::new(re, im)
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.re.iter().map(Float::to_f64).collect()
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn est_error(&self) -> &[f64] {
        &self.est_error
    }

    pub fn method(&self) -> CovarianceMethod {
        self.method
    }

    pub fn spot_checks(&self) -> &[SpotCheck] {
        &self.spot_checks
    }

    /// Divides every lag by `c`.
    pub fn scaled(&self, c: &Float) -> Self {
        let mut out = self.clone();
        let cf = c.to_f64().abs();
        for v in out.re.iter_mut() {
            *v /= c;
        }
        if let Some(im) = out.im.as_mut() {
            for v in im.iter_mut() {
                *v /= c;
            }
        }
        for e in out.est_error.iter_mut() {
            *e /= cf;
        }
        out
    }

    /// The first `n + 1` lags.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.re.truncate(n + 1);
        if let Some(im) = out.im.as_mut() {
            im.truncate(n + 1);
        }
        out.est_error.truncate(n + 1);
        out
    }
}

/// `G(f)` together with the divergence flag.
#[derive(Debug, Clone)]
pub struct GeometricMeanResult {
    pub value: Float,
    /// `(1/2π)∫ log f`; `None` when divergent.
    pub log_mean: Option<Float>,
    pub divergent: bool,
    /// Absolute error bound on `∫ log f`.
    pub est_error: f64,
}

impl GeometricMeanResult {
    pub fn value_f64(&self) -> f64 {
        self.value.to_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Deterministic,
    Nondeterministic,
    Undecidable,
}

fn require_integrable(f: &SpectralDensity) -> Result<()> {
    if f.is_integrable() {
        Ok(())
    } else {
        Err(Error::Integrability(format!("{f} has a pole of order ≥ 1")))
    }
}

/// Panel breakpoints: [0, π] for symmetric densities, [−π, π] otherwise, cut
/// at the declared special points.
fn panels(f: &SpectralDensity, wp: u32) -> Vec<(Float, Float, [End; 2])> {
    let p = pi(wp);
    let sym = f.is_symmetric();
    let lo = if sym {
        Float::new(wp)
    } else {
        Float::with_val(wp, -&p)
    };
    let mut cuts: Vec<Float> = vec![lo.clone(), p.clone()];
    for sp in f.points() {
        let at = Float::with_val(wp, &sp.at);
        let at = if sym { at.abs() } else { at };
        if at > lo && at < p && !cuts.iter().any(|c| *c == at) {
            cuts.push(at);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let is_point = |x: &Float| -> bool {
        f.points().iter().any(|sp| {
            let at = Float::with_val(wp, &sp.at);
            *x == at
                || (sym && *x == Float::with_val(wp, at.abs_ref()))
                || (!sym && sp.at == pi(sp.at.prec()) && *x == -p.clone())
        })
    };
    let end = |x: &Float| {
        if is_point(x) {
            End::Singular
        } else {
            End::Regular
        }
    };
    cuts.windows(2)
        .map(|w| (w[0].clone(), w[1].clone(), [end(&w[0]), end(&w[1])]))
        .collect()
}

/// Splits every panel into pieces no wider than `width`.
fn pieces(
    panels: Vec<(Float, Float, [End; 2])>,
    width: f64,
    wp: u32,
) -> Vec<(Float, Float, [End; 2])> {
    let mut out = Vec::new();
    for (a, b, ends) in panels {
        let len = Float::with_val(wp, &b - &a).to_f64();
        let m = ((len / width).ceil() as usize).max(1);
        let step = Float::with_val(wp, &b - &a) / m as u64;
        for i in 0..m {
            let x0 = if i == 0 {
                a.clone()
            } else {
                Float::with_val(wp, &step * i as u64) + &a
            };
            let x1 = if i + 1 == m {
                b.clone()
            } else {
                Float::with_val(wp, &step * (i + 1) as u64) + &a
            };
            let e0 = if i == 0 { ends[0] } else { End::Regular };
            let e1 = if i + 1 == m { ends[1] } else { End::Regular };
            out.push((x0, x1, [e0, e1]));
        }
    }
    out
}

fn sample(f: &SpectralDensity, x: &Float, wp: u32, bad: &mut Option<f64>) -> Float {
    let v = f.value(x, wp);
    if !v.is_finite() && bad.is_none() {
        *bad = Some(x.to_f64());
    }
    v
}

fn nonfinite(f: &SpectralDensity, at: f64) -> Error {
    Error::Integrability(format!("{f} is not finite at λ = {at:.6}"))
}

/// Accumulates `weight·f(λ)·e^{−ikλ}` for `k = 0..=n` into `acc`
/// (`acc[k]` real part; `acc[n + 1 + k]` imaginary part when `complex`).
fn add_harmonics(
    fx: &Float,
    x: &Float,
    weight: &Float,
    n: usize,
    complex: bool,
    wp: u32,
    acc: &mut [Float],
) {
    let base = Float::with_val(wp, fx * weight);
    if base.is_zero() {
        return;
    }
    if !complex {
        // Chebyshev recurrence cos((k+1)x) = 2cos x·cos kx − cos((k−1)x)
        let c1 = Float::with_val(wp, x.cos_ref());
        let two_c = Float::with_val(wp, &c1 * 2u32);
        let mut prev = Float::with_val(wp, 1);
        let mut cur = c1;
        acc[0] += &base;
        for slot in acc.iter_mut().take(n + 1).skip(1) {
            *slot += Float::with_val(wp, &base * &cur);
            let next = Float::with_val(wp, &two_c * &cur) - &prev;
            prev = std::mem::replace(&mut cur, next);
        }
    } else {
        let (s1, c1) = Float::with_val(wp, x).sin_cos(Float::new(wp));
        let rot = Cx::new(c1, Float::with_val(wp, -s1));
        let mut z = Cx::real(Float::with_val(wp, 1));
        for k in 0..=n {
            acc[k] += Float::with_val(wp, &base * &z.re);
            acc[n + 1 + k] += Float::with_val(wp, &base * &z.im);
            z = z.mul(&rot);
        }
    }
}

/// `r(k)` by direct composite quadrature with pieces no wider than one period
/// of `cos kλ`. The estimated error must stay below `2^{−precision_bits/2}·r(0)`.
pub fn fourier_coefficient(
    f: &SpectralDensity,
    k: usize,
    precision_bits: u32,
) -> Result<FourierCoefficient> {
    check_precision(precision_bits)?;
    require_integrable(f)?;
    let prec = precision_bits;
    let wp = prec + WORK_BITS;
    let sym = f.is_symmetric();
    let width = 2.0 * std::f64::consts::PI / (k.max(1) as f64);
    let rel = 2f64.powi(-(prec as i32 - 4));
    let mut bad = None;
    let mut total = [Float::new(wp), Float::new(wp), Float::new(wp)];
    let mut est = 0.0;
    let mut all_converged = true;
    let kbits = 64 - (k as u64).leading_zeros();
    for (a, b, ends) in pieces(panels(f, wp), width, wp) {
        let r: Refined = tanh_sinh(
            &a,
            &b,
            ends,
            wp,
            3,
            |s| rel * Float::with_val(64, s[0].abs_ref()).to_f64(),
            |x, w, acc| {
                let fx = sample(f, x, wp, &mut bad);
                if !fx.is_finite() || fx.is_zero() {
                    return;
                }
                let fw = Float::with_val(wp, &fx * w);
                let arg = Float::with_val(x.prec().max(wp) + kbits, x * k as u64);
                let (s, c) = arg.sin_cos(Float::new(wp));
                acc[0] += &fw;
                acc[1] += Float::with_val(wp, &fw * &c);
                if !sym {
                    acc[2] -= Float::with_val(wp, &fw * &s);
                }
            },
        );
        if let Some(at) = bad {
            return Err(nonfinite(f, at));
        }
        all_converged &= r.converged;
        est += r.est;
        for (t, s) in total.iter_mut().zip(r.sums) {
            *t += s;
        }
    }
    let factor = if sym { 2u32 } else { 1 };
    let r0 = Float::with_val(wp, &total[0] * factor).to_f64();
    let est = est * factor as f64;
    let bound = 2f64.powi(-(prec as i32) / 2) * r0;
    if !all_converged && est > bound {
        return Err(Error::Precision {
            requested: bound,
            best_bound: est,
        });
    }
    Ok(FourierCoefficient {
        re: Float::with_val(prec, &total[1] * factor),
        im: Float::with_val(prec, &total[2]),
        est_error: est,
    })
}

/// `r(0..=N)` at one precision. Periodic-smooth densities use trapezoid grids
/// of at least `16·N` points; the rest use composite quadrature. Either way
/// the result is spot-checked at `k ∈ {0, 1, N/2, N}` against
/// [`fourier_coefficient`].
pub fn covariance_sequence(
    f: &SpectralDensity,
    n: usize,
    precision_bits: u32,
) -> Result<CovarianceSequence> {
    check_precision(precision_bits)?;
    require_integrable(f)?;
    if n < 1 {
        return Err(Error::InvalidParameter(
            "maximal lag N must be at least 1".into(),
        ));
    }
    let prec = precision_bits;
    let wp = prec + WORK_BITS;
    let sym = f.is_symmetric();
    let complex = !sym;
    let len = if complex { 2 * (n + 1) } else { n + 1 };
    let rel = 2f64.powi(-(prec as i32 - 8));
    let mut bad = None;

    let mut batched: Option<(Vec<Float>, Vec<f64>, CovarianceMethod)> = None;
    if f.is_periodic_smooth() {
        let m0 = (GRID_FACTOR * n).next_power_of_two().max(64);
        let m_max = (m0 * 64).min(1 << 22).max(2 * m0);
        let (r, m) = periodic_trapezoid(
            wp,
            len,
            m0,
            m_max,
            sym,
            |s| rel * s[0].to_f64().abs(),
            |x, w, acc| {
                let fx = sample(f, x, wp, &mut bad);
                if fx.is_finite() {
                    add_harmonics(&fx, x, w, n, complex, wp, acc);
                }
            },
        );
        if let Some(at) = bad {
            return Err(nonfinite(f, at));
        }
        if r.converged {
            let est = vec![r.est; n + 1];
            batched = Some((r.sums, est, CovarianceMethod::Trapezoid { grid: m }));
        }
    }
    let (sums, est, method) = match batched {
        Some(b) => b,
        None => {
            let width = 2.0 * std::f64::consts::PI / n as f64;
            let mut total = vec![Float::new(wp); len];
            let mut est = 0.0;
            let mut converged = true;
            let factor = if sym { 2.0 } else { 1.0 };
            for (a, b, ends) in pieces(panels(f, wp), width, wp) {
                let r = tanh_sinh(
                    &a,
                    &b,
                    ends,
                    wp,
                    len,
                    |s| rel * s[0].to_f64().abs(),
                    |x, w, acc| {
                        let fx = sample(f, x, wp, &mut bad);
                        if fx.is_finite() {
                            add_harmonics(&fx, x, w, n, complex, wp, acc);
                        }
                    },
                );
                if let Some(at) = bad {
                    return Err(nonfinite(f, at));
                }
                converged &= r.converged;
                est += r.est * factor;
                for (t, s) in total.iter_mut().zip(r.sums) {
                    *t += s;
                }
            }
            if sym {
                for t in total.iter_mut() {
                    *t *= 2u32;
                }
            }
            let r0 = total[0].to_f64();
            let bound = 2f64.powi(-(prec as i32) / 2) * r0;
            if !converged && est > bound {
                return Err(Error::Precision {
                    requested: bound,
                    best_bound: est,
                });
            }
            (total, vec![est; n + 1], CovarianceMethod::Composite)
        }
    };

    let re: Vec<Float> = sums[..n + 1]
        .iter()
        .map(|v| Float::with_val(prec, v))
        .collect();
    let im = complex.then(|| {
        let mut im: Vec<Float> = sums[n + 1..]
            .iter()
            .map(|v| Float::with_val(prec, v))
            .collect();
        im[0] = Float::new(prec);
        im
    });
    let r0 = re[0].to_f64();
    if !(r0 > 0.0) {
        return Err(Error::Integrability(format!(
            "{f} has a vanishing integral"
        )));
    }

    let mut lags = vec![0, 1, n / 2, n];
    lags.dedup();
    let mut spot_checks = Vec::new();
    for &k in &lags {
        let d = fourier_coefficient(f, k, prec)?;
        let grid = Cx::new(
            Float::with_val(wp, &re[k]),
            im.as_ref()
                .map_or(Float::new(wp), |v| Float::with_val(wp, &v[k])),
        );
        let dr = Float::with_val(64, &grid.re - &d.re).abs().to_f64();
        let di = Float::with_val(64, &grid.im - &d.im).abs().to_f64();
        let slack = 2f64.powi(-(prec as i32) + 8) * r0;
        let bound = est[k] + d.est_error + slack;
        let diff = dr.max(di);
        spot_checks.push(SpotCheck {
            lag: k,
            batched: grid.re.to_f64(),
            direct: d.re.to_f64(),
            bound,
        });
        if diff > bound {
            return Err(Error::Consistency {
                lag: k,
                grid: grid.re.to_f64(),
                direct: d.re.to_f64(),
                bound,
            });
        }
    }

    Ok(CovarianceSequence {
        re,
        im,
        precision_bits: prec,
        est_error: est,
        method,
        spot_checks,
    })
}

/// Distance (radians) from declared points inside which very small samples
/// are expected and do not count towards undecidability.
const POINT_NEIGHBOURHOOD: f64 = 1e-3;

/// `G(f)`. Essential zeros make the log-integral diverge, which is decided
/// from the annotations alone; otherwise `∫ log f` is integrated panel by
/// panel. A sample far below the sampled maximum that no annotation explains
/// makes the result undecidable.
pub fn geometric_mean(f: &SpectralDensity, precision_bits: u32) -> Result<GeometricMeanResult> {
    check_precision(precision_bits)?;
    let prec = precision_bits;
    if f.has_essential_zero() {
        return Ok(GeometricMeanResult {
            value: Float::new(prec),
            log_mean: None,
            divergent: true,
            est_error: 0.0,
        });
    }
    let wp = prec + WORK_BITS;
    let sym = f.is_symmetric();
    let declared: Vec<f64> = f.points().iter().map(|p| p.at_f64()).collect();
    let near_point = |x: f64| {
        declared.iter().any(|&p| {
            let d = (x - p).abs();
            let d = d.min((2.0 * std::f64::consts::PI - d).abs());
            d < POINT_NEIGHBOURHOOD || (sym && (x.abs() - p.abs()).abs() < POINT_NEIGHBOURHOOD)
        })
    };
    let rel = 2f64.powi(-(prec as i32 - 4));
    let tiny = 2f64.powi(-(prec as i32 + 8));
    let mut total = Float::new(wp);
    let mut est = 0.0;
    let mut converged = true;
    let mut ln_max = f64::NEG_INFINITY;
    let mut lowest: Option<(f64, f64)> = None;
    let mut undefined: Option<f64> = None;
    for (a, b, ends) in panels(f, wp) {
        let r = tanh_sinh(
            &a,
            &b,
            ends,
            wp,
            2,
            |s| rel * s[1].to_f64() + tiny,
            |x, w, acc| {
                let l = f.ln_value(x, wp);
                if l.is_nan() || (l.is_infinite() && !l.is_sign_positive()) {
                    if undefined.is_none() && !near_point(x.to_f64()) {
                        undefined = Some(x.to_f64());
                    }
                    return;
                }
                if l.is_infinite() {
                    return;
                }
                // both extremes exclude declared points, whose poles would otherwise
                // set the reference level
                let lf = l.to_f64();
                let xf = x.to_f64();
                if !near_point(xf) {
                    ln_max = ln_max.max(lf);
                    if lowest.is_none_or(|(v, _)| lf < v) {
                        lowest = Some((lf, xf));
                    }
                }
                // smooth majorant of |log f| as the tolerance scale
                let mut m = Float::with_val(wp, l.square_ref()) + 1u32;
                m.sqrt_mut();
                acc[1] += m * w;
                acc[0] += Float::with_val(wp, &l * w);
            },
        );
        converged &= r.converged;
        est += r.est;
        total += &r.sums[0];
    }
    if let Some(at) = undefined {
        return Err(Error::UndecidableDivergence { at });
    }
    if let Some((low, at)) = lowest {
        if low < ln_max - DIVERGENCE_THRESHOLD {
            return Err(Error::UndecidableDivergence { at });
        }
    }
    let factor = if sym { 2u32 } else { 1 };
    total *= factor;
    let est = est * factor as f64;
    let bound = 2f64.powi(-(prec as i32) / 2) * (1.0 + total.to_f64().abs());
    if !converged && est > bound {
        return Err(Error::Precision {
            requested: bound,
            best_bound: est,
        });
    }
    let mean = Float::with_val(prec + GUARD_BITS, &total / two_pi(wp));
    let value = Float::with_val(prec, mean.exp_ref());
    Ok(GeometricMeanResult {
        value,
        log_mean: Some(Float::with_val(prec, mean)),
        divergent: false,
        est_error: est,
    })
}

/// Szegő condition: nondeterministic iff `∫ log f > −∞`.
pub fn szego_condition(f: &SpectralDensity, precision_bits: u32) -> Result<Verdict> {
    match geometric_mean(f, precision_bits) {
        Ok(g) if g.divergent || g.value.is_zero() => Ok(Verdict::Deterministic),
        Ok(_) => Ok(Verdict::Nondeterministic),
        Err(Error::UndecidableDivergence { .. }) => Ok(Verdict::Undecidable),
        Err(e) => Err(e),
    }
}
