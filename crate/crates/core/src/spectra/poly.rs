//! Real trigonometric and algebraic polynomials used as singular factors.

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mp::{pi, LOCATION_PREC};

/// Number of sample points used for root isolation and nonnegativity checks.
pub const SAMPLE_POINTS: usize = 1 << 16;
/// Nonnegativity tolerance for sampled minima.
pub const NONNEG_TOL: f64 = 1e-12;

/// A zero of a polynomial factor inside (−π, π].
#[derive(Debug, Clone, PartialEq)]
pub struct Root {
    pub at: Float,
    pub multiplicity: u32,
}

/// `t(λ) = a_0 + Σ_{j=1}^d (a_j cos jλ + b_j sin jλ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial {
    cos: Vec<f64>,
    sin: Vec<f64>,
    nonnegative: bool,
}

impl TrigPolynomial {
    /// `cos` holds `a_0..a_d`, `sin` holds `b_1..b_d` (missing entries are zero).
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if cos.is_empty() && sin.is_empty() {
            return Err(Error::InvalidParameter(
                "trigonometric polynomial needs at least one coefficient".into(),
            ));
        }
        if cos.iter().chain(&sin).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        let mut cos = if cos.is_empty() { vec![0.0] } else { cos };
        let mut sin = sin;
        let d = cos.len().saturating_sub(1).max(sin.len());
        cos.resize(d + 1, 0.0);
        sin.resize(d, 0.0);
        while cos.len() > 1 && cos[cos.len() - 1] == 0.0 && sin[sin.len() - 1] == 0.0 {
            cos.pop();
            sin.pop();
        }
        Ok(TrigPolynomial {
            cos,
            sin,
            nonnegative: false,
        })
    }

    pub fn sin_shifted(center: f64) -> Self {
        // sin(λ − c) = cos c · sin λ − sin c · cos λ
        TrigPolynomial {
            cos: vec![0.0, -center.sin()],
            sin: vec![center.cos()],
            nonnegative: false,
        }
    }

    /// Sets the nonnegative flag after certifying it on a dense grid.
    pub fn certify_nonnegative(mut self) -> Result<Self> {
        let min = self.sampled_min();
        if min < -NONNEG_TOL {
            return Err(Error::InvalidConstruction(format!(
                "trigonometric polynomial takes the negative value {min:.3e}"
            )));
        }
        self.nonnegative = true;
        Ok(self)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn degree(&self) -> usize {
        self.cos.len() - 1
    }

    pub fn cos_coefficients(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coefficients(&self) -> &[f64] {
        &self.sin
    }

    pub fn is_even(&self) -> bool {
        self.sin.iter().all(|&b| b == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }

    /// Sum of absolute coefficients, an upper bound for |t| on the circle.
    pub fn scale(&self) -> f64 {
        self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum()
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut s = self.cos[0];
        for j in 1..=self.degree() {
            let (sj, cj) = (j as f64 * x).sin_cos();
            s += self.cos[j] * cj + self.sin[j - 1] * sj;
        }
        s
    }

    pub fn eval(&self, x: &Float, prec: u32) -> Float {
        let mut s = Float::with_val(prec, self.cos[0]);
        for j in 1..=self.degree() {
            let arg = Float::with_val(prec, x * j as u32);
            let (sj, cj) = arg.sin_cos(Float::new(prec));
            if self.cos[j] != 0.0 {
                s += cj * self.cos[j];
            }
            if self.sin[j - 1] != 0.0 {
                s += sj * self.sin[j - 1];
            }
        }
        s
    }

    pub fn derivative(&self) -> TrigPolynomial {
        let d = self.degree();
        let mut cos = vec![0.0; d + 1];
        let mut sin = vec![0.0; d];
        for j in 1..=d {
            let jf = j as f64;
            // d/dλ (a cos jλ + b sin jλ) = j b cos jλ − j a sin jλ
            cos[j] = jf * self.sin[j - 1];
            sin[j - 1] = -jf * self.cos[j];
        }
        TrigPolynomial {
            cos,
            sin,
            nonnegative: false,
        }
    }

    fn nth_derivative(&self, m: u32) -> TrigPolynomial {
        let mut t = self.clone();
        for _ in 0..m {
            t = t.derivative();
        }
        t
    }

    pub fn sampled_min(&self) -> f64 {
        sample_periodic(|x| self.eval_f64(x))
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Sampled (min, max) of |t|.
    pub fn sampled_abs_range(&self) -> (f64, f64) {
        let v = sample_periodic(|x| self.eval_f64(x).abs());
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(0.0, f64::max);
        (lo, hi)
    }

    /// Zeros in (−π, π] with multiplicities.
    pub fn roots(&self) -> Vec<Root> {
        if self.is_constant() {
            return Vec::new();
        }
        let scale = self.scale();
        let n = SAMPLE_POINTS;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let xs: Vec<f64> = (0..n)
            .map(|j| -std::f64::consts::PI + h * j as f64)
            .collect();
        let vs: Vec<f64> = xs.iter().map(|&x| self.eval_f64(x)).collect();
        let mut candidates = Vec::new();
        for j in 0..n {
            let k = (j + 1) % n;
            let prev = (j + n - 1) % n;
            if vs[j] == 0.0 {
                candidates.push(xs[j]);
            } else if vs[j] * vs[k] < 0.0 {
                candidates.push(xs[j] + h / 2.0);
            } else if vs[j].abs() <= vs[prev].abs()
                && vs[j].abs() <= vs[k].abs()
                && vs[j].abs() <= 1e-6 * scale
            {
                candidates.push(xs[j]);
            }
        }
        let d = self.degree().max(1) as f64;
        let mut roots: Vec<Root> = Vec::new();
        for c in candidates {
            let Some((x, m)) =
                polish_root(|x, k| self.nth_derivative(k).eval_f64(x), c, h, scale, d)
            else {
                continue;
            };
            let at = refine_high_precision(
                |x: &Float, prec| self.nth_derivative(m - 1).eval(x, prec),
                |x: &Float, prec| self.nth_derivative(m).eval(x, prec),
                x,
            );
            let at = crate::mp::reduce_angle(&at);
            let at = Float::with_val(LOCATION_PREC, at);
            push_unique(
                &mut roots,
                Root {
                    at,
                    multiplicity: m,
                },
                true,
            );
        }
        roots
    }
}

/// `q(λ) = c_0 + c_1 λ + … + c_m λ^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraicPolynomial {
    coeffs: Vec<f64>,
}

impl AlgebraicPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() || (coeffs.len() == 1 && coeffs[0] == 0.0) {
            return Err(Error::InvalidParameter(
                "algebraic polynomial must not be identically zero".into(),
            ));
        }
        Ok(AlgebraicPolynomial { coeffs })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// |q(−λ)| = |q(λ)| holds when q is even or odd.
    pub fn has_symmetric_modulus(&self) -> bool {
        let even = self.coeffs.iter().skip(1).step_by(2).all(|&c| c == 0.0);
        let odd = self.coeffs.iter().step_by(2).all(|&c| c == 0.0);
        even || odd
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval(&self, x: &Float, prec: u32) -> Float {
        let mut acc = Float::new(prec);
        for &c in self.coeffs.iter().rev() {
            acc *= x;
            acc += c;
        }
        acc
    }

    pub fn derivative(&self) -> AlgebraicPolynomial {
        if self.coeffs.len() == 1 {
            return AlgebraicPolynomial { coeffs: vec![0.0] };
        }
        AlgebraicPolynomial {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| j as f64 * c)
                .collect(),
        }
    }

    fn nth_derivative(&self, m: u32) -> AlgebraicPolynomial {
        let mut q = self.clone();
        for _ in 0..m {
            q = q.derivative();
        }
        q
    }

    fn scale_on_interval(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c.abs() * std::f64::consts::PI.powi(j as i32))
            .sum()
    }

    /// Sampled (min, max) of |q| on [−π, π].
    pub fn sampled_abs_range(&self) -> (f64, f64) {
        let n = SAMPLE_POINTS;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for j in 0..=n {
            let v = self.eval_f64(-std::f64::consts::PI + h * j as f64).abs();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Real zeros in [−π, π], reported with angles in (−π, π].
    pub fn roots(&self) -> Vec<Root> {
        if self.degree() == 0 {
            return Vec::new();
        }
        let scale = self.scale_on_interval();
        let n = SAMPLE_POINTS;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let xs: Vec<f64> = (0..=n)
            .map(|j| -std::f64::consts::PI + h * j as f64)
            .collect();
        let vs: Vec<f64> = xs.iter().map(|&x| self.eval_f64(x)).collect();
        let mut candidates = Vec::new();
        for j in 0..=n {
            if vs[j] == 0.0 {
                candidates.push(xs[j]);
                continue;
            }
            if j < n && vs[j] * vs[j + 1] < 0.0 {
                candidates.push(xs[j] + h / 2.0);
            }
            let l = if j > 0 {
                vs[j - 1].abs()
            } else {
                f64::INFINITY
            };
            let r = if j < n {
                vs[j + 1].abs()
            } else {
                f64::INFINITY
            };
            if vs[j].abs() <= l && vs[j].abs() <= r && vs[j].abs() <= 1e-6 * scale {
                candidates.push(xs[j]);
            }
        }
        let d = self.degree() as f64;
        let mut roots = Vec::new();
        for c in candidates {
            let Some((x, m)) =
                polish_root(|x, k| self.nth_derivative(k).eval_f64(x), c, h, scale, d)
            else {
                continue;
            };
            if x.abs() > std::f64::consts::PI + 1e-12 {
                continue;
            }
            let at = refine_high_precision(
                |x: &Float, prec| self.nth_derivative(m - 1).eval(x, prec),
                |x: &Float, prec| self.nth_derivative(m).eval(x, prec),
                x,
            );
            let p = pi(LOCATION_PREC);
            let at = if at <= -p.clone() { p } else { at };
            push_unique(
                &mut roots,
                Root {
                    at,
                    multiplicity: m,
                },
                false,
            );
        }
        roots
    }
}

fn sample_periodic(f: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = SAMPLE_POINTS;
    let h = 2.0 * std::f64::consts::PI / n as f64;
    (0..n)
        .map(|j| f(-std::f64::consts::PI + h * j as f64))
        .collect()
}

/// Locates a root near `x0` in double precision and estimates its
/// multiplicity from the vanishing derivatives. `value(x, k)` evaluates the
/// k-th derivative.
fn polish_root(
    value: impl Fn(f64, u32) -> f64,
    x0: f64,
    h: f64,
    scale: f64,
    degree: f64,
) -> Option<(f64, u32)> {
    const MAX_MULT: u32 = 8;
    // Multiplicity m: the (m−1)-th derivative has a simple root here.
    for m in 1..=MAX_MULT {
        let g = |x: f64| value(x, m - 1);
        let dg = |x: f64| value(x, m);
        let mut x = x0;
        let mut ok = false;
        // bracketed Newton in a window of a few grid steps
        let (lo, hi) = (x0 - 2.0 * h, x0 + 2.0 * h);
        for _ in 0..100 {
            let gx = g(x);
            let d = dg(x);
            if gx == 0.0 {
                ok = true;
                break;
            }
            if d == 0.0 {
                break;
            }
            let step = gx / d;
            let nx = x - step;
            if !(lo..=hi).contains(&nx) {
                break;
            }
            x = nx;
            if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                ok = true;
                break;
            }
        }
        if !ok {
            continue;
        }
        let tol = 1e-9 * scale;
        let vanish = (0..m).all(|k| value(x, k).abs() <= tol * degree.powi(k as i32 + 1));
        let next = value(x, m).abs() > tol * degree.powi(m as i32);
        if vanish && next {
            return Some((x, m));
        }
        if !vanish {
            return None;
        }
    }
    None
}

/// Newton iteration on a simple root of `g` at [`LOCATION_PREC`] bits.
fn refine_high_precision(
    g: impl Fn(&Float, u32) -> Float,
    dg: impl Fn(&Float, u32) -> Float,
    x0: f64,
) -> Float {
    let prec = LOCATION_PREC;
    let mut x = Float::with_val(prec, x0);
    let mut work = 64u32;
    for _ in 0..64 {
        let wp = work.min(prec);
        let gx = g(&x, wp + 32);
        if gx.is_zero() {
            if wp == prec {
                break;
            }
            work *= 2;
            continue;
        }
        let d = dg(&x, wp + 32);
        if d.is_zero() {
            break;
        }
        let step = Float::with_val(wp + 32, &gx / &d);
        x -= &step;
        let small = step.is_zero()
            || step
                .get_exp()
                .is_some_and(|e| e < -(wp as i32) + 4 + x.get_exp().unwrap_or(0).max(0));
        if small {
            if wp == prec {
                break;
            }
            work *= 2;
        }
    }
    x
}

fn push_unique(roots: &mut Vec<Root>, r: Root, periodic: bool) {
    let period = 2.0 * std::f64::consts::PI;
    let rv = r.at.to_f64();
    let dup = roots.iter().any(|o| {
        let d = (o.at.to_f64() - rv).abs();
        d < 1e-9 || (periodic && (d - period).abs() < 1e-9)
    });
    if !dup {
        roots.push(r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sine_shift_roots_are_simple() {
        let t = TrigPolynomial::sin_shifted(1.0);
        let mut r: Vec<f64> = t.roots().iter().map(|r| r.at.to_f64()).collect();
        r.sort_by(f64::total_cmp);
        assert_eq!(r.len(), 2);
        assert!((r[0] - (1.0 - PI)).abs() < 1e-14);
        assert!((r[1] - 1.0).abs() < 1e-14);
        assert!(t.roots().iter().all(|r| r.multiplicity == 1));
    }

    #[test]
    fn one_plus_cos_has_double_root_at_pi() {
        let t = TrigPolynomial::new(vec![1.0, 1.0], vec![]).unwrap();
        let roots = t.roots();
        assert_eq!(roots.len(), 1);
        assert_eq!(roots[0].multiplicity, 2);
        let err = Float::with_val(LOCATION_PREC, &roots[0].at - pi(LOCATION_PREC));
        assert!(err.clone().abs() < 1e-300, "root not refined: {err}");
        assert!(t.certify_nonnegative().is_ok());
    }

    #[test]
    fn negative_polynomial_is_rejected_as_nonnegative() {
        let t = TrigPolynomial::new(vec![0.0, 1.0], vec![]).unwrap();
        assert!(matches!(
            t.certify_nonnegative(),
            Err(Error::InvalidConstruction(_))
        ));
    }

    #[test]
    fn constant_trig_polynomial_has_no_roots() {
        let t = TrigPolynomial::new(vec![2.0], vec![]).unwrap();
        assert!(t.roots().is_empty());
        assert_eq!(t.eval_f64(0.3), 2.0);
    }

    #[test]
    fn algebraic_roots_inside_interval() {
        let q = AlgebraicPolynomial::new(vec![0.0, 1.0]).unwrap();
        let r = q.roots();
        assert_eq!(r.len(), 1);
        assert!(r[0].at.is_zero());
        // (λ − 1)^2 (λ + 5)
        let q = AlgebraicPolynomial::new(vec![5.0, -9.0, 3.0, 1.0]).unwrap();
        let r = q.roots();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].multiplicity, 2);
        assert!((r[0].at.to_f64() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn algebraic_modulus_symmetry() {
        assert!(AlgebraicPolynomial::new(vec![0.0, 1.0])
            .unwrap()
            .has_symmetric_modulus());
        assert!(AlgebraicPolynomial::new(vec![1.0, 0.0, 2.0])
            .unwrap()
            .has_symmetric_modulus());
        assert!(!AlgebraicPolynomial::new(vec![1.0, 1.0])
            .unwrap()
            .has_symmetric_modulus());
    }

    #[test]
    fn zero_polynomial_rejected() {
        assert!(AlgebraicPolynomial::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn high_precision_eval_matches_double() {
        let t = TrigPolynomial::new(vec![1.0, 0.5, -0.25], vec![0.3, 0.1]).unwrap();
        let x = 0.7;
        let v = t.eval(&Float::with_val(128, x), 128).to_f64();
        assert!((v - t.eval_f64(x)).abs() < 1e-15);
        let d = t.derivative();
        let fd = (t.eval_f64(x + 1e-6) - t.eval_f64(x - 1e-6)) / 2e-6;
        assert!((d.eval_f64(x) - fd).abs() < 1e-8);
    }
}
