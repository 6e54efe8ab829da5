//! Nested tanh-sinh rules on finite panels and nested trapezoid sums on the
//! circle. Both drivers accumulate a vector of integrals at once and refine by
//! halving the step, so each refinement reuses all earlier samples.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rug::Float;

use crate::mp::{pi, two_pi};

/// Deepest tanh-sinh level (step 2^{−MAX_LEVEL}).
pub const MAX_LEVEL: u32 = 10;
/// Levels below this never report convergence.
const MIN_LEVEL: u32 = 3;

/// One abscissa pair ±t of the rule on [−1, 1]: `c = 1 − tanh(π/2·sinh t)` is
/// the distance to the nearer endpoint and `w` the Jacobian of the transform.
struct Node {
    c: Float,
    w: Float,
}

type TableKey = (u32, u32, bool);

static TABLES: OnceLock<Mutex<HashMap<TableKey, Arc<Vec<Node>>>>> = OnceLock::new();

/// Smallest endpoint distance kept, as a power of two relative to the panel.
fn cutoff_exp(prec: u32, singular: bool) -> i64 {
    if singular {
        -8 * prec as i64
    } else {
        -(prec as i64 + 8)
    }
}

/// Abscissae new at `level`; the table for each (precision, level, depth) is
/// computed once and shared.
fn level_nodes(prec: u32, level: u32, singular: bool) -> Arc<Vec<Node>> {
    let map = TABLES.get_or_init(Default::default);
    let mut guard = map.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((prec, level, singular))
        .or_insert_with(|| Arc::new(compute_level(prec, level, singular)))
        .clone()
}

fn compute_level(prec: u32, level: u32, singular: bool) -> Vec<Node> {
    let wp = prec + 32;
    let half_pi = Float::with_val(wp, pi(wp) / 2u32);
    let cut = cutoff_exp(prec, singular);
    let h = Float::with_val(wp, 1) >> level;
    let (start, step) = if level == 0 { (0u32, 1u32) } else { (1, 2) };
    let mut nodes = Vec::new();
    let mut j = start;
    loop {
        let t = Float::with_val(wp, &h * j);
        let (s, ch) = t.sinh_cosh(Float::new(wp));
        let u = Float::with_val(wp, &half_pi * &s);
        let e = Float::with_val(wp, -(u.clone() * 2u32)).exp();
        let one_e = Float::with_val(wp, 1 + &e);
        let c = Float::with_val(wp, &e * 2u32) / &one_e;
        let mut w = Float::with_val(wp, &half_pi * &ch);
        w *= Float::with_val(wp, &e * 4u32);
        w /= Float::with_val(wp, one_e.square_ref());
        if j == 0 {
            nodes.push(Node {
                c: Float::with_val(wp, 1),
                w,
            });
        } else {
            if c.is_zero() || c.get_exp().map_or(true, |x| (x as i64) < cut) {
                break;
            }
            nodes.push(Node { c, w });
        }
        j += step;
    }
    nodes
}

/// Result of a nested refinement: the sums, the last change between levels
/// (taken as the error estimate) and whether the tolerance was met.
#[derive(Debug, Clone)]
pub struct Refined {
    pub sums: Vec<Float>,
    pub est: f64,
    pub converged: bool,
}

fn max_abs_diff(a: &[Float], b: &[Float]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| Float::with_val(64, x - y).abs().to_f64())
        .fold(0.0, f64::max)
}

/// How a panel endpoint should be treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    /// A declared special point: nodes cluster hard against it.
    Singular,
    /// An ordinary cut between pieces.
    Regular,
}

/// Tanh-sinh quadrature on `[a, b]`. `add(λ, weight, acc)` adds
/// `weight·g(λ)` into the accumulator for every component of the integrand;
/// `tol(sums)` gives the absolute tolerance for the largest component change.
pub fn tanh_sinh<F, T>(
    a: &Float,
    b: &Float,
    ends: [End; 2],
    wp: u32,
    len: usize,
    tol: T,
    mut add: F,
) -> Refined
where
    F: FnMut(&Float, &Float, &mut [Float]),
    T: Fn(&[Float]) -> f64,
{
    let half = Float::with_val(wp, b - a) / 2u32;
    let mid = Float::with_val(wp, a + b) / 2u32;
    let mut sums: Vec<Float> = vec![Float::new(wp); len];
    let mut est = f64::INFINITY;
    for level in 0..=MAX_LEVEL {
        let h = Float::with_val(wp, 1) >> level;
        let mut tmp: Vec<Float> = vec![Float::new(wp); len];
        for (e, end) in [(b, ends[1]), (a, ends[0])] {
            let singular = end == End::Singular;
            let nodes = level_nodes(wp, level, singular);
            let sign_right = std::ptr::eq(e, b);
            for (i, node) in nodes.iter().enumerate() {
                let weight = Float::with_val(wp, &half * &node.w) * &h;
                if level == 0 && i == 0 {
                    if sign_right {
                        add(&mid, &weight, &mut tmp);
                    }
                    continue;
                }
                let delta = Float::with_val(wp, &half * &node.c);
                let Some(x) = offset_point(e, &delta, !sign_right, wp) else {
                    continue;
                };
                add(&x, &weight, &mut tmp);
            }
        }
        let prev = std::mem::take(&mut sums);
        sums = if level == 0 {
            tmp
        } else {
            prev.iter()
                .zip(tmp)
                .map(|(p, t)| Float::with_val(wp, p / 2u32) + t)
                .collect()
        };
        if level >= 1 {
            est = max_abs_diff(&sums, &prev);
            if level >= MIN_LEVEL && est <= tol(&sums) {
                return Refined {
                    sums,
                    est,
                    converged: true,
                };
            }
        }
    }
    Refined {
        sums,
        est,
        converged: false,
    }
}

/// `e ± δ` at enough precision to keep `δ` intact, or `None` when the offset
/// is below the resolution of the working precision at `e`.
fn offset_point(e: &Float, delta: &Float, plus: bool, wp: u32) -> Option<Float> {
    if delta.is_zero() {
        return None;
    }
    let de = delta.get_exp()? as i64;
    if e.is_zero() {
        let mut x = Float::with_val(wp, delta);
        if !plus {
            x = -x;
        }
        return Some(x);
    }
    let ee = (e.get_exp().unwrap_or(0) as i64).max(1);
    if de < ee - (wp as i64 - 8) {
        return None;
    }
    let p = wp + (ee - de).max(0) as u32 + 8;
    Some(if plus {
        Float::with_val(p, e + delta)
    } else {
        Float::with_val(p, e - delta)
    })
}

/// Nested trapezoid sums of a 2π-periodic integrand over the whole circle.
///
/// With `half_circle`, the integrand is taken to be even and sampled on
/// [0, π] only (interior samples weighted twice). The grid starts at `m0`
/// points and doubles up to `m_max`.
pub fn periodic_trapezoid<F, T>(
    wp: u32,
    len: usize,
    m0: usize,
    m_max: usize,
    half_circle: bool,
    tol: T,
    mut add: F,
) -> (Refined, usize)
where
    F: FnMut(&Float, &Float, &mut [Float]),
    T: Fn(&[Float]) -> f64,
{
    let tp = two_pi(wp);
    let p = pi(wp);
    let mut m = m0.max(2);
    if m % 2 == 1 {
        m += 1;
    }
    // initial grid
    let mut sums = vec![Float::new(wp); len];
    {
        let step = Float::with_val(wp, &tp / m as u64);
        if half_circle {
            for j in 0..=m / 2 {
                let x = Float::with_val(wp, &step * j as u64);
                let mult = if j == 0 || j == m / 2 { 1u32 } else { 2 };
                let w = Float::with_val(wp, &step * mult);
                add(&x, &w, &mut sums);
            }
        } else {
            for j in 0..m {
                let x = Float::with_val(wp, &step * j as u64) - &p;
                add(&x, &step, &mut sums);
            }
        }
    }
    let mut est = f64::INFINITY;
    while 2 * m <= m_max {
        let m2 = 2 * m;
        let step = Float::with_val(wp, &tp / m2 as u64);
        let mut tmp = vec![Float::new(wp); len];
        if half_circle {
            let w = Float::with_val(wp, &step * 2u32);
            for i in 0..m / 2 {
                let x = Float::with_val(wp, &step * (2 * i + 1) as u64);
                add(&x, &w, &mut tmp);
            }
        } else {
            for i in 0..m {
                let x = Float::with_val(wp, &step * (2 * i + 1) as u64) - &p;
                add(&x, &step, &mut tmp);
            }
        }
        let prev = std::mem::take(&mut sums);
        sums = prev
            .iter()
            .zip(tmp)
            .map(|(a, t)| Float::with_val(wp, a / 2u32) + t)
            .collect();
        m = m2;
        est = max_abs_diff(&sums, &prev);
        if est <= tol(&sums) {
            return (
                Refined {
                    sums,
                    est,
                    converged: true,
                },
                m,
            );
        }
    }
    (
        Refined {
            sums,
            est,
            converged: false,
        },
        m,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(wp: u32) -> impl Fn(&[Float]) -> f64 {
        move |s: &[Float]| s[0].to_f64().abs() * 2f64.powi(-(wp as i32) + 12)
    }

    #[test]
    fn inverse_sqrt_endpoint_singularity() {
        let wp = 128;
        let a = Float::new(wp);
        let b = Float::with_val(wp, 1);
        let r = tanh_sinh(
            &a,
            &b,
            [End::Singular, End::Regular],
            wp,
            1,
            one(wp),
            |x, w, acc| {
                acc[0] += Float::with_val(wp, x.recip_sqrt_ref()) * w;
            },
        );
        assert!(r.converged);
        assert!((r.sums[0].to_f64() - 2.0).abs() < 1e-30);
    }

    #[test]
    fn logarithm_and_polynomial() {
        let wp = 192;
        let a = Float::new(wp);
        let b = Float::with_val(wp, 1);
        let r = tanh_sinh(
            &a,
            &b,
            [End::Singular, End::Singular],
            wp,
            2,
            one(wp),
            |x, w, acc| {
                acc[0] += Float::with_val(wp, x.ln_ref()) * w;
                acc[1] += Float::with_val(wp, x.square_ref()) * w;
            },
        );
        let e = Float::with_val(wp, &r.sums[0] + 1u32);
        assert!(e.abs() < 1e-50);
        let t = Float::with_val(wp, &r.sums[1] - Float::with_val(wp, 1) / 3u32);
        assert!(t.abs() < 1e-50);
    }

    #[test]
    fn nonzero_endpoint_keeps_offsets() {
        // ∫_1^2 (x − 1)^{-1/2} dx = 2
        let wp = 128;
        let a = Float::with_val(wp, 1);
        let b = Float::with_val(wp, 2);
        let r = tanh_sinh(
            &a,
            &b,
            [End::Singular, End::Regular],
            wp,
            1,
            one(wp),
            |x, w, acc| {
                let d = Float::with_val(x.prec(), x - 1u32);
                acc[0] += Float::with_val(wp, d.recip_sqrt_ref()) * w;
            },
        );
        assert!((r.sums[0].to_f64() - 2.0).abs() < 1e-17, "{}", r.sums[0]);
    }

    #[test]
    fn trapezoid_integrates_trig_polynomials_exactly() {
        let wp = 128;
        let (r, _) = periodic_trapezoid(
            wp,
            2,
            16,
            64,
            false,
            |_| 1e-30,
            |x, w, acc| {
                let c = Float::with_val(wp, x.cos_ref());
                let v = Float::with_val(wp, 1.5 + c.clone());
                acc[0] += Float::with_val(wp, &v * w);
                acc[1] += Float::with_val(wp, &v * &c) * w;
            },
        );
        let tp = std::f64::consts::PI * 2.0;
        assert!((r.sums[0].to_f64() - 1.5 * tp).abs() < 1e-14);
        assert!((r.sums[1].to_f64() - 0.5 * tp).abs() < 1e-14);
        let (h, _) = periodic_trapezoid(
            wp,
            1,
            16,
            64,
            true,
            |_| 1e-30,
            |x, w, acc| {
                let c = Float::with_val(wp, x.cos_ref());
                acc[0] += Float::with_val(wp, c.square_ref()) * w;
            },
        );
        assert!((h.sums[0].to_f64() - std::f64::consts::PI).abs() < 1e-14);
    }
}
