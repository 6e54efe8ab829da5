//! Spectral densities on [−π, π]: the named catalog (Pollaczek–Szegő weight,
//! its companion functions, MA(1)/AR(1) spectra), the singular factor
//! families `h·|t|^α` and `h·|q|^α`, and closure under product, scaling,
//! shift, power and quotient.
//!
//! A density is an immutable expression tree together with metadata: the
//! special points where it vanishes, blows up or loses smoothness, a symmetry
//! flag, and optional upper/lower bounds. Quadrature and the geometric mean
//! are driven entirely by that metadata.

mod poly;

use std::fmt;
use std::sync::Arc;

use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};
use crate::mp::{fold_abs, pi, reduce_angle, GUARD_BITS, LOCATION_PREC};

pub use poly::{AlgebraicPolynomial, Root, TrigPolynomial, NONNEG_TOL, SAMPLE_POINTS};

/// Local behaviour of a density at a special point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointKind {
    /// `log f` is not integrable near the point (e.g. `exp(−c/|λ−λ₀|)`);
    /// the density is flat there to every order.
    EssentialZero,
    /// `f ~ |λ−λ₀|^order`, `order > 0`. `smooth` when the factor is analytic.
    Zero { order: f64, smooth: bool },
    /// `f ~ |λ−λ₀|^{−order}`, `order > 0`.
    Pole { order: f64 },
    /// Continuous and positive but not smooth (kink or one-sided jump).
    Kink,
    /// Finite positive limit; value filled by continuity.
    Removable,
}

impl PointKind {
    pub fn is_zero(&self) -> bool {
        matches!(self, PointKind::EssentialZero | PointKind::Zero { .. })
    }

    /// Whether a periodic trapezoid rule loses nothing at this point.
    pub fn is_smooth(&self) -> bool {
        match self {
            PointKind::EssentialZero | PointKind::Removable => true,
            PointKind::Zero { smooth, .. } => *smooth,
            PointKind::Pole { .. } | PointKind::Kink => false,
        }
    }

    fn from_power(order: f64, smooth: bool) -> Option<PointKind> {
        if order > 0.0 {
            Some(PointKind::Zero { order, smooth })
        } else if order < 0.0 {
            Some(PointKind::Pole { order: -order })
        } else {
            None
        }
    }

    /// Local algebraic exponent (zero: positive, pole: negative).
    fn exponent(&self) -> Option<f64> {
        match self {
            PointKind::Zero { order, .. } => Some(*order),
            PointKind::Pole { order } => Some(-*order),
            PointKind::Removable => Some(0.0),
            _ => None,
        }
    }

    /// Kind of a pointwise product at a shared point.
    fn combine(a: PointKind, b: PointKind) -> PointKind {
        use PointKind::*;
        match (a, b) {
            (EssentialZero, _) | (_, EssentialZero) => EssentialZero,
            (Kink, Kink) => Kink,
            (Kink, other) | (other, Kink) => match other {
                Zero { order, .. } => Zero {
                    order,
                    smooth: false,
                },
                Pole { order } => Pole { order },
                _ => Kink,
            },
            (x, y) => {
                let e = x.exponent().unwrap_or(0.0) + y.exponent().unwrap_or(0.0);
                let smooth = x.is_smooth() && y.is_smooth();
                PointKind::from_power(e, smooth && is_even_integer(e)).unwrap_or(Removable)
            }
        }
    }

    fn power(self, alpha: f64) -> Result<Option<PointKind>> {
        use PointKind::*;
        Ok(match self {
            EssentialZero if alpha > 0.0 => Some(EssentialZero),
            EssentialZero => {
                return Err(Error::InvalidConstruction(
                    "negative power of an essential zero is not integrable".into(),
                ))
            }
            Zero { order, smooth } => {
                let e = order * alpha;
                PointKind::from_power(e, smooth && is_even_integer(e))
            }
            Pole { order } => PointKind::from_power(-order * alpha, false),
            Kink => Some(Kink),
            Removable => Some(Removable),
        })
    }
}

fn is_even_integer(x: f64) -> bool {
    x >= 0.0 && x.fract() == 0.0 && (x as i64) % 2 == 0
}

/// A special point of a density. Locations lie in (−π, π]; a point at π
/// stands for ±π.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialPoint {
    pub at: Float,
    pub kind: PointKind,
}

impl SpecialPoint {
    pub fn new(at: Float, kind: PointKind) -> Self {
        let at = Float::with_val(
            LOCATION_PREC,
            reduce_angle(&Float::with_val(LOCATION_PREC, &at)),
        );
        SpecialPoint { at, kind }
    }

    pub fn at_f64(&self) -> f64 {
        self.at.to_f64()
    }
}

/// A bound on the density, together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub value: f64,
    /// Estimated from a dense grid rather than known analytically.
    pub empirical: bool,
}

impl Bound {
    pub fn exact(value: f64) -> Self {
        Bound {
            value,
            empirical: false,
        }
    }

    pub fn sampled(value: f64) -> Self {
        Bound {
            value,
            empirical: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bounds {
    /// `M` with `f ≤ M` (class B⁻ witness).
    pub above: Option<Bound>,
    /// `m > 0` with `f ≥ m` (class B₊ witness).
    pub below: Option<Bound>,
}

impl Bounds {
    fn both(lo: Bound, hi: Bound) -> Self {
        Bounds {
            above: Some(hi),
            below: Some(lo),
        }
    }

    fn mul(a: Option<Bound>, b: Option<Bound>) -> Option<Bound> {
        match (a, b) {
            (Some(x), Some(y)) => Some(Bound {
                value: x.value * y.value,
                empirical: x.empirical || y.empirical,
            }),
            _ => None,
        }
    }

    fn powf(b: Option<Bound>, alpha: f64) -> Option<Bound> {
        b.map(|x| Bound {
            value: x.value.powf(alpha),
            empirical: x.empirical,
        })
    }

    /// In class B₊⁻: bounded above and away from zero.
    pub fn is_two_sided(&self) -> bool {
        self.above.is_some() && self.below.is_some_and(|b| b.value > 0.0)
    }
}

/// Pointwise evaluator for [`SpectralDensity::custom`]; receives the angle and
/// the working precision.
pub type CustomFn = dyn Fn(&Float, u32) -> Float + Send + Sync;

#[derive(Clone)]
enum Node {
    Const(f64),
    Pollaczek { a: f64 },
    HatOne { a: f64 },
    HatTwo { a: f64 },
    Hat { a: f64 },
    Ma1 { theta: f64 },
    Ar1 { phi: f64 },
    AbsSin { center: Float, alpha: f64 },
    TrigPow { t: TrigPolynomial, alpha: f64 },
    AlgPow { q: AlgebraicPolynomial, alpha: f64 },
    Product(Vec<SpectralDensity>),
    Scale(f64, SpectralDensity),
    Shift(Float, SpectralDensity),
    Power(SpectralDensity, f64),
    Quotient(SpectralDensity, SpectralDensity),
    Custom(Arc<CustomFn>),
}

struct Inner {
    node: Node,
    points: Vec<SpecialPoint>,
    symmetric: bool,
    bounds: Bounds,
    label: String,
}

/// An immutable, cheaply clonable spectral density.
#[derive(Clone)]
pub struct SpectralDensity {
    inner: Arc<Inner>,
}

impl fmt::Debug for SpectralDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralDensity")
            .field("label", &self.inner.label)
            .field("points", &self.inner.points)
            .field("symmetric", &self.inner.symmetric)
            .field("bounds", &self.inner.bounds)
            .finish()
    }
}

impl fmt::Display for SpectralDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.inner.label)
    }
}

/// Parameter of the Pollaczek–Szegő density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PollaczekParams {
    a: f64,
}

impl PollaczekParams {
    pub fn new(a: f64) -> Result<Self> {
        check_positive("a", a)?;
        Ok(PollaczekParams { a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `φ(λ) = (a/2)·cot λ`.
    pub fn phi(&self, lambda: f64) -> f64 {
        0.5 * self.a / lambda.tan()
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be a positive finite number, got {v}"
        )))
    }
}

fn loc_pi() -> Float {
    pi(LOCATION_PREC)
}

fn loc_zero() -> Float {
    Float::new(LOCATION_PREC)
}

/// True when `x` coincides with `target` to the resolution of `prec` bits.
fn at_point(x: &Float, target: &Float, prec: u32) -> bool {
    let prec = prec.min(x.prec());
    let d = Float::with_val(prec + 64, x - target);
    if d.is_zero() {
        return true;
    }
    if target.is_zero() {
        // offsets from the origin are exact, so only λ = 0 itself is the point
        return false;
    }
    let scale = target.clone().abs().max(&Float::with_val(53, 1.0));
    let tol = Float::with_val(64, scale) >> (prec.saturating_sub(4));
    d.abs() <= tol
}

/// Evaluates `f` at `prec + GUARD_BITS` and, when the result is tiny
/// compared with `scale`, once more with extra bits to absorb the
/// cancellation.
fn guarded(prec: u32, scale: f64, f: impl Fn(u32) -> Float) -> Float {
    let p = prec + GUARD_BITS;
    let v = f(p);
    if v.is_zero() || !v.is_finite() {
        return f(p + 2 * prec);
    }
    let e = v.get_exp().unwrap_or(0) as i64;
    let extra = (scale.max(1e-300).log2().ceil() as i64 - e + 2)
        .clamp(0, 8 * crate::mp::MAX_PREC as i64) as u32;
    if extra > GUARD_BITS / 2 {
        f(p + extra + GUARD_BITS)
    } else {
        v
    }
}

/// `|v|^α` with the zero/pole conventions of the factor families.
fn abs_pow(v: &Float, alpha: f64, prec: u32) -> Float {
    if alpha == 0.0 {
        return Float::with_val(prec, 1);
    }
    if v.is_zero() {
        return if alpha > 0.0 {
            Float::new(prec)
        } else {
            Float::with_val(prec, rug::float::Special::Infinity)
        };
    }
    let a = Float::with_val(prec + GUARD_BITS, v.abs_ref());
    Float::with_val(prec, a.pow(alpha))
}

fn abs_ln(v: &Float, alpha: f64, prec: u32) -> Float {
    if alpha == 0.0 {
        return Float::new(prec);
    }
    if v.is_zero() {
        return if alpha > 0.0 {
            Float::with_val(prec, rug::float::Special::NegInfinity)
        } else {
            Float::with_val(prec, rug::float::Special::Infinity)
        };
    }
    let mut a = Float::with_val(prec + GUARD_BITS, v.abs_ref());
    a.ln_mut();
    Float::with_val(prec, a * alpha)
}

fn softplus(y: &Float) -> Float {
    let prec = y.prec();
    if y.is_sign_positive() {
        let mut e = Float::with_val(prec, -y);
        e.exp_mut();
        e.ln_1p_mut();
        e + y
    } else {
        let mut e = Float::with_val(prec, y.exp_ref());
        e.ln_1p_mut();
        e
    }
}

impl SpectralDensity {
    fn build(
        node: Node,
        points: Vec<SpecialPoint>,
        symmetric: bool,
        bounds: Bounds,
        label: String,
    ) -> Self {
        let mut points = points;
        points.sort_by(|a, b| a.at.partial_cmp(&b.at).unwrap());
        SpectralDensity {
            inner: Arc::new(Inner {
                node,
                points,
                symmetric,
                bounds,
                label,
            }),
        }
    }

    // ---- catalog -------------------------------------------------------

    /// Constant density `c > 0`.
    pub fn constant(c: f64) -> Result<Self> {
        check_positive("constant", c)?;
        Ok(Self::build(
            Node::Const(c),
            Vec::new(),
            true,
            Bounds::both(Bound::exact(c), Bound::exact(c)),
            format!("const({c})"),
        ))
    }

    /// `1/(2π)`, the white-noise density with `r(0) = 1`.
    pub fn white_noise() -> Self {
        let c = 1.0 / (2.0 * std::f64::consts::PI);
        Self::build(
            Node::Const(f64::NAN),
            Vec::new(),
            true,
            Bounds::both(Bound::exact(c), Bound::exact(c)),
            "white()".into(),
        )
    }

    /// The Pollaczek–Szegő density
    /// `f_a(λ) = exp((2|λ|−π)φ)/cosh(πφ)`, `φ = (a/2)·cot|λ|`,
    /// with essential zeros at 0 and ±π and maximum 1 at ±π/2.
    pub fn pollaczek(params: PollaczekParams) -> Self {
        let a = params.a;
        Self::build(
            Node::Pollaczek { a },
            vec![
                SpecialPoint::new(loc_zero(), PointKind::EssentialZero),
                SpecialPoint::new(loc_pi(), PointKind::EssentialZero),
            ],
            true,
            Bounds {
                above: Some(Bound::exact(1.0)),
                below: None,
            },
            format!("pollaczek(a={a})"),
        )
    }

    /// `exp(−aπ/|λ|)`; essential zero at 0, maximum `e^{−a}` at ±π.
    pub fn companion_hat1(a: f64) -> Result<Self> {
        check_positive("a", a)?;
        Ok(Self::build(
            Node::HatOne { a },
            vec![
                SpecialPoint::new(loc_zero(), PointKind::EssentialZero),
                SpecialPoint::new(loc_pi(), PointKind::Kink),
            ],
            true,
            Bounds {
                above: Some(Bound::exact((-a).exp())),
                below: None,
            },
            format!("hat1(a={a})"),
        ))
    }

    /// `exp(−aπ/(π−|λ|))`; essential zeros at ±π, maximum `e^{−a}` at 0.
    pub fn companion_hat2(a: f64) -> Result<Self> {
        check_positive("a", a)?;
        Ok(Self::build(
            Node::HatTwo { a },
            vec![
                SpecialPoint::new(loc_zero(), PointKind::Kink),
                SpecialPoint::new(loc_pi(), PointKind::EssentialZero),
            ],
            true,
            Bounds {
                above: Some(Bound::exact((-a).exp())),
                below: None,
            },
            format!("hat2(a={a})"),
        ))
    }

    /// `e^{4a}·exp(−aπ/|λ|)·exp(−aπ/(π−|λ|))`, maximum 1 at ±π/2.
    pub fn companion_hat(a: f64) -> Result<Self> {
        check_positive("a", a)?;
        Ok(Self::build(
            Node::Hat { a },
            vec![
                SpecialPoint::new(loc_zero(), PointKind::EssentialZero),
                SpecialPoint::new(loc_pi(), PointKind::EssentialZero),
            ],
            true,
            Bounds {
                above: Some(Bound::exact(1.0)),
                below: None,
            },
            format!("hat(a={a})"),
        ))
    }

    /// MA(1) spectrum `|1 + θe^{iλ}|²/(2π)`, covariances `r = [1+θ², θ, 0, …]`.
    pub fn ma1(theta: f64) -> Result<Self> {
        if !theta.is_finite() || theta == 0.0 && theta.is_sign_negative() {
            return Err(Error::InvalidParameter(format!(
                "theta must be finite, got {theta}"
            )));
        }
        let tp = 2.0 * std::f64::consts::PI;
        let hi = (1.0 + theta.abs()).powi(2) / tp;
        let lo = (1.0 - theta.abs()).powi(2) / tp;
        let mut points = Vec::new();
        if theta.abs() == 1.0 {
            let at = if theta > 0.0 { loc_pi() } else { loc_zero() };
            points.push(SpecialPoint::new(
                at,
                PointKind::Zero {
                    order: 2.0,
                    smooth: true,
                },
            ));
        }
        let bounds = Bounds {
            above: Some(Bound::exact(hi)),
            below: (lo > 0.0).then(|| Bound::exact(lo)),
        };
        Ok(Self::build(
            Node::Ma1 { theta },
            points,
            true,
            bounds,
            format!("ma1(theta={theta})"),
        ))
    }

    /// AR(1) spectrum `1/(2π|1 − φe^{iλ}|²)`, covariances `φ^k/(1−φ²)`.
    pub fn ar1(phi: f64) -> Result<Self> {
        if !phi.is_finite() || phi.abs() >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "AR(1) needs |phi| < 1, got {phi}"
            )));
        }
        let tp = 2.0 * std::f64::consts::PI;
        Ok(Self::build(
            Node::Ar1 { phi },
            Vec::new(),
            true,
            Bounds::both(
                Bound::exact(1.0 / (tp * (1.0 + phi.abs()).powi(2))),
                Bound::exact(1.0 / (tp * (1.0 - phi.abs()).powi(2))),
            ),
            format!("ar1(phi={phi})"),
        ))
    }

    /// `|sin(λ − center)|^α`.
    pub fn abs_sin(center: f64, alpha: f64) -> Result<Self> {
        if !center.is_finite() || !alpha.is_finite() {
            return Err(Error::InvalidParameter(
                "abs_sin needs finite parameters".into(),
            ));
        }
        let c = reduce_angle(&Float::with_val(LOCATION_PREC, center));
        if alpha == 0.0 {
            return Ok(Self::unit(format!("abs_sin(center={center}, alpha=0)")));
        }
        let mut other = Float::with_val(LOCATION_PREC, &c + loc_pi());
        other = reduce_angle(&other);
        let kind = PointKind::from_power(alpha, is_even_integer(alpha)).unwrap();
        let bounds = if alpha > 0.0 {
            Bounds {
                above: Some(Bound::exact(1.0)),
                below: None,
            }
        } else {
            Bounds {
                above: None,
                below: Some(Bound::exact(1.0)),
            }
        };
        Ok(Self::build(
            Node::AbsSin {
                center: Float::with_val(LOCATION_PREC, &c),
                alpha,
            },
            vec![SpecialPoint::new(c, kind), SpecialPoint::new(other, kind)],
            center == 0.0,
            bounds,
            format!("abs_sin(center={center}, alpha={alpha})"),
        ))
    }

    fn unit(label: String) -> Self {
        Self::build(
            Node::Const(1.0),
            Vec::new(),
            true,
            Bounds::both(Bound::exact(1.0), Bound::exact(1.0)),
            label,
        )
    }

    /// `|t(λ)|^α` alone (`h ≡ 1`). Negative powers require the nonnegative flag.
    pub fn trig_power(t: TrigPolynomial, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter("alpha must be finite".into()));
        }
        if alpha < 0.0 && !t.is_nonnegative() {
            return Err(Error::InvalidConstruction(
                "negative power of a trigonometric polynomial requires the nonnegative flag".into(),
            ));
        }
        let label = format!(
            "trig_pow(cos={:?}, sin={:?}, alpha={alpha})",
            t.cos_coefficients(),
            t.sin_coefficients()
        );
        if alpha == 0.0 {
            return Ok(Self::unit(label));
        }
        let roots = t.roots();
        let mut points = Vec::new();
        for r in &roots {
            let order = r.multiplicity as f64 * alpha;
            if let Some(kind) = PointKind::from_power(order, is_even_integer(order)) {
                points.push(SpecialPoint::new(r.at.clone(), kind));
            }
        }
        let (lo, hi) = t.sampled_abs_range();
        let bounds = power_bounds(lo, hi, alpha, !roots.is_empty());
        Ok(Self::build(
            Node::TrigPow {
                t: t.clone(),
                alpha,
            },
            points,
            t.is_even(),
            bounds,
            label,
        ))
    }

    /// `|q(λ)|^α` on [−π, π], extended 2π-periodically.
    pub fn algebraic_power(q: AlgebraicPolynomial, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter("alpha must be finite".into()));
        }
        let label = format!("abs_poly({:?}, alpha={alpha})", q.coefficients());
        if alpha == 0.0 {
            return Ok(Self::unit(label));
        }
        if q.degree() == 0 {
            let c = q.coefficients()[0].abs().powf(alpha);
            return Ok(Self::build(
                Node::AlgPow { q, alpha },
                Vec::new(),
                true,
                Bounds::both(Bound::exact(c), Bound::exact(c)),
                label,
            ));
        }
        let roots = q.roots();
        let mut points: Vec<SpecialPoint> = Vec::new();
        for r in &roots {
            let order = r.multiplicity as f64 * alpha;
            if let Some(kind) = PointKind::from_power(order, is_even_integer(order)) {
                points.push(SpecialPoint::new(r.at.clone(), kind));
            }
        }
        // the periodic extension is not smooth across ±π
        let p = loc_pi();
        match points.iter_mut().find(|sp| sp.at == p) {
            Some(sp) => sp.kind = PointKind::combine(sp.kind, PointKind::Kink),
            None => points.push(SpecialPoint::new(p, PointKind::Kink)),
        }
        let (lo, hi) = q.sampled_abs_range();
        let bounds = power_bounds(lo, hi, alpha, !roots.is_empty());
        Ok(Self::build(
            Node::AlgPow {
                q: q.clone(),
                alpha,
            },
            points,
            q.has_symmetric_modulus(),
            bounds,
            label,
        ))
    }

    /// A user-supplied density. The caller declares its special points; any
    /// zero left undeclared makes the geometric mean undecidable.
    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(&Float, u32) -> Float + Send + Sync + 'static,
        points: Vec<SpecialPoint>,
        symmetric: bool,
    ) -> Self {
        Self::build(
            Node::Custom(Arc::new(f)),
            points,
            symmetric,
            Bounds::default(),
            label.into(),
        )
    }

    // ---- algebra -------------------------------------------------------

    /// Pointwise product. Coinciding special points are merged; a pole that
    /// meets an undeclared zero of the other factor is rejected.
    pub fn product(f: &SpectralDensity, g: &SpectralDensity) -> Result<Self> {
        for (x, y) in [(f, g), (g, f)] {
            for p in x.points() {
                if matches!(p.kind, PointKind::Pole { .. }) && y.point_at(&p.at).is_none() {
                    let v = y.value(&Float::with_val(128, &p.at), 128);
                    if v.is_zero() {
                        return Err(Error::InvalidConstruction(format!(
                            "pole of {x} at λ = {:.6} meets an undeclared zero of {y}",
                            p.at_f64()
                        )));
                    }
                }
            }
        }
        let mut points: Vec<SpecialPoint> = f.points().to_vec();
        for p in g.points() {
            match points.iter_mut().find(|q| q.at == p.at) {
                Some(q) => q.kind = PointKind::combine(q.kind, p.kind),
                None => points.push(p.clone()),
            }
        }
        points.retain(|p| p.kind != PointKind::Removable);
        let mut factors = Vec::new();
        for d in [f, g] {
            match &d.inner.node {
                Node::Product(fs) => factors.extend(fs.iter().cloned()),
                _ => factors.push(d.clone()),
            }
        }
        let bounds = Bounds {
            above: Bounds::mul(f.bounds().above, g.bounds().above),
            below: Bounds::mul(f.bounds().below, g.bounds().below),
        };
        Ok(Self::build(
            Node::Product(factors),
            points,
            f.is_symmetric() && g.is_symmetric(),
            bounds,
            format!("{} * {}", f.label_term(), g.label_term()),
        ))
    }

    /// `c·f` for `c > 0`.
    pub fn scale(f: &SpectralDensity, c: f64) -> Result<Self> {
        check_positive("scale factor", c)?;
        let b = f.bounds();
        let m = |x: Option<Bound>| {
            x.map(|y| Bound {
                value: y.value * c,
                empirical: y.empirical,
            })
        };
        Ok(Self::build(
            Node::Scale(c, f.clone()),
            f.points().to_vec(),
            f.is_symmetric(),
            Bounds {
                above: m(b.above),
                below: m(b.below),
            },
            format!("{c} * {}", f.label_term()),
        ))
    }

    /// `f(λ − λ₀)` with arguments reduced modulo 2π.
    pub fn shift(f: &SpectralDensity, lambda0: f64) -> Result<Self> {
        if !lambda0.is_finite() {
            return Err(Error::InvalidParameter("shift must be finite".into()));
        }
        let l0 = reduce_angle(&Float::with_val(LOCATION_PREC, lambda0));
        let points = f
            .points()
            .iter()
            .map(|p| SpecialPoint::new(Float::with_val(LOCATION_PREC, &p.at + &l0), p.kind))
            .collect();
        Ok(Self::build(
            Node::Shift(l0, f.clone()),
            points,
            f.is_symmetric() && lambda0 == 0.0,
            f.bounds(),
            format!("shift({}, {lambda0})", f.label()),
        ))
    }

    /// `f^α`.
    pub fn power(f: &SpectralDensity, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter("alpha must be finite".into()));
        }
        if alpha == 1.0 {
            return Ok(f.clone());
        }
        let mut points = Vec::new();
        for p in f.points() {
            if let Some(kind) = p.kind.power(alpha)? {
                points.push(SpecialPoint {
                    at: p.at.clone(),
                    kind,
                });
            }
        }
        let b = f.bounds();
        let bounds = if alpha > 0.0 {
            Bounds {
                above: Bounds::powf(b.above, alpha),
                below: Bounds::powf(b.below, alpha),
            }
        } else if alpha < 0.0 {
            Bounds {
                above: Bounds::powf(b.below, alpha),
                below: Bounds::powf(b.above, alpha),
            }
        } else {
            Bounds::both(Bound::exact(1.0), Bound::exact(1.0))
        };
        Ok(Self::build(
            Node::Power(f.clone(), alpha),
            points,
            f.is_symmetric(),
            bounds,
            format!("pow({}, {alpha})", f.label()),
        ))
    }

    /// `num/den`, evaluated in log space. Common essential zeros become
    /// removable points whose values are filled by their limits; an essential
    /// zero of the denominator alone is rejected.
    pub fn quotient(num: &SpectralDensity, den: &SpectralDensity) -> Result<Self> {
        let mut points: Vec<SpecialPoint> = num.points().to_vec();
        for p in den.points() {
            let inv = match p.kind {
                PointKind::EssentialZero => None,
                PointKind::Zero { order, smooth } => Some(PointKind::from_power(-order, smooth)),
                PointKind::Pole { order } => Some(PointKind::from_power(order, false)),
                PointKind::Kink => Some(Some(PointKind::Kink)),
                PointKind::Removable => Some(None),
            };
            match (points.iter_mut().find(|q| q.at == p.at), inv) {
                (Some(q), None) => {
                    if q.kind != PointKind::EssentialZero {
                        return Err(Error::InvalidConstruction(format!(
                            "denominator {den} has an essential zero at λ = {:.6} not shared by the numerator",
                            p.at_f64()
                        )));
                    }
                    q.kind = PointKind::Removable;
                }
                (None, None) => {
                    return Err(Error::InvalidConstruction(format!(
                        "denominator {den} has an essential zero at λ = {:.6} not shared by the numerator",
                        p.at_f64()
                    )))
                }
                (Some(q), Some(Some(k))) => q.kind = PointKind::combine(q.kind, k),
                (Some(_), Some(None)) => {}
                (None, Some(Some(k))) => points.push(SpecialPoint {
                    at: p.at.clone(),
                    kind: k,
                }),
                (None, Some(None)) => {}
            }
        }
        let nb = num.bounds();
        let db = den.bounds();
        let inv = |b: Option<Bound>| {
            b.map(|x| Bound {
                value: 1.0 / x.value,
                empirical: x.empirical,
            })
        };
        let bounds = Bounds {
            above: Bounds::mul(nb.above, inv(db.below)),
            below: Bounds::mul(nb.below, inv(db.above)),
        };
        Ok(Self::build(
            Node::Quotient(num.clone(), den.clone()),
            points,
            num.is_symmetric() && den.is_symmetric(),
            bounds,
            format!("ratio({}, {})", num.label(), den.label()),
        ))
    }

    /// Re-checks symmetry on a grid and sets the flag if `f(−λ) = f(λ)` holds
    /// to `rel_tol`.
    pub fn verified_symmetric(&self, rel_tol: f64) -> Self {
        if self.is_symmetric() {
            return self.clone();
        }
        let n = 4096;
        let ok = (1..n).all(|j| {
            let x = std::f64::consts::PI * j as f64 / n as f64;
            let a = self.eval(x);
            let b = self.eval(-x);
            a == b || (a - b).abs() <= rel_tol * a.abs().max(b.abs())
        });
        if !ok {
            return self.clone();
        }
        let inner = &self.inner;
        SpectralDensity {
            inner: Arc::new(Inner {
                node: inner.node.clone(),
                points: inner.points.clone(),
                symmetric: true,
                bounds: inner.bounds,
                label: inner.label.clone(),
            }),
        }
    }

    /// Fills missing bounds from a dense grid, flagged as empirical. Only
    /// densities without special points can receive a positive lower bound.
    pub fn with_estimated_bounds(&self) -> Self {
        let b = self.bounds();
        if b.above.is_some() && b.below.is_some() {
            return self.clone();
        }
        let n = SAMPLE_POINTS;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for j in 0..n {
            let x = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            let v = self.eval(x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let singular = !self.points().is_empty();
        let bounds = Bounds {
            above: b
                .above
                .or_else(|| (hi.is_finite() && !self.has_pole()).then(|| Bound::sampled(hi))),
            below: b
                .below
                .or_else(|| (lo > 0.0 && !singular).then(|| Bound::sampled(lo))),
        };
        let inner = &self.inner;
        SpectralDensity {
            inner: Arc::new(Inner {
                node: inner.node.clone(),
                points: inner.points.clone(),
                symmetric: inner.symmetric,
                bounds,
                label: inner.label.clone(),
            }),
        }
    }

    // ---- metadata ------------------------------------------------------

    pub fn label(&self) -> &str {
        &self.inner.label
    }

    fn label_term(&self) -> String {
        match &self.inner.node {
            Node::Product(_) | Node::Scale(..) => format!("({})", self.inner.label),
            _ => self.inner.label.clone(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.inner.symmetric
    }

    pub fn bounds(&self) -> Bounds {
        self.inner.bounds
    }

    /// Special points in (−π, π], sorted.
    pub fn points(&self) -> &[SpecialPoint] {
        &self.inner.points
    }

    pub fn point_at(&self, at: &Float) -> Option<&SpecialPoint> {
        let r = Float::with_val(
            LOCATION_PREC,
            reduce_angle(&Float::with_val(LOCATION_PREC, at)),
        );
        self.inner.points.iter().find(|p| p.at == r)
    }

    /// Angles where the density vanishes; a zero at π is listed as both −π and π.
    pub fn zero_set(&self) -> Vec<f64> {
        let mut z = Vec::new();
        for p in self.points().iter().filter(|p| p.kind.is_zero()) {
            let v = p.at_f64();
            if p.at == loc_pi() {
                z.push(-std::f64::consts::PI);
            }
            z.push(v);
        }
        z.sort_by(f64::total_cmp);
        z
    }

    /// Angles where the density returns the +∞ sentinel.
    pub fn pole_set(&self) -> Vec<f64> {
        self.points()
            .iter()
            .filter(|p| matches!(p.kind, PointKind::Pole { .. }))
            .map(|p| p.at_f64())
            .collect()
    }

    pub fn has_essential_zero(&self) -> bool {
        self.points()
            .iter()
            .any(|p| p.kind == PointKind::EssentialZero)
    }

    pub fn has_pole(&self) -> bool {
        self.points()
            .iter()
            .any(|p| matches!(p.kind, PointKind::Pole { .. }))
    }

    /// Integrable iff every pole has order below one.
    pub fn is_integrable(&self) -> bool {
        self.points().iter().all(|p| match p.kind {
            PointKind::Pole { order } => order < 1.0,
            _ => true,
        })
    }

    /// Every special point is harmless for a periodic trapezoid rule.
    pub fn is_periodic_smooth(&self) -> bool {
        self.points().iter().all(|p| p.kind.is_smooth())
    }

    // ---- evaluation ----------------------------------------------------

    /// Density value at `x` (any real, reduced mod 2π) rounded to `prec`
    /// bits. Declared poles return +∞.
    pub fn value(&self, x: &Float, prec: u32) -> Float {
        let v = self.value_raw(x, prec);
        if v.is_nan() {
            self.point_value(x, prec)
        } else {
            v
        }
    }

    /// Natural log of the density; −∞ at zeros, +∞ at poles.
    pub fn ln_value(&self, x: &Float, prec: u32) -> Float {
        let v = self.ln_raw(x, prec);
        if v.is_nan() {
            let pv = self.point_value(x, prec);
            Float::with_val(prec, pv.ln_ref())
        } else {
            v
        }
    }

    /// Double-precision convenience wrapper over [`Self::value`].
    pub fn eval(&self, x: f64) -> f64 {
        self.value(&Float::with_val(53, x), 64).to_f64()
    }

    fn point_value(&self, x: &Float, prec: u32) -> Float {
        let r = reduce_angle(x);
        let p = self.inner.points.iter().find(|p| {
            at_point(&r, &p.at, prec) || (p.at == loc_pi() && at_point(&r, &-loc_pi(), prec))
        });
        match p.map(|p| p.kind) {
            Some(PointKind::Zero { .. }) | Some(PointKind::EssentialZero) => Float::new(prec),
            Some(PointKind::Pole { .. }) => Float::with_val(prec, rug::float::Special::Infinity),
            _ => self.limit_value(&r, prec),
        }
    }

    /// Value just inside the domain next to `x`, used to fill removable points.
    fn limit_value(&self, x: &Float, prec: u32) -> Float {
        let wp = 2 * prec + GUARD_BITS;
        let off = Float::with_val(wp, 1) >> (prec + 8);
        let p = pi(wp);
        let y = if *x > 0 {
            Float::with_val(wp, x - &off)
        } else if *x < 0 || x.is_zero() && *x < p {
            Float::with_val(wp, x + &off)
        } else {
            Float::with_val(wp, x - &off)
        };
        let v = self.ln_raw(&y, prec);
        let mut e = Float::with_val(prec + GUARD_BITS, v);
        e.exp_mut();
        Float::with_val(prec, e)
    }

    fn value_raw(&self, x: &Float, prec: u32) -> Float {
        let wp = prec + GUARD_BITS;
        match &self.inner.node {
            Node::Const(c) => {
                if c.is_nan() {
                    Float::with_val(prec, 1) / crate::mp::two_pi(wp)
                } else {
                    Float::with_val(prec, *c)
                }
            }
            Node::Pollaczek { .. }
            | Node::HatOne { .. }
            | Node::HatTwo { .. }
            | Node::Hat { .. } => {
                let ln = self.ln_raw(x, prec + self.ln_extra_bits(x));
                if ln.is_infinite() && ln.is_sign_negative() {
                    return Float::new(prec);
                }
                let mut e = Float::with_val(ln.prec(), ln);
                e.exp_mut();
                Float::with_val(prec, e)
            }
            Node::Ma1 { theta } => {
                let th = *theta;
                let scale = (1.0 + th.abs()).powi(2);
                let v = guarded(prec, scale, |p| {
                    let mut c = Float::with_val(p, x.cos_ref());
                    c *= 2.0 * th;
                    c += Float::with_val(p, th).square();
                    c += 1u32;
                    c
                });
                let v = if v.is_sign_negative() {
                    Float::new(prec)
                } else {
                    v
                };
                Float::with_val(prec, v / crate::mp::two_pi(wp))
            }
            Node::Ar1 { phi } => {
                let ph = *phi;
                let mut c = Float::with_val(wp, x.cos_ref());
                c *= -2.0 * ph;
                c += Float::with_val(wp, ph).square();
                c += 1u32;
                c *= crate::mp::two_pi(wp);
                Float::with_val(prec, c.recip())
            }
            Node::AbsSin { center, alpha } => {
                let s = self.abs_sin_core(x, center, prec);
                abs_pow(&s, *alpha, prec)
            }
            Node::TrigPow { t, alpha } => {
                let v = self.trig_core(x, t, prec);
                abs_pow(&v, *alpha, prec)
            }
            Node::AlgPow { q, alpha } => {
                let v = self.alg_core(x, q, prec);
                abs_pow(&v, *alpha, prec)
            }
            Node::Product(fs) => {
                let mut acc = Float::with_val(wp, 1);
                for f in fs {
                    acc *= f.value_raw(x, wp);
                }
                Float::with_val(prec, acc)
            }
            Node::Scale(c, f) => Float::with_val(prec, f.value_raw(x, wp) * *c),
            Node::Shift(l0, f) => {
                let y = Float::with_val(x.prec().max(wp) + GUARD_BITS, x - l0);
                f.value_raw(&reduce_angle(&y), prec)
            }
            Node::Power(f, alpha) => {
                let v = f.value_raw(x, wp);
                if v.is_nan() {
                    return v;
                }
                abs_pow(&v, *alpha, prec)
            }
            Node::Quotient(..) => {
                let ln = self.ln_raw(x, prec + GUARD_BITS);
                if ln.is_nan() {
                    return ln;
                }
                let mut e = Float::with_val(ln.prec(), ln);
                e.exp_mut();
                Float::with_val(prec, e)
            }
            Node::Custom(f) => {
                let v = f(x, prec);
                Float::with_val(prec, v)
            }
        }
    }

    /// Bits of |ln f| at `x` for the flat factors, used to size the precision
    /// of the exponent.
    fn ln_extra_bits(&self, x: &Float) -> u32 {
        let a = match &self.inner.node {
            Node::Pollaczek { a } | Node::HatOne { a } | Node::HatTwo { a } | Node::Hat { a } => *a,
            _ => return 0,
        };
        let p = x.prec().max(64) + 8;
        let l = fold_abs(&Float::with_val(p, x));
        let far = Float::with_val(p, pi(p) - &l);
        let d = if far < l { far } else { l };
        let de = d.get_exp().unwrap_or(0) as i64;
        let scale = (a * std::f64::consts::PI * std::f64::consts::PI)
            .log2()
            .ceil() as i64;
        (scale - de + 2).clamp(0, 8 * crate::mp::MAX_PREC as i64) as u32
    }

    fn ln_raw(&self, x: &Float, prec: u32) -> Float {
        let wp = prec + GUARD_BITS;
        match &self.inner.node {
            Node::Pollaczek { a } => {
                let a = *a;
                let wp = wp + self.ln_extra_bits(x);
                let l = fold_abs(&Float::with_val(x.prec().max(wp), x));
                let p = pi(wp + 64);
                if at_point(&l, &Float::new(wp), prec) || at_point(&l, &p, prec) {
                    return Float::with_val(prec, rug::float::Special::NegInfinity);
                }
                // ln f = ln 2 + a·λ·cot λ − ln(1 + exp(aπ·cot λ))
                let c = Float::with_val(wp, l.cot_ref());
                let mut t = Float::with_val(wp, &l * &c);
                t *= a;
                let mut y = Float::with_val(wp, &c * &p);
                y *= a;
                let sp = softplus(&y);
                let ln2 = Float::with_val(wp, rug::float::Constant::Log2);
                Float::with_val(prec, ln2 + t - sp)
            }
            Node::HatOne { a } => {
                let wp = wp + self.ln_extra_bits(x);
                let l = fold_abs(&Float::with_val(x.prec().max(wp), x));
                let p = pi(wp + 64);
                if at_point(&l, &Float::new(wp), prec) {
                    return Float::with_val(prec, rug::float::Special::NegInfinity);
                }
                if at_point(&l, &p, prec) {
                    return Float::with_val(prec, -*a);
                }
                let r = Float::with_val(wp, &p / &l);
                Float::with_val(prec, r * -*a)
            }
            Node::HatTwo { a } => {
                let wp = wp + self.ln_extra_bits(x);
                let l = fold_abs(&Float::with_val(x.prec().max(wp), x));
                let p = pi(wp + 64);
                if at_point(&l, &p, prec) {
                    return Float::with_val(prec, rug::float::Special::NegInfinity);
                }
                if at_point(&l, &Float::new(wp), prec) {
                    return Float::with_val(prec, -*a);
                }
                let d = Float::with_val(wp, &p - &l);
                let r = Float::with_val(wp, &p / &d);
                Float::with_val(prec, r * -*a)
            }
            Node::Hat { a } => {
                let wp = wp + self.ln_extra_bits(x);
                let l = fold_abs(&Float::with_val(x.prec().max(wp), x));
                let p = pi(wp + 64);
                if at_point(&l, &Float::new(wp), prec) || at_point(&l, &p, prec) {
                    return Float::with_val(prec, rug::float::Special::NegInfinity);
                }
                // 4a − aπ²/(λ(π−λ))
                let d = Float::with_val(wp, &p - &l);
                let den = Float::with_val(wp, &l * &d);
                let mut r = Float::with_val(wp, p.square_ref());
                r /= &den;
                r *= -*a;
                r += 4.0 * *a;
                Float::with_val(prec, r)
            }
            Node::AbsSin { center, alpha } => {
                let s = self.abs_sin_core(x, center, prec);
                abs_ln(&s, *alpha, prec)
            }
            Node::TrigPow { t, alpha } => {
                let v = self.trig_core(x, t, prec);
                abs_ln(&v, *alpha, prec)
            }
            Node::AlgPow { q, alpha } => {
                let v = self.alg_core(x, q, prec);
                abs_ln(&v, *alpha, prec)
            }
            Node::Product(fs) => {
                let mut acc = Float::new(wp);
                for f in fs {
                    acc += f.ln_raw(x, wp);
                }
                Float::with_val(prec, acc)
            }
            Node::Scale(c, f) => {
                let mut l = f.ln_raw(x, wp);
                l += Float::with_val(wp, *c).ln();
                Float::with_val(prec, l)
            }
            Node::Shift(l0, f) => {
                let y = Float::with_val(x.prec().max(wp) + GUARD_BITS, x - l0);
                f.ln_raw(&reduce_angle(&y), prec)
            }
            Node::Power(f, alpha) => {
                if *alpha == 0.0 {
                    return Float::new(prec);
                }
                let l = f.ln_raw(x, wp);
                Float::with_val(prec, l * *alpha)
            }
            Node::Quotient(num, den) => {
                let n = num.ln_raw(x, wp);
                let extra = n.get_exp().unwrap_or(0).max(0) as u32;
                if extra > GUARD_BITS / 2 {
                    let hp = wp + extra + GUARD_BITS;
                    let n = num.ln_raw(x, hp);
                    let d = den.ln_raw(x, hp);
                    Float::with_val(prec, n - d)
                } else {
                    let d = den.ln_raw(x, wp);
                    Float::with_val(prec, n - d)
                }
            }
            Node::Const(_) | Node::Ma1 { .. } | Node::Ar1 { .. } | Node::Custom(_) => {
                let v = self.value_raw(x, wp);
                Float::with_val(prec, v.ln_ref())
            }
        }
    }

    fn abs_sin_core(&self, x: &Float, center: &Float, prec: u32) -> Float {
        let wp = x.prec().max(prec) + GUARD_BITS;
        let d = reduce_angle(&Float::with_val(wp, x - center));
        let p = pi(wp + 64);
        if at_point(&d, &Float::new(wp), prec) || at_point(&d.clone().abs(), &p, prec) {
            return Float::new(prec);
        }
        Float::with_val(prec + GUARD_BITS, d.sin_ref())
    }

    fn trig_core(&self, x: &Float, t: &TrigPolynomial, prec: u32) -> Float {
        let r = reduce_angle(x);
        if self.inner.points.iter().any(|p| at_point(&r, &p.at, prec)) {
            return Float::new(prec);
        }
        guarded(prec.max(x.prec()), t.scale(), |p| t.eval(&r, p))
    }

    fn alg_core(&self, x: &Float, q: &AlgebraicPolynomial, prec: u32) -> Float {
        let r = reduce_angle(x);
        if self
            .inner
            .points
            .iter()
            .any(|p| p.kind != PointKind::Kink && at_point(&r, &p.at, prec))
        {
            return Float::new(prec);
        }
        let scale: f64 = q
            .coefficients()
            .iter()
            .enumerate()
            .map(|(j, c)| c.abs() * std::f64::consts::PI.powi(j as i32))
            .sum();
        guarded(prec.max(x.prec()), scale, |p| q.eval(&r, p))
    }
}

fn power_bounds(lo: f64, hi: f64, alpha: f64, has_roots: bool) -> Bounds {
    let lo = if has_roots { 0.0 } else { lo };
    if alpha > 0.0 {
        Bounds {
            above: Some(Bound::sampled(hi.powf(alpha))),
            below: (lo > 0.0).then(|| Bound::sampled(lo.powf(alpha))),
        }
    } else {
        Bounds {
            above: (lo > 0.0).then(|| Bound::sampled(lo.powf(alpha))),
            below: (hi > 0.0).then(|| Bound::sampled(hi.powf(alpha))),
        }
    }
}

// ---- operation-level constructors ------------------------------------------

/// `f_a` of the given parameter.
pub fn pollaczek(params: PollaczekParams) -> SpectralDensity {
    SpectralDensity::pollaczek(params)
}

pub fn companion_hat1(a: f64) -> Result<SpectralDensity> {
    SpectralDensity::companion_hat1(a)
}

pub fn companion_hat2(a: f64) -> Result<SpectralDensity> {
    SpectralDensity::companion_hat2(a)
}

pub fn companion_hat(a: f64) -> Result<SpectralDensity> {
    SpectralDensity::companion_hat(a)
}

/// `g = h·|t|^α`; for `α < 0` the polynomial must be certified nonnegative
/// and its zeros become poles. `h` must be bounded above and away from zero.
pub fn trig_power_factor(
    h: &SpectralDensity,
    t: TrigPolynomial,
    alpha: f64,
) -> Result<SpectralDensity> {
    let h = require_two_sided(h)?;
    let g = SpectralDensity::trig_power(t, alpha)?;
    SpectralDensity::product(&h, &g)
}

/// `g = h·|q|^α` for an algebraic polynomial `q`.
pub fn algebraic_power_factor(
    h: &SpectralDensity,
    q: AlgebraicPolynomial,
    alpha: f64,
) -> Result<SpectralDensity> {
    let h = require_two_sided(h)?;
    let g = SpectralDensity::algebraic_power(q, alpha)?;
    SpectralDensity::product(&h, &g)
}

fn require_two_sided(h: &SpectralDensity) -> Result<SpectralDensity> {
    let h = h.with_estimated_bounds();
    if h.bounds().is_two_sided() {
        Ok(h)
    } else {
        Err(Error::InvalidConstruction(format!(
            "{h} is not bounded above and away from zero"
        )))
    }
}

pub fn product(f: &SpectralDensity, g: &SpectralDensity) -> Result<SpectralDensity> {
    SpectralDensity::product(f, g)
}

pub fn scale(f: &SpectralDensity, c: f64) -> Result<SpectralDensity> {
    SpectralDensity::scale(f, c)
}

pub fn shift(f: &SpectralDensity, lambda0: f64) -> Result<SpectralDensity> {
    SpectralDensity::shift(f, lambda0)
}
