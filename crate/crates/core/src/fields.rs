//! Evaluatable fields: scalar profiles `u`, anti-symmetric differences
//! `w_lambda(x) = u(x^lambda) - u(x)`, and coefficient fields `c(x)`.
//!
//! Every shipped field carries a decay envelope so that the operator's
//! far-field tail can be bounded, and a length scale used to size periodic
//! boxes and grids.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{check_dim, reflect, Point};

pub type EvalFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Smoothness {
    C0,
    C1,
    C2,
    C3,
    CInf,
}

/// Envelope for `|u(y)|` as a function of `|y|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Decay {
    /// `u = 0` outside `B_radius(0)`, `|u| <= amplitude` inside.
    Compact { radius: f64, amplitude: f64 },
    /// `|u(y)| <= amplitude (1+|y|)^poly exp(-(((|y| - offset)_+) / width)^2)`.
    Gaussian { amplitude: f64, poly: f64, offset: f64, width: f64 },
    /// `|u(y)| <= constant (1+|y|)^(-exponent)`.
    Power { exponent: f64, constant: f64 },
}

impl Decay {
    /// The algebraic decay exponent `p`; infinite for compact or Gaussian envelopes.
    pub fn exponent(&self) -> f64 {
        match self {
            Decay::Power { exponent, .. } => *exponent,
            _ => f64::INFINITY,
        }
    }

    /// The envelope at radius `rho`.
    pub fn envelope(&self, rho: f64) -> f64 {
        match *self {
            Decay::Compact { radius, amplitude } => {
                if rho >= radius {
                    0.0
                } else {
                    amplitude
                }
            }
            Decay::Gaussian { amplitude, poly, offset, width } => {
                let e = ((rho - offset).max(0.0) / width).powi(2);
                amplitude * (1.0 + rho).powf(poly) * (-e).exp()
            }
            Decay::Power { exponent, constant } => constant * (1.0 + rho).powf(-exponent),
        }
    }

    /// `sup_{|y| >= r} |u(y)|` implied by the envelope.
    pub fn sup_beyond(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            Decay::Gaussian { poly, offset, width, .. } => {
                // the envelope increases up to its single critical point, then decreases
                let b = 1.0 - offset;
                let crit = (-b + (b * b + 2.0 * offset + poly * width * width).sqrt()) / 2.0;
                self.envelope(r.max(crit).max(0.0))
            }
            _ => self.envelope(r),
        }
    }

    /// An equivalent `Power` envelope with the given exponent (valid when the
    /// original envelope decays at least that fast).
    pub fn as_power(&self, p: f64) -> Decay {
        match *self {
            Decay::Power { exponent, constant } => {
                debug_assert!(exponent >= p);
                Decay::Power { exponent: p, constant }
            }
            Decay::Compact { radius, amplitude } => Decay::Power { exponent: p, constant: amplitude * (1.0 + radius).powf(p) },
            Decay::Gaussian { amplitude, poly, offset, width } => {
                let lifted = Decay::Gaussian { amplitude, poly: poly + p, offset, width };
                Decay::Power { exponent: p, constant: lifted.sup_beyond(0.0) }
            }
        }
    }

    /// Envelope of `y -> u(y - shift)`.
    pub fn translated(&self, shift_norm: f64) -> Decay {
        let s = shift_norm;
        match *self {
            Decay::Compact { radius, amplitude } => Decay::Compact { radius: radius + s, amplitude },
            Decay::Gaussian { amplitude, poly, offset, width } => Decay::Gaussian {
                amplitude: amplitude * (1.0 + s).powf(poly.max(0.0)),
                poly,
                offset: offset + s,
                width,
            },
            Decay::Power { exponent, constant } => Decay::Power { exponent, constant: constant * (1.0 + s).powf(exponent) },
        }
    }

    /// Envelope of `y -> u(s y)`, `s > 0`.
    pub fn scaled(&self, s: f64) -> Decay {
        match *self {
            Decay::Compact { radius, amplitude } => Decay::Compact { radius: radius / s, amplitude },
            Decay::Gaussian { amplitude, poly, offset, width } => Decay::Gaussian {
                amplitude: amplitude * s.max(1.0).powf(poly.max(0.0)),
                poly,
                offset: offset / s,
                width: width / s,
            },
            Decay::Power { exponent, constant } => {
                Decay::Power { exponent, constant: constant * if s >= 1.0 { 1.0 } else { s.powf(-exponent) } }
            }
        }
    }

    /// Envelope of `a u + b v`.
    pub fn combined(a: f64, first: &Decay, b: f64, second: &Decay) -> Decay {
        let (a, b) = (a.abs(), b.abs());
        match (*first, *second) {
            (Decay::Compact { radius: r1, amplitude: a1 }, Decay::Compact { radius: r2, amplitude: a2 }) => {
                Decay::Compact { radius: r1.max(r2), amplitude: a * a1 + b * a2 }
            }
            (
                Decay::Gaussian { amplitude: a1, poly: p1, offset: o1, width: w1 },
                Decay::Gaussian { amplitude: a2, poly: p2, offset: o2, width: w2 },
            ) => Decay::Gaussian { amplitude: a * a1 + b * a2, poly: p1.max(p2), offset: o1.max(o2), width: w1.max(w2) },
            (f, s) => {
                let p = f.exponent().min(s.exponent());
                let p = if p.is_finite() { p } else { 8.0 };
                let (Decay::Power { constant: c1, .. }, Decay::Power { constant: c2, .. }) = (f.as_power(p), s.as_power(p))
                else {
                    unreachable!()
                };
                Decay::Power { exponent: p, constant: a * c1 + b * c2 }
            }
        }
    }
}

/// A real-valued field on `R^n` with the metadata the integrators need.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    dim: usize,
    eval: EvalFn,
    grad: Option<GradFn>,
    decay: Option<Decay>,
    smoothness: Smoothness,
    length_scale: f64,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("decay", &self.decay)
            .field("smoothness", &self.smoothness)
            .field("length_scale", &self.length_scale)
            .finish()
    }
}

/// Central finite-difference step used when no analytic gradient is attached.
pub fn fd_step(p: &Point) -> f64 {
    1e-4 * (1.0 + p.norm())
}

impl ScalarField {
    /// A field without decay metadata, smoothness `C0` and unit length scale.
    pub fn new(name: impl Into<String>, dim: usize, eval: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            grad: None,
            decay: None,
            smoothness: Smoothness::C0,
            length_scale: 1.0,
        }
    }

    pub fn with_grad(mut self, grad: impl Fn(&Point) -> Point + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_decay(mut self, decay: Decay) -> Self {
        self.decay = Some(decay);
        self
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }

    pub fn with_length_scale(mut self, l: f64) -> Self {
        self.length_scale = l;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    #[inline]
    pub fn eval(&self, p: &Point) -> f64 {
        (self.eval)(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn decay(&self) -> Option<&Decay> {
        self.decay.as_ref()
    }

    pub fn decay_exponent(&self) -> Option<f64> {
        self.decay.map(|d| d.exponent())
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn has_analytic_grad(&self) -> bool {
        self.grad.is_some()
    }

    /// Analytic gradient when attached, else central differences with step
    /// [`fd_step`].
    pub fn gradient(&self, p: &Point) -> Point {
        if let Some(g) = &self.grad {
            return g(p);
        }
        let h = fd_step(p);
        let mut g = Point::origin(self.dim);
        for k in 0..self.dim {
            let e = Point::unit(self.dim, k);
            let d = (self.eval(&p.along(&e, h)) - self.eval(&p.along(&e, -h))) / (2.0 * h);
            g = g.with_coord(k, d);
        }
        g
    }

    /// `y -> u(s y)`.
    pub fn scaled(&self, s: f64) -> ScalarField {
        let inner = self.clone();
        let mut f = ScalarField::new(format!("{}(scaled {s})", self.name), self.dim, move |p| inner.eval(&(*p * s)))
            .with_smoothness(self.smoothness)
            .with_length_scale(self.length_scale / s);
        f.decay = self.decay.map(|d| d.scaled(s));
        f
    }

    /// `y -> u(y - shift)`.
    pub fn translated(&self, shift: Point) -> ScalarField {
        let inner = self.clone();
        let mut f = ScalarField::new(format!("{}(shifted {:?})", self.name, shift), self.dim, move |p| inner.eval(&(*p - shift)))
            .with_smoothness(self.smoothness)
            .with_length_scale(self.length_scale);
        f.decay = self.decay.map(|d| d.translated(shift.norm()));
        f
    }

    /// `a u + b v`.
    pub fn combination(a: f64, u: &ScalarField, b: f64, v: &ScalarField) -> ScalarField {
        assert_eq!(u.dim, v.dim);
        let (fu, fv) = (u.clone(), v.clone());
        let mut f = ScalarField::new(format!("{a}*{}+{b}*{}", u.name, v.name), u.dim, move |p| a * fu.eval(p) + b * fv.eval(p))
            .with_smoothness(u.smoothness.min(v.smoothness))
            .with_length_scale(u.length_scale.max(v.length_scale));
        f.decay = match (u.decay, v.decay) {
            (Some(du), Some(dv)) => Some(Decay::combined(a, &du, b, &dv)),
            _ => None,
        };
        f
    }
}

/// `u == value`.
pub fn constant(n: usize, value: f64) -> ScalarField {
    ScalarField::new(format!("const({value})"), n, move |_| value)
        .with_grad(move |p| Point::origin(p.dim()))
        .with_decay(Decay::Power { exponent: 0.0, constant: value.abs() })
        .with_smoothness(Smoothness::CInf)
}

/// `exp(-|x - center|^2 / (2 sigma^2))`.
pub fn gaussian(n: usize, center: Point, sigma: f64) -> Result<ScalarField> {
    check_dim(n)?;
    if !(sigma > 0.0) || center.dim() != n {
        return Err(Error::InvalidField(format!("gaussian needs sigma > 0 and an n-dimensional center (sigma={sigma})")));
    }
    let s2 = 2.0 * sigma * sigma;
    Ok(ScalarField::new(format!("gaussian(sigma={sigma})"), n, move |p| (-(p.dist_sq(&center)) / s2).exp())
        .with_grad(move |p| {
            let v = (-(p.dist_sq(&center)) / s2).exp();
            (*p - center) * (-2.0 * v / s2)
        })
        .with_decay(Decay::Gaussian { amplitude: 1.0, poly: 0.0, offset: center.norm(), width: s2.sqrt() })
        .with_smoothness(Smoothness::CInf)
        .with_length_scale(sigma))
}

/// `(1 - |x|^2)_+^{1/2}`.
pub fn sqrt_cap(n: usize) -> ScalarField {
    ScalarField::new("sqrt_cap", n, |p| (1.0 - p.norm_sq()).max(0.0).sqrt())
        .with_decay(Decay::Compact { radius: 1.0, amplitude: 1.0 })
        .with_smoothness(Smoothness::C0)
}

/// `(scale / (scale^2 + |x - center|^2))^{(n - alpha)/2}`, radially decreasing
/// about `center` with decay exponent `n - alpha`.
pub fn standard_bubble(n: usize, alpha: f64, center: Point, scale: f64) -> Result<ScalarField> {
    check_dim(n)?;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidOrder(alpha));
    }
    if (n as f64) <= alpha {
        return Err(Error::InvalidField(format!("bubble needs n > alpha (n={n}, alpha={alpha})")));
    }
    if !(scale > 0.0) || center.dim() != n {
        return Err(Error::InvalidField(format!("bubble needs scale > 0 and an n-dimensional center (scale={scale})")));
    }
    let q = (n as f64 - alpha) / 2.0;
    let a = 1.0 + center.norm();
    let constant = (scale + a * a / scale).powf(q);
    Ok(ScalarField::new(format!("bubble(scale={scale})"), n, move |p| (scale / (scale * scale + p.dist_sq(&center))).powf(q))
        .with_grad(move |p| {
            let d = scale * scale + p.dist_sq(&center);
            let v = (scale / d).powf(q);
            (*p - center) * (-2.0 * q * v / d)
        })
        .with_decay(Decay::Power { exponent: n as f64 - alpha, constant })
        .with_smoothness(Smoothness::CInf)
        .with_length_scale(scale))
}

/// Sum of two bubbles centred at `(center -+ sep, 0, ...)`, hence even about
/// `x1 = center`.
pub fn two_bubbles(n: usize, alpha: f64, center: f64, sep: f64, scale: f64) -> Result<ScalarField> {
    let left = standard_bubble(n, alpha, Point::on_axis(n, center - sep), scale)?;
    let right = standard_bubble(n, alpha, Point::on_axis(n, center + sep), scale)?;
    Ok(ScalarField::combination(1.0, &left, 1.0, &right).with_name(format!("two_bubbles(center={center}, sep={sep})")))
}

/// A field `w` together with the plane `x1 = lambda` it is odd about.
#[derive(Clone, Debug)]
pub struct AntiSymmetricField {
    base: ScalarField,
    plane: f64,
}

impl AntiSymmetricField {
    /// Wraps a field after checking `w(x^lambda) = -w(x)` on seeded samples.
    pub fn try_new(base: ScalarField, plane: f64, samples: usize, seed: u64) -> Result<Self> {
        let w = AntiSymmetricField { base, plane };
        let v = w.antisymmetry_violation(samples, seed);
        if v > 1e-12 {
            return Err(Error::InvalidField(format!("`{}` is not odd about x1 = {plane}: violation {v:e}", w.base.name)));
        }
        Ok(w)
    }

    fn from_formula(base: ScalarField, plane: f64) -> Self {
        AntiSymmetricField { base, plane }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        self.base.eval(p)
    }

    pub fn base(&self) -> &ScalarField {
        &self.base
    }

    pub fn plane(&self) -> f64 {
        self.plane
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    pub fn name(&self) -> &str {
        &self.base.name
    }

    /// `max |w(x^lambda) + w(x)| / (1 + |w(x)|)` over seeded points in a box of
    /// side `8 * length_scale` around the plane.
    pub fn antisymmetry_violation(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 4.0 * self.base.length_scale;
        let n = self.dim();
        (0..samples)
            .map(|_| {
                let mut c = [0.0; 3];
                for (k, v) in c.iter_mut().enumerate().take(n) {
                    let off = if k == 0 { self.plane } else { 0.0 };
                    *v = off + rng.gen_range(-half..half);
                }
                let x = Point::new(&c[..n]).unwrap();
                let wx = self.eval(&x);
                (self.eval(&reflect(&x, self.plane)) + wx).abs() / (1.0 + wx.abs())
            })
            .fold(0.0, f64::max)
    }

    /// The same field expressed in coordinates where the plane is `x1 = 0`.
    pub fn recentered(&self) -> AntiSymmetricField {
        if self.plane == 0.0 {
            return self.clone();
        }
        let shift = Point::on_axis(self.dim(), -self.plane);
        AntiSymmetricField { base: self.base.translated(shift), plane: 0.0 }
    }
}

/// `w_lambda(x) = u(x^lambda) - u(x)`, written through the signed distance
/// `t = x1 - lambda` as `u(lambda - t, x') - u(lambda + t, x')`.
pub fn make_w(u: &ScalarField, lambda: f64) -> AntiSymmetricField {
    let inner = u.clone();
    let eval = move |p: &Point| {
        let t = p.x1() - lambda;
        inner.eval(&p.with_x1(lambda - t)) - inner.eval(&p.with_x1(lambda + t))
    };
    let mut base = ScalarField::new(format!("w[{}; lambda={lambda}]", u.name), u.dim, eval)
        .with_smoothness(u.smoothness)
        .with_length_scale(u.length_scale);
    if let Some(d) = u.decay {
        // |x^lambda| >= |x| - 2|lambda|
        let refl = d.translated(2.0 * lambda.abs());
        base.decay = Some(Decay::combined(1.0, &refl, 1.0, &d));
    }
    if let Some(g) = &u.grad {
        let g = g.clone();
        base.grad = Some(Arc::new(move |p: &Point| {
            let gr = g(&reflect(p, lambda));
            let gr = gr.with_x1(-gr.x1());
            gr - g(p)
        }));
    }
    AntiSymmetricField::from_formula(base, lambda)
}

/// `w(x) = x1^3 exp(-|x|^2 / width^2)`: positive in `x1 > 0`, odd about
/// `x1 = 0`, with vanishing first and second normal derivatives on the plane.
pub fn degenerate_w(n: usize, width: f64) -> Result<AntiSymmetricField> {
    check_dim(n)?;
    if !(width > 0.0) {
        return Err(Error::InvalidField(format!("degenerate_w needs width > 0, got {width}")));
    }
    let w2 = width * width;
    let base = ScalarField::new(format!("degenerate_w(width={width})"), n, move |p| {
        let x1 = p.x1();
        x1 * x1 * x1 * (-p.norm_sq() / w2).exp()
    })
    .with_grad(move |p| {
        let x1 = p.x1();
        let e = (-p.norm_sq() / w2).exp();
        let common = -2.0 * x1 * x1 * x1 * e / w2;
        let g = *p * common;
        g.with_x1(g.x1() + 3.0 * x1 * x1 * e)
    })
    .with_decay(Decay::Gaussian { amplitude: 1.0, poly: 3.0, offset: 0.0, width })
    .with_smoothness(Smoothness::CInf)
    .with_length_scale(width);
    Ok(AntiSymmetricField::from_formula(base, 0.0))
}

/// `w(x) = x1 exp(-|x|^2)`: odd about `x1 = 0` with `dw/dx1 = exp(-|x'|^2) > 0`
/// on the plane.
pub fn x1_gaussian(n: usize) -> Result<AntiSymmetricField> {
    check_dim(n)?;
    let base = ScalarField::new("x1_gaussian", n, |p| p.x1() * (-p.norm_sq()).exp())
        .with_grad(|p| {
            let e = (-p.norm_sq()).exp();
            let g = *p * (-2.0 * p.x1() * e);
            g.with_x1(g.x1() + e)
        })
        .with_decay(Decay::Gaussian { amplitude: 1.0, poly: 1.0, offset: 0.0, width: 1.0 })
        .with_smoothness(Smoothness::CInf);
    Ok(AntiSymmetricField::from_formula(base, 0.0))
}

/// `w == 0`, odd about every plane.
pub fn zero_w(n: usize) -> Result<AntiSymmetricField> {
    check_dim(n)?;
    let base = ScalarField::new("zero", n, |_| 0.0)
        .with_grad(|p| Point::origin(p.dim()))
        .with_decay(Decay::Compact { radius: 0.0, amplitude: 0.0 })
        .with_smoothness(Smoothness::CInf);
    Ok(AntiSymmetricField::from_formula(base, 0.0))
}

/// A coefficient `c(x)` with its boundary growth rate
/// `kappa(delta) = delta^2 sup_{x1 = delta} |c(x)|`.
#[derive(Clone)]
pub struct CoefficientField {
    name: String,
    eval: EvalFn,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField").field("name", &self.name).finish()
    }
}

/// Transverse offsets `|x'|` probed on each slab `{x1 = delta}`.
const SLAB_OFFSETS: [f64; 5] = [0.0, 0.25, -0.25, 0.5, -0.5];

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryRateCheck {
    /// `(delta, kappa(delta))` along the shrinking grid.
    pub rates: Vec<(f64, f64)>,
    /// Whether `kappa` is nonincreasing toward the plane and has fallen to at
    /// most half its initial value (or is identically zero).
    pub satisfied: bool,
}

impl CoefficientField {
    pub fn new(name: impl Into<String>, eval: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        CoefficientField { name: name.into(), eval: Arc::new(eval) }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0)
    }

    /// `c(x) = amp x1^{-1/2} exp(-|x'|^2)`, which is `o(1/x1^2)`.
    pub fn inv_sqrt(amp: f64) -> Self {
        Self::new(format!("inv_sqrt(amp={amp})"), move |p| amp * p.x1().powf(-0.5) * (-p.transverse_norm_sq()).exp())
    }

    /// `c(x) = m / x1^2`, which violates the growth hypothesis.
    pub fn inv_square(m: f64) -> Self {
        Self::new(format!("inv_square(m={m})"), move |p| m / (p.x1() * p.x1()))
    }

    pub fn eval(&self, p: &Point) -> f64 {
        (self.eval)(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn boundary_rate(&self, delta: f64, n: usize) -> f64 {
        let offsets: &[f64] = if n == 1 { &SLAB_OFFSETS[..1] } else { &SLAB_OFFSETS };
        let sup = offsets
            .iter()
            .map(|&t| {
                let mut p = Point::on_axis(n, delta);
                if n > 1 {
                    p = p.with_coord(1, t);
                }
                self.eval(&p).abs()
            })
            .fold(0.0, f64::max);
        delta * delta * sup
    }

    /// Samples `kappa` along a strictly decreasing `deltas` grid.
    pub fn check_boundary_rate(&self, deltas: &[f64], n: usize) -> BoundaryRateCheck {
        let rates: Vec<(f64, f64)> = deltas.iter().map(|&d| (d, self.boundary_rate(d, n))).collect();
        let kappas: Vec<f64> = rates.iter().map(|r| r.1).collect();
        let all_zero = kappas.iter().all(|&k| k == 0.0);
        let monotone = kappas.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        let decayed = match (kappas.first(), kappas.last()) {
            (Some(&first), Some(&last)) => last <= 0.5 * first,
            _ => false,
        };
        BoundaryRateCheck { rates, satisfied: all_zero || (monotone && decayed) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    /// `(x, c(x))` at probe points where `w(x)` clears the floor.
    pub included: Vec<(Point, f64)>,
    /// Probe points dropped because `w(x) <= floor`.
    pub excluded: Vec<Point>,
}

/// `c(x) = -(-Delta)^{alpha/2} w(x) / w(x)`, the coefficient that makes `w`
/// solve `(-Delta)^{alpha/2} w + c w = 0`. Points where `w <= floor` are
/// excluded from the probe set; `c` evaluates to `NaN` there.
pub fn coefficient_from_equation(
    w: &AntiSymmetricField,
    flap_w: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    floor: f64,
    probe: &[Point],
) -> (CoefficientField, ProbeReport) {
    let wf = w.clone();
    let flap = Arc::new(flap_w);
    let f2 = flap.clone();
    let c = CoefficientField::new(format!("from_equation[{}]", w.name()), move |p| {
        let wv = wf.eval(p);
        if wv <= floor {
            f64::NAN
        } else {
            -f2(p) / wv
        }
    });
    let mut report = ProbeReport { included: Vec::new(), excluded: Vec::new() };
    for p in probe {
        let wv = w.eval(p);
        if wv <= floor {
            report.excluded.push(*p);
        } else {
            report.included.push((*p, -flap(p) / wv));
        }
    }
    (c, report)
}

/// A field built from a catalog identifier.
#[derive(Debug, Clone)]
pub enum CatalogField {
    Scalar(ScalarField),
    AntiSymmetric(AntiSymmetricField),
}

impl CatalogField {
    pub fn scalar(&self) -> &ScalarField {
        match self {
            CatalogField::Scalar(u) => u,
            CatalogField::AntiSymmetric(w) => w.base(),
        }
    }

    pub fn antisymmetric(&self) -> Option<&AntiSymmetricField> {
        match self {
            CatalogField::AntiSymmetric(w) => Some(w),
            _ => None,
        }
    }
}

/// Parsed identifier of the form `name` or `name(key=value, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldId {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl FieldId {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |m: &str| Error::InvalidField(format!("cannot parse field id `{s}`: {m}"));
        let (name, rest) = match s.find('(') {
            Some(i) => {
                if !s.ends_with(')') {
                    return Err(bad("missing `)`"));
                }
                (&s[..i], &s[i + 1..s.len() - 1])
            }
            None => (s, ""),
        };
        let name = name.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(bad("invalid name"));
        }
        let mut params = BTreeMap::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let v: f64 = v.trim().parse().map_err(|_| bad("non-numeric value"))?;
            if params.insert(k.trim().to_string(), v).is_some() {
                return Err(bad("duplicate key"));
            }
        }
        Ok(FieldId { name: name.to_string(), params })
    }

    fn take(&self, allowed: &[(&str, f64)]) -> Result<Vec<f64>> {
        for k in self.params.keys() {
            if !allowed.iter().any(|(a, _)| a == k) {
                return Err(Error::InvalidField(format!("unknown parameter `{k}` for `{}`", self.name)));
            }
        }
        Ok(allowed.iter().map(|(k, d)| self.params.get(*k).copied().unwrap_or(*d)).collect())
    }

    /// Builds the field in dimension `n` (`alpha` is needed by the bubbles).
    pub fn build(&self, n: usize, alpha: f64) -> Result<CatalogField> {
        use CatalogField::*;
        check_dim(n)?;
        let f = match self.name.as_str() {
            "zero" => {
                self.take(&[])?;
                AntiSymmetric(zero_w(n)?)
            }
            "const" => Scalar(constant(n, self.take(&[("value", 1.0)])?[0])),
            "gaussian" => {
                let v = self.take(&[("sigma", 1.0), ("center", 0.0)])?;
                Scalar(gaussian(n, Point::on_axis(n, v[1]), v[0])?)
            }
            "sqrt_cap" => {
                self.take(&[])?;
                Scalar(sqrt_cap(n))
            }
            "bubble" => {
                let v = self.take(&[("scale", 1.0), ("center", 0.0)])?;
                Scalar(standard_bubble(n, alpha, Point::on_axis(n, v[1]), v[0])?)
            }
            "two_bubbles" => {
                let v = self.take(&[("center", 0.0), ("sep", 0.2), ("scale", 1.0)])?;
                Scalar(two_bubbles(n, alpha, v[0], v[1], v[2])?)
            }
            "x1_gaussian" => {
                self.take(&[])?;
                AntiSymmetric(x1_gaussian(n)?)
            }
            "degenerate_w" => AntiSymmetric(degenerate_w(n, self.take(&[("width", 1.0)])?[0])?),
            "antisym_bubble" => {
                let v = self.take(&[("scale", 1.0), ("center", 0.5), ("lambda", 0.0)])?;
                let u = standard_bubble(n, alpha, Point::on_axis(n, v[1]), v[0])?;
                AntiSymmetric(make_w(&u, v[2]))
            }
            "antisym_gaussian" => {
                let v = self.take(&[("sigma", 1.0), ("center", 0.5), ("lambda", 0.0)])?;
                let u = gaussian(n, Point::on_axis(n, v[1]), v[0])?;
                AntiSymmetric(make_w(&u, v[2]))
            }
            other => return Err(Error::InvalidField(format!("unknown field `{other}`"))),
        };
        Ok(f)
    }

    /// Builds a coefficient field: `zero`, `inv_sqrt(amp=..)`, `inv_square(m=..)`.
    pub fn build_coefficient(&self) -> Result<CoefficientField> {
        match self.name.as_str() {
            "zero" => {
                self.take(&[])?;
                Ok(CoefficientField::zero())
            }
            "inv_sqrt" => Ok(CoefficientField::inv_sqrt(self.take(&[("amp", 1.0)])?[0])),
            "inv_square" => Ok(CoefficientField::inv_square(self.take(&[("m", 100.0)])?[0])),
            other => Err(Error::InvalidField(format!("unknown coefficient `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Point {
        Point::new(c).unwrap()
    }

    #[test]
    fn make_w_examples() {
        let w = make_w(&constant(2, 5.0), 0.7);
        assert_eq!(w.eval(&p(&[1.3, -0.2])), 0.0);

        let lin = ScalarField::new("x1", 2, |q| q.x1());
        let w = make_w(&lin, 0.0);
        for x in [0.5, 1.25, -3.0] {
            assert_eq!(w.eval(&p(&[x, 0.4])), -2.0 * x);
        }

        let g = gaussian(2, Point::origin(2), 1.0).unwrap();
        let w = make_w(&g, 0.0);
        assert_eq!(w.eval(&p(&[0.3, 0.9])), 0.0);
    }

    #[test]
    fn make_w_is_odd_to_machine_precision() {
        let u = standard_bubble(2, 1.0, p(&[0.4, -0.2]), 1.3).unwrap();
        let w = make_w(&u, 0.35);
        assert!(w.antisymmetry_violation(500, 1) < 1e-15);
        // vanishes on the plane
        for t in [-2.0, 0.0, 0.7] {
            assert_eq!(w.eval(&p(&[0.35, t])), 0.0);
        }
    }

    #[test]
    fn degenerate_w_properties() {
        let w = degenerate_w(2, 1.0).unwrap();
        let h = 1e-4;
        for t in [-0.7, 0.0, 0.3, 1.1] {
            let plane = p(&[0.0, t]);
            assert_eq!(w.base().gradient(&plane).x1(), 0.0);
            let d1 = (w.eval(&p(&[h, t])) - w.eval(&p(&[-h, t]))) / (2.0 * h);
            let d2 = (w.eval(&p(&[h, t])) - 2.0 * w.eval(&plane) + w.eval(&p(&[-h, t]))) / (h * h);
            assert!(d1.abs() < 1e-7, "d1={d1}");
            assert!(d2.abs() < 1e-3, "d2={d2}");
        }
        // w(delta, 0) / delta^3 -> phi(0) = 1
        for d in [1e-1, 1e-2, 1e-3] {
            let r = w.eval(&p(&[d, 0.0])) / (d * d * d);
            assert!((r - (-d * d).exp()).abs() < 1e-12);
        }
        assert!(w.antisymmetry_violation(100, 5) == 0.0);
        for q in [[0.1, 0.0], [2.0, 1.0], [0.01, -3.0]] {
            assert!(w.eval(&p(&q)) > 0.0);
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let fields = [
            standard_bubble(2, 0.5, p(&[0.3, 0.1]), 0.8).unwrap(),
            gaussian(2, p(&[0.2, -0.4]), 0.6).unwrap(),
            degenerate_w(2, 1.2).unwrap().base().clone(),
            x1_gaussian(2).unwrap().base().clone(),
            make_w(&standard_bubble(2, 1.0, p(&[0.5, 0.0]), 1.0).unwrap(), 0.2).base().clone(),
        ];
        for f in &fields {
            for q in [[0.3, 0.2], [-0.7, 1.1], [1.5, -0.4]] {
                let x = p(&q);
                let ga = f.gradient(&x);
                let h = fd_step(&x);
                for k in 0..2 {
                    let e = Point::unit(2, k);
                    let fd = (f.eval(&x.along(&e, h)) - f.eval(&x.along(&e, -h))) / (2.0 * h);
                    assert!((fd - ga.coord(k)).abs() < 1e-6, "{}: k={k} fd={fd} analytic={}", f.name(), ga.coord(k));
                }
            }
        }
    }

    #[test]
    fn bubble_is_radial_with_max_at_center() {
        let c = p(&[0.7, -0.3]);
        let u = standard_bubble(2, 1.5, c, 0.9).unwrap();
        assert_eq!(u.decay_exponent(), Some(0.5));
        let peak = u.eval(&c);
        for k in 0..16 {
            let th = k as f64 * 0.41;
            let e = p(&[th.cos(), th.sin()]);
            let v = u.eval(&c.along(&e, 0.8));
            assert!((v - u.eval(&c.along(&p(&[1.0, 0.0]), 0.8))).abs() < 1e-15);
            assert!(v < peak);
        }
        let u0 = standard_bubble(1, 0.5, Point::origin(1), 2.0).unwrap();
        assert_eq!(u0.eval(&p(&[1.3])), u0.eval(&p(&[-1.3])));
    }

    #[test]
    fn bubble_rejects_bad_orders() {
        assert!(standard_bubble(1, 1.0, Point::origin(1), 1.0).is_err());
        assert!(standard_bubble(1, 1.5, Point::origin(1), 1.0).is_err());
        assert!(standard_bubble(2, 2.0, Point::origin(2), 1.0).is_err());
        assert!(standard_bubble(2, 0.5, Point::origin(2), -1.0).is_err());
        assert!(standard_bubble(1, 0.5, Point::origin(1), 1.0).is_ok());
    }

    #[test]
    fn decay_envelopes_bound_the_fields() {
        let fields = [
            standard_bubble(2, 0.5, p(&[0.7, 0.0]), 1.0).unwrap(),
            standard_bubble(1, 0.5, p(&[-0.3]).with_coord(0, -0.3), 0.5).unwrap(),
            gaussian(2, p(&[0.4, 0.0]), 0.7).unwrap(),
            degenerate_w(2, 1.0).unwrap().base().clone(),
            x1_gaussian(2).unwrap().base().clone(),
            make_w(&standard_bubble(2, 1.0, p(&[0.5, 0.0]), 1.0).unwrap(), 0.3).base().clone(),
            two_bubbles(2, 1.0, 0.3, 0.2, 1.0).unwrap(),
            gaussian(2, p(&[0.4, 0.0]), 0.7).unwrap().scaled(2.0),
            standard_bubble(2, 1.0, Point::origin(2), 1.0).unwrap().translated(p(&[1.0, 1.0])),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for f in &fields {
            let d = f.decay().unwrap();
            for _ in 0..2000 {
                let r: f64 = rng.gen_range(0.0..30.0);
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let x = if f.dim() == 1 { p(&[r * th.cos().signum()]) } else { p(&[r * th.cos(), r * th.sin()]) };
                let v = f.eval(&x).abs();
                assert!(v <= d.envelope(x.norm()) * (1.0 + 1e-12) + 1e-300, "{}: |u|={v} env={}", f.name(), d.envelope(x.norm()));
                assert!(v <= d.sup_beyond(x.norm() * 0.999) * (1.0 + 1e-12) + 1e-300);
            }
        }
    }

    #[test]
    fn coefficient_from_equation_examples() {
        let w = degenerate_w(1, 1.0).unwrap();
        let probe: Vec<Point> = [0.1, 0.2, 0.0, -0.1].iter().map(|&d| p(&[d])).collect();
        let (c, rep) = coefficient_from_equation(&w, |_| 0.0, 1e-300, &probe);
        assert_eq!(rep.excluded.len(), 2);
        assert!(rep.included.iter().all(|(_, v)| *v == 0.0));
        assert_eq!(c.eval(&p(&[0.3])), 0.0);
        assert!(c.eval(&p(&[-0.3])).is_nan());

        // scaling w leaves c unchanged
        let flap = |q: &Point| q.x1().sin();
        let (c1, _) = coefficient_from_equation(&w, flap, 0.0, &probe);
        let w3 = AntiSymmetricField::from_formula(
            ScalarField::new("3w", 1, {
                let w = w.clone();
                move |q| 3.0 * w.eval(q)
            }),
            0.0,
        );
        let (c3, _) = coefficient_from_equation(&w3, move |q| 3.0 * flap(q), 0.0, &probe);
        for d in [0.05, 0.3, 1.0] {
            let x = p(&[d]);
            assert!((c1.eval(&x) - c3.eval(&x)).abs() <= 1e-12 * c1.eval(&x).abs());
        }
    }

    #[test]
    fn shipped_coefficients_boundary_rates() {
        let deltas: Vec<f64> = (0..8).map(|k| 0.2 * 0.5f64.powi(k)).collect();
        assert!(CoefficientField::zero().check_boundary_rate(&deltas, 2).satisfied);
        assert!(CoefficientField::inv_sqrt(1.0).check_boundary_rate(&deltas, 2).satisfied);
        assert!(CoefficientField::inv_sqrt(1.0).check_boundary_rate(&deltas, 1).satisfied);
        assert!(!CoefficientField::inv_square(100.0).check_boundary_rate(&deltas, 2).satisfied);
    }

    #[test]
    fn field_ids_parse_and_build() {
        let id = FieldId::parse("degenerate_w(width=1.5)").unwrap();
        assert_eq!(id.name, "degenerate_w");
        assert_eq!(id.params["width"], 1.5);
        assert!(matches!(id.build(2, 0.5).unwrap(), CatalogField::AntiSymmetric(_)));
        assert!(matches!(FieldId::parse("bubble(center=0.7)").unwrap().build(2, 1.0).unwrap(), CatalogField::Scalar(_)));
        assert!(FieldId::parse("bubble(centre=0.7)").unwrap().build(2, 1.0).is_err());
        assert!(FieldId::parse("bubble(center=abc)").is_err());
        assert!(FieldId::parse("nope").unwrap().build(2, 1.0).is_err());
        assert!(FieldId::parse("inv_square(m=5)").unwrap().build_coefficient().is_ok());
    }
}
