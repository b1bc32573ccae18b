//! Half-space form of the operator for fields odd about `x1 = 0`:
//!
//! ```text
//! (-Δ)^{α/2} w(x) / C_{n,α} = ∫_Σ F(x, y) dy + 2 w(x) ∫_Σ |x - y0|^{-(n+α)} dy
//! F(x, y) = (|x - y|^{-(n+α)} - |x - y0|^{-(n+α)}) (w(x) - w(y))
//! ```
//!
//! with `Σ = {y1 > 0}` and `y0` the mirror image of `y`.

use std::io::{self, Write};
use std::sync::OnceLock;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fields::AntiSymmetricField;
use crate::geometry::{unit_sphere_area, Point, RegionLabel, RegionParams};
use crate::quadrature::adaptive::{integrate, Budget, Tol};
use crate::quadrature::rays::{integrate_rays, power_difference, Kernel, RayProblem};
use crate::quadrature::{frac_laplacian, normalization_constant, FracOrder, QuadSpec, QuadratureResult};
use crate::shape::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelPair {
    pub near: f64,
    pub far: f64,
    pub diff: f64,
    /// `near` overflowed and was clamped to `f64::MAX`.
    pub clamped: bool,
}

/// `|x - y|^{-(n+α)}`, `|x - y0|^{-(n+α)}` and their difference, computed
/// without cancellation.
pub fn kernel_diff(x: &Point, y: &Point, alpha: FracOrder) -> Result<KernelPair> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    if !(x.x1() > 0.0) {
        return Err(Error::OutsideHalfSpace(x.coords().to_vec(), 0.0));
    }
    if y.x1() < 0.0 {
        return Err(Error::OutsideHalfSpace(y.coords().to_vec(), 0.0));
    }
    let a = x.dist_sq(y);
    if a == 0.0 {
        return Err(Error::SingularInput);
    }
    let s = 0.5 * (x.dim() as f64 + alpha.value());
    let c = 4.0 * x.x1() * y.x1();
    let mut near = a.powf(-s);
    let far = (a + c).powf(-s);
    let mut diff = power_difference(a, c, s);
    let clamped = !near.is_finite() || !diff.is_finite();
    if clamped {
        near = f64::MAX;
        if !diff.is_finite() {
            diff = f64::MAX;
        }
    }
    Ok(KernelPair { near, far, diff, clamped })
}

/// Integration domain for [`i1`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Domain {
    HalfSpace,
    Region(RegionLabel, RegionParams),
    /// The fixed box `{1 <= y1 <= 2, |y'| <= 1}`.
    D,
}

impl Domain {
    pub fn shape(&self) -> Shape {
        match self {
            Domain::HalfSpace => Shape::half_space(0.0),
            Domain::Region(label, params) => params.shape(*label),
            Domain::D => RegionParams::shape_d(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Domain::HalfSpace => "Sigma".to_string(),
            Domain::Region(l, _) => l.to_string(),
            Domain::D => "D".to_string(),
        }
    }
}

fn check_point(w: &AntiSymmetricField, x: &Point) -> Result<()> {
    if w.dim() != x.dim() {
        return Err(Error::DimensionMismatch { expected: w.dim(), got: x.dim() });
    }
    if w.plane() != 0.0 {
        return Err(Error::InvalidArgument(format!("field must be odd about x1 = 0 (plane {}); use recentered()", w.plane())));
    }
    if !(x.x1() > 0.0) {
        return Err(Error::OutsideHalfSpace(x.coords().to_vec(), 0.0));
    }
    Ok(())
}

/// `∫_domain F(x, y) dy`, principal value when the domain contains `x`.
pub fn i1(w: &AntiSymmetricField, x: &Point, alpha: FracOrder, domain: &Domain, spec: &QuadSpec) -> Result<QuadratureResult> {
    spec.validate()?;
    check_point(w, x)?;
    let shape = domain.shape();
    let problem = RayProblem {
        field: w.base(),
        x: *x,
        alpha: alpha.value(),
        kernel: Kernel::AntiSym,
        region: Some(&shape),
        spec,
        abs_tol: spec.abs_tol,
    };
    let out = integrate_rays(&problem, spec.seed)?;
    Ok(QuadratureResult {
        value: out.estimate.value,
        error_estimate: out.estimate.error,
        evals: out.evals,
        converged: out.estimate.converged,
        tail_bound: 0.0,
        regularity_warning: w.base().smoothness() < crate::fields::Smoothness::C2,
    })
}

/// `∫_Σ |x - y0|^{-(n+α)} dy = π^{(n-1)/2} Γ((1+α)/2) / Γ((n+α)/2) · x1^{-α} / α`.
///
/// The first call compares the closed form with [`i2_tail_numeric`] on a
/// fixed set of configurations and every call fails if that comparison did.
pub fn i2_tail(x: &Point, alpha: FracOrder, n: usize) -> Result<f64> {
    if x.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.dim() });
    }
    if !(x.x1() > 0.0) {
        return Err(Error::OutsideHalfSpace(x.coords().to_vec(), 0.0));
    }
    static SELF_CHECK: OnceLock<std::result::Result<(), f64>> = OnceLock::new();
    SELF_CHECK.get_or_init(i2_self_check).map_err(Error::ClosedFormMismatch)?;
    Ok(i2_closed_form(x.x1(), alpha.value(), n))
}

fn i2_closed_form(x1: f64, a: f64, n: usize) -> f64 {
    let nf = n as f64;
    std::f64::consts::PI.powf(0.5 * (nf - 1.0)) * gamma(0.5 * (1.0 + a)) / gamma(0.5 * (nf + a)) * x1.powf(-a) / a
}

fn i2_self_check() -> std::result::Result<(), f64> {
    let mut worst: f64 = 0.0;
    for (x1, a, n) in [(1.0, 1.0, 1), (0.3, 0.5, 1), (0.05, 1.5, 2), (2.0, 0.25, 2), (0.7, 1.2, 3)] {
        let exact = i2_closed_form(x1, a, n);
        let num = i2_tail_numeric(x1, a, n);
        worst = worst.max((exact - num).abs() / exact.abs());
    }
    if worst <= 1e-6 {
        Ok(())
    } else {
        Err(worst)
    }
}

/// The same integral by nested adaptive quadrature: `y'` integrated
/// radially on a compactified variable, then `y1` through an inverse power.
pub fn i2_tail_numeric(x1: f64, alpha: f64, n: usize) -> f64 {
    let s = 0.5 * (n as f64 + alpha);
    let budget = Budget::new(usize::MAX);
    let tol = Tol { abs: 0.0, rel: 1e-10 };
    let cross = |t: f64| -> f64 {
        if n == 1 {
            return t.powf(-2.0 * s);
        }
        let area = unit_sphere_area(n - 1);
        let k = n as i32 - 2;
        area * integrate(
            &mut |u: f64| {
                if u >= 1.0 {
                    return 0.0;
                }
                let rho = t * u / (1.0 - u);
                rho.powi(k) * (t * t + rho * rho).powf(-s) * t / ((1.0 - u) * (1.0 - u))
            },
            &[0.0, 0.5, 0.9, 0.99, 1.0],
            Tol { abs: 0.0, rel: 1e-10 },
            &budget,
            false,
        )
        .value
    };
    // y1 + x1 = x1 t^{-2/alpha}, t in (0, 1]
    let beta = 0.5 * alpha;
    integrate(
        &mut |t: f64| {
            if t <= 0.0 {
                return 0.0;
            }
            let y = x1 * t.powf(-1.0 / beta);
            cross(y) * (x1 / beta) * t.powf(-1.0 / beta - 1.0)
        },
        &[0.0, 0.25, 0.5, 1.0],
        tol,
        &budget,
        false,
    )
    .value
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub x: Vec<f64>,
    pub region: String,
    #[serde(rename = "I1_value")]
    pub i1_value: f64,
    #[serde(rename = "I1_error")]
    pub i1_error: f64,
    #[serde(rename = "I2_factor")]
    pub i2_factor: f64,
    pub w_at_x: f64,
    /// `C (I1 + 2 w(x) I2)`
    pub lhs: f64,
    /// direct whole-space evaluation
    pub rhs: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionCheck {
    pub row: DecompositionRow,
    pub i1: QuadratureResult,
    pub direct: QuadratureResult,
    /// `max(1e-3 |rhs|, 3 (C err(I1) + err(direct)))`
    pub tolerance: f64,
    pub passed: bool,
}

/// Evaluates both sides of the half-space identity at `x`.
pub fn decomposition_identity_check(w: &AntiSymmetricField, x: &Point, alpha: FracOrder, spec: &QuadSpec) -> Result<DecompositionCheck> {
    check_point(w, x)?;
    let n = x.dim();
    let c = normalization_constant(n, alpha);
    let i1v = i1(w, x, alpha, &Domain::HalfSpace, spec)?;
    let i2 = i2_tail(x, alpha, n)?;
    let wx = w.eval(x);
    let direct = frac_laplacian(w.base(), x, alpha, spec)?;
    let lhs = c * (i1v.value + 2.0 * wx * i2);
    let gap = (lhs - direct.value).abs();
    let tolerance = (1e-3 * direct.value.abs()).max(3.0 * (c * i1v.error_estimate + direct.error_estimate));
    let passed = gap <= tolerance && i1v.converged && direct.converged;
    Ok(DecompositionCheck {
        row: DecompositionRow {
            x: x.coords().to_vec(),
            region: "Sigma".into(),
            i1_value: i1v.value,
            i1_error: i1v.error_estimate,
            i2_factor: i2,
            w_at_x: wx,
            lhs,
            rhs: direct.value,
            gap,
        },
        i1: i1v,
        direct,
        tolerance,
        passed,
    })
}

/// `I1` over each of `A, B, Ω, E` and over `Σ`, the last entry being `Σ`.
pub fn i1_partition(
    w: &AntiSymmetricField,
    x: &Point,
    alpha: FracOrder,
    params: &RegionParams,
    spec: &QuadSpec,
) -> Result<Vec<(Domain, QuadratureResult)>> {
    let mut out = Vec::with_capacity(5);
    for label in RegionLabel::ALL {
        let d = Domain::Region(label, *params);
        out.push((d, i1(w, x, alpha, &d, spec)?));
    }
    out.push((Domain::HalfSpace, i1(w, x, alpha, &Domain::HalfSpace, spec)?));
    Ok(out)
}

pub fn write_rows_csv<W: Write>(mut w: W, rows: &[DecompositionRow]) -> io::Result<()> {
    let n = rows.first().map_or(1, |r| r.x.len());
    let mut header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    header.extend(["region", "I1_value", "I1_error", "I2_factor", "w_at_x", "lhs", "rhs", "gap"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut cols: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        cols.push(r.region.clone());
        for v in [r.i1_value, r.i1_error, r.i2_factor, r.w_at_x, r.lhs, r.rhs, r.gap] {
            cols.push(v.to_string());
        }
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}
