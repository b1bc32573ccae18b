//! Whole-space operator against closed forms that do not go through the
//! quadrature code.

use fraclap_core::fields::{self, ScalarField};
use fraclap_core::{frac_laplacian, FracOrder, Point, QuadSpec};
use statrs::function::gamma::gamma;

/// `1F1(a; b; -z)` for `z >= 0` via Kummer's transformation, which leaves a
/// series of positive terms.
fn hyp1f1_neg(a: f64, b: f64, z: f64) -> f64 {
    let a2 = b - a;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..2000 {
        let kf = k as f64;
        term *= (a2 + kf) / (b + kf) * z / (kf + 1.0);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    (-z).exp() * sum
}

/// Operator applied to `exp(-|x|^2 / (2 sigma^2))`.
fn gaussian_exact(n: usize, alpha: f64, sigma: f64, r2: f64) -> f64 {
    let nf = n as f64;
    let scale = (sigma * 2f64.sqrt()).powf(-alpha);
    scale * 2f64.powf(alpha) * gamma(0.5 * (nf + alpha)) / gamma(0.5 * nf) * hyp1f1_neg(0.5 * (nf + alpha), 0.5 * nf, r2 / (2.0 * sigma * sigma))
}

/// Operator applied to `(s / (s^2 + |x|^2))^{(n-alpha)/2}`.
fn bubble_exact(n: usize, alpha: f64, s: f64, r2: f64) -> f64 {
    let nf = n as f64;
    let k = 2f64.powf(alpha) * gamma(0.5 * (nf + alpha)) / gamma(0.5 * (nf - alpha));
    s.powf(-0.5 * (nf - alpha) - alpha) * k * (1.0 + r2 / (s * s)).powf(-0.5 * (nf + alpha))
}

fn check(u: &ScalarField, x: &Point, alpha: f64, exact: f64, spec: &QuadSpec, rel: f64) {
    let r = frac_laplacian(u, x, FracOrder::new(alpha).unwrap(), spec).unwrap();
    let gap = (r.value - exact).abs();
    assert!(r.converged, "{} alpha={alpha} x={x:?}: {r:?}", u.name());
    assert!(gap <= rel * exact.abs() + 3.0 * r.error_estimate + r.tail_bound, "{} alpha={alpha} x={x:?}: got {} want {exact} ({r:?})", u.name(), r.value);
}

#[test]
fn hyp1f1_oracle_sanity() {
    // 1F1(a; a; -z) = e^{-z}
    assert!((hyp1f1_neg(1.5, 1.5, 2.0) - (-2f64).exp()).abs() < 1e-15);
    // 1F1(1; 2; -z) = (1 - e^{-z}) / z
    assert!((hyp1f1_neg(1.0, 2.0, 3.0) - (1.0 - (-3f64).exp()) / 3.0).abs() < 1e-15);
}

#[test]
fn gaussian_matches_closed_form_in_one_and_two_dimensions() {
    let spec = QuadSpec::default();
    for n in 1..=2 {
        let u = fields::gaussian(n, Point::origin(n), 0.8).unwrap();
        for alpha in [0.3, 1.0, 1.7] {
            for x in [0.0, 0.4, 1.3] {
                let p = Point::on_axis(n, x);
                check(&u, &p, alpha, gaussian_exact(n, alpha, 0.8, x * x), &spec, 1e-6);
            }
        }
    }
}

#[test]
fn gaussian_in_three_dimensions_within_sampling_error() {
    let spec = QuadSpec { rel_tol: 1e-4, abs_tol: 1e-5, ..QuadSpec::default() };
    let u = fields::gaussian(3, Point::origin(3), 1.0).unwrap();
    let p = Point::new(&[0.3, -0.2, 0.1]).unwrap();
    check(&u, &p, 1.0, gaussian_exact(3, 1.0, 1.0, p.norm_sq()), &spec, 1e-3);
}

#[test]
fn bubbles_match_closed_form() {
    let spec = QuadSpec::default();
    for (n, alpha) in [(1, 0.5), (2, 0.5), (2, 1.0), (2, 1.5)] {
        let u = fields::standard_bubble(n, alpha, Point::origin(n), 1.3).unwrap();
        for x in [0.0, 0.7, 2.5] {
            let p = Point::on_axis(n, x);
            check(&u, &p, alpha, bubble_exact(n, alpha, 1.3, x * x), &spec, 1e-6);
        }
    }
}

#[test]
fn sqrt_cap_at_origin() {
    // (-Δ)^{α/2} (1-|x|^2)_+^{α/2} = 2^α Γ(1+α/2) Γ((n+α)/2) / Γ(n/2) inside the ball
    let exact = 2.0 * gamma(1.5) * gamma(1.0) / gamma(0.5);
    assert!((exact - 1.0).abs() < 1e-14);
    let r = frac_laplacian(&fields::sqrt_cap(1), &Point::origin(1), FracOrder::new(1.0).unwrap(), &QuadSpec::default()).unwrap();
    assert!((r.value - exact).abs() < 1e-3, "{r:?}");
}
