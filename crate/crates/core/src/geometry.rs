//! Points, reflections across planes `x1 = lambda`, and the partition of the
//! half-space `Sigma = {y1 > 0}` into the regions `A`, `B`, `Omega` and `E`
//! (with the box `D` inside `Omega`).
//!
//! The integration variable is always called `y`; the fixed evaluation point
//! is `x = (delta, 0, ..., 0)`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::qmc::ShiftedHalton;
use crate::shape::Shape;

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

/// A point (or vector) in `R^n`, `1 <= n <= 3`, written `x = (x1, x')`.
///
/// Stored inline so that evaluation loops never allocate; unused trailing
/// coordinates are kept at zero.
#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    coords: [f64; MAX_DIM],
    dim: usize,
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self> {
        let dim = coords.len();
        check_dim(dim)?;
        let mut c = [0.0; MAX_DIM];
        c[..dim].copy_from_slice(coords);
        Ok(Point { coords: c, dim })
    }

    pub fn origin(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Point { coords: [0.0; MAX_DIM], dim }
    }

    /// `(x1, 0, ..., 0)`.
    pub fn on_axis(dim: usize, x1: f64) -> Self {
        Self::origin(dim).with_x1(x1)
    }

    /// Unit vector along the k-th axis.
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut p = Self::origin(dim);
        p.coords[k] = 1.0;
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn x1(&self) -> f64 {
        self.coords[0]
    }

    pub fn coord(&self, k: usize) -> f64 {
        self.coords[k]
    }

    pub fn with_x1(mut self, x1: f64) -> Self {
        self.coords[0] = x1;
        self
    }

    pub fn with_coord(mut self, k: usize, v: f64) -> Self {
        assert!(k < self.dim);
        self.coords[k] = v;
        self
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `|x'|^2`, the squared norm of the last `n - 1` coordinates.
    pub fn transverse_norm_sq(&self) -> f64 {
        self.coords[1..].iter().map(|c| c * c).sum()
    }

    pub fn transverse_norm(&self) -> f64 {
        self.transverse_norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.coords.iter().zip(other.coords.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        (*self - *other).norm_sq()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    /// `self + r * dir`.
    pub fn along(&self, dir: &Point, r: f64) -> Point {
        let mut p = *self;
        for k in 0..MAX_DIM {
            p.coords[k] += r * dir.coords[k];
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|c| c.is_finite())
    }
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidDimension(dim))
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coords()).finish()
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut p = self;
        for k in 0..MAX_DIM {
            p.coords[k] += rhs.coords[k];
        }
        p
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut p = self;
        for k in 0..MAX_DIM {
            p.coords[k] -= rhs.coords[k];
        }
        p
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        let mut p = self;
        for c in p.coords.iter_mut() {
            *c *= s;
        }
        p
    }
}

/// Reflection across the plane `x1 = lambda`: `(2 lambda - x1, x')`.
pub fn reflect(p: &Point, lambda: f64) -> Point {
    p.with_x1(2.0 * lambda - p.x1())
}

/// Volume of the unit ball in `R^k` (`k = 0` gives 1).
pub fn unit_ball_volume(k: usize) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 1.0,
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => {
            let h = k as f64 / 2.0;
            PI.powf(h) / statrs::function::gamma::gamma(h + 1.0)
        }
    }
}

/// Surface measure of the unit sphere `S^{n-1}` in `R^n` (`n = 1` gives the
/// counting measure of `{-1, 1}`).
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Partition geometry around the evaluation point `x = (delta, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionParams {
    pub delta: f64,
    pub epsilon: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub eta: f64,
}

impl RegionParams {
    /// Validates `0 < 2 delta <= epsilon <= 1/2`, `R >= 4` and
    /// `0 < eta <= delta`.
    pub fn new(delta: f64, epsilon: f64, big_r: f64, eta: f64) -> Result<Self> {
        let p = RegionParams { delta, epsilon, big_r, eta };
        p.validate()?;
        Ok(p)
    }

    /// Uses the default floor `eta = delta / 2`.
    pub fn with_default_eta(delta: f64, epsilon: f64, big_r: f64) -> Result<Self> {
        Self::new(delta, epsilon, big_r, 0.5 * delta)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidRegionParams(m));
        let all = [self.delta, self.epsilon, self.big_r, self.eta];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return bad(format!("all parameters must be finite and positive: {self:?}"));
        }
        if 2.0 * self.delta > self.epsilon {
            return bad(format!("need 2*delta <= epsilon, got delta={} epsilon={}", self.delta, self.epsilon));
        }
        if self.epsilon > 0.5 {
            return bad(format!("need epsilon <= 1/2, got {}", self.epsilon));
        }
        if self.big_r < 4.0 {
            return bad(format!("need R >= 4, got {}", self.big_r));
        }
        if self.eta > self.delta {
            return bad(format!("need eta <= delta, got eta={} delta={}", self.eta, self.delta));
        }
        Ok(())
    }

    /// Same geometry with a different `delta` and `eta = delta / 2`.
    pub fn rescaled(&self, delta: f64) -> Result<Self> {
        Self::with_default_eta(delta, self.epsilon, self.big_r)
    }

    pub fn shape_a(&self) -> Shape {
        Shape::and(vec![Shape::slab(0.0, 2.0 * self.delta), Shape::cylinder(self.epsilon)])
    }

    pub fn shape_b(&self) -> Shape {
        Shape::and(vec![Shape::slab(2.0 * self.delta, self.epsilon), Shape::cylinder(self.epsilon)])
    }

    pub fn shape_omega(&self) -> Shape {
        Shape::and(vec![
            Shape::ball(self.big_r),
            Shape::half_space(self.eta),
            Shape::not(Shape::or(vec![self.shape_a(), self.shape_b()])),
        ])
    }

    pub fn shape_e(&self) -> Shape {
        Shape::and(vec![
            Shape::half_space(0.0),
            Shape::not(Shape::or(vec![self.shape_a(), self.shape_b(), self.shape_omega()])),
        ])
    }

    /// The fixed box `D = {1 <= y1 <= 2, |y'| <= 1}`.
    pub fn shape_d() -> Shape {
        Shape::and(vec![Shape::slab(1.0, 2.0), Shape::cylinder(1.0)])
    }

    pub fn shape(&self, label: RegionLabel) -> Shape {
        match label {
            RegionLabel::A => self.shape_a(),
            RegionLabel::B => self.shape_b(),
            RegionLabel::Omega => self.shape_omega(),
            RegionLabel::E => self.shape_e(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RegionLabel {
    A,
    B,
    Omega,
    E,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 4] = [RegionLabel::A, RegionLabel::B, RegionLabel::Omega, RegionLabel::E];

    pub fn as_str(&self) -> &'static str {
        match self {
            RegionLabel::A => "A",
            RegionLabel::B => "B",
            RegionLabel::Omega => "Omega",
            RegionLabel::E => "E",
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The defining inequalities of each region, before tie-breaking.
fn raw_membership(p: &Point, params: &RegionParams) -> [bool; 4] {
    let y1 = p.x1();
    let t = p.transverse_norm();
    let in_a = y1 >= 0.0 && y1 <= 2.0 * params.delta && t < params.epsilon;
    let in_b = y1 >= 2.0 * params.delta && y1 <= params.epsilon && t < params.epsilon;
    let in_omega = p.norm() < params.big_r && y1 > params.eta && !in_a && !in_b;
    let in_e = !(in_a || in_b || in_omega);
    [in_a, in_b, in_omega, in_e]
}

/// Region of a point of `Sigma`; ties on shared boundaries go to the first
/// matching label in the order `A, B, Omega, E`.
pub fn classify(p: &Point, params: &RegionParams) -> Result<RegionLabel> {
    if !(p.x1() > 0.0) {
        return Err(Error::OutsideHalfSpace(p.coords().to_vec(), 0.0));
    }
    let raw = raw_membership(p, params);
    let idx = raw.iter().position(|&b| b).expect("E is the complement of A, B, Omega");
    Ok(RegionLabel::ALL[idx])
}

/// Membership in `D = {1 <= y1 <= 2, |y'| <= 1}`.
pub fn in_d(p: &Point) -> bool {
    (1.0..=2.0).contains(&p.x1()) && p.transverse_norm() <= 1.0
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    pub samples: usize,
    pub counts: [usize; 4],
    pub d_count: usize,
    /// Points matching two defining predicates before tie-breaking.
    pub multi_matches: Vec<Point>,
    /// Points matching none (only possible for non-finite input).
    pub zero_matches: Vec<Point>,
    /// Points of the thin strip `{0 < y1 <= eta} cap B_R \ (A u B)` not labelled `E`.
    pub strip_violations: Vec<Point>,
    /// Points of `D` not labelled `Omega`.
    pub d_violations: Vec<Point>,
    /// Volume of the sampled set `Sigma cap B_{2R}`.
    pub sample_volume: f64,
}

impl PartitionReport {
    pub fn count(&self, label: RegionLabel) -> usize {
        self.counts[label as usize]
    }

    pub fn is_clean(&self) -> bool {
        self.multi_matches.is_empty()
            && self.zero_matches.is_empty()
            && self.strip_violations.is_empty()
            && self.d_violations.is_empty()
    }
}

/// Closed-form volume of `A` or `B` (`Omega` and `E` are not boxes).
pub fn region_volume(label: RegionLabel, params: &RegionParams, n: usize) -> Option<f64> {
    let cross = unit_ball_volume(n - 1) * params.epsilon.powi(n as i32 - 1);
    match label {
        RegionLabel::A => Some(2.0 * params.delta * cross),
        RegionLabel::B => Some((params.epsilon - 2.0 * params.delta) * cross),
        _ => None,
    }
}

/// Labels seeded quasi-random points of `Sigma cap B_{2R}` and checks that
/// the labelling is a partition.
pub fn partition_check(params: &RegionParams, n: usize, samples: usize, seed: u64) -> Result<PartitionReport> {
    check_dim(n)?;
    params.validate()?;
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    let r2 = 2.0 * params.big_r;
    let mut seq = ShiftedHalton::new(n, seed);
    let mut report = PartitionReport {
        samples,
        counts: [0; 4],
        d_count: 0,
        multi_matches: Vec::new(),
        zero_matches: Vec::new(),
        strip_violations: Vec::new(),
        d_violations: Vec::new(),
        sample_volume: 0.5 * unit_ball_volume(n) * r2.powi(n as i32),
    };
    let mut accepted = 0;
    while accepted < samples {
        let u = seq.next_point();
        let mut c = [0.0; MAX_DIM];
        c[0] = r2 * u[0];
        for k in 1..n {
            c[k] = r2 * (2.0 * u[k] - 1.0);
        }
        let p = Point::new(&c[..n])?;
        if p.norm() >= r2 || p.x1() <= 0.0 {
            continue;
        }
        accepted += 1;
        let raw = raw_membership(&p, params);
        let matches = raw.iter().filter(|&&b| b).count();
        if matches == 0 {
            report.zero_matches.push(p);
            continue;
        }
        if matches > 1 {
            report.multi_matches.push(p);
        }
        let label = classify(&p, params)?;
        report.counts[label as usize] += 1;
        let in_strip = p.x1() <= params.eta && p.norm() < params.big_r && !raw[0] && !raw[1];
        if in_strip && label != RegionLabel::E {
            report.strip_violations.push(p);
        }
        if in_d(&p) {
            report.d_count += 1;
            if label != RegionLabel::Omega {
                report.d_violations.push(p);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Point {
        Point::new(c).unwrap()
    }

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect(&p(&[1.0, 2.0]), 0.0), p(&[-1.0, 2.0]));
        assert_eq!(reflect(&p(&[3.0, 0.0, 0.0]), 1.0), p(&[-1.0, 0.0, 0.0]));
        let q = p(&[0.3, -1.7]);
        assert_eq!(reflect(&reflect(&q, 0.25), 0.25), q);
    }

    #[test]
    fn classify_examples() {
        let params = RegionParams::new(0.1, 0.4, 10.0, 0.05).unwrap();
        assert_eq!(classify(&p(&[0.05, 0.1]), &params).unwrap(), RegionLabel::A);
        assert_eq!(classify(&p(&[0.30, 0.1]), &params).unwrap(), RegionLabel::B);
        assert_eq!(classify(&p(&[20.0, 0.0]), &params).unwrap(), RegionLabel::E);
        assert_eq!(classify(&p(&[0.15, 0.39]), &params).unwrap(), RegionLabel::A);
        // thin strip below eta outside the cylinder
        assert_eq!(classify(&p(&[0.01, 2.0]), &params).unwrap(), RegionLabel::E);
        assert_eq!(classify(&p(&[1.5, 0.5]), &params).unwrap(), RegionLabel::Omega);
        // tie on y1 = 2 delta goes to A
        assert_eq!(classify(&p(&[0.2, 0.0]), &params).unwrap(), RegionLabel::A);
    }

    #[test]
    fn classify_rejects_plane_and_left_side() {
        let params = RegionParams::new(0.1, 0.4, 10.0, 0.05).unwrap();
        assert!(matches!(classify(&p(&[0.0, 0.1]), &params), Err(Error::OutsideHalfSpace(..))));
        assert!(classify(&p(&[-0.5, 0.1]), &params).is_err());
    }

    #[test]
    fn region_params_invariants() {
        assert!(RegionParams::new(0.1, 0.4, 10.0, 0.05).is_ok());
        assert!(RegionParams::new(0.3, 0.4, 10.0, 0.05).is_err()); // 2 delta > epsilon
        assert!(RegionParams::new(0.1, 0.6, 10.0, 0.05).is_err()); // epsilon > 1/2
        assert!(RegionParams::new(0.1, 0.4, 3.0, 0.05).is_err()); // R < 4
        assert!(RegionParams::new(0.1, 0.4, 10.0, 0.2).is_err()); // eta > delta
        assert_eq!(RegionParams::with_default_eta(0.1, 0.4, 4.0).unwrap().eta, 0.05);
    }

    #[test]
    fn partition_is_clean() {
        for n in 1..=3 {
            let params = RegionParams::new(0.1, 0.4, 4.0, 0.05).unwrap();
            let rep = partition_check(&params, n, 10_000, 11).unwrap();
            assert!(rep.is_clean(), "n={n}: {rep:?}");
            assert_eq!(rep.counts.iter().sum::<usize>(), 10_000);
            assert!(rep.d_count > 0);
        }
    }

    #[test]
    fn box_volume_fractions_match_sampling() {
        for n in 1..=2 {
            let params = RegionParams::new(0.1, 0.4, 4.0, 0.05).unwrap();
            let samples = 200_000;
            let rep = partition_check(&params, n, samples, 3).unwrap();
            for label in [RegionLabel::A, RegionLabel::B] {
                let frac = region_volume(label, &params, n).unwrap() / rep.sample_volume;
                let expected = frac * samples as f64;
                let sigma = (samples as f64 * frac * (1.0 - frac)).sqrt();
                let got = rep.count(label) as f64;
                assert!((got - expected).abs() <= 3.0 * sigma, "n={n} {label}: got {got} expected {expected} sigma {sigma}");
            }
        }
    }
}
