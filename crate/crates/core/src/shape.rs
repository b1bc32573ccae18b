//! Set expressions over `R^n` built from axis-aligned primitives, with exact
//! ray intersection so that region-restricted integrals can be written in
//! polar coordinates around the evaluation point.

use crate::geometry::Point;

/// Sorted, disjoint, closed intervals of the ray parameter `r >= 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSet(Vec<(f64, f64)>);

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet(Vec::new())
    }

    pub fn full() -> Self {
        IntervalSet(vec![(0.0, f64::INFINITY)])
    }

    pub fn single(a: f64, b: f64) -> Self {
        let a = a.max(0.0);
        if b > a {
            IntervalSet(vec![(a, b)])
        } else {
            Self::empty()
        }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (a0, a1) = self.0[i];
            let (b0, b1) = other.0[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet(out)
    }

    pub fn complement(&self) -> IntervalSet {
        let mut out = Vec::new();
        let mut start = 0.0;
        for &(a, b) in &self.0 {
            if a > start {
                out.push((start, a));
            }
            start = b;
        }
        if start < f64::INFINITY {
            out.push((start, f64::INFINITY));
        }
        IntervalSet(out)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut all: Vec<(f64, f64)> = self.0.iter().chain(other.0.iter()).copied().collect();
        all.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(all.len());
        for (a, b) in all {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        IntervalSet(out)
    }

    /// The part of the set at `r >= start`.
    pub fn clip_below(&self, start: f64) -> IntervalSet {
        self.intersect(&IntervalSet(vec![(start, f64::INFINITY)]))
    }

    /// End of the interval starting at `r = 0`, or 0 when the ray starts outside.
    pub fn initial_extent(&self) -> f64 {
        match self.0.first() {
            Some(&(a, b)) if a <= 0.0 => b,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    All,
    /// `lo <= y1 <= hi`; `hi` may be infinite.
    Slab { lo: f64, hi: f64 },
    /// `|y'| < radius` (an infinite cylinder around the first axis).
    Cylinder { radius: f64 },
    /// `|y| < radius`, centred at the origin.
    Ball { radius: f64 },
    And(Vec<Shape>),
    Or(Vec<Shape>),
    Not(Box<Shape>),
}

impl Shape {
    pub fn slab(lo: f64, hi: f64) -> Shape {
        Shape::Slab { lo, hi }
    }

    /// `y1 > floor`.
    pub fn half_space(floor: f64) -> Shape {
        Shape::Slab { lo: floor, hi: f64::INFINITY }
    }

    pub fn cylinder(radius: f64) -> Shape {
        Shape::Cylinder { radius }
    }

    pub fn ball(radius: f64) -> Shape {
        Shape::Ball { radius }
    }

    pub fn and(parts: Vec<Shape>) -> Shape {
        Shape::And(parts)
    }

    pub fn or(parts: Vec<Shape>) -> Shape {
        Shape::Or(parts)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(s: Shape) -> Shape {
        Shape::Not(Box::new(s))
    }

    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Shape::All => true,
            Shape::Slab { lo, hi } => p.x1() >= *lo && p.x1() <= *hi,
            Shape::Cylinder { radius } => p.transverse_norm_sq() < radius * radius,
            Shape::Ball { radius } => p.norm_sq() < radius * radius,
            Shape::And(v) => v.iter().all(|s| s.contains(p)),
            Shape::Or(v) => v.iter().any(|s| s.contains(p)),
            Shape::Not(s) => !s.contains(p),
        }
    }

    /// `{r >= 0 : origin + r * dir in self}` for a unit vector `dir`.
    pub fn ray_intervals(&self, origin: &Point, dir: &Point) -> IntervalSet {
        match self {
            Shape::All => IntervalSet::full(),
            Shape::Slab { lo, hi } => {
                let (o, d) = (origin.x1(), dir.x1());
                if d == 0.0 {
                    if o >= *lo && o <= *hi {
                        IntervalSet::full()
                    } else {
                        IntervalSet::empty()
                    }
                } else {
                    let t0 = (lo - o) / d;
                    let t1 = (hi - o) / d;
                    let (a, b) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
                    IntervalSet::single(nan_to(a, f64::NEG_INFINITY), nan_to(b, f64::INFINITY))
                }
            }
            Shape::Cylinder { radius } => {
                let a = dir.transverse_norm_sq();
                let b: f64 = (1..origin.dim()).map(|k| origin.coord(k) * dir.coord(k)).sum();
                let c = origin.transverse_norm_sq() - radius * radius;
                quadratic_interior(a, b, c)
            }
            Shape::Ball { radius } => {
                let a = dir.norm_sq();
                let b = origin.dot(dir);
                let c = origin.norm_sq() - radius * radius;
                quadratic_interior(a, b, c)
            }
            Shape::And(v) => v
                .iter()
                .fold(IntervalSet::full(), |acc, s| acc.intersect(&s.ray_intervals(origin, dir))),
            Shape::Or(v) => v
                .iter()
                .fold(IntervalSet::empty(), |acc, s| acc.union(&s.ray_intervals(origin, dir))),
            Shape::Not(s) => s.ray_intervals(origin, dir).complement(),
        }
    }

    /// Points in the plane where two boundary curves of the expression meet
    /// (for `n = 2`). Rays through these points are where the radial extent
    /// of the region can change non-smoothly with the angle.
    pub fn corner_points_2d(&self) -> Vec<(f64, f64)> {
        let mut curves = Vec::new();
        self.collect_curves(&mut curves);
        let mut pts = Vec::new();
        for i in 0..curves.len() {
            for j in (i + 1)..curves.len() {
                intersect_curves(&curves[i], &curves[j], &mut pts);
            }
        }
        pts
    }

    fn collect_curves(&self, out: &mut Vec<Curve>) {
        match self {
            Shape::All => {}
            Shape::Slab { lo, hi } => {
                for v in [*lo, *hi] {
                    if v.is_finite() {
                        out.push(Curve::Vertical(v));
                    }
                }
            }
            Shape::Cylinder { radius } => {
                out.push(Curve::Horizontal(*radius));
                out.push(Curve::Horizontal(-*radius));
            }
            Shape::Ball { radius } => out.push(Curve::Circle(*radius)),
            Shape::And(v) | Shape::Or(v) => v.iter().for_each(|s| s.collect_curves(out)),
            Shape::Not(s) => s.collect_curves(out),
        }
    }
}

fn nan_to(v: f64, fallback: f64) -> f64 {
    if v.is_nan() {
        fallback
    } else {
        v
    }
}

/// Solutions of `a r^2 + 2 b r + c < 0` with `r >= 0`.
fn quadratic_interior(a: f64, b: f64, c: f64) -> IntervalSet {
    if a <= 0.0 {
        return if c < 0.0 { IntervalSet::full() } else { IntervalSet::empty() };
    }
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return IntervalSet::empty();
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = if b >= 0.0 { -(b + sq) } else { -b + sq };
    let (r0, r1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    let (lo, hi) = if r0 <= r1 { (r0, r1) } else { (r1, r0) };
    IntervalSet::single(lo, hi)
}

#[derive(Debug, Clone, Copy)]
enum Curve {
    Vertical(f64),
    Horizontal(f64),
    Circle(f64),
}

fn intersect_curves(a: &Curve, b: &Curve, out: &mut Vec<(f64, f64)>) {
    use Curve::*;
    match (*a, *b) {
        (Vertical(x), Horizontal(y)) | (Horizontal(y), Vertical(x)) => out.push((x, y)),
        (Vertical(x), Circle(r)) | (Circle(r), Vertical(x)) => {
            if x.abs() < r {
                let y = (r * r - x * x).sqrt();
                out.push((x, y));
                out.push((x, -y));
            }
        }
        (Horizontal(y), Circle(r)) | (Circle(r), Horizontal(y)) => {
            if y.abs() < r {
                let x = (r * r - y * y).sqrt();
                out.push((x, y));
                out.push((-x, y));
            }
        }
        _ => {}
    }
}
