//! Moving-plane driver on explicit fields: certify `w_λ >= 0` on `Σ_λ`,
//! slide the plane to its limiting position `λ_o`, and sample the normal
//! slope of `w` on the plane just to the right of it.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{make_w, AntiSymmetricField, ScalarField};
use crate::geometry::{check_dim, Point};

/// Upper bound on the box half-width, in units of the field length scale.
pub const MAX_EXTENT_SCALES: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneScanConfig {
    pub lambda_hi: f64,
    pub lambda_lo: f64,
    /// The box is `λ < x1 <= λ + L`, `|x_k| <= L` for `k >= 2`.
    pub extent: f64,
    /// Grid spacing `h`; the plane position is resolved to `h/4`.
    pub spacing: f64,
    /// `w_λ` is certified nonnegative when its minimum is `>= -tolerance`.
    pub tolerance: f64,
}

impl PlaneScanConfig {
    /// Chooses the extent from the decay envelope of `u`, so that `|u|`
    /// beyond the box is below `tolerance / 10`, clamped to
    /// `[10, MAX_EXTENT_SCALES]` length scales.
    pub fn for_field(u: &ScalarField, lambda_hi: f64, lambda_lo: f64, spacing: f64, tolerance: f64) -> Self {
        let ls = u.length_scale();
        let mut extent = 10.0 * ls;
        if let Some(d) = u.decay() {
            while extent < MAX_EXTENT_SCALES * ls && d.sup_beyond(extent) > 0.1 * tolerance {
                extent *= 1.25;
            }
        }
        PlaneScanConfig { lambda_hi, lambda_lo, extent: extent.min(MAX_EXTENT_SCALES * ls), spacing, tolerance }
    }

    pub fn validate(&self, u: &ScalarField) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let all = [self.lambda_hi, self.lambda_lo, self.extent, self.spacing, self.tolerance];
        if all.iter().any(|v| !v.is_finite()) {
            return bad(format!("plane scan parameters must be finite: {self:?}"));
        }
        if self.lambda_hi <= self.lambda_lo {
            return bad(format!("need lambda_hi > lambda_lo, got {} and {}", self.lambda_hi, self.lambda_lo));
        }
        if self.spacing <= 0.0 || self.tolerance < 0.0 {
            return bad("spacing must be positive and tolerance nonnegative".into());
        }
        if self.extent < 10.0 * u.length_scale() {
            return bad(format!("extent {} is below 10 length scales ({})", self.extent, 10.0 * u.length_scale()));
        }
        if self.extent / self.spacing > 1e5 {
            return bad("extent / spacing is too large".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinScan {
    pub lambda: f64,
    pub min: f64,
    pub argmin: Vec<f64>,
    /// `|∇w_λ|` at the refined minimiser.
    pub gradient_norm: f64,
    /// Gradient below `10 h` at the refined minimiser.
    pub stationary: bool,
}

struct Grid {
    n: usize,
    k1: usize,
    side: usize,
    half: i64,
}

impl Grid {
    fn new(n: usize, extent: f64, h: f64) -> Self {
        let k1 = (extent / h).floor().max(1.0) as usize;
        let half = (extent / h).floor() as i64;
        Grid { n, k1, side: (2 * half + 1) as usize, half }
    }

    fn len(&self) -> usize {
        self.k1 * self.side.pow(self.n as u32 - 1)
    }

    fn point(&self, mut idx: usize, lambda: f64, h: f64) -> Point {
        let mut c = [0.0; 3];
        c[0] = lambda + h * (1 + idx % self.k1) as f64;
        idx /= self.k1;
        for k in 1..self.n {
            c[k] = h * ((idx % self.side) as i64 - self.half) as f64;
            idx /= self.side;
        }
        Point::new(&c[..self.n]).expect("grid point")
    }
}

/// Grid minimum of `w_λ = u(x^λ) - u(x)` over `Σ_λ ∩ box`, refined by
/// one pattern-descent pass with step `h/10`. Minima outside the box are
/// missed.
pub fn min_scan(u: &ScalarField, lambda: f64, config: &PlaneScanConfig) -> MinScan {
    let w = make_w(u, lambda);
    let h = config.spacing;
    let grid = Grid::new(u.dim(), config.extent, h);
    let (min, idx) = (0..grid.len())
        .into_par_iter()
        .map(|i| (w.eval(&grid.point(i, lambda, h)), i))
        .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let (min, p) = descend(&w, grid.point(idx, lambda, h), min, lambda, 0.1 * h);
    let gradient_norm = w.base().gradient(&p).norm();
    MinScan { lambda, min, argmin: p.coords().to_vec(), gradient_norm, stationary: gradient_norm < 10.0 * h }
}

fn descend(w: &AntiSymmetricField, mut p: Point, mut v: f64, lambda: f64, step: f64) -> (f64, Point) {
    for _ in 0..1000 {
        let mut moved = false;
        for k in 0..p.dim() {
            for s in [step, -step] {
                let q = p.with_coord(k, p.coord(k) + s);
                if q.x1() <= lambda {
                    continue;
                }
                let wq = w.eval(&q);
                if wq < v {
                    v = wq;
                    p = q;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    (v, p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSearch {
    pub lambda_o: f64,
    /// `λ_o` lies in `[bracket.0, bracket.1]`.
    pub bracket: (f64, f64),
    /// The predicate still held at `lambda_lo`.
    pub hit_lower_limit: bool,
    /// Every scan performed, sorted by `λ`.
    pub scans: Vec<MinScan>,
}

/// Bisection for `λ_o = inf{λ : w_μ >= 0 on Σ_μ for all μ >= λ}` on the
/// predicate "certified at `λ` and at three `μ` between `λ` and
/// `lambda_hi`", down to a bracket of width `h/4`.
pub fn find_lambda_o(u: &ScalarField, config: &PlaneScanConfig) -> Result<LambdaSearch> {
    check_dim(u.dim())?;
    config.validate(u)?;
    let mut scans: Vec<MinScan> = Vec::new();
    let scan = |lambda: f64, scans: &mut Vec<MinScan>| -> f64 {
        if let Some(s) = scans.iter().find(|s| s.lambda == lambda) {
            return s.min;
        }
        let s = min_scan(u, lambda, config);
        let m = s.min;
        scans.push(s);
        m
    };
    let ok = |m: f64| m >= -config.tolerance;

    let hi_min = scan(config.lambda_hi, &mut scans);
    if !ok(hi_min) {
        return Err(Error::NoStartingPlane { lambda: config.lambda_hi, min: hi_min });
    }
    let holds = |lambda: f64, scans: &mut Vec<MinScan>| -> bool {
        if !ok(scan(lambda, scans)) {
            return false;
        }
        [0.25, 0.5, 0.75].iter().all(|t| ok(scan(lambda + t * (config.lambda_hi - lambda), scans)))
    };

    let finish = |mut scans: Vec<MinScan>, lambda_o, bracket, hit| {
        scans.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        Ok(LambdaSearch { lambda_o, bracket, hit_lower_limit: hit, scans })
    };
    if holds(config.lambda_lo, &mut scans) {
        return finish(scans, config.lambda_lo, (f64::NEG_INFINITY, config.lambda_lo), true);
    }
    let (mut lo, mut hi) = (config.lambda_lo, config.lambda_hi);
    while hi - lo > 0.25 * config.spacing {
        let mid = 0.5 * (lo + hi);
        if holds(mid, &mut scans) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    finish(scans, 0.5 * (lo + hi), (lo, hi), false)
}

/// One-sided slope `(w(λ + h, x') - 0) / h` at points on the plane `x1 = λ`.
pub fn hopf_slope_check(w: &AntiSymmetricField, plane_points: &[Point], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("slope step must be positive, got {h}")));
    }
    plane_points
        .iter()
        .map(|p| {
            if p.dim() != w.dim() {
                return Err(Error::DimensionMismatch { expected: w.dim(), got: p.dim() });
            }
            if (p.x1() - w.plane()).abs() > 1e-12 * (1.0 + w.plane().abs()) {
                return Err(Error::InvalidArgument(format!("point {:?} is not on the plane x1 = {}", p.coords(), w.plane())));
            }
            Ok(w.eval(&p.with_x1(w.plane() + h)) / h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MovingPlaneReport {
    pub field: String,
    pub config: PlaneScanConfig,
    pub search: LambdaSearch,
    /// Scans at `λ_k = λ_o - j h`, `j = 4, 3, 2, 1`.
    pub approach: Vec<MinScan>,
    /// Distance of each approach minimiser to its plane.
    pub approach_distances: Vec<f64>,
    /// Whether those distances decrease as `λ_k` increases toward `λ_o`.
    pub approach_trend_decreasing: bool,
    pub hopf_lambda: f64,
    pub hopf_points: Vec<Vec<f64>>,
    pub hopf_slopes: Vec<f64>,
    pub hopf_positive: bool,
}

/// Plane points `(λ, x')` with `x'` on a small cross through the axis.
pub fn plane_sample(n: usize, lambda: f64) -> Vec<Point> {
    let mut pts = vec![Point::on_axis(n, lambda)];
    for k in 1..n {
        for t in [0.5, -0.5, 1.0, -1.0] {
            pts.push(Point::on_axis(n, lambda).with_coord(k, t));
        }
    }
    pts
}

pub fn run_moving_plane(u: &ScalarField, config: &PlaneScanConfig) -> Result<MovingPlaneReport> {
    let search = find_lambda_o(u, config)?;
    let h = config.spacing;
    let lambda_o = search.lambda_o;
    let approach: Vec<MinScan> = (1..=4).rev().map(|j| min_scan(u, lambda_o - j as f64 * h, config)).collect();
    let approach_distances: Vec<f64> = approach.iter().map(|s| s.argmin[0] - s.lambda).collect();
    let approach_trend_decreasing = approach_distances.windows(2).all(|d| d[1] < d[0]);

    let hopf_lambda = lambda_o + h;
    let w = make_w(u, hopf_lambda);
    let pts = plane_sample(u.dim(), hopf_lambda);
    let hopf_slopes = hopf_slope_check(&w, &pts, 0.1 * h)?;
    let hopf_positive = hopf_slopes.iter().all(|s| *s > 0.0);
    Ok(MovingPlaneReport {
        field: u.name().to_string(),
        config: *config,
        search,
        approach,
        approach_distances,
        approach_trend_decreasing,
        hopf_lambda,
        hopf_points: pts.iter().map(|p| p.coords().to_vec()).collect(),
        hopf_slopes,
        hopf_positive,
    })
}

/// `lambda,min,argmin_1..argmin_n` for every scan, then `# lambda_o = …`.
pub fn write_scans_csv<W: Write>(mut out: W, report: &MovingPlaneReport) -> io::Result<()> {
    let n = report.hopf_points.first().map_or(1, |p| p.len());
    let cols: Vec<String> = (1..=n).map(|k| format!("argmin_{k}")).collect();
    writeln!(out, "lambda,min,{}", cols.join(","))?;
    for s in report.search.scans.iter().chain(&report.approach) {
        let a: Vec<String> = s.argmin.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{},{}", s.lambda, s.min, a.join(","))?;
    }
    writeln!(out, "# lambda_o = {}", report.search.lambda_o)
}

/// `x1..xn,slope`.
pub fn write_slopes_csv<W: Write>(mut out: W, report: &MovingPlaneReport) -> io::Result<()> {
    let n = report.hopf_points.first().map_or(1, |p| p.len());
    let cols: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    writeln!(out, "{},slope", cols.join(","))?;
    for (p, s) in report.hopf_points.iter().zip(&report.hopf_slopes) {
        let c: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{}", c.join(","), s)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields;

    fn bubble(n: usize, c: f64) -> ScalarField {
        fields::standard_bubble(n, 0.5, Point::on_axis(n, c), 1.0).unwrap()
    }

    fn config(u: &ScalarField) -> PlaneScanConfig {
        PlaneScanConfig { lambda_hi: 3.0, lambda_lo: -3.0, extent: 10.0 * u.length_scale(), spacing: 0.1, tolerance: 1e-10 }
    }

    #[test]
    fn min_scan_signs() {
        let u = bubble(2, 0.0);
        let cfg = config(&u);
        assert!(min_scan(&u, -1.0, &cfg).min < 0.0);
        assert!(min_scan(&u, 1.0, &cfg).min >= -cfg.tolerance);
        let s = min_scan(&u, 0.0, &cfg);
        assert!(s.min.abs() <= cfg.tolerance, "{s:?}");
        let v = bubble(2, 0.4);
        assert!(min_scan(&v, 0.4, &cfg).min >= -cfg.tolerance);
    }

    #[test]
    fn refined_minimiser_is_stationary() {
        let u = bubble(1, 0.0);
        let s = min_scan(&u, -0.5, &config(&u));
        assert!(s.min < 0.0);
        assert!(s.stationary, "{s:?}");
    }

    #[test]
    fn centered_bubble_lambda_o() {
        for n in 1..=2 {
            let u = bubble(n, 0.0);
            let cfg = config(&u);
            let r = find_lambda_o(&u, &cfg).unwrap();
            assert!(r.lambda_o.abs() <= 0.25 * cfg.spacing, "{}", r.lambda_o);
            assert!(r.bracket.1 - r.bracket.0 <= 0.25 * cfg.spacing);
        }
    }

    #[test]
    fn no_starting_plane() {
        let u = bubble(1, 0.0);
        let cfg = PlaneScanConfig { lambda_hi: -1.0, lambda_lo: -2.0, ..config(&u) };
        assert!(matches!(find_lambda_o(&u, &cfg), Err(Error::NoStartingPlane { .. })));
    }

    #[test]
    fn slopes_of_x1_gaussian() {
        let w = fields::x1_gaussian(2).unwrap();
        let pts = plane_sample(2, 0.0);
        let h = 1e-6;
        let s = hopf_slope_check(&w, &pts, h).unwrap();
        for (p, s) in pts.iter().zip(&s) {
            let want = (-p.transverse_norm_sq()).exp();
            assert!((s - want).abs() < 1e-5, "{s} {want}");
        }
        assert!(hopf_slope_check(&w, &[Point::on_axis(2, 0.1)], h).is_err());
    }

    #[test]
    fn degenerate_slope_vanishes() {
        let w = fields::degenerate_w(1, 1.0).unwrap();
        let pts = [Point::origin(1)];
        let a = hopf_slope_check(&w, &pts, 1e-2).unwrap()[0];
        let b = hopf_slope_check(&w, &pts, 1e-3).unwrap()[0];
        assert!(b < 0.02 * a && b > 0.0);
    }

    #[test]
    fn config_validation() {
        let u = bubble(1, 0.0);
        assert!(PlaneScanConfig { lambda_lo: 4.0, ..config(&u) }.validate(&u).is_err());
        assert!(PlaneScanConfig { extent: 1.0, ..config(&u) }.validate(&u).is_err());
        let auto = PlaneScanConfig::for_field(&u, 2.0, -2.0, 0.1, 1e-10);
        assert!(auto.extent >= 10.0 * u.length_scale() && auto.extent <= MAX_EXTENT_SCALES * u.length_scale());
    }
}
