//! Fourier-multiplier evaluation of `(-Δ)^{α/2}` on periodic grids.
//!
//! [`spectral_oracle`] applies `|ξ|^α` to grid samples. On the torus of side
//! `2L` this equals the whole-space operator applied to the periodic
//! extension of the samples, so for fields that are not negligible at the
//! box edge [`SpectralReference`] adds two corrections:
//!
//! * the field is tapered to zero between `0.5 L` and `0.9 L`, and the
//!   removed far part `(1 - ψ) u` is put back through the regular integral
//!   `-C ∫ (1 - ψ) u(y) |x - y|^{-(n+α)} dy`;
//! * the periodic images of the tapered field are removed through
//!   `C ∫ v(z) Σ_{k≠0} |x - z - 2Lk|^{-(n+α)} dz`, summed over coarse cells.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::adaptive::{integrate, Budget, Tol};
use super::{normalization_constant, FracOrder};
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geometry::{check_dim, unit_sphere_area, Point};

/// Uniform samples on `center + [-L, L)^n`, `size` nodes per axis, axis 0
/// varying fastest.
#[derive(Debug, Clone)]
pub struct PeriodicGrid {
    n: usize,
    size: usize,
    half_width: f64,
    center: Point,
    values: Vec<f64>,
    edge_sup: f64,
}

impl PeriodicGrid {
    pub fn from_values(center: Point, size: usize, half_width: f64, values: Vec<f64>) -> Result<Self> {
        let n = center.dim();
        check_dim(n)?;
        if size < 2 || !size.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(size));
        }
        if !(half_width > 0.0) {
            return Err(Error::BoxTooSmall(format!("half width {half_width}")));
        }
        if values.len() != size.pow(n as u32) {
            return Err(Error::InvalidArgument(format!("expected {} samples, got {}", size.pow(n as u32), values.len())));
        }
        Ok(PeriodicGrid { n, size, half_width, center, values, edge_sup: 0.0 })
    }

    /// Samples `field` directly. The box must be at least 20 length scales
    /// wide and the field must carry a decay envelope.
    pub fn sample(field: &ScalarField, size: usize, half_width: f64, center: Point) -> Result<Self> {
        let decay = *field.decay().ok_or_else(|| Error::MissingDecay(field.name().to_string()))?;
        if 2.0 * half_width < 20.0 * field.length_scale() {
            return Err(Error::BoxTooSmall(format!(
                "box side {} is below 20 length scales ({})",
                2.0 * half_width,
                field.length_scale()
            )));
        }
        let mut g = Self::from_values(center, size, half_width, vec![0.0; size.pow(center.dim() as u32)])?;
        g.values = (0..g.len()).map(|i| field.eval(&g.node(i))).collect();
        g.edge_sup = decay.sup_beyond(half_width - center.norm());
        Ok(g)
    }

    /// Samples `taper(|y - center|) u(y)`; see [`taper`].
    pub fn sample_tapered(field: &ScalarField, size: usize, half_width: f64, center: Point) -> Result<Self> {
        field.decay().ok_or_else(|| Error::MissingDecay(field.name().to_string()))?;
        let mut g = Self::from_values(center, size, half_width, vec![0.0; size.pow(center.dim() as u32)])?;
        g.values = (0..g.len())
            .map(|i| {
                let y = g.node(i);
                let t = taper(y.dist(&center) / half_width);
                if t == 0.0 {
                    0.0
                } else {
                    t * field.eval(&y)
                }
            })
            .collect();
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.size as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest envelope value on or beyond the box boundary (0 for grids
    /// built from raw values or tapered samples).
    pub fn edge_sup(&self) -> f64 {
        self.edge_sup
    }

    fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut m = [0; 3];
        for slot in m.iter_mut().take(self.n) {
            *slot = idx % self.size;
            idx /= self.size;
        }
        m
    }

    pub fn node(&self, idx: usize) -> Point {
        let m = self.multi_index(idx);
        let h = self.spacing();
        let mut c = [0.0; 3];
        for k in 0..self.n {
            c[k] = self.center.coord(k) - self.half_width + h * m[k] as f64;
        }
        Point::new(&c[..self.n]).expect("grid node")
    }

    /// Index of the node closest to `p` and its distance.
    pub fn nearest_node(&self, p: &Point) -> (usize, f64) {
        let h = self.spacing();
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.n {
            let j = ((p.coord(k) - self.center.coord(k) + self.half_width) / h).round();
            let j = (j.max(0.0) as usize).min(self.size - 1);
            idx += j * stride;
            stride *= self.size;
        }
        (idx, self.node(idx).dist(p))
    }

    /// Nodes within `radius` of the grid centre, in index order.
    pub fn nodes_within(&self, radius: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.node(i).dist(&self.center) <= radius).collect()
    }
}

/// `1` on `[0, 0.5]`, `0` on `[0.9, ∞)`, `C^∞` in between.
pub fn taper(r: f64) -> f64 {
    const A: f64 = 0.5;
    const B: f64 = 0.9;
    if r <= A {
        return 1.0;
    }
    if r >= B {
        return 0.0;
    }
    let t = (r - A) / (B - A);
    let f = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    let (p, q) = (f(t), f(1.0 - t));
    q / (p + q)
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    /// Operator values at the grid nodes, same layout as the input.
    pub values: Vec<f64>,
    /// Rough size of the periodisation error at nodes within `L/2` of the
    /// centre, from the edge envelope; aliasing is not included.
    pub truncation_estimate: f64,
}

/// Applies the multiplier `|ξ|^α` to the grid samples.
pub fn spectral_oracle(grid: &PeriodicGrid, alpha: FracOrder) -> Result<SpectralResult> {
    let n = grid.n;
    let size = grid.size;
    let a = alpha.value();
    let mut data: Vec<Complex<f64>> = grid.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    transform_axes(&mut data, n, size, &*fwd);

    let freq = |j: usize| {
        let k = if j <= size / 2 { j as f64 } else { j as f64 - size as f64 };
        PI * k / grid.half_width
    };
    for (idx, z) in data.iter_mut().enumerate() {
        let m = grid.multi_index(idx);
        let xi2: f64 = (0..n).map(|k| freq(m[k]).powi(2)).sum();
        *z *= xi2.powf(0.5 * a);
    }
    transform_axes(&mut data, n, size, &*inv);
    let scale = 1.0 / data.len() as f64;
    let values = data.iter().map(|z| z.re * scale).collect();

    let c = normalization_constant(n, alpha);
    let truncation_estimate = 2.0 * c * unit_sphere_area(n) * grid.edge_sup * (0.5 * grid.half_width).powf(-a) / a;
    Ok(SpectralResult { values, truncation_estimate })
}

fn transform_axes(data: &mut [Complex<f64>], n: usize, size: usize, fft: &dyn rustfft::Fft<f64>) {
    let total = data.len();
    let mut line = vec![Complex::new(0.0, 0.0); size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..n {
        let stride = size.pow(axis as u32);
        for start in 0..total {
            // first element of each line along `axis`
            if (start / stride) % size != 0 {
                continue;
            }
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = data[start + j * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (j, v) in line.iter().enumerate() {
                data[start + j * stride] = *v;
            }
        }
    }
}

/// Whole-space operator values at grid nodes from a tapered periodic grid.
pub struct SpectralReference {
    field: ScalarField,
    alpha: FracOrder,
    grid: PeriodicGrid,
    raw: Vec<f64>,
    cells: Vec<(Point, f64)>,
    coarse_cells: Vec<(Point, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceValue {
    pub value: f64,
    /// Periodic operator applied to the tapered samples.
    pub periodic: f64,
    pub image_correction: f64,
    pub far_correction: f64,
    /// Change in the image correction when the cell size is doubled.
    pub truncation_estimate: f64,
}

impl SpectralReference {
    /// Supported for `n <= 2`.
    pub fn build(field: &ScalarField, alpha: FracOrder, size: usize, half_width: f64, center: Point) -> Result<Self> {
        if center.dim() > 2 {
            return Err(Error::InvalidDimension(center.dim()));
        }
        let grid = PeriodicGrid::sample_tapered(field, size, half_width, center)?;
        let raw = spectral_oracle(&grid, alpha)?.values;
        let cells = coarse_masses(&grid, 64);
        let coarse_cells = coarse_masses(&grid, 32);
        Ok(SpectralReference { field: field.clone(), alpha, grid, raw, cells, coarse_cells })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// Operator value at node `idx`, which must lie within `L/2` of the
    /// centre where the taper is identically 1.
    pub fn value_at_node(&self, idx: usize) -> Result<ReferenceValue> {
        let x = self.grid.node(idx);
        let l = self.grid.half_width;
        if x.dist(&self.grid.center) >= 0.5 * l {
            return Err(Error::InvalidArgument("reference node must lie inside the untapered core".into()));
        }
        let n = self.grid.n;
        let a = self.alpha.value();
        let c = normalization_constant(n, self.alpha);
        let s = n as f64 + a;
        let image = |cells: &[(Point, f64)]| cells.iter().map(|(z, m)| m * lattice_sum(&(x - *z), l, n, s)).sum::<f64>();
        let image_correction = c * image(&self.cells);
        let coarse = c * image(&self.coarse_cells);
        let far_correction = -c * self.far_integral(&x);
        let periodic = self.raw[idx];
        Ok(ReferenceValue {
            value: periodic + image_correction + far_correction,
            periodic,
            image_correction,
            far_correction,
            truncation_estimate: (image_correction - coarse).abs(),
        })
    }

    /// `∫ (1 - ψ(y)) u(y) |x - y|^{-(n+α)} dy`, in polar coordinates about
    /// the grid centre.
    fn far_integral(&self, x: &Point) -> f64 {
        let n = self.grid.n;
        let l = self.grid.half_width;
        let c = self.grid.center;
        let s = n as f64 + self.alpha.value();
        let budget = Budget::new(usize::MAX);
        let tol = Tol { abs: 1e-14, rel: 1e-10 };
        let (ra, rb) = (0.5 * l, 0.9 * l);
        let shell = |rho: f64| -> f64 {
            let w = 1.0 - taper(rho / l);
            if w == 0.0 {
                return 0.0;
            }
            let at = |e: &Point| {
                let y = c.along(e, rho);
                self.field.eval(&y) * x.dist(&y).powf(-s)
            };
            let ang = if n == 1 {
                at(&Point::unit(1, 0)) + at(&(Point::unit(1, 0) * -1.0))
            } else {
                integrate(
                    &mut |th: f64| at(&Point::new(&[th.cos(), th.sin()]).expect("2d")),
                    &[0.0, 0.5 * PI, PI, 1.5 * PI, 2.0 * PI],
                    Tol { abs: 1e-16, rel: 1e-11 },
                    &budget,
                    false,
                )
                .value
                    * rho
            };
            w * ang
        };
        let inner = integrate(&mut |r: f64| shell(r), &[ra, 0.6 * l, 0.7 * l, 0.8 * l, rb], tol, &budget, false).value;
        let tail = integrate(
            &mut |t: f64| if t <= 0.0 { 0.0 } else { shell(rb / t) * rb / (t * t) },
            &[0.0, 0.25, 0.5, 1.0],
            tol,
            &budget,
            false,
        )
        .value;
        inner + tail
    }
}

/// Grid masses `h^n Σ v` over blocks, located at the block centres.
fn coarse_masses(grid: &PeriodicGrid, blocks: usize) -> Vec<(Point, f64)> {
    let n = grid.n;
    let blocks = blocks.min(grid.size);
    let per = grid.size / blocks;
    let h = grid.spacing();
    let vol = h.powi(n as i32);
    let mut mass = vec![0.0; blocks.pow(n as u32)];
    for (idx, v) in grid.values.iter().enumerate() {
        let m = grid.multi_index(idx);
        let mut b = 0;
        let mut stride = 1;
        for k in 0..n {
            b += (m[k] / per) * stride;
            stride *= blocks;
        }
        mass[b] += v * vol;
    }
    let bw = per as f64 * h;
    mass.iter()
        .enumerate()
        .filter(|(_, m)| **m != 0.0)
        .map(|(b, m)| {
            let mut c = [0.0; 3];
            let mut r = b;
            for (k, slot) in c.iter_mut().enumerate().take(n) {
                let j = r % blocks;
                r /= blocks;
                // centroid of the nodes in the block
                *slot = grid.center.coord(k) - grid.half_width + bw * j as f64 + 0.5 * (per as f64 - 1.0) * h;
            }
            (Point::new(&c[..n]).expect("cell"), *m)
        })
        .collect()
}

/// `Σ_{k ≠ 0} |v - 2 L k|^{-s}` over the integer lattice, with the far
/// shells replaced by their continuum limit.
fn lattice_sum(v: &Point, l: f64, n: usize, s: f64) -> f64 {
    let p = 2.0 * l;
    match n {
        1 => {
            const K: i64 = 256;
            let mut sum = 0.0;
            for k in 1..=K {
                let kf = k as f64 * p;
                sum += (kf - v.x1()).abs().powf(-s) + (kf + v.x1()).abs().powf(-s);
            }
            sum + 2.0 * p.powf(-s) * (K as f64 + 0.5).powf(1.0 - s) / (s - 1.0)
        }
        _ => {
            const K: i64 = 16;
            let mut sum = 0.0;
            for i in -K..=K {
                for j in -K..=K {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    let dx = v.x1() - p * i as f64;
                    let dy = v.coord(1) - p * j as f64;
                    sum += (dx * dx + dy * dy).powf(-0.5 * s);
                }
            }
            // region outside the (2K+1)^2 square, approximated by a disc of equal area
            let r = (2 * K + 1) as f64 / PI.sqrt();
            sum + p.powf(-s) * 2.0 * PI * r.powf(2.0 - s) / (s - 2.0)
        }
    }
}
