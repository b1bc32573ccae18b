//! Globally adaptive Gauss-Kronrod (7, 15) quadrature on finite intervals.
//!
//! The per-interval error is `|K15 - G7|` (floored at the roundoff level of
//! the interval), so the reported total is an estimate from the pairwise
//! rule difference rather than an extrapolated one.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

pub(crate) const EVALS_PER_RULE: usize = 15;

/// Shared evaluation budget for one (possibly nested) integral.
#[derive(Debug)]
pub(crate) struct Budget {
    used: Cell<usize>,
    limit: usize,
    exhausted: Cell<bool>,
}

impl Budget {
    pub fn new(limit: usize) -> Self {
        Budget { used: Cell::new(0), limit, exhausted: Cell::new(false) }
    }

    pub fn used(&self) -> usize {
        self.used.get()
    }

    pub fn charge(&self, k: usize) {
        self.used.set(self.used.get() + k);
    }

    pub fn remaining(&self) -> usize {
        self.limit.saturating_sub(self.used.get())
    }

    pub fn mark_exhausted(&self) {
        self.exhausted.set(true);
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted.get()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tol {
    pub abs: f64,
    pub rel: f64,
}

impl Tol {
    pub fn scaled(&self, k: f64) -> Tol {
        Tol { abs: self.abs * k, rel: self.rel * k }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Estimate {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, error: 0.0, converged: true }
    }

    pub fn add(&mut self, other: Estimate) {
        self.value += other.value;
        self.error += other.error;
        self.converged &= other.converged;
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    /// integral of |f| from the same rule
    abs: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs_sum = WGK[7] * fc.abs();
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        k += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    let value = k * h;
    let roundoff = 50.0 * f64::EPSILON * abs_sum * h.abs();
    let error = ((k - g) * h).abs().max(roundoff);
    Piece { a, b, value, error, abs: abs_sum * h.abs() }
}

/// Integrates `f` over `[points[0], points[last]]`, starting from the
/// subdivision given by `points` (sorted). When `charge` is set, each rule
/// application is charged to `budget`; refinement stops when the budget is
/// exhausted, and the result is then flagged as not converged.
pub(crate) fn integrate(f: &mut dyn FnMut(f64) -> f64, points: &[f64], tol: Tol, budget: &Budget, charge: bool) -> Estimate {
    debug_assert!(points.len() >= 2);
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(gk15(f, w[0], w[1]));
            if charge {
                budget.charge(EVALS_PER_RULE);
            }
        }
    }
    let mut frozen = Estimate::exact(0.0);
    let mut frozen_abs = 0.0;
    let mut converged = true;
    let exact_sums = |heap: &BinaryHeap<Piece>| heap.iter().fold((0.0, 0.0, 0.0), |(v, e, m), p| (v + p.value, e + p.error, m + p.abs));
    let (mut value, mut error, mut abs_total) = exact_sums(&heap);
    let mut iter = 0usize;
    loop {
        iter += 1;
        if iter % 64 == 0 {
            (value, error, abs_total) = exact_sums(&heap);
        }
        let (v, e) = (value + frozen.value, error + frozen.error);
        if !v.is_finite() || !e.is_finite() {
            converged = false;
            break;
        }
        // a relative target below the roundoff level of the integrand is unattainable
        let target = tol.abs.max(tol.rel * v.abs()).max(100.0 * f64::EPSILON * (abs_total + frozen_abs));
        if e <= target {
            break;
        }
        if frozen.error > target {
            // out of reach whatever else is refined
            converged = false;
            break;
        }
        let Some(worst) = heap.pop() else { break };
        value -= worst.value;
        error -= worst.error;
        abs_total -= worst.abs;
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) || (worst.b - worst.a).abs() <= 1e-13 * (worst.a.abs() + worst.b.abs()) {
            frozen.value += worst.value;
            frozen.error += worst.error;
            frozen_abs += worst.abs;
            continue;
        }
        let need = if charge { 2 * EVALS_PER_RULE } else { 0 };
        if budget.is_exhausted() || budget.remaining() < need.max(1) {
            budget.mark_exhausted();
            heap.push(worst);
            converged = false;
            break;
        }
        let left = gk15(f, worst.a, mid);
        let right = gk15(f, mid, worst.b);
        value += left.value + right.value;
        error += left.error + right.error;
        abs_total += left.abs + right.abs;
        heap.push(left);
        heap.push(right);
        if charge {
            budget.charge(2 * EVALS_PER_RULE);
        }
    }
    // sum in interval order for reproducible rounding
    let mut pieces: Vec<Piece> = heap.into_vec();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = pieces.iter().map(|p| p.value).sum::<f64>() + frozen.value;
    let error = pieces.iter().map(|p| p.error).sum::<f64>() + frozen.error;
    Estimate { value, error, converged: converged && value.is_finite() }
}
