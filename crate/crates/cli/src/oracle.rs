//! Quadrature against the spectral reference at grid nodes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use fraclap_core::fields::ScalarField;
use fraclap_core::quadrature::spectral::SpectralReference;
use fraclap_core::{frac_laplacian, FracOrder, Point, QuadSpec, Result};

/// Relative part of the agreement contract.
pub const REL_CONTRACT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub x: Vec<f64>,
    pub value: f64,
    pub error_estimate: f64,
    pub evals: usize,
    pub converged: bool,
    pub reference: f64,
    pub gap: f64,
    /// `max(1e-3 |reference|, 3 error_estimate)`
    pub tolerance: f64,
    pub passed: bool,
}

pub fn reference(u: &ScalarField, alpha: FracOrder, size: usize, half_width: f64) -> Result<SpectralReference> {
    SpectralReference::build(u, alpha, size, half_width, Point::origin(u.dim()))
}

/// `count` distinct nodes within `radius` of the origin, drawn with `seed`
/// and returned in increasing index order.
pub fn seeded_nodes(r: &SpectralReference, radius: f64, count: usize, seed: u64) -> Vec<usize> {
    let mut nodes = r.grid().nodes_within(radius);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    nodes.shuffle(&mut rng);
    nodes.truncate(count);
    nodes.sort_unstable();
    nodes
}

pub fn compare(u: &ScalarField, alpha: FracOrder, spec: &QuadSpec, r: &SpectralReference, nodes: &[usize]) -> Result<Vec<OracleRow>> {
    nodes
        .par_iter()
        .map(|&i| {
            let x = r.grid().node(i);
            let q = frac_laplacian(u, &x, alpha, spec)?;
            let reference = r.value_at_node(i)?.value;
            let gap = (q.value - reference).abs();
            let tolerance = (REL_CONTRACT * reference.abs()).max(3.0 * q.error_estimate);
            Ok(OracleRow {
                x: x.coords().to_vec(),
                value: q.value,
                error_estimate: q.error_estimate,
                evals: q.evals,
                converged: q.converged,
                reference,
                gap,
                tolerance,
                passed: gap <= tolerance,
            })
        })
        .collect()
}
