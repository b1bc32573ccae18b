//! Fractional Laplacian evaluation, anti-symmetric kernel decomposition and
//! Hopf boundary-lemma diagnostics for moving-plane arguments.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod antisym;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod hopf;
pub mod moving_planes;
pub mod qmc;
pub mod quadrature;
pub mod shape;

pub use error::{Error, Result};
pub use geometry::{Point, RegionLabel, RegionParams};
pub use quadrature::{frac_laplacian, normalization_constant, FracOrder, QuadSpec, QuadratureResult};
