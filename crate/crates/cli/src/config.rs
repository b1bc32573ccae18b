//! Run configuration: a TOML file with top-level scalars and one table per
//! subcommand. Unknown keys are rejected and every value is re-validated
//! against the library invariants before anything runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fraclap_core::fields::{CatalogField, FieldId};
use fraclap_core::hopf::DeltaGrid;
use fraclap_core::{FracOrder, Point, QuadSpec, RegionParams};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub alpha: f64,
    /// Catalog identifier, e.g. `degenerate_w(width=2)`.
    pub field: String,
    pub coefficient: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub regions: Option<RegionsConfig>,
    pub delta_grid: Option<DeltaGridConfig>,
    #[serde(default)]
    pub quad: QuadOverrides,
    pub eval: Option<EvalConfig>,
    pub oracle: Option<OracleConfig>,
    pub plane: Option<PlaneConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsConfig {
    pub epsilon: f64,
    #[serde(rename = "R", default = "default_big_r")]
    pub big_r: f64,
    /// Only `half_delta` (`η = δ/2`) is implemented.
    #[serde(default = "default_eta_rule")]
    pub eta_rule: String,
}

fn default_big_r() -> f64 {
    8.0
}

fn default_eta_rule() -> String {
    "half_delta".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaGridConfig {
    pub max: Option<f64>,
    /// Defaults to one decade over `count` points.
    pub ratio: Option<f64>,
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_count() -> usize {
    7
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadOverrides {
    pub inner_radius: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_evals: Option<usize>,
    pub far_cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub points: Vec<Vec<f64>>,
    /// Snap each point to the nearest spectral grid node and append the
    /// reference value and gap.
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_oracle_count")]
    pub count: usize,
    /// Nodes are drawn from the ball of this radius about the origin.
    #[serde(default = "default_oracle_radius")]
    pub radius: f64,
    pub grid_size: Option<usize>,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_oracle_count() -> usize {
    20
}

fn default_oracle_radius() -> f64 {
    2.0
}

fn default_half_width() -> f64 {
    32.0
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { count: default_oracle_count(), radius: default_oracle_radius(), grid_size: None, half_width: default_half_width() }
    }
}

impl OracleConfig {
    pub fn grid_size(&self, n: usize) -> usize {
        self.grid_size.unwrap_or(if n == 1 { 4096 } else { 512 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub lambda_hi: f64,
    pub lambda_lo: f64,
    pub spacing: f64,
    #[serde(default = "default_plane_tol")]
    pub tolerance: f64,
    /// Sized from the decay envelope when absent.
    pub extent: Option<f64>,
}

fn default_plane_tol() -> f64 {
    1e-10
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.order()?;
        fraclap_core::geometry::Point::new(&vec![0.0; self.n]).map_err(CliError::from_core)?;
        self.build_field()?;
        if let Some(c) = &self.coefficient {
            FieldId::parse(c).and_then(|id| id.build_coefficient()).map_err(CliError::from_core)?;
        }
        self.quad_spec().validate().map_err(CliError::from_core)?;
        if let Some(r) = &self.regions {
            if r.eta_rule != "half_delta" {
                return Err(CliError::Config(format!("unknown eta_rule `{}` (only `half_delta` is supported)", r.eta_rule)));
            }
            let (base, grid) = self.hopf_setup()?;
            base.validate().map_err(CliError::from_core)?;
            grid.validate(base.epsilon).map_err(CliError::from_core)?;
        }
        if let Some(e) = &self.eval {
            for p in &e.points {
                if p.len() != self.n {
                    return Err(CliError::Config(format!("eval point {p:?} does not have dimension {}", self.n)));
                }
                Point::new(p).map_err(CliError::from_core)?;
            }
        }
        if let Some(o) = &self.oracle {
            if o.count == 0 || !(o.radius > 0.0) || !(o.half_width > 0.0) {
                return Err(CliError::Config("oracle needs count >= 1, radius > 0 and half_width > 0".into()));
            }
            if 2.0 * o.radius >= o.half_width {
                return Err(CliError::Config("oracle radius must be below half_width / 2".into()));
            }
        }
        if self.plane.is_some() {
            let u = self.build_field()?;
            self.plane_config(u.scalar()).validate(u.scalar()).map_err(CliError::from_core)?;
        }
        Ok(())
    }

    pub fn order(&self) -> Result<FracOrder, CliError> {
        FracOrder::new(self.alpha).map_err(CliError::from_core)
    }

    pub fn build_field(&self) -> Result<CatalogField, CliError> {
        FieldId::parse(&self.field).and_then(|id| id.build(self.n, self.alpha)).map_err(CliError::from_core)
    }

    pub fn quad_spec(&self) -> QuadSpec {
        let d = QuadSpec::default();
        let q = &self.quad;
        QuadSpec {
            inner_radius: q.inner_radius.unwrap_or(d.inner_radius),
            rel_tol: q.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: q.abs_tol.unwrap_or(d.abs_tol),
            max_evals: q.max_evals.unwrap_or(d.max_evals),
            far_cutoff: q.far_cutoff.unwrap_or(d.far_cutoff),
            seed: self.seed,
        }
    }

    /// Base region parameters (at the largest `δ`) and the `δ` grid.
    pub fn hopf_setup(&self) -> Result<(RegionParams, DeltaGrid), CliError> {
        let r = self.regions.as_ref().ok_or_else(|| CliError::Config("missing [regions] table".into()))?;
        let g = self.delta_grid.unwrap_or(DeltaGridConfig { max: None, ratio: None, count: default_count() });
        let max = g.max.unwrap_or(0.25 * r.epsilon);
        let grid = match g.ratio {
            Some(ratio) => DeltaGrid { max, ratio, count: g.count },
            None => DeltaGrid::decade(max, g.count),
        };
        let base = RegionParams::with_default_eta(max, r.epsilon, r.big_r).map_err(CliError::from_core)?;
        Ok((base, grid))
    }

    pub fn plane_config(&self, u: &fraclap_core::fields::ScalarField) -> fraclap_core::moving_planes::PlaneScanConfig {
        use fraclap_core::moving_planes::PlaneScanConfig;
        let p = self.plane.expect("plane table");
        let auto = PlaneScanConfig::for_field(u, p.lambda_hi, p.lambda_lo, p.spacing, p.tolerance);
        PlaneScanConfig { extent: p.extent.unwrap_or(auto.extent), ..auto }
    }
}
