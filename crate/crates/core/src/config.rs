//! Experiment configuration: one TOML file fully determines a run.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::StepControl;
use crate::exponent::{ExponentField, PairExponent, PointExponent};
use crate::grid::{build_grid, Domain, Grid};
use crate::operator::OperatorContext;
use crate::well::GeometryOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    Validate,
    Geometry,
    Well,
    Blowup,
    NehariSweep,
    Convergence,
}

impl ScenarioName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioName::Validate => "validate",
            ScenarioName::Geometry => "geometry",
            ScenarioName::Well => "well",
            ScenarioName::Blowup => "blowup",
            ScenarioName::NehariSweep => "nehari-sweep",
            ScenarioName::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PairSpec {
    Constant { value: f64 },
    /// `a + b (x^2 + y^2) / 2`
    AffineRadial { a: f64, b: f64 },
}

impl PairSpec {
    pub fn build(&self) -> PairExponent {
        match *self {
            PairSpec::Constant { value } => PairExponent::Constant(value),
            PairSpec::AffineRadial { a, b } => PairExponent::AffineRadial { a, b },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PointSpec {
    Constant { value: f64 },
    /// `a + b x^2`
    Bump { a: f64, b: f64 },
}

impl PointSpec {
    pub fn build(&self) -> PointExponent {
        match *self {
            PointSpec::Constant { value } => PointExponent::Constant(value),
            PointSpec::Bump { a, b } => PointExponent::Bump { a, b },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `amplitude (1 - x^2)_+` rescaled to the domain.
    Bump { amplitude: f64 },
    /// `amplitude sin(pi (x - a) / (b - a))`
    Sine { amplitude: f64 },
    /// `factor` times the minimizer found by the geometry search.
    NehariMinimizer { factor: f64 },
    /// Cell values from a CSV written by `GridFunction::write_csv`.
    File { path: String },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::NehariMinimizer { factor: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub a: f64,
    pub b: f64,
    /// Collar width; four times the domain length when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exterior_radius: Option<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
}

fn default_n() -> usize {
    32
}

fn default_m() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    pub s: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_p")]
    pub p: PairSpec,
    #[serde(default = "default_q")]
    pub q: PointSpec,
}

fn default_dim() -> usize {
    1
}

fn default_p() -> PairSpec {
    PairSpec::Constant { value: 2.0 }
}

fn default_q() -> PointSpec {
    PointSpec::Constant { value: 3.0 }
}

fn default_probe() -> PointSpec {
    PointSpec::Bump { a: 2.0, b: 1.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_starts: usize,
    pub iters: usize,
    pub tol: f64,
    /// Also compute the depth on the grid with `2n` cells and compare.
    pub refine_check: bool,
    pub refine_rel_tol: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { n_starts: 8, iters: 500, tol: 1e-9, refine_check: true, refine_rel_tol: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WellConfig {
    /// Required `||u(T)||_2 / ||u0||_2`.
    pub decay_ratio: f64,
}

impl Default for WellConfig {
    fn default() -> Self {
        Self { decay_ratio: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupConfig {
    /// The exterior invariance run starts from this multiple of the minimizer.
    pub exterior_factor: f64,
}

impl Default for BlowupConfig {
    fn default() -> Self {
        Self { exterior_factor: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub samples: usize,
    pub grid_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { samples: 100, grid_points: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Coarsest fixed step; the study also runs `dt/2` and `dt/4`.
    pub dt: f64,
    pub final_time: f64,
    pub min_order: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { dt: 0.01, final_time: 1.0, min_order: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioName,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: String,
    pub domain: DomainConfig,
    pub exponents: ExponentConfig,
    #[serde(default = "default_probe")]
    pub probe: PointSpec,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub control: StepControl,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub well: WellConfig,
    #[serde(default)]
    pub blowup: BlowupConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
}

fn default_seed() -> u64 {
    7
}

fn default_output() -> String {
    "out".into()
}

impl ExperimentConfig {
    /// Shipped defaults for a scenario: `Omega = (-1, 1)`, `p = 2`, `q = 3`,
    /// `s = 0.4`, `n = m = 32`.
    pub fn default_for(scenario: ScenarioName) -> Self {
        let mut cfg = Self {
            scenario,
            seed: default_seed(),
            output_dir: default_output(),
            domain: DomainConfig { a: -1.0, b: 1.0, exterior_radius: None, n: default_n(), m: default_m() },
            exponents: ExponentConfig { s: 0.4, dim: 1, p: default_p(), q: default_q() },
            probe: default_probe(),
            initial: InitialData::default(),
            control: StepControl::default(),
            geometry: GeometryConfig::default(),
            well: WellConfig::default(),
            blowup: BlowupConfig::default(),
            sweep: SweepConfig::default(),
            convergence: ConvergenceConfig::default(),
        };
        if scenario == ScenarioName::Blowup {
            cfg.initial = InitialData::Bump { amplitude: 16.0 };
            cfg.control.final_time = 10.0;
        }
        cfg
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn domain(&self) -> Result<Domain> {
        let d = &self.domain;
        match d.exterior_radius {
            Some(r) => Domain::new(d.a, d.b, r),
            None => Domain::with_default_collar(d.a, d.b),
        }
    }

    pub fn field(&self) -> Result<ExponentField> {
        let e = &self.exponents;
        ExponentField::new(e.p.build(), e.q.build(), e.s, e.dim)
    }

    pub fn grid_with(&self, n: usize) -> Result<Arc<Grid>> {
        Ok(Arc::new(build_grid(self.domain()?, n, self.domain.m)?))
    }

    pub fn context_with(&self, n: usize) -> Result<OperatorContext> {
        Ok(OperatorContext::new(self.grid_with(n)?, self.field()?))
    }

    pub fn context(&self) -> Result<OperatorContext> {
        self.context_with(self.domain.n)
    }

    pub fn geometry_options(&self) -> GeometryOptions {
        let g = &self.geometry;
        GeometryOptions { n_starts: g.n_starts, iters: g.iters, tol: g.tol, seed: self.seed }
    }
}
