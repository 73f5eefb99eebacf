//! JSON run configuration.

use std::path::PathBuf;

use prestrain::grid::Domain;
use prestrain::quadratic_forms::{DensityModel, Material};
use prestrain::scenario::{Scenario, ScenarioId};
use prestrain::surface_geometry::{Director, Height, Monomial};
use prestrain::{Error, Result, V3};
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: String,
    /// Overrides the scenario domain.
    #[serde(default)]
    pub domain: Option<Domain>,
    /// Nodes per axis on the coarsest grid.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub material: MaterialConfig,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_hs")]
    pub h_list: Vec<f64>,
    /// Overrides the scenario director.
    #[serde(default)]
    pub director: Option<DirectorConfig>,
    /// Height monomials; only allowed with the custom graph.
    #[serde(default)]
    pub height: Option<Vec<MonomialConfig>>,
    #[serde(default)]
    pub displacement: DisplacementConfig,
    /// Matching order of the isometry expansion.
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub strain: StrainConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub minimize: Option<MinimizeConfig>,
    /// `ε` sweep of the matching check.
    #[serde(default = "default_eps")]
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_resolution() -> usize {
    65
}

fn default_beta() -> f64 {
    3.0
}

fn default_hs() -> Vec<f64> {
    vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]
}

fn default_order() -> usize {
    1
}

fn default_eps() -> Vec<f64> {
    vec![1e-1, 10f64.powf(-1.5), 1e-2, 10f64.powf(-2.5)]
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub model: ModelConfig,
}

fn one() -> f64 {
    1.0
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self { mu: 1.0, lambda: 0.0, model: ModelConfig::SquaredDistance }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelConfig {
    #[default]
    SquaredDistance,
    IsotropicQuadratic,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DirectorConfig {
    /// Unit normal; gives the product metric.
    Normal,
    Constant([f64; 3]),
    Affine { base: [f64; 3], d1: [f64; 3], d2: [f64; 3] },
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialConfig {
    pub p: u32,
    pub q: u32,
    pub coef: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisplacementConfig {
    Zero,
    /// `(0, 0, scale (x1^2 + x2^2)/2)`.
    Paraboloid {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Exact cylindrical bending of a flat plate, `(0, 0, curvature x1^2/2)`.
    Cylinder { curvature: f64 },
    /// `w × y0 + c`.
    Rigid { w: [f64; 3], c: [f64; 3] },
    /// Strain-solver kernel element with rotation scalar
    /// `b[0] + b[1] x1 + b[2] x2 + b[3] x1 x2` on the boundary.
    Kernel { boundary: [f64; 4] },
}

impl Default for DisplacementConfig {
    fn default() -> Self {
        DisplacementConfig::Paraboloid { scale: 1.0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrainConfig {
    /// `U = 0`, optionally with boundary data for the rotation scalar.
    Zero {
        #[serde(default)]
        boundary: Option<[f64; 4]>,
    },
    /// `U = sym((∇y0)^T ∇Y)` for a fixed smooth `Y`, with its exact boundary data.
    Manufactured,
    /// `U = scale g`.
    MetricMultiple { scale: f64 },
}

impl Default for StrainConfig {
    fn default() -> Self {
        StrainConfig::Zero { boundary: None }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_points")]
    pub x3_points: usize,
    #[serde(default)]
    pub model: EnergyModelConfig,
}

fn default_points() -> usize {
    4
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { x3_points: 4, model: EnergyModelConfig::Full }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyModelConfig {
    #[default]
    Full,
    Quadratic,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeConfig {
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_penalty")]
    pub penalty_weight: f64,
    /// Amplitude of the seeded random perturbation of the initial field.
    #[serde(default)]
    pub perturbation: f64,
}

fn default_iters() -> usize {
    200
}

fn default_penalty() -> f64 {
    1e3
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let c: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let id = self.scenario_id()?;
        if !(self.beta > 2.0 && self.beta < 4.0) {
            return Err(Error::Config(format!("beta must lie in (2, 4), got {}", self.beta)));
        }
        if self.resolution < 3 {
            return Err(Error::Config(format!("resolution must be at least 3, got {}", self.resolution)));
        }
        if self.h_list.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
            return Err(Error::Config("every thickness in h_list must lie in (0, 1)".into()));
        }
        if self.eps_list.iter().any(|e| e.is_nan() || *e <= 0.0) {
            return Err(Error::Config("every eps in eps_list must be positive".into()));
        }
        if self.order == 0 {
            return Err(Error::Config("order must be at least 1".into()));
        }
        if self.height.is_some() && id != ScenarioId::CustomGraph {
            return Err(Error::Config("height is only configurable for the custom-graph scenario".into()));
        }
        if self.quadrature.x3_points == 0 {
            return Err(Error::Config("quadrature.x3_points must be positive".into()));
        }
        self.material()?;
        Ok(())
    }

    pub fn scenario_id(&self) -> Result<ScenarioId> {
        self.scenario.parse()
    }

    pub fn material(&self) -> Result<Material> {
        let model = match self.material.model {
            ModelConfig::SquaredDistance => DensityModel::SquaredDistance,
            ModelConfig::IsotropicQuadratic => DensityModel::IsotropicQuadratic,
        };
        Material::new(self.material.mu, self.material.lambda, model)
    }

    /// Registered scenario with the configured overrides applied.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::registered(self.scenario_id()?);
        if let Some(d) = self.domain {
            s.domain = d;
        }
        if let Some(d) = &self.director {
            s.director = match d {
                DirectorConfig::Normal => Director::Normal,
                DirectorConfig::Constant(a) => Director::constant(V3::from(*a)),
                DirectorConfig::Affine { base, d1, d2 } => {
                    Director::Affine { base: V3::from(*base), d1: V3::from(*d1), d2: V3::from(*d2) }
                }
            };
        }
        if let Some(h) = &self.height {
            s.height = Height::Polynomial(h.iter().map(|m| Monomial { p: m.p, q: m.q, coef: m.coef }).collect());
        }
        Ok(s)
    }
}
