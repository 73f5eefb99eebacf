//! Named test configurations: a mid-surface, a director and a parameter domain.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{build_grid, Domain};
use crate::surface_geometry::{build_immersion, Director, Height, ImmersionFrame, Monomial};
use crate::V3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    Flat,
    SphereCapConstantDirector,
    SaddleConstantDirector,
    CustomGraph,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] =
        [ScenarioId::Flat, ScenarioId::SphereCapConstantDirector, ScenarioId::SaddleConstantDirector, ScenarioId::CustomGraph];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Flat => "flat",
            ScenarioId::SphereCapConstantDirector => "sphere-cap-constant-director",
            ScenarioId::SaddleConstantDirector => "saddle-constant-director",
            ScenarioId::CustomGraph => "custom-graph",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: ScenarioId,
    pub height: Height,
    pub director: Director,
    pub domain: Domain,
}

impl Scenario {
    /// Default data of a registered scenario. The custom graph defaults to a
    /// tilted cubic patch; callers may swap in their own height.
    pub fn registered(id: ScenarioId) -> Self {
        let (height, director, domain) = match id {
            ScenarioId::Flat => (Height::Flat, Director::Normal, Domain::unit_square()),
            ScenarioId::SphereCapConstantDirector => {
                (Height::SphereCap { radius: 2.0 }, Director::constant(V3::z()), Domain::centered(0.5))
            }
            ScenarioId::SaddleConstantDirector => (Height::Saddle, Director::constant(V3::z()), Domain::centered(0.5)),
            ScenarioId::CustomGraph => (
                Height::Polynomial(vec![
                    Monomial { p: 2, q: 0, coef: 0.3 },
                    Monomial { p: 1, q: 1, coef: 0.1 },
                    Monomial { p: 0, q: 2, coef: 0.2 },
                    Monomial { p: 3, q: 0, coef: -0.05 },
                ]),
                Director::constant(V3::new(0.1, -0.05, 1.0)),
                Domain::centered(0.5),
            ),
        };
        Self { id, height, director, domain }
    }

    pub fn all() -> Vec<Scenario> {
        ScenarioId::ALL.into_iter().map(Scenario::registered).collect()
    }

    /// Samples the scenario on an `n x n` grid.
    pub fn frame(&self, n: usize) -> Result<ImmersionFrame> {
        build_immersion(&build_grid(self.domain, n, n)?, &self.height, &self.director)
    }
}
