//! Run configuration: TOML or JSON, every section optional except the seed.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gw::OffspringDistribution;
use crate::marginals::{PoissonTreeParams, ReducedDiscreteParams, ReducedExactParams, StableMarginalParams};
use crate::mechanism::{BranchingMechanism, LevyAtom, StableTerm};
use crate::scaling::{ContourGapParams, ExtinctionParams, FellerParams, HolderParams, RayKnightParams};
use crate::snake::{SnakeExitParams, SnakeLaplaceParams, SpatialKernel};

/// `geometric`, `stable:<gamma>` or `custom:<csv path>`.
#[derive(Debug, Clone, PartialEq)]
pub enum OffspringSpec {
    Geometric,
    Stable(f64),
    Custom(PathBuf),
}

impl OffspringSpec {
    pub fn build(&self) -> Result<OffspringDistribution> {
        match self {
            Self::Geometric => Ok(OffspringDistribution::geometric_half()),
            Self::Stable(g) => OffspringDistribution::stable(*g),
            Self::Custom(path) => OffspringDistribution::custom_from_csv(&std::fs::read_to_string(path)?),
        }
    }
}

impl fmt::Display for OffspringSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Geometric => f.write_str("geometric"),
            Self::Stable(g) => write!(f, "stable:{g}"),
            Self::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

impl FromStr for OffspringSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "geometric" {
            return Ok(Self::Geometric);
        }
        if let Some(g) = s.strip_prefix("stable:") {
            let g: f64 = g
                .parse()
                .map_err(|_| Error::config("offspring", format!("bad stable index `{g}`")))?;
            return Ok(Self::Stable(g));
        }
        if let Some(p) = s.strip_prefix("custom:") {
            return Ok(Self::Custom(PathBuf::from(p)));
        }
        Err(Error::config(
            "offspring",
            format!("expected geometric, stable:<gamma> or custom:<path>, got `{s}`"),
        ))
    }
}

impl Serialize for OffspringSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OffspringSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MechanismSpec {
    Quadratic {
        #[serde(default = "one")]
        beta: f64,
    },
    Stable {
        #[serde(default = "one")]
        c: f64,
        gamma: f64,
    },
    Custom {
        #[serde(default)]
        alpha: f64,
        #[serde(default)]
        beta: f64,
        #[serde(default)]
        atoms: Vec<LevyAtom>,
        #[serde(default)]
        stable: Option<StableTerm>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for MechanismSpec {
    fn default() -> Self {
        Self::Quadratic { beta: 1.0 }
    }
}

impl MechanismSpec {
    pub fn build(&self) -> Result<BranchingMechanism> {
        match self {
            Self::Quadratic { beta } => BranchingMechanism::quadratic(*beta),
            Self::Stable { c, gamma } => BranchingMechanism::stable(*c, *gamma),
            Self::Custom {
                alpha,
                beta,
                atoms,
                stable,
            } => BranchingMechanism::new(*alpha, *beta, atoms.clone(), *stable),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    #[default]
    Gaussian,
    Lattice,
}

impl KernelSpec {
    pub fn build(self) -> SpatialKernel {
        match self {
            Self::Gaussian => SpatialKernel::Gaussian,
            Self::Lattice => SpatialKernel::Lattice,
        }
    }
}

/// One experiment run. Experiment sections hold the numeric parameters
/// and tolerances; omitted sections take their defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,
    /// Worker threads; `None` uses all cores. Results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Report destination (JSON).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Raw dump destination (CSV), where the experiment has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default = "default_offspring")]
    pub offspring: OffspringSpec,
    /// Extra mechanism for the Poisson-tree experiment and `csbp eval`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<MechanismSpec>,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub feller_height: FellerParams,
    #[serde(default)]
    pub ray_knight: RayKnightParams,
    #[serde(default)]
    pub extinction: ExtinctionParams,
    #[serde(default)]
    pub holder: HolderParams,
    #[serde(default)]
    pub contour_gap: ContourGapParams,
    #[serde(default)]
    pub reduced_discrete: ReducedDiscreteParams,
    #[serde(default)]
    pub stable_marginals: StableMarginalParams,
    #[serde(default)]
    pub poisson_tree: PoissonTreeParams,
    #[serde(default)]
    pub reduced_exact: ReducedExactParams,
    #[serde(default)]
    pub snake_laplace: SnakeLaplaceParams,
    #[serde(default)]
    pub snake_exit: SnakeExitParams,
}

fn default_offspring() -> OffspringSpec {
    OffspringSpec::Geometric
}

pub const EXPERIMENTS: &[&str] = &[
    "feller-height",
    "ray-knight",
    "extinction",
    "holder",
    "contour-gap",
    "reduced-discrete",
    "stable-marginals",
    "poisson-tree",
    "reduced-exact",
    "snake-laplace",
    "snake-exit",
    "snake-1d",
];

impl RunConfig {
    pub fn new(experiment: impl Into<String>, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            workers: None,
            out: None,
            csv: None,
            offspring: OffspringSpec::Geometric,
            mechanism: None,
            kernel: KernelSpec::Gaussian,
            feller_height: Default::default(),
            ray_knight: Default::default(),
            extinction: Default::default(),
            holder: Default::default(),
            contour_gap: Default::default(),
            reduced_discrete: Default::default(),
            stable_marginals: Default::default(),
            poisson_tree: Default::default(),
            reduced_exact: Default::default(),
            snake_laplace: Default::default(),
            snake_exit: Default::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("*", e.to_string()))
    }

    /// TOML, or JSON for a `.json` extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let c: Self = serde_json::from_str(&text)?;
            c.validate()?;
            Ok(c)
        } else {
            Self::from_toml(&text)
        }
    }

    /// Field-level checks that can fail before any sampling starts.
    pub fn validate(&self) -> Result<()> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(Error::UnknownExperiment(self.experiment.clone()));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if let OffspringSpec::Stable(g) = self.offspring {
            if !(g > 1.0 && g < 2.0) {
                return Err(Error::config("offspring", format!("stable index {g} outside (1, 2)")));
            }
        }
        let positive = [
            ("feller_height.samples", self.feller_height.samples as f64),
            ("feller_height.p", self.feller_height.p as f64),
            ("feller_height.tolerance", self.feller_height.tolerance),
            ("ray_knight.p", self.ray_knight.p as f64),
            ("ray_knight.reps", self.ray_knight.reps as f64),
            ("extinction.p", self.extinction.p as f64),
            ("extinction.tolerance", self.extinction.tolerance),
            ("holder.reps", self.holder.reps as f64),
            ("holder.tolerance", self.holder.tolerance),
            ("contour_gap.samples", self.contour_gap.samples as f64),
            ("reduced_discrete.p", self.reduced_discrete.p as f64),
            ("reduced_discrete.samples", self.reduced_discrete.samples as f64),
            ("stable_marginals.reps", self.stable_marginals.reps as f64),
            ("stable_marginals.tree_size", self.stable_marginals.tree_size as f64),
            ("reduced_exact.laplace_reps", self.reduced_exact.laplace_reps as f64),
            ("snake_laplace.p", self.snake_laplace.p as f64),
            ("snake_laplace.reps", self.snake_laplace.reps as f64),
            ("snake_exit.p", self.snake_exit.p as f64),
            ("snake_exit.reps", self.snake_exit.reps as f64),
            ("snake_exit.half_width", self.snake_exit.half_width),
        ];
        for (field, v) in positive {
            if !(v > 0.0) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.snake_exit.x.abs() >= self.snake_exit.half_width {
            return Err(Error::config("snake_exit.x", "start must lie inside the interval"));
        }
        if !(self.stable_marginals.significance > 0.0 && self.stable_marginals.significance < 1.0) {
            return Err(Error::config("stable_marginals.significance", "must lie in (0, 1)"));
        }
        Ok(())
    }
}
