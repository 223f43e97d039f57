//! Run configuration: a TOML file with `[geometry]`, `[model]` and
//! `[budget]` sections, every key optional.

use std::path::{Path, PathBuf};

use euclid_core::interaction::{InteractionPolynomial, Method};
use euclid_core::lattice::{Boundary, LatticeGeometry};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub geometry: GeometryBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub budget: BudgetBlock,
}

fn default_method() -> Method {
    Method::Reweight
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryBlock {
    pub dim: usize,
    pub extents: Vec<usize>,
    pub spacing_physical_units: f64,
    pub boundary: Boundary,
}

impl Default for GeometryBlock {
    fn default() -> Self {
        GeometryBlock { dim: 2, extents: vec![4, 4], spacing_physical_units: 1.0, boundary: Boundary::Periodic }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub mass_physical_units: f64,
    /// Coefficients of `P`, constant term first; empty means `P ≡ 0`.
    pub polynomial: Vec<f64>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock { mass_physical_units: 1.0, polynomial: Vec::new() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetBlock {
    pub samples: usize,
    pub sweeps: usize,
    pub chains: usize,
    pub therm_frac: f64,
    pub quadrature_nodes: usize,
    /// Zero disables checkpoints.
    pub checkpoint_every: u64,
}

impl Default for BudgetBlock {
    fn default() -> Self {
        BudgetBlock {
            samples: 100_000,
            sweeps: 10_000,
            chains: 4,
            therm_frac: 0.2,
            quadrature_nodes: 16,
            checkpoint_every: 0,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            output: None,
            method: default_method(),
            geometry: GeometryBlock::default(),
            model: ModelBlock::default(),
            budget: BudgetBlock::default(),
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// Every check that can fail before compute starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = &self.budget;
        for (field, v) in [
            ("budget.samples", b.samples),
            ("budget.sweeps", b.sweeps),
            ("budget.chains", b.chains),
            ("budget.quadrature_nodes", b.quadrature_nodes),
        ] {
            if v == 0 {
                return Err(ConfigError(format!("{field} must be positive")));
            }
        }
        if !(b.therm_frac > 0.0 && b.therm_frac < 1.0) {
            return Err(ConfigError(format!("budget.therm_frac must lie in (0, 1), got {}", b.therm_frac)));
        }
        if !(self.model.mass_physical_units > 0.0 && self.model.mass_physical_units.is_finite()) {
            return Err(ConfigError(format!(
                "model.mass_physical_units must be positive, got {}",
                self.model.mass_physical_units
            )));
        }
        self.polynomial().map_err(|e| ConfigError(format!("model.polynomial: {e}")))?;
        self.geometry().map_err(|e| ConfigError(format!("geometry: {e}")))?;
        Ok(())
    }

    pub fn polynomial(&self) -> euclid_core::Result<InteractionPolynomial> {
        if self.model.polynomial.is_empty() {
            Ok(InteractionPolynomial::zero())
        } else {
            InteractionPolynomial::new(self.model.polynomial.clone())
        }
    }

    pub fn geometry(&self) -> euclid_core::Result<LatticeGeometry> {
        let g = &self.geometry;
        LatticeGeometry::new(g.dim, &g.extents, g.spacing_physical_units, g.boundary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file_round_trip() {
        let text = r#"
seed = 9
method = "mcmc"

[geometry]
dim = 1
extents = [6]
spacing_physical_units = 0.5
boundary = "dirichlet"

[model]
mass_physical_units = 1.5
polynomial = [0, 0, 0, 0, 0.1]

[budget]
samples = 1000
sweeps = 2000
chains = 2
therm_frac = 0.25
quadrature_nodes = 12
checkpoint_every = 100
"#;
        let c = RunConfig::parse(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.method, Method::Mcmc);
        assert_eq!(c.geometry().unwrap().num_sites(), 6);
        assert_eq!(RunConfig::parse(&toml::to_string(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn empty_file_is_the_default() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn diagnostics_name_the_line_or_field() {
        let e = RunConfig::parse("[budget]\nsampels = 3\n").unwrap_err();
        assert!(e.0.contains("line 2") && e.0.contains("sampels"), "{e}");
        let e = RunConfig::parse("[budget]\nsamples = \"many\"\n").unwrap_err();
        assert!(e.0.contains("line 2"), "{e}");
        let c = RunConfig::parse("[budget]\nsamples = 0\n").unwrap();
        assert!(c.validate().unwrap_err().0.contains("budget.samples"));
        let c = RunConfig::parse("[model]\npolynomial = [0, 0, 0, -1]\n").unwrap();
        assert!(c.validate().unwrap_err().0.contains("model.polynomial"));
        let c = RunConfig::parse("[geometry]\ndim = 3\nextents = [2, 2, 2]\n").unwrap();
        assert!(c.validate().unwrap_err().0.contains("geometry"));
    }
}
