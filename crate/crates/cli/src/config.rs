//! Experiment configuration: TOML with `[problem]`, `[grid]`, `[solver]` and
//! `[run]` sections. Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use nkirchhoff::grid::{Grid, Shape, Weight, WeightProfile};
use nkirchhoff::io;
use nkirchhoff::problem::ProblemSpec;
use nkirchhoff::scalar::{self, ExponentSet, GenericNonlinearity, KirchhoffSpec};
use nkirchhoff::solvers::SolveConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// `λh|u|^{q−1}u + u|u|^p e^{|u|^β}`
    ConcaveConvex,
    /// `h(x,t) e^{|t|^{n/(n−1)}}` with `h = t^power`
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KirchhoffConfig {
    Affine { a: f64, b: f64 },
    Constant { m0: f64 },
    Power { m0: f64, a: f64, alpha: f64 },
    Log1p,
}

impl KirchhoffConfig {
    pub fn build(&self) -> nkirchhoff::Result<KirchhoffSpec> {
        match *self {
            KirchhoffConfig::Affine { a, b } => KirchhoffSpec::affine(a, b),
            KirchhoffConfig::Constant { m0 } => KirchhoffSpec::constant(m0),
            KirchhoffConfig::Power { m0, a, alpha } => KirchhoffSpec::power(m0, a, alpha),
            KirchhoffConfig::Log1p => Ok(KirchhoffSpec::log1p()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Builtin weight name: one, sin2pix, gaussian-bump, indicator.
    pub weight: String,
    /// Nodal CSV for `h`; overrides `weight` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_csv: Option<PathBuf>,
    /// Exponent `r` of `h(x,t) = t^r` for the generic problem.
    pub generic_power: f64,
    pub kirchhoff: KirchhoffConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            kind: ProblemKind::ConcaveConvex,
            p: 4.0,
            q: 0.5,
            beta: 2.0,
            lambda: 1e-3,
            weight: "one".into(),
            weight_csv: None,
            generic_power: 4.0,
            kirchhoff: KirchhoffConfig::Affine { a: 1.0, b: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub shape: String,
    pub resolution: usize,
    /// Optional; must match the shape when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { shape: "unit-square".into(), resolution: 64, n: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    /// λ values for `sweep`.
    pub lambdas: Vec<f64>,
    /// Moser indices `k` for `moser`.
    pub moser_k: Vec<usize>,
    /// `α` of the schedule `δ_k = (log k)^{−1/(αn)}`.
    pub moser_alpha_exponent: f64,
    /// Trudinger–Moser probe exponents as multiples of `α_n`.
    pub tm_factors: Vec<f64>,
    /// Seed of the random direction for `fibering`.
    pub direction_seed: u64,
    pub psi_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: PathBuf::from("out"),
            lambdas: vec![1e-4, 3.1622776601683795e-4, 1e-3, 3.1622776601683795e-3, 1e-2],
            moser_k: vec![8, 16, 32],
            moser_alpha_exponent: 3.0,
            tm_factors: vec![0.8, 1.2],
            direction_seed: 0,
            psi_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default)]
    pub run: RunConfig,
}

/// Everything derived from the parameters that is echoed at startup.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedConstants {
    pub n: usize,
    pub alpha_n: f64,
    pub k: Option<f64>,
    pub k_prime: Option<f64>,
    pub gamma: Option<f64>,
    pub weight_l_norm: Option<f64>,
    pub c_pqn: Option<f64>,
    pub critical: Option<bool>,
    pub critical_level: Option<f64>,
    pub mountain_pass_bound: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = cfg;
        if let Some(csv) = &cfg.problem.weight_csv {
            if csv.is_relative() {
                cfg.problem.weight_csv = Some(base.join(csv));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The resolved configuration as loadable TOML.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn shape(&self) -> Result<Shape> {
        Ok(self.grid.shape.parse::<Shape>()?)
    }

    pub fn n(&self) -> Result<usize> {
        Ok(self.shape()?.dim())
    }

    pub fn exps(&self) -> Result<ExponentSet> {
        let p = &self.problem;
        Ok(ExponentSet::new(self.n()?, p.p, p.q, p.beta, p.lambda)?)
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.shape()?;
        if let Some(n) = self.grid.n {
            if n != shape.dim() {
                bail!("grid.n = {n} does not match shape {shape} (dimension {})", shape.dim());
            }
        }
        if self.grid.resolution < 2 {
            bail!("grid.resolution must be at least 2");
        }
        if self.problem.kind == ProblemKind::ConcaveConvex {
            self.exps().context("problem parameters violate the standing assumptions")?;
            if self.problem.weight_csv.is_none() {
                self.problem.weight.parse::<WeightProfile>()?;
            }
        } else if !(self.problem.generic_power >= 2.0 * shape.dim() as f64) {
            bail!("generic_power >= 2n violated (growth condition on h)");
        }
        self.problem.kirchhoff.build()?;
        self.solver.validate()?;
        if !(self.run.moser_alpha_exponent > shape.dim() as f64 / (shape.dim() as f64 - 1.0)) {
            bail!("run.moser_alpha_exponent > n/(n-1) violated");
        }
        if self.run.lambdas.iter().any(|l| !(*l > 0.0)) {
            bail!("run.lambdas must be positive");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Grid::new(self.shape()?, self.grid.resolution)?)
    }

    fn weight(&self, grid: &Arc<Grid>, exps: &ExponentSet) -> Result<Weight> {
        match &self.problem.weight_csv {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("cannot read weight CSV {}", path.display()))?;
                let (wgrid, values) = io::read_nodal_csv(&text)?;
                if wgrid.shape() != grid.shape() || wgrid.resolution() != grid.resolution() {
                    bail!("weight CSV is on {} at resolution {}, the grid is {} at {}", wgrid.shape(), wgrid.resolution(), grid.shape(), grid.resolution());
                }
                Ok(Weight::new(grid, values, exps.gamma(), exps.kprime())?)
            }
            None => Ok(Weight::from_profile(grid, self.problem.weight.parse()?, exps.gamma(), exps.kprime())?),
        }
    }

    /// Builds the problem on a fresh grid.
    pub fn spec(&self) -> Result<ProblemSpec> {
        let grid = self.grid()?;
        self.spec_on(&grid)
    }

    pub fn spec_on(&self, grid: &Arc<Grid>) -> Result<ProblemSpec> {
        let kirchhoff = self.problem.kirchhoff.build()?;
        match self.problem.kind {
            ProblemKind::ConcaveConvex => {
                let exps = self.exps()?;
                let weight = self.weight(grid, &exps)?;
                Ok(ProblemSpec::concave_convex(grid, exps, kirchhoff, weight)?)
            }
            ProblemKind::Generic => {
                let nl = GenericNonlinearity::power(grid.dim(), self.problem.generic_power)?;
                Ok(ProblemSpec::generic(grid, kirchhoff, nl)?)
            }
        }
    }

    /// Constants derived from the parameters. The weight norm needs the grid
    /// and is computed only when `with_grid` is set.
    pub fn derived(&self, with_grid: bool) -> Result<DerivedConstants> {
        let n = self.n()?;
        let kirchhoff = self.problem.kirchhoff.build()?;
        let mut d = DerivedConstants {
            n,
            alpha_n: scalar::alpha_n(n),
            k: None,
            k_prime: None,
            gamma: None,
            weight_l_norm: None,
            c_pqn: None,
            critical: None,
            critical_level: None,
            mountain_pass_bound: scalar::mountain_pass_bound(&kirchhoff, n).ok(),
        };
        if self.problem.kind == ProblemKind::ConcaveConvex {
            let e = self.exps()?;
            d.k = Some(e.k());
            d.k_prime = Some(e.kprime());
            d.gamma = Some(e.gamma());
            d.critical = Some(e.is_critical());
            if with_grid {
                let grid = self.grid()?;
                let l = self.weight(&grid, &e)?.l_norm();
                d.weight_l_norm = Some(l);
                d.c_pqn = Some(scalar::energy_bound_constant(&e, l));
                if e.is_critical() {
                    d.critical_level = Some(scalar::critical_level_threshold(&e, kirchhoff.m0(), l));
                }
            }
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml("[problem]\nkind = \"concave-convex\"\np = 4.0\nq = 0.5\nbeta = 2.0\nlambda = 0.001\nweight = \"one\"\ngeneric_power = 4.0\nkirchhoff = { kind = \"affine\", a = 1.0, b = 1.0 }\nqq = 1\n");
        assert!(format!("{:#}", err.unwrap_err()).contains("unknown field"));
        assert!(ExperimentConfig::from_toml("[solver]\nmax_iter = 3\n").is_err());
    }

    #[test]
    fn violated_assumption_is_named() {
        let mut cfg = ExperimentConfig::default();
        cfg.problem.q = 1.5;
        let msg = format!("{:#}", cfg.validate().unwrap_err());
        assert!(msg.contains("q < n-1 violated"), "{msg}");
        cfg.problem.q = 0.5;
        cfg.problem.p = 2.0;
        assert!(format!("{:#}", cfg.validate().unwrap_err()).contains("2n-1 < p+1 violated"));
    }

    #[test]
    fn derived_constants_for_the_default_problem() {
        let d = ExperimentConfig::default().derived(true).unwrap();
        assert!((d.k.unwrap() - 16.0 / 3.0).abs() < 1e-12);
        assert!((d.k_prime.unwrap() - 16.0 / 13.0).abs() < 1e-12);
        assert!((d.gamma.unwrap() - 4.0).abs() < 1e-12);
        assert!((d.alpha_n - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!(d.c_pqn.unwrap() > 0.0 && d.c_pqn.unwrap().is_finite());
    }
}
