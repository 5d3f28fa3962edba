//! Experiment configuration: JSON schema, defaults and cross-field validation.

use std::path::{Path, PathBuf};

use hsl_core::dynamics::{
    BisectionOptions, EquationParams, PicardParams, Potential, DEFAULT_HERMITE_DEGREE,
};
use hsl_core::ensemble::EnsembleConfig;
use hsl_core::hartree::make_kernel;
use hsl_core::propagators::DispersionParams;
use hsl_core::spaces::{build_partition, exponent_serde, NormKind, NormSpec};
use hsl_core::verify::{Suite, SuiteConfig};
use hsl_core::Grid;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Names accepted by the `experiment` key.
pub const EXPERIMENTS: [&str; 13] = [
    "evolve",
    "picard",
    "norms",
    "verify",
    "strichartz",
    "witness",
    "local-existence",
    "isometry",
    "spaces",
    "propagators",
    "trilinear",
    "dynamics",
    "all",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { d: 1, n: 512, l: 16.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialGrid {
    d: Option<usize>,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "L")]
    l: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquationSection {
    pub s1: f64,
    pub s2: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub potential: Potential,
    /// Highest Hermite degree per axis for the harmonic flow.
    pub hermite_degree: usize,
}

impl Default for EquationSection {
    fn default() -> Self {
        Self {
            s1: 0.75,
            s2: 1.0,
            gamma: 0.5,
            lambda: 1.0,
            potential: Potential::None,
            hermite_degree: DEFAULT_HERMITE_DEGREE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub quad_nodes: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Snapshot cadence of `evolve` in steps; about 100 snapshots when absent.
    pub record_every: Option<usize>,
    /// Norm of the Picard metric, taken together with `L^2`.
    pub metric: NormSpec,
}

impl Default for TimeSection {
    fn default() -> Self {
        let p = PicardParams::default();
        Self {
            horizon: 1.0,
            dt: 1e-3,
            quad_nodes: p.quad_nodes,
            max_iter: p.max_iter,
            tol: p.tol,
            record_every: None,
            metric: p.metric,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub s: f64,
    #[serde(with = "exponent_serde")]
    pub q: f64,
}

/// Initial datum of the dynamics experiments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    /// Ensemble member used when no file is given.
    pub member: u64,
    /// Rescale to `||u0||_X = norm`, `X` the Picard metric intersected with `L^2`.
    pub norm: Option<f64>,
    /// Field snapshot to start from instead of an ensemble member.
    pub file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessSection {
    /// Number of grids `(2^k N, 2^k L)`, `k = 0..levels`.
    pub levels: usize,
}

impl Default for WitnessSection {
    fn default() -> Self {
        Self { levels: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalExistenceSection {
    pub m: Vec<f64>,
    pub floor: f64,
    pub ceiling: f64,
    pub iterations: usize,
}

impl Default for LocalExistenceSection {
    fn default() -> Self {
        let b = BisectionOptions::default();
        Self {
            m: vec![0.5, 1.0, 2.0, 4.0],
            floor: b.floor,
            ceiling: b.ceiling,
            iterations: b.iterations,
        }
    }
}

impl LocalExistenceSection {
    pub fn bisection(&self) -> BisectionOptions {
        BisectionOptions {
            floor: self.floor,
            ceiling: self.ceiling,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    grid: Option<PartialGrid>,
    #[serde(default)]
    d: Option<usize>,
    #[serde(default, rename = "N")]
    n: Option<usize>,
    #[serde(default, rename = "L")]
    l: Option<f64>,
    #[serde(default)]
    equation: EquationSection,
    #[serde(default)]
    time: TimeSection,
    #[serde(default)]
    norms: Option<Vec<NormSpec>>,
    #[serde(default)]
    pairs: Option<Vec<PairSpec>>,
    #[serde(default)]
    ensemble: EnsembleConfig,
    #[serde(default)]
    experiment: Option<String>,
    #[serde(default)]
    initial: InitialSection,
    #[serde(default)]
    witness: WitnessSection,
    #[serde(default)]
    local_existence: LocalExistenceSection,
}

/// A validated configuration with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub equation: EquationSection,
    pub time: TimeSection,
    pub norms: Option<Vec<NormSpec>>,
    pub pairs: Option<Vec<PairSpec>>,
    pub ensemble: EnsembleConfig,
    pub experiment: Option<String>,
    pub initial: InitialSection,
    pub witness: WitnessSection,
    pub local_existence: LocalExistenceSection,
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn pick<T: PartialEq + std::fmt::Debug + Copy>(key: &str, nested: Option<T>, top: Option<T>, default: T) -> Result<T, CliError> {
    match (nested, top) {
        (Some(a), Some(b)) if a != b => Err(config_err(
            key,
            format!("given as grid.{key} = {a:?} and as top-level {key} = {b:?}"),
        )),
        (Some(a), _) | (None, Some(a)) => Ok(a),
        (None, None) => Ok(default),
    }
}

/// Parses JSON text. Schema errors name the offending field path.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "config".to_string() } else { path };
        CliError::Config(format!("{path}: {}", e.inner()))
    })?;
    let nested = raw.grid.unwrap_or_default();
    let def = GridSection::default();
    let grid = GridSection {
        d: pick("d", nested.d, raw.d, def.d)?,
        n: pick("N", nested.n, raw.n, def.n)?,
        l: pick("L", nested.l, raw.l, def.l)?,
    };
    let cfg = ExperimentConfig {
        grid,
        equation: raw.equation,
        time: raw.time,
        norms: raw.norms,
        pairs: raw.pairs,
        ensemble: raw.ensemble,
        experiment: raw.experiment,
        initial: raw.initial,
        witness: raw.witness,
        local_existence: raw.local_existence,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let grid = self.make_grid()?;
        let d = grid.dim() as f64;
        let eq = &self.equation;
        if !(eq.gamma > 0.0 && eq.gamma < d) {
            return Err(config_err(
                "equation.gamma",
                format!("gamma = {} violates 0 < γ < d with d = {}", eq.gamma, grid.dim()),
            ));
        }
        if !eq.lambda.is_finite() {
            return Err(config_err("equation.lambda", format!("lambda = {}", eq.lambda)));
        }
        if eq.potential == Potential::Harmonic && (eq.s1 != 1.0 || eq.s2 != 1.0) {
            return Err(config_err(
                "equation.potential",
                format!(
                    "the harmonic potential gives the (−Δ+|x|²)u form, which needs s1 = s2 = 1; got s1 = {}, s2 = {}",
                    eq.s1, eq.s2
                ),
            ));
        }
        self.dispersion()
            .validate_for_dynamics()
            .map_err(|e| config_err("equation", e))?;
        if eq.hermite_degree == 0 {
            return Err(config_err("equation.hermite_degree", "must be positive"));
        }

        let t = &self.time;
        if !(t.horizon > 0.0 && t.horizon.is_finite()) {
            return Err(config_err("time.T", format!("T = {} must be positive", t.horizon)));
        }
        if !(t.dt > 0.0 && t.dt <= t.horizon) {
            return Err(config_err("time.dt", format!("dt = {} must lie in (0, T]", t.dt)));
        }
        let steps = (t.horizon / t.dt).round();
        if (steps * t.dt - t.horizon).abs() > 1e-12 * t.horizon.max(1.0) {
            return Err(config_err("time.dt", format!("dt = {} does not divide T = {}", t.dt, t.horizon)));
        }
        if t.quad_nodes == 0 {
            return Err(config_err("time.quad_nodes", "must be positive"));
        }
        if t.max_iter == 0 {
            return Err(config_err("time.max_iter", "must be positive"));
        }
        if !(t.tol > 0.0) {
            return Err(config_err("time.tol", format!("tol = {} must be positive", t.tol)));
        }
        if t.record_every == Some(0) {
            return Err(config_err("time.record_every", "must be positive"));
        }
        t.metric.validate().map_err(|e| config_err("time.metric", e))?;

        for (i, spec) in self.norms.iter().flatten().chain([&t.metric]).enumerate() {
            let path = if Some(i) == self.norms.as_ref().map(Vec::len) {
                "time.metric".to_string()
            } else {
                format!("norms[{i}]")
            };
            spec.validate().map_err(|e| config_err(&path, e))?;
            if spec.kind == NormKind::ModulationDecomp {
                build_partition(&grid, grid.max_partition_radius()).map_err(|e| config_err(&path, e))?;
            }
        }
        if self.ensemble.count == 0 {
            return Err(config_err("ensemble.count", "must be positive"));
        }
        if let Some(exp) = &self.experiment {
            if !EXPERIMENTS.contains(&exp.as_str()) {
                return Err(config_err(
                    "experiment",
                    format!("unknown experiment {exp:?}; expected one of {}", EXPERIMENTS.join(", ")),
                ));
            }
        }
        if let Some(m) = self.initial.norm {
            if !(m > 0.0 && m.is_finite()) {
                return Err(config_err("initial.norm", format!("{m} must be positive")));
            }
        }
        if self.witness.levels < 2 {
            return Err(config_err("witness.levels", "at least two grids are needed"));
        }
        let le = &self.local_existence;
        if le.m.is_empty() || le.m.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(config_err("local_existence.m", "needs positive sizes"));
        }
        if !(le.floor > 0.0 && le.floor < le.ceiling && le.ceiling.is_finite()) {
            return Err(config_err(
                "local_existence",
                format!("bisection range [{}, {}] is empty", le.floor, le.ceiling),
            ));
        }
        Ok(())
    }

    pub fn make_grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.grid.d, self.grid.n, self.grid.l).map_err(|e| config_err("grid", e))
    }

    pub fn dispersion(&self) -> DispersionParams {
        match self.equation.potential {
            Potential::None => DispersionParams::new(self.equation.s1, self.equation.s2),
            Potential::Harmonic => DispersionParams::default(),
        }
    }

    pub fn picard(&self) -> PicardParams {
        PicardParams {
            max_iter: self.time.max_iter,
            tol: self.time.tol,
            quad_nodes: self.time.quad_nodes,
            metric: self.time.metric,
        }
    }

    pub fn steps(&self) -> usize {
        (self.time.horizon / self.time.dt).round() as usize
    }

    pub fn record_every(&self) -> usize {
        self.time.record_every.unwrap_or_else(|| self.steps().div_ceil(100).max(1))
    }

    pub fn equation_params(&self, grid: &Grid) -> Result<EquationParams, CliError> {
        let kernel = make_kernel(grid, self.equation.lambda, self.equation.gamma)?;
        Ok(EquationParams::with_degree(
            self.dispersion(),
            kernel,
            self.equation.potential,
            self.time.horizon,
            self.time.dt,
            self.equation.hermite_degree,
        )?
        .with_picard(self.picard())
        .with_record_every(self.record_every()))
    }

    /// The ensemble, adapted to the oscillator when the potential is harmonic
    /// and no widths were given.
    pub fn ensemble_for_flow(&self) -> EnsembleConfig {
        if self.equation.potential == Potential::Harmonic && self.ensemble.widths.is_none() {
            self.ensemble.oscillator_adapted()
        } else {
            self.ensemble
        }
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            d: self.grid.d,
            n: self.grid.n,
            l: self.grid.l,
            ensemble: self.ensemble,
            gamma: self.equation.gamma,
            lambda: self.equation.lambda,
            s1: self.equation.s1,
            s2: self.equation.s2,
            horizon: self.time.horizon,
            quad_nodes: self.time.quad_nodes,
        }
    }

    /// The suite named by `experiment`, if it names one.
    pub fn suite(&self) -> Option<Suite> {
        match self.experiment.as_deref() {
            Some("isometry") => Some(Suite::Propagators),
            Some("verify") | None => None,
            Some(name) => Suite::parse(name).ok(),
        }
    }
}
