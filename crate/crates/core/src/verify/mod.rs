//! Estimate checks as ensemble ratio tests, bundled into named suites.
//!
//! A check measures a ratio over a seeded ensemble; a suite runs each check on
//! the configured grid and on its refinement `N -> 2N` and reports the
//! relative drift of the maximum.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::dynamics::{
    admissible_pair, picard_solve, solution_norm, splitstep_evolve, strichartz_experiment,
    AdmissiblePair, EquationParams, PicardParams, Potential,
};
use crate::ensemble::{generate, member, member_rng, EnsembleConfig};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SpectralField, C64};
use crate::hartree::{
    estimate_trilinear_constants, make_kernel, riesz_pairing, riesz_pairing_direct, Variant,
};
use crate::propagators::{
    build_hermite_basis, check_modulation_growth, dispersion, general_multiplier_evolve,
    DispersionParams,
};
use crate::spaces::{
    amalgam_norm, amalgam_norm_spectral, build_partition, fourier_lebesgue_norm, lebesgue_norm,
    modulation_norm_decomp, modulation_norm_stft, oscillator_window, spectral_lebesgue_norm,
    witness_function, BoxNorms, NormKind, NormSpec,
};

/// Tolerance for identities that hold exactly on the lattice.
pub const EXACT_TOL: f64 = 1e-10;
/// Largest accepted relative change of a measured maximum under `N -> 2N`.
pub const DRIFT_TOL: f64 = 0.10;

/// Outcome of one check on one grid.
#[derive(Clone, Debug, Serialize)]
pub struct Measure {
    pub max_ratio: f64,
    /// `max |ratio - 1|`, for checks whose constant is exactly one.
    pub deviation: Option<f64>,
    pub ratios: Vec<f64>,
}

impl Measure {
    fn bounded(ratios: Vec<f64>) -> Self {
        Self {
            max_ratio: ratios.iter().copied().fold(0.0, f64::max),
            deviation: None,
            ratios,
        }
    }

    fn exact(ratios: Vec<f64>) -> Self {
        let deviation = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        Self {
            deviation: Some(deviation),
            ..Self::bounded(ratios)
        }
    }

    fn finite(&self) -> bool {
        self.ratios.iter().all(|r| r.is_finite())
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn nonempty(ensemble: &[Field]) -> Result<()> {
    if ensemble.is_empty() {
        Err(Error::Empty("ensemble"))
    } else {
        Ok(())
    }
}

/// `||U(t) f||_{w^{p,q}_s} / ||f||_{w^{p,q}_s}` for `U(t) = F^{-1} e^{i t sigma} F`
/// over ensemble, times and specs.
pub fn check_isometry_suite(
    ensemble: &[Field],
    specs: &[NormSpec],
    t_list: &[f64],
    sigma: &SpectralField,
) -> Result<Measure> {
    nonempty(ensemble)?;
    for spec in specs {
        spec.validate()?;
        if spec.kind != NormKind::FourierAmalgam {
            return Err(Error::Hypothesis(format!(
                "the isometry is stated for Fourier amalgam norms, got {}",
                spec.label()
            )));
        }
    }
    let per_member = ensemble
        .par_iter()
        .map(|f| {
            let norms = |spec_f: &SpectralField| -> Result<Vec<f64>> {
                specs
                    .iter()
                    .map(|s| amalgam_norm_spectral(spec_f, s.p, s.q, s.s))
                    .collect()
            };
            let before = norms(&f.forward())?;
            let mut out = Vec::with_capacity(t_list.len() * specs.len());
            for &t in t_list {
                let after = norms(&general_multiplier_evolve(f, sigma, t)?.forward())?;
                // a zero field maps to zero: ratio 1 by convention
                out.extend(after.iter().zip(&before).map(|(a, b)| if *b == 0.0 { 1.0 } else { a / b }));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Measure::exact(per_member.concat()))
}

fn harmonic_index(p1: f64, p2: f64, name: &str) -> Result<f64> {
    let inv = 1.0 / p1 + 1.0 / p2 - 1.0;
    if !(0.0..=1.0).contains(&inv) {
        return Err(Error::Hypothesis(format!(
            "1/{name}1 + 1/{name}2 = 1 + 1/{name} has no solution {name} in [1, inf] for {name}1 = {p1}, {name}2 = {p2}"
        )));
    }
    Ok(if inv == 0.0 { f64::INFINITY } else { 1.0 / inv })
}

/// `||fg||_{w^{p,q}} / (||f||_{w^{p1,q1}} ||g||_{w^{p2,q2}})` over consecutive
/// pairs, with `1/p1 + 1/p2 = 1 + 1/p` and `1/q1 + 1/q2 = 1 + 1/q`.
pub fn check_product_law(ensemble: &[Field], (p1, q1): (f64, f64), (p2, q2): (f64, f64)) -> Result<Measure> {
    nonempty(ensemble)?;
    let p = harmonic_index(p1, p2, "p")?;
    let q = harmonic_index(q1, q2, "q")?;
    let n = ensemble.len();
    let ratios = (0..n)
        .into_par_iter()
        .map(|i| {
            let (f, g) = (&ensemble[i], &ensemble[(i + 1) % n]);
            let num = amalgam_norm(&f.mul(g)?, p, q, 0.0)?;
            Ok(ratio(num, amalgam_norm(f, p1, q1, 0.0)? * amalgam_norm(g, p2, q2, 0.0)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Measure::bounded(ratios))
}

/// `||fg||_{M^{p,q}} / (||f||_{FL^1} ||g||_{M^{p,q}})`.
pub fn check_modulation_module(ensemble: &[Field], p: f64, q: f64) -> Result<Measure> {
    nonempty(ensemble)?;
    let grid = ensemble[0].grid();
    let part = build_partition(grid, grid.max_partition_radius())?;
    let n = ensemble.len();
    let ratios = (0..n)
        .into_par_iter()
        .map(|i| {
            let (f, g) = (&ensemble[i], &ensemble[(i + 1) % n]);
            let num = modulation_norm_decomp(&f.mul(g)?, p, q, 0.0, &part)?;
            let den = fourier_lebesgue_norm(f, 1.0)? * modulation_norm_decomp(g, p, q, 0.0, &part)?;
            Ok(ratio(num, den))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Measure::bounded(ratios))
}

/// `||f * g||_{w^{p,q}} / (||f||_{FL^inf} ||g||_{w^{p,q}})`, the convolution
/// realized as `F^{-1}(f^ g^)`. The constant is one.
pub fn check_convolution_law(ensemble: &[Field], p: f64, q: f64) -> Result<Measure> {
    nonempty(ensemble)?;
    let n = ensemble.len();
    let ratios = (0..n)
        .into_par_iter()
        .map(|i| {
            let (f, g) = (ensemble[i].forward(), ensemble[(i + 1) % n].forward());
            let num = amalgam_norm_spectral(&f.mul(&g)?, p, q, 0.0)?;
            let den = spectral_lebesgue_norm(&f, f64::INFINITY)? * amalgam_norm_spectral(&g, p, q, 0.0)?;
            Ok(ratio(num, den))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Measure::bounded(ratios))
}

/// `||f||_{w^{p2,q2}} / ||f||_{w^{p1,q1}}` for `p1 >= p2`, `q1 <= q2`.
pub fn check_embedding(ensemble: &[Field], (p1, q1): (f64, f64), (p2, q2): (f64, f64)) -> Result<Measure> {
    nonempty(ensemble)?;
    if !(p1 >= p2) {
        return Err(Error::Hypothesis(format!("p1 >= p2 fails for p1 = {p1}, p2 = {p2}")));
    }
    if !(q1 <= q2) {
        return Err(Error::Hypothesis(format!("q1 <= q2 fails for q1 = {q1}, q2 = {q2}")));
    }
    let ratios = ensemble
        .par_iter()
        .map(|f| {
            let spec = f.forward();
            let from = BoxNorms::compute(&spec, p1)?.combine(q1, 0.0);
            let to = BoxNorms::compute(&spec, p2)?.combine(q2, 0.0);
            Ok(ratio(to, from))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Measure::bounded(ratios))
}

/// Suite parameters. The grid is the coarse one; every check is repeated on
/// the grid with `2N` points per axis and the same `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub ensemble: EnsembleConfig,
    pub gamma: f64,
    pub lambda: f64,
    pub s1: f64,
    pub s2: f64,
    /// Time horizon of the Strichartz and dynamics checks.
    pub horizon: f64,
    pub quad_nodes: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            d: 1,
            n: 512,
            l: 16.0,
            ensemble: EnsembleConfig::default(),
            gamma: 0.5,
            lambda: 1.0,
            s1: 0.75,
            s2: 1.0,
            horizon: 1.0,
            quad_nodes: 64,
        }
    }
}

impl SuiteConfig {
    fn grid(&self, refine: usize) -> Result<Grid> {
        Grid::new(self.d, self.n * refine, self.l)
    }

    fn dispersion(&self) -> DispersionParams {
        DispersionParams::new(self.s1, self.s2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Spaces,
    Propagators,
    Trilinear,
    Strichartz,
    Dynamics,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["spaces", "propagators", "trilinear", "strichartz", "dynamics", "all"];

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "spaces" => Suite::Spaces,
            "propagators" => Suite::Propagators,
            "trilinear" => Suite::Trilinear,
            "strichartz" => Suite::Strichartz,
            "dynamics" => Suite::Dynamics,
            "all" => Suite::All,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown suite {other:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    fn parts(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![
                Suite::Spaces,
                Suite::Propagators,
                Suite::Trilinear,
                Suite::Strichartz,
                Suite::Dynamics,
            ],
            s => vec![s],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Suite::Spaces => "spaces",
            Suite::Propagators => "propagators",
            Suite::Trilinear => "trilinear",
            Suite::Strichartz => "strichartz",
            Suite::Dynamics => "dynamics",
            Suite::All => "all",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridInfo {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub hypothesis: String,
    pub max_ratio: f64,
    /// `max |ratio - 1|` for checks with constant exactly one.
    pub deviation: Option<f64>,
    /// `|max(2N) / max(N) - 1|`.
    pub drift: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub grid: GridInfo,
    pub seed_range: [u64; 2],
    pub config: SuiteConfig,
    pub checks: Vec<CheckReport>,
    pub pass: bool,
}

/// How a check decides pass/fail from its two measurements.
#[derive(Clone, Copy, Debug)]
enum Rule {
    /// `deviation < EXACT_TOL` on both grids.
    Exact,
    /// `max_ratio <= 1 + EXACT_TOL` on both grids.
    AtMostOne,
    /// Finite, positive maximum with drift below `DRIFT_TOL`.
    Stable,
    /// Both maxima below the given bound, drift below `DRIFT_TOL`.
    Below(f64),
    /// Both maxima below the given bound. For error sizes near roundoff,
    /// whose drift carries no information.
    Small(f64),
}

type Probe<'a> = Box<dyn Fn(usize) -> Result<Measure> + Send + Sync + 'a>;

struct Task<'a> {
    name: String,
    hypothesis: String,
    rule: Rule,
    probe: Probe<'a>,
}

impl<'a> Task<'a> {
    fn new(
        name: impl Into<String>,
        hypothesis: impl Into<String>,
        rule: Rule,
        probe: impl Fn(usize) -> Result<Measure> + Send + Sync + 'a,
    ) -> Self {
        Self {
            name: name.into(),
            hypothesis: hypothesis.into(),
            rule,
            probe: Box::new(probe),
        }
    }

    fn run(&self) -> Result<CheckReport> {
        let coarse = (self.probe)(1)?;
        let fine = (self.probe)(2)?;
        let drift = if coarse.max_ratio > 0.0 {
            (fine.max_ratio / coarse.max_ratio - 1.0).abs()
        } else {
            (fine.max_ratio - coarse.max_ratio).abs()
        };
        let stable = drift < DRIFT_TOL && coarse.finite() && fine.finite();
        let pass = match self.rule {
            Rule::Exact => [&coarse, &fine].iter().all(|m| m.deviation.is_some_and(|d| d < EXACT_TOL)),
            Rule::AtMostOne => [&coarse, &fine].iter().all(|m| m.max_ratio <= 1.0 + EXACT_TOL),
            Rule::Stable => stable && coarse.max_ratio > 0.0,
            Rule::Below(bound) => stable && coarse.max_ratio < bound && fine.max_ratio < bound,
            Rule::Small(bound) => coarse.max_ratio < bound && fine.max_ratio < bound,
        };
        let deviation = match (coarse.deviation, fine.deviation) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        Ok(CheckReport {
            name: self.name.clone(),
            hypothesis: self.hypothesis.clone(),
            max_ratio: coarse.max_ratio.max(fine.max_ratio),
            deviation,
            drift: Some(drift),
            pass,
        })
    }
}

fn fmt_exp(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// A real symbol with independent uniform values in `[-50, 50]`, drawn from a
/// stream of its own.
pub fn random_real_symbol(grid: &Grid, seed: u64) -> SpectralField {
    let mut rng = member_rng(seed, u64::MAX);
    let values = (0..grid.len())
        .map(|_| C64::from(rng.random_range(-50.0..=50.0)))
        .collect();
    SpectralField::new(grid, values).expect("finite symbol")
}

struct Cache {
    grids: [Grid; 2],
    members: [Vec<Field>; 2],
}

impl Cache {
    fn new(cfg: &SuiteConfig, ens: &EnsembleConfig) -> Result<Self> {
        let grids = [cfg.grid(1)?, cfg.grid(2)?];
        let members = [generate(&grids[0], ens)?, generate(&grids[1], ens)?];
        Ok(Self { grids, members })
    }

    fn at(&self, refine: usize) -> (&Grid, &[Field]) {
        let k = usize::from(refine == 2);
        (&self.grids[k], &self.members[k])
    }
}

/// Members used by the box-decomposition modulation checks: all of them in
/// `d = 1`, the first eight otherwise (each norm costs one transform per box).
fn heavy<'f>(cfg: &SuiteConfig, ens: &'f [Field]) -> &'f [Field] {
    if cfg.d == 1 {
        ens
    } else {
        &ens[..ens.len().min(8)]
    }
}

fn spaces_tasks<'a>(cfg: &'a SuiteConfig, cache: &'a Cache) -> Vec<Task<'a>> {
    let mut tasks = Vec::new();
    for p in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
        tasks.push(Task::new(
            format!("amalgam_pp_equals_fourier_lebesgue(p={})", fmt_exp(p)),
            "w^{p,p} = FL^p",
            Rule::Exact,
            move |k| {
                let (_, ens) = cache.at(k);
                let ratios = ens
                    .par_iter()
                    .map(|f| Ok(amalgam_norm(f, p, p, 0.0)? / fourier_lebesgue_norm(f, p)?))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Measure::exact(ratios))
            },
        ));
    }
    tasks.push(Task::new("amalgam_22_equals_l2", "w^{2,2} = L^2", Rule::Exact, move |k| {
        let (_, ens) = cache.at(k);
        let ratios = ens
            .par_iter()
            .map(|f| Ok(amalgam_norm(f, 2.0, 2.0, 0.0)? / lebesgue_norm(f, 2.0)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Measure::exact(ratios))
    }));
    for (p, q) in [(1.0, 1.0), (2.0, 1.0), (4.0, 2.0), (f64::INFINITY, 1.0)] {
        tasks.push(Task::new(
            format!("convolution_law(p={},q={})", fmt_exp(p), fmt_exp(q)),
            "||f * g||_{w^{p,q}} <= ||f||_{FL^inf} ||g||_{w^{p,q}}",
            Rule::AtMostOne,
            move |k| check_convolution_law(cache.at(k).1, p, q),
        ));
    }
    for (a, b) in [((1.0, 1.0), (2.0, 2.0)), ((1.0, 1.0), (4.0, 1.0)), ((4.0 / 3.0, 4.0 / 3.0), (4.0 / 3.0, 4.0 / 3.0)), ((2.0, 1.0), (1.0, 2.0))] {
        tasks.push(Task::new(
            format!("product_law(p1={},q1={},p2={},q2={})", a.0, a.1, b.0, b.1),
            "1/p1 + 1/p2 = 1 + 1/p, 1/q1 + 1/q2 = 1 + 1/q",
            Rule::Stable,
            move |k| check_product_law(cache.at(k).1, a, b),
        ));
    }
    for (p, q) in [(2.0, 1.0), (4.0, 2.0)] {
        tasks.push(Task::new(
            format!("modulation_fl1_module(p={p},q={q})"),
            "||fg||_{M^{p,q}} <~ ||f||_{FL^1} ||g||_{M^{p,q}}",
            Rule::Stable,
            move |k| check_modulation_module(heavy(cfg, cache.at(k).1), p, q),
        ));
    }
    for (a, b) in [((2.0, 1.0), (1.0, f64::INFINITY)), ((4.0, 1.0), (2.0, 2.0)), ((2.0, 2.0), (1.0, f64::INFINITY))] {
        tasks.push(Task::new(
            format!("embedding({},{})->({},{})", fmt_exp(a.0), fmt_exp(a.1), fmt_exp(b.0), fmt_exp(b.1)),
            "p1 >= p2, q1 <= q2",
            Rule::Stable,
            move |k| check_embedding(cache.at(k).1, a, b),
        ));
    }
    tasks.push(Task::new(
        "witness_outside_l2",
        "w^{1,inf} norm refinement-stable while the L^2 norm grows",
        Rule::Stable,
        move |k| {
            // refining the frequency lattice needs L to grow with N
            let grid = |k: usize| Grid::new(cfg.d, cfg.n * k, cfg.l * k as f64);
            let l2 = |k: usize| lebesgue_norm(&witness_function(&grid(k)?), 2.0);
            let grows = l2(2)? > l2(1)?;
            let value = amalgam_norm(&witness_function(&grid(k)?), 1.0, f64::INFINITY, 0.0)?;
            Ok(Measure::bounded(vec![if grows { value } else { f64::NAN }]))
        },
    ));
    tasks
}

fn propagator_tasks<'a>(cfg: &'a SuiteConfig, cache: &'a Cache) -> Vec<Task<'a>> {
    let mut specs = Vec::new();
    let exps = [1.0, 2.0, 4.0, f64::INFINITY];
    for p in exps {
        for q in exps {
            for s in [0.0, 1.0] {
                specs.push(NormSpec::new(NormKind::FourierAmalgam, p, q, s));
            }
        }
    }
    let t_list = [0.1, 1.0, 10.0];
    let mut tasks = Vec::new();
    let specs_a = specs.clone();
    tasks.push(Task::new(
        "isometry_mixed_propagator",
        "||U(t) f||_{w^{p,q}_s} = ||f||_{w^{p,q}_s}",
        Rule::Exact,
        move |k| {
            let (grid, ens) = cache.at(k);
            let omega = dispersion(grid, &cfg.dispersion()).into_iter().map(C64::from).collect();
            let sigma = SpectralField::new(grid, omega)?;
            check_isometry_suite(ens, &specs_a, &t_list, &sigma)
        },
    ));
    tasks.push(Task::new(
        "isometry_random_real_symbol",
        "||F^{-1} e^{i t sigma} F f||_{w^{p,q}_s} = ||f||_{w^{p,q}_s}, sigma real",
        Rule::Exact,
        move |k| {
            let (grid, ens) = cache.at(k);
            check_isometry_suite(ens, &specs, &t_list, &random_real_symbol(grid, cfg.ensemble.seed))
        },
    ));
    for p in [1.0, 4.0] {
        tasks.push(Task::new(
            format!("modulation_growth(p={p},q=1)"),
            "||U(t) f||_{M^{p,q}} <~ (1 + |t|^{d|1/2-1/p|}) ||f||_{M^{p,q}}",
            Rule::Stable,
            move |k| {
                let ens = heavy(cfg, cache.at(k).1);
                let ratios = ens
                    .par_iter()
                    .map(|f| Ok(check_modulation_growth(f, &cfg.dispersion(), &[0.1, 1.0, 10.0], p, 1.0)?.max_ratio))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Measure::bounded(ratios))
            },
        ));
    }
    if cfg.d > 1 {
        return tasks;
    }
    tasks.push(Task::new(
        "hermite_modulation_isometry",
        "||e^{-itH} f||_{M^{p,p}} = ||f||_{M^{p,p}} with the oscillator window",
        Rule::Below(1.0 + 1e-3),
        move |k| {
            let (grid, _) = cache.at(k);
            let basis = build_hermite_basis(grid, crate::dynamics::DEFAULT_HERMITE_DEGREE)?;
            let window = oscillator_window(grid);
            let ens = generate(grid, &cfg.ensemble.with_count(cfg.ensemble.count.min(8)).oscillator_adapted())?;
            let ratios = ens
                .par_iter()
                .map(|f| {
                    let mut out = Vec::new();
                    for p in [1.0, 4.0 / 3.0, 2.0, 4.0] {
                        let before = modulation_norm_stft(f, p, p, 0.0, &window)?;
                        for t in [0.3, 1.0] {
                            let after = modulation_norm_stft(&basis.evolve(f, t)?, p, p, 0.0, &window)?;
                            out.push(after / before);
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Measure::exact(ratios.concat()))
        },
    ));
    tasks
}

/// `gamma` used by the estimates that need `gamma < d/2`.
fn small_gamma(cfg: &SuiteConfig) -> f64 {
    let half = cfg.d as f64 / 2.0;
    if cfg.gamma < half {
        cfg.gamma
    } else {
        half / 2.0
    }
}

/// Three in-hypothesis `(variant, gamma, p, q)` tuples per variant.
pub fn trilinear_tuples(d: usize, gamma: f64, small_gamma: f64) -> Vec<(Variant, f64, f64, f64)> {
    let df = d as f64;
    let crit = 2.0 * df / (df + gamma);
    let lo = 2.0 * df / (df - 2.0 * small_gamma);
    let rho_lo = df / (df - small_gamma);
    let rho_mid = 0.5 * (rho_lo + 2.0);
    vec![
        (Variant::A, gamma, crit, crit),
        (Variant::A, gamma, 2.0, 1.0),
        (Variant::A, gamma, 4.0, crit),
        (Variant::B1, gamma, 1.0, 1.0),
        (Variant::B1, gamma, 2.0, 1.0),
        (Variant::B1, gamma, 2.0, 0.5 * (1.0 + crit)),
        (Variant::B2, small_gamma, 2.0, lo + 1.0),
        (Variant::B2, small_gamma, 4.0, lo + 2.0),
        (Variant::B2, small_gamma, lo + 1.0, lo + 3.0),
        (Variant::C { rho: rho_mid }, small_gamma, 2.0, 1.0),
        (Variant::C { rho: 2.0 }, small_gamma, 2.0, 2.0),
        (Variant::C { rho: rho_mid }, small_gamma, 4.0, 1.0),
    ]
}

fn trilinear_tasks<'a>(cfg: &'a SuiteConfig, cache: &'a Cache) -> Vec<Task<'a>> {
    let mut tasks: Vec<Task<'a>> = trilinear_tuples(cfg.d, cfg.gamma, small_gamma(cfg))
        .into_iter()
        .map(|(variant, gamma, p, q)| {
            Task::new(
                format!("trilinear_{variant}(gamma={gamma},p={p},q={q})"),
                match variant {
                    Variant::A => "q <= 2d/(d+gamma) <= p",
                    Variant::B1 => "q < 2d/(d+gamma), q <= p",
                    Variant::B2 => "q > 2d/(d-2 gamma), p <= q",
                    Variant::C { .. } => "gamma < d/2, d/(d-gamma) < rho <= 2",
                },
                Rule::Stable,
                move |k| {
                    let (grid, ens) = cache.at(k);
                    let kernel = make_kernel(grid, cfg.lambda, gamma)?;
                    let rep = estimate_trilinear_constants(&kernel, ens, p, q, variant)?;
                    Ok(Measure::bounded(rep.ratios))
                },
            )
        })
        .collect();
    tasks.push(Task::new(
        "fl1_pairing_cross_check",
        "FFT pairing sum_{xi1,xi2} |f^(xi1)||g^(xi2)||K^(xi1-xi2)| equals the double sum",
        Rule::Exact,
        move |k| {
            let n = if cfg.d <= 2 { 64 } else { 16 } * k;
            let grid = Grid::new(cfg.d, n, 4.0)?;
            let kernel = make_kernel(&grid, cfg.lambda, cfg.gamma)?;
            let ens = generate(&grid, &cfg.ensemble.with_count(cfg.ensemble.count.min(4)))?;
            let ratios = (0..ens.len())
                .map(|i| {
                    let (f, g) = (&ens[i], &ens[(i + 1) % ens.len()]);
                    Ok(riesz_pairing(&kernel, f, g)? / riesz_pairing_direct(&kernel, f, g)?)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Measure::exact(ratios))
        },
    ));
    tasks
}

/// The pairs the Strichartz suite measures: `q in {inf, 4, 8}` for each order
/// of the flow, whenever admissible.
pub fn strichartz_pairs(d: usize, orders: &[f64]) -> Vec<AdmissiblePair> {
    let mut out = Vec::new();
    for &s in orders {
        for q in [f64::INFINITY, 4.0, 8.0] {
            if let Ok(pair) = admissible_pair(s, d, q) {
                if !out.contains(&pair) {
                    out.push(pair);
                }
            }
        }
    }
    out
}

fn strichartz_tasks<'a>(cfg: &'a SuiteConfig) -> Vec<Task<'a>> {
    let mut tasks = Vec::new();
    let radial = cfg.d >= 2 && cfg.s1 < 1.0;
    let ens = if radial { cfg.ensemble.radial() } else { cfg.ensemble };
    let flows: Vec<(Potential, DispersionParams)> = if cfg.d == 1 {
        vec![
            (Potential::None, cfg.dispersion()),
            (Potential::Harmonic, DispersionParams::default()),
        ]
    } else {
        vec![(Potential::None, cfg.dispersion())]
    };
    for (potential, disp) in flows {
        let orders = match potential {
            Potential::None => vec![disp.s1, disp.s2],
            Potential::Harmonic => vec![1.0],
        };
        for pair in strichartz_pairs(cfg.d, &orders) {
            let ens = if potential == Potential::Harmonic { ens.oscillator_adapted() } else { ens };
            let label = match potential {
                Potential::None => "free",
                Potential::Harmonic => "harmonic_slab",
            };
            let rule = if pair.q.is_infinite() && pair.r == 2.0 { Rule::Exact } else { Rule::Stable };
            tasks.push(Task::new(
                format!("strichartz_{label}(s={},q={},r={})", pair.s, fmt_exp(pair.q), pair.r),
                "2s/q + d/r = d/2, ||U(t) u0||_{L^q_T L^r} <~ ||u0||_2",
                rule,
                move |k| {
                    let grid = cfg.grid(k)?;
                    let kernel = make_kernel(&grid, 0.0, cfg.gamma)?;
                    let mut params = EquationParams::new(disp, kernel, potential, cfg.horizon, cfg.horizon)?;
                    params.picard.quad_nodes = cfg.quad_nodes;
                    let rep = strichartz_experiment(&ens, &params, &[pair])?;
                    let ratios = rep.rows[0].ratios.clone();
                    Ok(match rule {
                        Rule::Exact => Measure::exact(ratios),
                        _ => Measure::bounded(ratios),
                    })
                },
            ));
        }
    }
    tasks
}

/// The datum of the dynamics checks: member 0 of the oscillator-adapted
/// ensemble scaled to `||u0||_X = 1`.
fn dynamics_datum(params: &EquationParams, seed: u64) -> Result<Field> {
    let grid = params.kernel.grid();
    let u0 = member(grid, &EnsembleConfig::default().with_seed(seed).oscillator_adapted(), 0);
    let x = solution_norm(&u0, params)?;
    Ok(u0.scaled(C64::from(1.0 / x)))
}

fn dynamics_params(cfg: &SuiteConfig, refine: usize, lambda: f64, horizon: f64, dt: f64) -> Result<EquationParams> {
    let grid = cfg.grid(refine)?;
    let kernel = make_kernel(&grid, lambda, cfg.gamma)?;
    EquationParams::new(cfg.dispersion(), kernel, Potential::None, horizon, dt)
}

fn sup_l2_distance(a: &[Field], b: &[Field]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        worst = worst.max(lebesgue_norm(&x.sub(y)?, 2.0)?);
    }
    Ok(worst)
}

fn dynamics_tasks<'a>(cfg: &'a SuiteConfig) -> Vec<Task<'a>> {
    let mut tasks = Vec::new();
    for lambda in [cfg.lambda, -cfg.lambda] {
        tasks.push(Task::new(
            format!("splitstep_mass(lambda={lambda})"),
            "||u(t)||_2 = ||u0||_2",
            Rule::Small(1e-9),
            move |k| {
                let p = dynamics_params(cfg, k, lambda, cfg.horizon, 1e-3)?.with_record_every(100);
                let u0 = dynamics_datum(&p, cfg.ensemble.seed)?;
                Ok(Measure::bounded(vec![splitstep_evolve(&u0, &p)?.mass_drift]))
            },
        ));
    }
    let window = 0.25;
    tasks.push(Task::new(
        "picard_contraction_ratio",
        "Picard differences decay geometrically on [0, T] with T within the contraction window",
        Rule::Below(0.9),
        move |k| {
            let p = dynamics_params(cfg, k, cfg.lambda, window, window / 256.0)?;
            let u0 = dynamics_datum(&p, cfg.ensemble.seed)?;
            let (_, rep) = picard_solve(&u0, &p)?;
            if !(rep.converged && rep.r_squared > 0.95) {
                return Ok(Measure::bounded(vec![f64::NAN]));
            }
            Ok(Measure::bounded(vec![rep.fitted_ratio]))
        },
    ));
    tasks.push(Task::new(
        "picard_splitstep_agreement",
        "sup_t ||u_picard - u_split||_2 small on the contraction window",
        Rule::Small(1e-5),
        move |k| {
            let nodes = 256;
            let p = dynamics_params(cfg, k, cfg.lambda, window, window / (4 * nodes) as f64)?
                .with_picard(PicardParams {
                    quad_nodes: nodes,
                    tol: 1e-12,
                    ..PicardParams::default()
                })
                .with_record_every(4);
            let u0 = dynamics_datum(&p, cfg.ensemble.seed)?;
            let (picard, _) = picard_solve(&u0, &p)?;
            let split = splitstep_evolve(&u0, &p)?;
            Ok(Measure::bounded(vec![sup_l2_distance(&picard.states, &split.states)?]))
        },
    ));
    tasks
}

/// Runs a named suite. Checks run as parallel tasks and are reported in task
/// order.
pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let suite = Suite::parse(name)?;
    if cfg.ensemble.count == 0 {
        return Err(Error::Empty("ensemble"));
    }
    let cache = Cache::new(cfg, &cfg.ensemble)?;
    let mut tasks = Vec::new();
    for part in suite.parts() {
        match part {
            Suite::Spaces => tasks.extend(spaces_tasks(cfg, &cache)),
            Suite::Propagators => tasks.extend(propagator_tasks(cfg, &cache)),
            Suite::Trilinear => tasks.extend(trilinear_tasks(cfg, &cache)),
            Suite::Strichartz => tasks.extend(strichartz_tasks(cfg)),
            Suite::Dynamics => tasks.extend(dynamics_tasks(cfg)),
            Suite::All => unreachable!("expanded by parts"),
        }
    }
    let checks = tasks
        .par_iter()
        .map(|t| {
            log::info!("check {}", t.name);
            t.run()
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport {
        suite: suite.to_string(),
        grid: GridInfo {
            d: cfg.d,
            n: cfg.n,
            l: cfg.l,
        },
        seed_range: [cfg.ensemble.seed, cfg.ensemble.seed + cfg.ensemble.count as u64 - 1],
        config: cfg.clone(),
        checks,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SuiteConfig {
        SuiteConfig {
            n: 512,
            l: 16.0,
            ensemble: EnsembleConfig::default().with_count(6),
            ..SuiteConfig::default()
        }
    }

    fn ens(g: &Grid, count: usize) -> Vec<Field> {
        generate(g, &EnsembleConfig::default().with_count(count)).unwrap()
    }

    #[test]
    fn isometry_trivial_and_random_symbol() {
        let g = Grid::new(1, 128, 8.0).unwrap();
        let e = ens(&g, 4);
        let specs = [NormSpec::new(NormKind::FourierAmalgam, 4.0, 1.0, 0.5)];
        let sigma = random_real_symbol(&g, 1);
        let m = check_isometry_suite(&e, &specs, &[0.0], &sigma).unwrap();
        assert_eq!(m.deviation, Some(0.0));
        let m = check_isometry_suite(&e, &specs, &[3.7], &sigma).unwrap();
        assert!(m.deviation.unwrap() < 1e-12);
        let bad = [NormSpec::lebesgue(2.0)];
        assert!(matches!(check_isometry_suite(&e, &bad, &[1.0], &sigma), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn product_law_single_cell_oracle() {
        // f^ supported on one lattice cell: fg is g modulated, and
        // ||fg||_{w^{p,q}} is the translated box sum of |g^| scaled by |f^(k)| dxi
        let g = Grid::new(1, 128, 8.0).unwrap();
        let m = 70;
        let mut fs = SpectralField::zeros(&g);
        fs.values_mut()[m] = C64::new(0.6, -0.8);
        let f = fs.inverse();
        let h = ens(&g, 1).remove(0);
        let (p, q) = (2.0, 1.0);
        let direct = amalgam_norm(&f.mul(&h).unwrap(), p, q, 0.0).unwrap();
        let shift = g.freq_label(m);
        let hs = h.forward();
        let mut moved = SpectralField::zeros(&g);
        for j in 0..g.n() {
            let target = j as i64 + shift;
            if (0..g.n() as i64).contains(&target) {
                moved.values_mut()[target as usize] = hs.values()[j] * g.dxi();
            }
        }
        let by_translation = amalgam_norm_spectral(&moved, p, q, 0.0).unwrap();
        assert!((direct / by_translation - 1.0).abs() < 1e-10);
        // FL^1 module with a single cell: the ratio is exact up to box alignment
        let r = check_product_law(&[f.clone(), h.clone()], (1.0, 1.0), (p, q)).unwrap();
        assert!(r.max_ratio.is_finite());
    }

    #[test]
    fn zero_and_gating() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let zero = vec![Field::zeros(&g); 2];
        assert_eq!(check_product_law(&zero, (1.0, 1.0), (2.0, 2.0)).unwrap().max_ratio, 0.0);
        assert_eq!(check_convolution_law(&zero, 2.0, 1.0).unwrap().max_ratio, 0.0);
        let e = ens(&g, 3);
        assert!(matches!(check_product_law(&e, (2.0, 2.0), (4.0, 4.0)), Err(Error::Hypothesis(_))));
        assert!(matches!(check_embedding(&e, (1.0, 1.0), (2.0, 2.0)), Err(Error::Hypothesis(_))));
        assert!(check_embedding(&[], (2.0, 1.0), (1.0, 2.0)).is_err());
        let m = check_embedding(&e, (2.0, 1.0), (2.0, 1.0)).unwrap();
        assert!((m.max_ratio - 1.0).abs() < 1e-15);
    }

    #[test]
    fn convolution_with_flat_spectrum_is_equality() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let delta = SpectralField::new(&g, vec![C64::from(1.0); g.len()]).unwrap().inverse();
        let h = ens(&g, 1).remove(0);
        let m = check_convolution_law(&[delta, h], 2.0, 1.0).unwrap();
        assert!((m.ratios[0] - 1.0).abs() < 1e-12);
        assert!(m.max_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn tuples_satisfy_hypotheses() {
        for (v, gamma, p, q) in trilinear_tuples(1, 0.5, 0.25) {
            v.check(1, gamma, p, q).unwrap();
        }
        for (v, gamma, p, q) in trilinear_tuples(3, 1.0, 1.0) {
            v.check(3, gamma, p, q).unwrap();
        }
    }

    #[test]
    fn strichartz_pair_selection() {
        let pairs = strichartz_pairs(1, &[0.75, 1.0]);
        assert!(pairs.iter().all(|p| p.defect() < 1e-12));
        assert!(pairs.iter().any(|p| p.q == 8.0 && p.s == 1.0 && (p.r - 4.0).abs() < 1e-12));
        assert!(pairs.iter().any(|p| p.q.is_infinite()));
    }

    #[test]
    fn suite_errors() {
        assert!(run_suite("nonsense", &small()).is_err());
        let empty = SuiteConfig {
            ensemble: EnsembleConfig::default().with_count(0),
            ..small()
        };
        assert!(matches!(run_suite("spaces", &empty), Err(Error::Empty(_))));
    }

    #[test]
    fn spaces_suite_passes_and_reproduces() {
        let a = run_suite("spaces", &small()).unwrap();
        for c in &a.checks {
            assert!(c.pass, "{c:?}");
        }
        let b = run_suite("spaces", &small()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
