//! Time evolution of `i u_t + L u = (K * |u|^2) u` with `L` either the mixed
//! fractional Laplacian or `-Delta + |x|^2`.
//!
//! Sign convention: the linear part is `e^{itL}` (on the Fourier side
//! `u^ <- e^{i t omega} u^`), the nonlinear part `u <- e^{-i t V} u` with the
//! real potential `V = K * |u|^2`.

mod experiments;
mod monitor;

pub use experiments::{solution_norm, 
    local_existence_experiment, strichartz_experiment, BisectionOptions, ScalingReport,
    ScalingRow, StrichartzReport, StrichartzRow,
};
pub use monitor::{monitor, DiagnosticsReport, NormSeries, PairSeries};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, C64};
use crate::hartree::{convolve_kernel, HartreeKernel};
use crate::propagators::{build_hermite_basis, DispersionParams, LinearFlow};
use crate::spaces::{lebesgue_norm, NormSpec};

/// Default Hermite degree for the harmonic flow.
pub const DEFAULT_HERMITE_DEGREE: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    #[default]
    None,
    Harmonic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PicardParams {
    pub max_iter: usize,
    pub tol: f64,
    pub quad_nodes: usize,
    /// The `w^{p,q}` (or `M^{p,q}`) half of the contraction metric; the other
    /// half is `L^inf_T L^2`.
    pub metric: NormSpec,
}

impl Default for PicardParams {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-10,
            quad_nodes: 64,
            metric: NormSpec::amalgam(2.0, 1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EquationParams {
    pub dispersion: DispersionParams,
    pub kernel: HartreeKernel,
    pub potential: Potential,
    pub horizon: f64,
    pub dt: f64,
    pub picard: PicardParams,
    /// Split-step samples are stored every this many steps.
    pub record_every: usize,
    flow: LinearFlow,
}

impl EquationParams {
    pub fn new(
        dispersion: DispersionParams,
        kernel: HartreeKernel,
        potential: Potential,
        horizon: f64,
        dt: f64,
    ) -> Result<Self> {
        Self::with_degree(dispersion, kernel, potential, horizon, dt, DEFAULT_HERMITE_DEGREE)
    }

    /// As [`EquationParams::new`] with an explicit Hermite degree for the
    /// harmonic flow.
    pub fn with_degree(
        dispersion: DispersionParams,
        kernel: HartreeKernel,
        potential: Potential,
        horizon: f64,
        dt: f64,
        degree: usize,
    ) -> Result<Self> {
        dispersion.validate_for_dynamics()?;
        let flow = match potential {
            Potential::None => LinearFlow::free(kernel.grid(), &dispersion),
            Potential::Harmonic => {
                if dispersion.s1 != 1.0 || dispersion.s2 != 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "the harmonic potential needs s1 = s2 = 1 (the operator is -Delta + |x|^2), got s1 = {}, s2 = {}",
                        dispersion.s1, dispersion.s2
                    )));
                }
                LinearFlow::harmonic(build_hermite_basis(kernel.grid(), degree)?)
            }
        };
        let params = Self {
            dispersion,
            kernel,
            potential,
            horizon,
            dt,
            picard: PicardParams::default(),
            record_every: 1,
            flow,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn flow(&self) -> &LinearFlow {
        &self.flow
    }

    pub fn with_picard(mut self, picard: PicardParams) -> Self {
        self.picard = picard;
        self
    }

    pub fn with_horizon(mut self, horizon: f64, dt: f64) -> Self {
        self.horizon = horizon;
        self.dt = dt;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    /// Same flow with the coupling replaced.
    pub fn with_kernel(mut self, kernel: HartreeKernel) -> Result<Self> {
        self.flow.grid().ensure_same(kernel.grid())?;
        self.kernel = kernel;
        Ok(self)
    }

    fn validate_horizon(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon T = {}", self.horizon)));
        }
        Ok(())
    }

    fn validate_picard(&self) -> Result<()> {
        self.validate_horizon()?;
        self.picard.metric.validate()?;
        if self.picard.quad_nodes == 0 || self.picard.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "picard.quad_nodes and picard.max_iter must be positive".into(),
            ));
        }
        if !(self.picard.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("picard.tol = {}", self.picard.tol)));
        }
        Ok(())
    }

    /// Split-step step count `T / dt`.
    pub fn steps(&self) -> Result<usize> {
        self.validate_horizon()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step dt = {}", self.dt)));
        }
        let n = (self.horizon / self.dt).round();
        if n < 1.0 || (n * self.dt - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} does not divide T = {}",
                self.dt, self.horizon
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.flow.grid().ensure_same(self.kernel.grid())?;
        self.validate_picard()?;
        self.steps()?;
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be positive".into()));
        }
        Ok(())
    }

    /// The Picard time mesh: `quad_nodes + 1` uniform nodes on `[0, T]`.
    pub fn picard_mesh(&self) -> Vec<f64> {
        let m = self.picard.quad_nodes;
        (0..=m).map(|j| self.horizon * j as f64 / m as f64).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    /// `||u(t)||_{L^2}` at each sample.
    pub mass: Vec<f64>,
    /// `max |mass(t) / mass(0) - 1|` over every step taken, recorded or not.
    pub mass_drift: f64,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Field>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::Empty("trajectory"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("trajectory times must increase strictly".into()));
        }
        let mass: Vec<f64> = states.iter().map(l2).collect();
        let mass_drift = relative_drift(&mass);
        Ok(Self {
            times,
            states,
            mass,
            mass_drift,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &Field {
        self.states.last().expect("trajectory is non-empty")
    }
}

fn l2(f: &Field) -> f64 {
    lebesgue_norm(f, 2.0).expect("p = 2 is valid")
}

fn relative_drift(mass: &[f64]) -> f64 {
    let m0 = mass[0];
    if m0 == 0.0 {
        return 0.0;
    }
    mass.iter().map(|m| (m / m0 - 1.0).abs()).fold(0.0, f64::max)
}

/// `V = K * |u|^2`, real part (the imaginary part is roundoff).
fn hartree_potential(kernel: &HartreeKernel, u: &Field) -> Result<Vec<f64>> {
    let density = u.mul(&u.conj())?;
    Ok(convolve_kernel(kernel, &density)?.values().iter().map(|v| v.re).collect())
}

fn nonlinearity(kernel: &HartreeKernel, u: &Field) -> Result<Field> {
    let v = hartree_potential(kernel, u)?;
    let values = u.values().iter().zip(&v).map(|(a, b)| a * b).collect();
    Ok(Field::from_raw(u.grid(), values))
}

/// `U(t) u0` on each mesh time.
pub fn linear_trajectory(u0: &Field, params: &EquationParams, times: &[f64]) -> Result<Trajectory> {
    let flow = params.flow();
    flow.grid().ensure_same(u0.grid())?;
    let c0 = flow.analyze(u0);
    let states = times
        .par_iter()
        .map(|&t| rotate_synth(flow, &c0, t))
        .collect();
    Trajectory::new(times.to_vec(), states)
}

fn rotate_synth(flow: &LinearFlow, c: &[C64], t: f64) -> Field {
    let rotated: Vec<C64> = c
        .iter()
        .zip(flow.eigenvalues())
        .map(|(v, l)| v * C64::from_polar(1.0, t * l))
        .collect();
    flow.synthesize(&rotated)
}

/// One application of the Duhamel map
/// `J(u)(t) = U(t) u0 - i int_0^t U(t - tau) N(u(tau)) dtau`, trapezoid in `tau`
/// on the trajectory's own mesh.
pub fn duhamel_map(u_traj: &Trajectory, u0: &Field, params: &EquationParams) -> Result<Trajectory> {
    let times = &u_traj.times;
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::InvalidParameter("Duhamel mesh must start at t = 0".into()));
    }
    let end = *times.last().expect("non-empty");
    if (end - params.horizon).abs() > 1e-12 * params.horizon.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "Duhamel mesh ends at {end}, horizon is {}",
            params.horizon
        )));
    }
    let flow = params.flow();
    flow.grid().ensure_same(u0.grid())?;
    let eig = flow.eigenvalues();
    // e^{-i tau L} N(u(tau)) in the flow's basis
    let pulled: Vec<Vec<C64>> = times
        .par_iter()
        .zip(&u_traj.states)
        .map(|(&tau, u)| {
            let n = nonlinearity(&params.kernel, u)?;
            let mut c = flow.analyze(&n);
            for (v, l) in c.iter_mut().zip(eig) {
                *v *= C64::from_polar(1.0, -tau * l);
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let c0 = flow.analyze(u0);
    let mut acc = vec![C64::default(); c0.len()];
    let mut integrals = Vec::with_capacity(times.len());
    integrals.push(acc.clone());
    for i in 1..times.len() {
        let h = 0.5 * (times[i] - times[i - 1]);
        for ((a, x), y) in acc.iter_mut().zip(&pulled[i - 1]).zip(&pulled[i]) {
            *a += (x + y) * h;
        }
        integrals.push(acc.clone());
    }
    let states = times
        .par_iter()
        .zip(&integrals)
        .map(|(&t, s)| {
            let c: Vec<C64> = c0.iter().zip(s).map(|(a, b)| a - C64::i() * b).collect();
            rotate_synth(flow, &c, t)
        })
        .collect();
    Trajectory::new(times.clone(), states)
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    /// `sup_t max(||du||_{L^2}, ||du||_X)` between successive iterates.
    pub differences: Vec<f64>,
    /// `exp` of the least-squares slope of `log difference` against iteration.
    pub fitted_ratio: f64,
    pub r_squared: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ContractionReport {
    /// Converged with a fitted ratio below `0.9`.
    pub fn contracting(&self) -> bool {
        self.converged && self.fitted_ratio < CONTRACTION_RATIO
    }
}

pub const CONTRACTION_RATIO: f64 = 0.9;

/// Least-squares fit `log y_k = a + k log rho` over the positive entries.
/// Returns `(rho, R^2)`; fewer than two points give `(last/first or 0, 1)`.
pub fn geometric_fit(values: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(k, v)| (k as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return (0.0, 1.0);
    }
    let (slope, r2) = least_squares(&pts);
    (slope.exp(), r2)
}

/// Slope and `R^2` of the least-squares line through `pts`.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

fn metric_distance(a: &Trajectory, b: &Trajectory, spec: &NormSpec) -> Result<f64> {
    let per: Vec<f64> = a
        .states
        .par_iter()
        .zip(&b.states)
        .map(|(x, y)| {
            let d = x.sub(y)?;
            Ok(l2(&d).max(spec.evaluate(&d)?))
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(0.0, f64::max))
}

/// Picard iteration `u^{k+1} = J(u^k)` from `u^0(t) = U(t) u0` on the Picard
/// mesh. Fails with [`Error::Diverged`] once the difference ratio stays at or
/// above one for three consecutive iterations.
pub fn picard_solve(u0: &Field, params: &EquationParams) -> Result<(Trajectory, ContractionReport)> {
    params.validate_picard()?;
    let mut current = linear_trajectory(u0, params, &params.picard_mesh())?;
    let mut differences = Vec::new();
    let mut converged = false;
    let mut above_one = 0;
    for _ in 0..params.picard.max_iter {
        let next = duhamel_map(&current, u0, params)?;
        if next.states.iter().any(|s| !s.is_finite()) {
            return Err(Error::Diverged {
                ratio: f64::INFINITY,
                iterations: differences.len() + 1,
            });
        }
        let diff = metric_distance(&next, &current, &params.picard.metric)?;
        if let Some(&prev) = differences.last() {
            let ratio: f64 = diff / prev;
            if ratio >= 1.0 {
                above_one += 1;
            } else {
                above_one = 0;
            }
            if above_one >= 3 {
                return Err(Error::Diverged {
                    ratio,
                    iterations: differences.len() + 1,
                });
            }
        }
        differences.push(diff);
        current = next;
        if diff < params.picard.tol {
            converged = true;
            break;
        }
    }
    let (fitted_ratio, r_squared) = geometric_fit(&differences);
    let report = ContractionReport {
        iterations: differences.len(),
        differences,
        fitted_ratio,
        r_squared,
        converged,
    };
    Ok((current, report))
}

/// Strang splitting: half linear step, exact nonlinear phase
/// `u <- e^{-i dt V} u`, half linear step.
pub fn splitstep_evolve(u0: &Field, params: &EquationParams) -> Result<Trajectory> {
    params.validate()?;
    let flow = params.flow();
    flow.grid().ensure_same(u0.grid())?;
    let steps = params.steps()?;
    let dt = params.dt;
    let m0 = l2(u0);
    let mut u = u0.clone();
    let mut times = vec![0.0];
    let mut states = vec![u0.clone()];
    let mut drift: f64 = 0.0;
    for k in 1..=steps {
        let half = flow.propagate(&u, 0.5 * dt);
        let v = hartree_potential(&params.kernel, &half)?;
        let mut kicked = half;
        for (a, b) in kicked.values_mut().iter_mut().zip(&v) {
            *a *= C64::from_polar(1.0, -dt * b);
        }
        let next = flow.propagate(&kicked, 0.5 * dt);
        let t = k as f64 * dt;
        if !next.is_finite() {
            return Err(Error::BlowUp {
                time: t,
                last: Box::new(u),
            });
        }
        u = next;
        if m0 > 0.0 {
            drift = drift.max((l2(&u) / m0 - 1.0).abs());
        }
        if k % params.record_every == 0 || k == steps {
            times.push(t);
            states.push(u.clone());
        }
    }
    let mut traj = Trajectory::new(times, states)?;
    traj.mass_drift = drift.max(traj.mass_drift);
    Ok(traj)
}

/// An `s`-admissible Strichartz pair: `2s/q + d/r = d/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissiblePair {
    pub s: f64,
    #[serde(with = "crate::spaces::exponent_serde")]
    pub q: f64,
    #[serde(with = "crate::spaces::exponent_serde")]
    pub r: f64,
    pub d: usize,
}

/// Solves `2s/q + d/r = d/2` for `r`.
pub fn admissible_pair(s: f64, d: usize, q: f64) -> Result<AdmissiblePair> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::Hypothesis(format!("admissible pairs need 0 < s <= 1, got s = {s}")));
    }
    if !(q >= 2.0) {
        return Err(Error::Hypothesis(format!("admissible pairs need q >= 2, got q = {q}")));
    }
    let d_f = d as f64;
    let denom = d_f / 2.0 - 2.0 * s / q;
    if !(denom > 0.0) {
        return Err(Error::Hypothesis(format!(
            "d/2 - 2s/q = {denom} must be positive (s = {s}, d = {d}, q = {q})"
        )));
    }
    let r = d_f / denom;
    if r < 2.0 {
        return Err(Error::Hypothesis(format!("r = {r} < 2 (s = {s}, d = {d}, q = {q})")));
    }
    Ok(AdmissiblePair { s, q, r, d })
}

impl AdmissiblePair {
    /// `|2s/q + d/r - d/2|`.
    pub fn defect(&self) -> f64 {
        let d = self.d as f64;
        (2.0 * self.s / self.q + d / self.r - d / 2.0).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{member, EnsembleConfig};
    use crate::grid::Grid;
    use crate::hartree::make_kernel;
    use crate::propagators::free_evolve;

    fn setup(lambda: f64, n: usize, l: f64) -> (Grid, EquationParams) {
        let g = Grid::new(1, n, l).unwrap();
        let k = make_kernel(&g, lambda, 0.5).unwrap();
        let p = EquationParams::new(DispersionParams::new(0.75, 1.0), k, Potential::None, 0.5, 0.01)
            .unwrap();
        (g, p)
    }

    fn data(g: &Grid, scale: f64) -> Field {
        member(g, &EnsembleConfig::default().oscillator_adapted(), 4).scaled(C64::from(scale))
    }

    fn sup_l2(a: &Trajectory, b: &Trajectory) -> f64 {
        a.states
            .iter()
            .zip(&b.states)
            .map(|(x, y)| l2(&x.sub(y).unwrap()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn pairs() {
        let p = admissible_pair(0.5, 3, f64::INFINITY).unwrap();
        assert_eq!(p.r, 2.0);
        let p = admissible_pair(1.0, 3, 8.0).unwrap();
        assert!((p.r - 12.0 / 5.0).abs() < 1e-12);
        assert!(p.defect() < 1e-12);
        let p = admissible_pair(0.5, 2, 2.0).unwrap();
        assert!((p.r - 4.0).abs() < 1e-12);
        // d = 1, s = 1, q = 2: d/2 - 2s/q < 0
        assert!(admissible_pair(1.0, 1, 2.0).is_err());
        assert!(admissible_pair(1.0, 1, 1.5).is_err());
        assert!(admissible_pair(0.0, 1, 4.0).is_err());
    }

    #[test]
    fn params_validation() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let k = make_kernel(&g, 1.0, 0.5).unwrap();
        let d = DispersionParams::new(0.75, 1.0);
        assert!(EquationParams::new(d, k.clone(), Potential::None, 1.0, 0.3).is_err());
        assert!(EquationParams::new(d, k.clone(), Potential::None, 1.0, 0.25).is_ok());
        assert!(EquationParams::new(d, k.clone(), Potential::None, -1.0, 0.25).is_err());
        let err = EquationParams::new(d, k.clone(), Potential::Harmonic, 1.0, 0.25).unwrap_err();
        assert!(err.to_string().contains("-Delta + |x|^2"));
        assert!(EquationParams::new(DispersionParams::new(1.0, 0.5), k, Potential::None, 1.0, 0.25)
            .is_err());
        let p = EquationParams::new(d, make_kernel(&g, 1.0, 0.5).unwrap(), Potential::None, 5.0, 1e-3);
        assert_eq!(p.unwrap().steps().unwrap(), 5000);
    }

    #[test]
    fn duhamel_trivial_cases() {
        let (g, p) = setup(0.0, 128, 8.0);
        let u0 = data(&g, 1.0);
        let lin = linear_trajectory(&u0, &p, &p.picard_mesh()).unwrap();
        let out = duhamel_map(&lin, &u0, &p).unwrap();
        assert_eq!(sup_l2(&out, &lin), 0.0);

        let (_, p) = setup(1.0, 128, 8.0);
        // any input trajectory, even a zero one
        let zero = Trajectory::new(p.picard_mesh(), vec![Field::zeros(&g); 65]).unwrap();
        let out = duhamel_map(&zero, &u0, &p).unwrap();
        assert!(l2(&out.states[0].sub(&u0).unwrap()) < 1e-13);
        let out = duhamel_map(&lin, &u0, &p).unwrap();
        assert!(l2(&out.states[0].sub(&u0).unwrap()) < 1e-13);

        let short = Trajectory::new(vec![0.0, 0.1], vec![u0.clone(), u0.clone()]).unwrap();
        assert!(duhamel_map(&short, &u0, &p).is_err());
    }

    #[test]
    fn picard_linear_case_converges_at_once() {
        let (g, p) = setup(0.0, 128, 8.0);
        let (traj, rep) = picard_solve(&data(&g, 1.0), &p).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.differences, vec![0.0]);
        assert_eq!(traj.len(), 65);
    }

    #[test]
    fn picard_fixed_point_and_contraction() {
        let (g, p) = setup(1.0, 128, 8.0);
        let p = p.with_horizon(0.2, 0.01);
        let u0 = data(&g, 0.3);
        let (traj, rep) = picard_solve(&u0, &p).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.fitted_ratio < 0.5, "{rep:?}");
        assert!(rep.r_squared > 0.95, "{rep:?}");
        let again = duhamel_map(&traj, &u0, &p).unwrap();
        assert!(sup_l2(&again, &traj) < p.picard.tol);
    }

    #[test]
    fn picard_detects_divergence() {
        let (g, p) = setup(1.0, 128, 8.0);
        let p = p.with_horizon(20.0, 0.01);
        match picard_solve(&data(&g, 30.0), &p) {
            Err(Error::Diverged { ratio, .. }) => assert!(ratio >= 1.0),
            other => panic!("expected divergence, got {:?}", other.map(|r| r.1)),
        }
    }

    #[test]
    fn splitstep_linear_case_matches_free_flow() {
        let (g, p) = setup(0.0, 128, 8.0);
        let p = p.with_horizon(0.5, 0.05);
        let u0 = data(&g, 1.0);
        let traj = splitstep_evolve(&u0, &p).unwrap();
        assert_eq!(traj.len(), 11);
        for (t, u) in traj.times.iter().zip(&traj.states) {
            let exact = free_evolve(&u0, &p.dispersion, *t);
            assert!(l2(&u.sub(&exact).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn splitstep_conserves_mass_and_reverses() {
        let (g, p) = setup(-1.0, 128, 8.0);
        let p = p.with_horizon(1.0, 0.01).with_record_every(10);
        let u0 = data(&g, 1.5);
        let traj = splitstep_evolve(&u0, &p).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.mass_drift < 1e-12, "{}", traj.mass_drift);
        let back = splitstep_evolve(&traj.last().conj(), &p).unwrap();
        let diff = l2(&back.last().conj().sub(&u0).unwrap());
        assert!(diff < 1e-6 * l2(&u0), "{diff}");
    }

    #[test]
    fn splitstep_is_second_order() {
        let (g, p) = setup(1.0, 128, 8.0);
        let horizon = 0.2;
        let picard = PicardParams {
            quad_nodes: 1024,
            tol: 1e-13,
            ..PicardParams::default()
        };
        let p = p.with_horizon(horizon, 0.02).with_picard(picard);
        let u0 = data(&g, 0.3);
        let (reference, _) = picard_solve(&u0, &p).unwrap();
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| {
                let traj = splitstep_evolve(&u0, &p.clone().with_horizon(horizon, dt)).unwrap();
                l2(&traj.last().sub(reference.last()).unwrap())
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "{errs:?}");
        }
    }

    #[test]
    fn splitstep_reports_blow_up() {
        let (g, p) = setup(1.0, 64, 4.0);
        let p = p.with_horizon(0.1, 0.05);
        let u0 = Field::from_fn(&g, |_| C64::new(1e200, 0.0));
        match splitstep_evolve(&u0, &p) {
            Err(Error::BlowUp { last, .. }) => assert!(last.is_finite()),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn harmonic_flow_dynamics() {
        let g = Grid::new(1, 256, 16.0).unwrap();
        let k = make_kernel(&g, 0.0, 0.5).unwrap();
        // degree 96: the kick leaks mass past the truncation, ~2e-10 at K = 64
        let p = EquationParams::with_degree(DispersionParams::default(), k, Potential::Harmonic, 0.5, 0.05, 96)
            .unwrap();
        let u0 = data(&g, 1.0);
        // lambda = 0: split step is the oscillator flow e^{itH}
        let traj = splitstep_evolve(&u0, &p).unwrap();
        let exact = crate::propagators::harmonic_evolve(&u0, -0.5, 96).unwrap();
        assert!(l2(&traj.last().sub(&exact).unwrap()) < 1e-10);
        let p = p.with_kernel(make_kernel(&g, 1.0, 0.5).unwrap()).unwrap();
        let traj = splitstep_evolve(&u0.scaled(C64::from(0.3)), &p).unwrap();
        assert!(traj.mass_drift < 1e-10, "{}", traj.mass_drift);
    }
}
