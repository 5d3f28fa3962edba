//! Local-existence time scaling and homogeneous Strichartz ratios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    l2, least_squares, picard_solve, rotate_synth, AdmissiblePair, EquationParams, Potential,
};
use crate::ensemble::{generate, EnsembleConfig};
use crate::error::{Error, Result};
use crate::grid::{Field, C64};
use crate::hartree::median;
use crate::spaces::{lebesgue_norm, trapezoid_weights};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BisectionOptions {
    /// Smallest horizon tried; it must contract.
    pub floor: f64,
    /// Search ceiling; contraction here means no finite threshold was found.
    pub ceiling: f64,
    pub iterations: usize,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        Self {
            floor: 1e-4,
            ceiling: 10.0,
            iterations: 12,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub m: f64,
    /// Largest horizon found to contract; `None` when the ceiling contracts.
    pub threshold: Option<f64>,
    pub hit_ceiling: bool,
    /// Final bisection bracket `[contracting, not contracting]`.
    pub bracket: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `log T` against `log m`.
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
}

/// `||u||_X = max(||u||_{L^2}, ||u||_{metric})`, the norm the Picard metric uses.
pub fn solution_norm(u: &Field, params: &EquationParams) -> Result<f64> {
    Ok(l2(u).max(params.picard.metric.evaluate(u)?))
}

fn contracts(u0: &Field, params: &EquationParams, horizon: f64) -> Result<bool> {
    let mut p = params.clone();
    p.horizon = horizon;
    match picard_solve(u0, &p) {
        Ok((_, rep)) => Ok(rep.contracting()),
        Err(Error::Diverged { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

fn threshold(u0: &Field, params: &EquationParams, m: f64, opts: &BisectionOptions) -> Result<ScalingRow> {
    let (mut lo, mut hi) = (opts.floor, opts.ceiling);
    if contracts(u0, params, hi)? {
        return Ok(ScalingRow {
            m,
            threshold: None,
            hit_ceiling: true,
            bracket: [hi, hi],
        });
    }
    if !contracts(u0, params, lo)? {
        return Err(Error::InvalidParameter(format!(
            "Picard iteration does not contract at the floor T = {lo} for m = {m}"
        )));
    }
    for _ in 0..opts.iterations {
        let mid = (lo * hi).sqrt();
        if contracts(u0, params, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ScalingRow {
        m,
        threshold: Some(lo),
        hit_ceiling: false,
        bracket: [lo, hi],
    })
}

/// For each `m`, rescales `u0` to `||u0||_X = m` and bisects (in `log T`) for
/// the largest horizon on which Picard iteration contracts. The stopping
/// tolerance is taken relative to `m`, so the criterion is scale free.
pub fn local_existence_experiment(
    u0: &Field,
    m_list: &[f64],
    params: &EquationParams,
    opts: &BisectionOptions,
) -> Result<ScalingReport> {
    if m_list.is_empty() {
        return Err(Error::Empty("m list"));
    }
    if let Some(m) = m_list.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::InvalidParameter(format!("m = {m} must be positive")));
    }
    if !(opts.floor > 0.0 && opts.floor < opts.ceiling) {
        return Err(Error::InvalidParameter(format!(
            "bisection range [{}, {}]",
            opts.floor, opts.ceiling
        )));
    }
    let norm = solution_norm(u0, params)?;
    if norm == 0.0 {
        return Err(Error::InvalidParameter("initial datum is zero".into()));
    }
    let rows = m_list
        .par_iter()
        .map(|&m| {
            let mut p = params.clone();
            p.picard.tol *= m;
            threshold(&u0.scaled(C64::from(m / norm)), &p, m, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.threshold.map(|t| (r.m.ln(), t.ln())))
        .collect();
    let (slope, r_squared) = if pts.len() >= 2 {
        let (s, r2) = least_squares(&pts);
        (Some(s), Some(r2))
    } else {
        (None, None)
    };
    Ok(ScalingReport {
        rows,
        slope,
        r_squared,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StrichartzRow {
    pub pair: AdmissiblePair,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// `||e^{itL} u0||_{L^q([0,T]; L^r)} / ||u0||_{L^2}` per member.
    pub ratios: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StrichartzReport {
    pub horizon: f64,
    pub nodes: usize,
    pub rows: Vec<StrichartzRow>,
}

fn check_pair(pair: &AdmissiblePair, params: &EquationParams, radial: bool) -> Result<()> {
    let d = params.kernel.grid().dim();
    if pair.d != d {
        return Err(Error::Hypothesis(format!("pair built for d = {}, grid has d = {d}", pair.d)));
    }
    if pair.defect() > 1e-12 {
        return Err(Error::Hypothesis(format!(
            "(q, r) = ({}, {}) violates 2s/q + d/r = d/2 for s = {}",
            pair.q, pair.r, pair.s
        )));
    }
    let orders: &[f64] = match params.potential {
        Potential::None => &[params.dispersion.s1, params.dispersion.s2],
        Potential::Harmonic => &[1.0],
    };
    if !orders.iter().any(|s| (s - pair.s).abs() < 1e-12) {
        return Err(Error::Hypothesis(format!(
            "pair is {}-admissible, but the flow has orders {orders:?}",
            pair.s
        )));
    }
    if d >= 2 && pair.s < 1.0 && !radial {
        return Err(Error::Hypothesis(format!(
            "s = {} < 1 in d = {d} requires radial data",
            pair.s
        )));
    }
    Ok(())
}

/// Homogeneous ratios `||e^{itL} u0||_{L^q_T L^r} / ||u0||_{L^2}` over the
/// ensemble, on the Picard mesh of `[0, T]`.
pub fn strichartz_experiment(
    ensemble: &EnsembleConfig,
    params: &EquationParams,
    pairs: &[AdmissiblePair],
) -> Result<StrichartzReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    for pair in pairs {
        check_pair(pair, params, ensemble.radial)?;
    }
    let grid = params.kernel.grid();
    let members = generate(grid, ensemble)?;
    let times = params.picard_mesh();
    let weights = trapezoid_weights(&times);
    let flow = params.flow();
    let per_member = members
        .par_iter()
        .map(|u0| {
            let mass = l2(u0);
            let c0 = flow.analyze(u0);
            let mut slices = vec![Vec::with_capacity(times.len()); pairs.len()];
            for &t in &times {
                let u = rotate_synth(flow, &c0, t);
                for (slot, pair) in slices.iter_mut().zip(pairs) {
                    slot.push(lebesgue_norm(&u, pair.r)?);
                }
            }
            Ok(slices
                .iter()
                .zip(pairs)
                .map(|(s, pair)| {
                    let norm = if pair.q.is_infinite() {
                        s.iter().copied().fold(0.0, f64::max)
                    } else {
                        let sum: f64 = s.iter().zip(&weights).map(|(v, w)| v.powf(pair.q) * w).sum();
                        sum.powf(1.0 / pair.q)
                    };
                    norm / mass
                })
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(k, pair)| {
            let ratios: Vec<f64> = per_member.iter().map(|r| r[k]).collect();
            StrichartzRow {
                pair: *pair,
                max_ratio: ratios.iter().copied().fold(0.0, f64::max),
                median_ratio: median(&ratios),
                ratios,
            }
        })
        .collect();
    Ok(StrichartzReport {
        horizon: params.horizon,
        nodes: params.picard.quad_nodes,
        rows,
    })
}
