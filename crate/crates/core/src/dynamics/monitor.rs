//! Per-sample diagnostics of a trajectory: mass, requested norms with their
//! running maxima `h(t) = sup_{tau <= t} ||u(tau)||`, and space-time norms
//! over `[0, t]`.

use rayon::prelude::*;
use serde::Serialize;

use super::{least_squares, AdmissiblePair, Trajectory};
use crate::error::Result;
use crate::spaces::{lebesgue_norm, NormSpec};

/// Growth of `h` by this factor over the horizon raises an alarm.
pub const GROWTH_ALARM_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, Serialize)]
pub struct NormSeries {
    pub norm: String,
    pub values: Vec<f64>,
    /// Running maximum `h(t)`.
    pub running_max: Vec<f64>,
    /// Least-squares rate `b` of `log h(t) ~ a + b t`.
    pub envelope_rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairSeries {
    pub pair: AdmissiblePair,
    /// `||u||_{L^q([0, t]; L^r)}` at each sample time.
    pub partial: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsReport {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub mass_drift: f64,
    pub norms: Vec<NormSeries>,
    pub spacetime: Vec<PairSeries>,
    pub alarms: Vec<String>,
}

fn running_max(values: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    values
        .iter()
        .map(|&v| {
            m = m.max(v);
            m
        })
        .collect()
}

fn envelope_rate(times: &[f64], h: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(h)
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    least_squares(&pts).0
}

fn partial_spacetime(traj: &Trajectory, pair: &AdmissiblePair) -> Result<Vec<f64>> {
    let slices = traj
        .states
        .par_iter()
        .map(|u| lebesgue_norm(u, pair.r))
        .collect::<Result<Vec<_>>>()?;
    if pair.q.is_infinite() {
        return Ok(running_max(&slices));
    }
    let mut out = Vec::with_capacity(slices.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..slices.len() {
        let h = traj.times[i] - traj.times[i - 1];
        acc += 0.5 * h * (slices[i - 1].powf(pair.q) + slices[i].powf(pair.q));
        out.push(acc.powf(1.0 / pair.q));
    }
    Ok(out)
}

pub fn monitor(traj: &Trajectory, specs: &[NormSpec], pairs: &[AdmissiblePair]) -> Result<DiagnosticsReport> {
    let mut norms = Vec::with_capacity(specs.len());
    let mut alarms = Vec::new();
    for spec in specs {
        let values = traj
            .states
            .par_iter()
            .map(|u| spec.evaluate(u))
            .collect::<Result<Vec<_>>>()?;
        let h = running_max(&values);
        let (first, last) = (h[0], *h.last().expect("non-empty"));
        if first > 0.0 && last > GROWTH_ALARM_FACTOR * first {
            alarms.push(format!(
                "{} grew from {first:.3e} to {last:.3e} over [0, {}]",
                spec.label(),
                traj.times.last().expect("non-empty")
            ));
        }
        norms.push(NormSeries {
            norm: spec.label(),
            envelope_rate: envelope_rate(&traj.times, &h),
            values,
            running_max: h,
        });
    }
    let spacetime = pairs
        .iter()
        .map(|pair| {
            Ok(PairSeries {
                pair: *pair,
                partial: partial_spacetime(traj, pair)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DiagnosticsReport {
        times: traj.times.clone(),
        mass: traj.mass.clone(),
        mass_drift: traj.mass_drift,
        norms,
        spacetime,
        alarms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::admissible_pair;
    use crate::grid::{Field, Grid, C64};
    use crate::propagators::{free_evolve, DispersionParams};
    use crate::spaces::spacetime_norm;

    fn bump(g: &Grid) -> Field {
        Field::from_fn(g, |x| C64::from_polar(f64::exp(-x[0] * x[0]), 2.0 * x[0]))
    }

    #[test]
    fn constant_trajectory() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let u = bump(&g);
        let traj = Trajectory::new(vec![0.0, 0.5, 1.0], vec![u.clone(), u.clone(), u]).unwrap();
        let rep = monitor(&traj, &[NormSpec::amalgam(2.0, 1.0)], &[]).unwrap();
        let h = &rep.norms[0].running_max;
        assert!(h.iter().all(|v| *v == h[0]));
        assert_eq!(rep.norms[0].envelope_rate, 0.0);
        assert!(rep.alarms.is_empty());
    }

    #[test]
    fn free_flow_keeps_amalgam_norm() {
        let g = Grid::new(1, 128, 8.0).unwrap();
        let u0 = bump(&g);
        let params = DispersionParams::new(0.75, 1.0);
        let times: Vec<f64> = (0..=10).map(|i| 0.1 * i as f64).collect();
        let states = times.iter().map(|&t| free_evolve(&u0, &params, t)).collect();
        let traj = Trajectory::new(times, states).unwrap();
        let pair = admissible_pair(1.0, 1, 8.0).unwrap();
        let rep = monitor(&traj, &[NormSpec::amalgam(4.0, 1.0)], &[pair]).unwrap();
        let h = &rep.norms[0].running_max;
        for v in h {
            assert!((v / h[0] - 1.0).abs() < 1e-12);
        }
        let whole = spacetime_norm(&traj, 8.0, 4.0).unwrap();
        let last = *rep.spacetime[0].partial.last().unwrap();
        assert!((whole - last).abs() < 1e-12 * whole);
        assert!(rep.spacetime[0].partial.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn growth_alarm() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let u = bump(&g);
        let big = u.scaled(C64::from(100.0));
        let traj = Trajectory::new(vec![0.0, 1.0], vec![u, big]).unwrap();
        let rep = monitor(&traj, &[NormSpec::lebesgue(2.0)], &[]).unwrap();
        assert_eq!(rep.alarms.len(), 1);
    }
}
