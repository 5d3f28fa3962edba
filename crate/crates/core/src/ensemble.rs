//! Seeded random test fields.
//!
//! Members are sums of one to three Gaussian wave packets defined in the
//! continuum and then sampled, so member `i` is the same function on every
//! grid with the same `L` and refinement only changes the sampling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub count: usize,
    pub seed: u64,
    /// Centered packets without carrier frequency.
    pub radial: bool,
    /// Largest carrier frequency `|xi_0|`.
    pub band: f64,
    /// Packet width range; derived from `L` when absent.
    pub widths: Option<[f64; 2]>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 0,
            radial: false,
            band: 1.0,
            widths: None,
        }
    }
}

impl EnsembleConfig {
    pub fn with_count(mut self, count: usize) -> Self {
        self.count = count;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_widths(mut self, lo: f64, hi: f64) -> Self {
        self.widths = Some([lo, hi]);
        self
    }

    pub fn with_band(mut self, band: f64) -> Self {
        self.band = band;
        self
    }

    /// Packets close to coherent states of `-Delta + |x|^2`, so a Hermite
    /// expansion of moderate degree captures them.
    pub fn oscillator_adapted(self) -> Self {
        self.with_band(0.5).with_widths(0.8, 1.25)
    }

    pub fn radial(mut self) -> Self {
        self.radial = true;
        self
    }
}

/// Independent generator for member `id`; the stream is derived from the id so
/// members can be drawn in any order or in parallel.
pub fn member_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug)]
struct Packet {
    amp: C64,
    width: f64,
    center: [f64; 3],
    carrier: [f64; 3],
}

fn packets(grid: &Grid, cfg: &EnsembleConfig, id: u64) -> Vec<Packet> {
    let d = grid.dim();
    let mut rng = member_rng(cfg.seed, id);
    let count = rng.random_range(1..=3);
    // keep every packet several widths away from the periodic boundary
    let shrink = (grid.half_len() / 16.0).min(1.0);
    let [w_lo, w_hi] = cfg.widths.unwrap_or_else(|| {
        let lo = (0.75 * shrink).max(0.5);
        [lo, (2.0 * shrink).max(lo)]
    });
    let reach = (grid.half_len() / 4.0).min(3.0) / (d as f64).sqrt();
    let band = cfg.band / (d as f64).sqrt();
    (0..count)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let width = rng.random_range(w_lo..=w_hi);
            let mut center = [0.0; 3];
            let mut carrier = [0.0; 3];
            for a in 0..d {
                let c = rng.random_range(-1.0..=1.0) * reach;
                let k = rng.random_range(-1.0..=1.0) * band;
                if !cfg.radial {
                    center[a] = c;
                    carrier[a] = k;
                }
            }
            Packet {
                amp: C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2,
                width,
                center,
                carrier,
            }
        })
        .collect()
}

/// Member `id` of the ensemble sampled on `grid`.
pub fn member(grid: &Grid, cfg: &EnsembleConfig, id: u64) -> Field {
    let ps = packets(grid, cfg, id);
    let d = grid.dim();
    Field::from_fn(grid, |x| {
        ps.iter()
            .map(|p| {
                let mut r2 = 0.0;
                let mut phase = 0.0;
                for a in 0..d {
                    r2 += (x[a] - p.center[a]).powi(2);
                    phase += p.carrier[a] * x[a];
                }
                p.amp * (-r2 / (2.0 * p.width * p.width)).exp()
                    * C64::from_polar(1.0, 2.0 * PI * phase)
            })
            .sum()
    })
}

/// Members `0..count`, in id order.
pub fn generate(grid: &Grid, cfg: &EnsembleConfig) -> Result<Vec<Field>> {
    if cfg.count == 0 {
        return Err(Error::Empty("ensemble"));
    }
    if !(cfg.band.is_finite() && cfg.band >= 0.0) {
        return Err(Error::InvalidParameter(format!("ensemble band {}", cfg.band)));
    }
    if let Some([lo, hi]) = cfg.widths {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("ensemble widths [{lo}, {hi}]")));
        }
    }
    Ok((0..cfg.count as u64)
        .into_par_iter()
        .map(|id| member(grid, cfg, id))
        .collect())
}
