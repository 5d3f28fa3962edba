//! Short-time Fourier transform `V_g f(x, y) = int f(t) conj(g(t - x)) e^{-2 pi i y.t} dt`
//! sampled with window translates on the full spatial lattice and `y` on the
//! full frequency lattice. Translates wrap periodically.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{bracket, check_exponent, weighted_lp};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SpectralField, C64};

/// Window translates processed per parallel task. Fixed so the reduction
/// order, and hence every bit of the result, is independent of thread count.
const BLOCK: usize = 64;

/// `L^2`-normalized Gaussian `2^{d/4} e^{-pi |x|^2}`.
pub fn gaussian_window(grid: &Grid) -> Field {
    let c = 2f64.powf(grid.dim() as f64 / 4.0);
    Field::from_fn(grid, |x| {
        C64::from(c * (-PI * x.iter().map(|v| v * v).sum::<f64>()).exp())
    })
}

/// Ground state of `-Delta + |x|^2`, `pi^{-d/4} e^{-|x|^2/2}`. With this window
/// the harmonic-oscillator flow acts on `|V_g f|` as a phase-space rotation.
pub fn oscillator_window(grid: &Grid) -> Field {
    let c = PI.powf(-(grid.dim() as f64) / 4.0);
    Field::from_fn(grid, |x| {
        C64::from(c * (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp())
    })
}

fn translate_index(grid: &Grid, t: usize, x: usize) -> usize {
    let n = grid.n();
    let half = n / 2;
    let tm = grid.unravel(t);
    let xm = grid.unravel(x);
    let mut idx = 0;
    for a in 0..grid.dim() {
        idx = idx * n + (tm[a] + n + half - xm[a]) % n;
    }
    idx
}

/// `V_g f(x, .)` for the lattice translate with flat index `x`.
pub fn stft_column(f: &Field, window: &Field, x: usize) -> Result<SpectralField> {
    f.grid().ensure_same(window.grid())?;
    Ok(column(f, window, x))
}

fn column(f: &Field, window: &Field, x: usize) -> SpectralField {
    let g = f.grid();
    let values = (0..g.len())
        .map(|t| f.values()[t] * window.values()[translate_index(g, t, x)].conj())
        .collect();
    Field::new(g, values).expect("finite product").forward()
}

/// `|| <y>^s || V_g f(., y) ||_{L^p_x} ||_{L^q_y}`.
pub fn modulation_norm_stft(f: &Field, p: f64, q: f64, s: f64, window: &Field) -> Result<f64> {
    check_exponent("p", p)?;
    check_exponent("q", q)?;
    f.grid().ensure_same(window.grid())?;
    if window.values().iter().all(|v| *v == C64::default()) {
        return Err(Error::InvalidParameter("STFT window is identically zero".into()));
    }
    let g = f.grid();
    let len = g.len();
    let blocks: Vec<Vec<f64>> = (0..len.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; len];
            for x in b * BLOCK..((b + 1) * BLOCK).min(len) {
                let col = column(f, window, x);
                for (a, v) in acc.iter_mut().zip(col.values()) {
                    let m = v.norm();
                    if p.is_infinite() {
                        *a = f64::max(*a, m);
                    } else {
                        *a += m.powf(p);
                    }
                }
            }
            acc
        })
        .collect();
    let mut acc = vec![0.0; len];
    for block in &blocks {
        for (a, v) in acc.iter_mut().zip(block) {
            if p.is_infinite() {
                *a = f64::max(*a, *v);
            } else {
                *a += v;
            }
        }
    }
    let dx = g.cell_volume();
    let per_y: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let lp = if p.is_infinite() { a } else { (a * dx).powf(1.0 / p) };
            if s == 0.0 || lp == 0.0 {
                lp
            } else {
                lp * bracket(&g.freq_point(i)[..g.dim()]).powf(s)
            }
        })
        .collect();
    Ok(weighted_lp(&per_y, q, g.freq_cell_volume()))
}
