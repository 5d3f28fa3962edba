//! Linear flows: the free mixed fractional propagator
//! `F U(t) f = e^{i t (|2 pi xi|^{2 s1} + |2 pi xi|^{2 s2})} F f`, general real
//! Fourier multipliers, and the harmonic-oscillator semigroup `e^{-itH}`,
//! `H = -Delta + |x|^2`, through a Hermite expansion.
//!
//! The dispersion uses the angular frequency `|2 pi xi|` so that `(-Delta)^s`
//! is exactly this multiplier under the grid's transform convention.

mod hermite;

pub use hermite::{build_hermite_basis, harmonic_evolve, HermiteBasis};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SpectralField, C64};
use crate::spaces::{modulation_norm_decomp, build_partition};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionParams {
    pub s1: f64,
    pub s2: f64,
}

impl Default for DispersionParams {
    fn default() -> Self {
        Self { s1: 1.0, s2: 1.0 }
    }
}

impl DispersionParams {
    pub fn new(s1: f64, s2: f64) -> Self {
        Self { s1, s2 }
    }

    /// Orders usable by the dynamics: `0 < s1 <= s2 <= 1`.
    pub fn validate_for_dynamics(&self) -> Result<()> {
        if self.s1 > 0.0 && self.s1 <= self.s2 && self.s2 <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "dispersion orders s1 = {}, s2 = {} violate 0 < s1 <= s2 <= 1",
                self.s1, self.s2
            )))
        }
    }

    /// `omega(xi) = |2 pi xi|^{2 s1} + |2 pi xi|^{2 s2}`, with `omega(0) = 0`.
    pub fn omega(&self, xi_norm: f64) -> f64 {
        if xi_norm == 0.0 {
            return 0.0;
        }
        let w = 2.0 * std::f64::consts::PI * xi_norm;
        w.powf(2.0 * self.s1) + w.powf(2.0 * self.s2)
    }
}

/// `omega` at every lattice frequency.
pub fn dispersion(grid: &Grid, params: &DispersionParams) -> Vec<f64> {
    (0..grid.len())
        .map(|i| params.omega(grid.freq_norm_sq(i).sqrt()))
        .collect()
}

/// The unimodular multiplier `e^{i t omega(xi)}`.
pub fn mixed_symbol(grid: &Grid, params: &DispersionParams, t: f64) -> SpectralField {
    let values = dispersion(grid, params)
        .into_iter()
        .map(|w| C64::from_polar(1.0, t * w))
        .collect();
    SpectralField::new(grid, values).expect("unimodular symbol is finite")
}

pub fn free_evolve(f: &Field, params: &DispersionParams, t: f64) -> Field {
    let sym = mixed_symbol(f.grid(), params, t);
    sym.mul(&f.forward()).expect("same grid").inverse()
}

/// `F^{-1}(e^{i t sigma} F f)` for a real symbol `sigma`.
pub fn general_multiplier_evolve(f: &Field, sigma: &SpectralField, t: f64) -> Result<Field> {
    f.grid().ensure_same(sigma.grid())?;
    if let Some(i) = sigma.values().iter().position(|v| v.im != 0.0) {
        return Err(Error::InvalidParameter(format!(
            "multiplier symbol is not real at spectral index {i} (imaginary part {})",
            sigma.values()[i].im
        )));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let spec = f.forward();
    let values = spec
        .values()
        .iter()
        .zip(sigma.values())
        .map(|(v, s)| v * C64::from_polar(1.0, t * s.re))
        .collect();
    Ok(SpectralField::new(f.grid(), values)?.inverse())
}

/// A linear flow `e^{i t L}` diagonal in some basis: analyze into coefficients,
/// rotate each by `e^{i t lambda}`, synthesize.
#[derive(Clone, Debug)]
pub enum LinearFlow {
    /// Fourier basis, eigenvalues `omega(xi)`; `e^{itL} = U(t)`.
    Free { grid: Grid, eig: Vec<f64> },
    /// Hermite basis, eigenvalues `2|alpha| + d`; `e^{itL} = e^{itH}`.
    Harmonic { basis: HermiteBasis },
}

impl LinearFlow {
    pub fn free(grid: &Grid, params: &DispersionParams) -> Self {
        LinearFlow::Free {
            grid: grid.clone(),
            eig: dispersion(grid, params),
        }
    }

    pub fn harmonic(basis: HermiteBasis) -> Self {
        LinearFlow::Harmonic { basis }
    }

    pub fn grid(&self) -> &Grid {
        match self {
            LinearFlow::Free { grid, .. } => grid,
            LinearFlow::Harmonic { basis } => basis.grid(),
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        match self {
            LinearFlow::Free { eig, .. } => eig,
            LinearFlow::Harmonic { basis } => basis.eigenvalues(),
        }
    }

    pub fn analyze(&self, f: &Field) -> Vec<C64> {
        match self {
            LinearFlow::Free { .. } => f.forward().into_values(),
            LinearFlow::Harmonic { basis } => basis.coefficients(f),
        }
    }

    pub fn synthesize(&self, coeffs: &[C64]) -> Field {
        match self {
            LinearFlow::Free { grid, .. } => SpectralField::from_raw(grid, coeffs.to_vec()).inverse(),
            LinearFlow::Harmonic { basis } => basis.synthesize(coeffs),
        }
    }

    /// `e^{itL} f`.
    pub fn propagate(&self, f: &Field, t: f64) -> Field {
        let mut c = self.analyze(f);
        for (v, l) in c.iter_mut().zip(self.eigenvalues()) {
            *v *= C64::from_polar(1.0, t * l);
        }
        self.synthesize(&c)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthRow {
    pub t: f64,
    pub norm: f64,
    /// `||U(t) f|| / ((1 + |t|^{d |1/2 - 1/p|}) ||f||)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub p: f64,
    pub q: f64,
    pub initial: f64,
    pub rows: Vec<GrowthRow>,
    pub max_ratio: f64,
}

/// Ratios `||U(t) f||_{M^{p,q}} / ((1 + |t|^{d|1/2 - 1/p|}) ||f||_{M^{p,q}})`
/// with the widest partition the grid admits. For `p = 2` the factor is 1.
pub fn check_modulation_growth(
    f: &Field,
    params: &DispersionParams,
    t_list: &[f64],
    p: f64,
    q: f64,
) -> Result<GrowthReport> {
    let grid = f.grid();
    let part = build_partition(grid, grid.max_partition_radius())?;
    let initial = modulation_norm_decomp(f, p, q, 0.0, &part)?;
    let expo = grid.dim() as f64 * (0.5 - 1.0 / p).abs();
    // at p = 2 the exponent vanishes and the bound is the isometry itself
    let factor = |t: f64| if expo == 0.0 { 1.0 } else { 1.0 + t.abs().powf(expo) };
    let rows = t_list
        .iter()
        .map(|&t| {
            let norm = modulation_norm_decomp(&free_evolve(f, params, t), p, q, 0.0, &part)?;
            let ratio = if initial == 0.0 {
                0.0
            } else {
                norm / (factor(t) * initial)
            };
            Ok(GrowthRow { t, norm, ratio })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(GrowthReport {
        p,
        q,
        initial,
        rows,
        max_ratio,
    })
}
