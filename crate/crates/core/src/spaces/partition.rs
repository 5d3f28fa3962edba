use rayon::prelude::*;

use super::{check_exponent, weighted_lp, bracket};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SpectralField};

/// Relative spectral energy allowed outside the region where the retained
/// windows sum to one.
const COVERAGE_TOL: f64 = 1e-10;

fn psi(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 at `u <= 0`, 1 at `u >= 1`.
fn smooth_step(u: f64) -> f64 {
    let a = psi(u);
    let b = psi(1.0 - u);
    a / (a + b)
}

/// One-dimensional profile of the bump: 1 on `|t| <= 1/2`, 0 on `|t| >= 1`.
pub fn bump(t: f64) -> f64 {
    let a = t.abs();
    if a <= 0.5 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        smooth_step(2.0 * (1.0 - a))
    }
}

/// The normalized windows `sigma_n = rho_n / sum_l rho_l` for `|n|_inf <= n_max`.
///
/// `rho` is a tensor product of [`bump`], so the normalizing sum factorizes
/// per axis and every `sigma_n` is a product of one-dimensional windows.
#[derive(Clone, Debug)]
pub struct Partition {
    grid: Grid,
    n_max: i64,
    /// `windows[n + n_max][m]`: axis window for box `n` at spectral index `m`.
    windows: Vec<Vec<f64>>,
}

pub fn build_partition(grid: &Grid, n_max: i64) -> Result<Partition> {
    if n_max < 0 {
        return Err(Error::InvalidParameter(format!("n_max = {n_max}")));
    }
    let limit = grid.max_partition_radius();
    if n_max > limit {
        return Err(Error::InsufficientPartition(format!(
            "n_max = {n_max} exceeds N/(4L) - 1 = {} for this grid",
            grid.max_frequency() - 1.0
        )));
    }
    let m = grid.cells_per_unit() as i64;
    let inv = 1.0 / m as f64;
    let windows = (-n_max..=n_max)
        .map(|n| {
            (0..grid.n())
                .map(|idx| {
                    let k = grid.freq_label(idx);
                    // normalizer is 1-periodic; evaluate it on the reduced label
                    let r = k.rem_euclid(m) as f64 * inv;
                    let denom = bump(r) + bump(r - 1.0);
                    bump((k - n * m) as f64 * inv) / denom
                })
                .collect()
        })
        .collect();
    Ok(Partition {
        grid: grid.clone(),
        n_max,
        windows,
    })
}

impl Partition {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_max(&self) -> i64 {
        self.n_max
    }

    /// All retained box indices in lexicographic order.
    pub fn boxes(&self) -> Vec<Vec<i64>> {
        let d = self.grid.dim();
        let side = (2 * self.n_max + 1) as usize;
        (0..side.pow(d as u32))
            .map(|mut b| {
                let mut n = vec![0; d];
                for a in (0..d).rev() {
                    n[a] = (b % side) as i64 - self.n_max;
                    b /= side;
                }
                n
            })
            .collect()
    }

    /// `sigma_n` at flat spectral index `idx`.
    pub fn window_at(&self, n: &[i64], idx: usize) -> f64 {
        let multi = self.grid.unravel(idx);
        (0..self.grid.dim())
            .map(|a| self.windows[(n[a] + self.n_max) as usize][multi[a]])
            .product()
    }

    /// `sum_n sigma_n` over the retained boxes at flat spectral index `idx`.
    pub fn coverage_at(&self, idx: usize) -> f64 {
        let multi = self.grid.unravel(idx);
        (0..self.grid.dim())
            .map(|a| self.windows.iter().map(|w| w[multi[a]]).sum::<f64>())
            .product()
    }

    /// `sigma_n f^` as a spectral field.
    pub fn localize(&self, n: &[i64], spec: &SpectralField) -> SpectralField {
        let values = spec
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.window_at(n, i))
            .collect();
        SpectralField::new(&self.grid, values).expect("localized spectrum is finite")
    }

    /// The frequency-uniform decomposition piece `F^{-1} sigma_n F f`.
    pub fn piece(&self, n: &[i64], f: &Field) -> Field {
        self.localize(n, &f.forward()).inverse()
    }

    fn check_coverage(&self, spec: &SpectralField) -> Result<()> {
        let total: f64 = spec.values().iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return Ok(());
        }
        let missed: f64 = spec
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.coverage_at(*i) < 1.0 - 1e-12)
            .map(|(_, v)| v.norm_sqr())
            .sum();
        if missed > COVERAGE_TOL * total {
            return Err(Error::InsufficientPartition(format!(
                "{:.2e} of the spectral energy lies outside |xi| <= n_max = {}",
                missed / total,
                self.n_max
            )));
        }
        Ok(())
    }
}

/// `|| <n>^s || F^{-1} sigma_n F f ||_{L^p_x} ||_{l^q_n}`.
pub fn modulation_norm_decomp(
    f: &Field,
    p: f64,
    q: f64,
    s: f64,
    partition: &Partition,
) -> Result<f64> {
    check_exponent("p", p)?;
    check_exponent("q", q)?;
    f.grid().ensure_same(partition.grid())?;
    let spec = f.forward();
    partition.check_coverage(&spec)?;
    let weight = f.grid().cell_volume();
    let pieces: Vec<f64> = partition
        .boxes()
        .par_iter()
        .map(|n| {
            let piece = partition.localize(n, &spec).inverse();
            let mags: Vec<f64> = piece.values().iter().map(|v| v.norm()).collect();
            let nf: Vec<f64> = n.iter().map(|&k| k as f64).collect();
            weighted_lp(&mags, p, weight) * bracket(&nf).powf(s)
        })
        .collect();
    Ok(weighted_lp(&pieces, q, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::C64;
    use crate::spaces::{amalgam_norm, lebesgue_norm};
    use std::f64::consts::PI;

    #[test]
    fn bump_profile() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(0.5), 1.0);
        assert_eq!(bump(-1.0), 0.0);
        assert!((bump(0.75) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = bump(0.5 + 0.005 * i as f64);
            assert!(v <= prev && v >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn partition_of_unity() {
        let g = Grid::new(2, 64, 2.0).unwrap();
        let part = build_partition(&g, 7).unwrap();
        let n0 = [0i64, 0];
        assert_eq!(part.window_at(&n0, g.ravel(&[32, 32])), 1.0);
        for idx in 0..g.len() {
            let xi = g.freq_point(idx);
            if xi[0].abs().max(xi[1].abs()) <= 6.0 {
                assert!((part.coverage_at(idx) - 1.0).abs() < 1e-12);
            }
            for n in part.boxes() {
                let w = part.window_at(&n, idx);
                assert!(w >= 0.0);
                if w > 0.0 {
                    assert!((xi[0] - n[0] as f64).abs() <= 1.0);
                    assert!((xi[1] - n[1] as f64).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn windows_are_translates() {
        let g = Grid::new(1, 128, 3.0).unwrap();
        let part = build_partition(&g, 9).unwrap();
        let m = g.cells_per_unit();
        for n in -3i64..=3 {
            for idx in 30..98 {
                let shifted = (idx as i64 - n * m as i64) as usize;
                assert_eq!(part.window_at(&[n], idx), part.window_at(&[0], shifted));
            }
        }
    }

    #[test]
    fn rejects_oversized_radius() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        assert!(build_partition(&g, 3).is_ok());
        assert!(matches!(
            build_partition(&g, 4),
            Err(Error::InsufficientPartition(_))
        ));
    }

    #[test]
    fn decomposition_norm_basics() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let part = build_partition(&g, g.max_partition_radius()).unwrap();
        assert_eq!(
            modulation_norm_decomp(&Field::zeros(&g), 1.0, 1.0, 0.0, &part).unwrap(),
            0.0
        );
        let f = Field::from_fn(&g, |x| C64::from_polar(f64::exp(-PI * x[0] * x[0]), 2.0 * x[0]));
        let m22 = modulation_norm_decomp(&f, 2.0, 2.0, 0.0, &part).unwrap();
        let l2 = lebesgue_norm(&f, 2.0).unwrap();
        // sum_n sigma_n^2 lies in [1/2, 1] pointwise
        assert!(m22 <= l2 * (1.0 + 1e-12) && m22 >= l2 / 2f64.sqrt());
        let sharp = amalgam_norm(&f, 2.0, 1.0, 0.0).unwrap();
        let smooth = modulation_norm_decomp(&f, 2.0, 1.0, 0.0, &part).unwrap();
        assert!(smooth / sharp > 0.3 && smooth / sharp < 3.0);
    }

    #[test]
    fn coverage_failure_is_reported() {
        let g = Grid::new(1, 128, 2.0).unwrap();
        let part = build_partition(&g, 2).unwrap();
        let f = Field::from_fn(&g, |x| C64::from_polar(f64::exp(-PI * x[0] * x[0]), 2.0 * PI * 6.0 * x[0]));
        assert!(matches!(
            modulation_norm_decomp(&f, 2.0, 2.0, 0.0, &part),
            Err(Error::InsufficientPartition(_))
        ));
    }
}
