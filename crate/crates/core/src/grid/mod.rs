//! Periodic computational domain `[-L, L)^d`, its dual frequency lattice and
//! the discrete Fourier transform with the `e^{-2 pi i x.xi}` convention.
//!
//! Samples are stored row-major by axis. Physical sample `j` on an axis sits at
//! `x_j = -L + j dx`; spectral sample `m` sits at `xi_m = (m - N/2) dxi`, so the
//! frequency lattice is stored in centered order (zero frequency at `N/2`), not
//! in FFT wrap order.
//!
//! With `dx = 2L/N` and `dxi = 1/(2L)` the forward transform is the Riemann sum
//! `F f(xi) = sum_x f(x) e^{-2 pi i x.xi} dx^d`, and the inverse uses `dxi^d`.
//! Because `2L` is an integer, unit frequency cubes `n + (-1/2, 1/2]^d` contain
//! exactly `(2L)^d` lattice points each.

pub mod io;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Maximum supported dimension.
pub const MAX_DIM: usize = 3;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `(-1)^j` for physical index `j`.
    sign_pos: Vec<f64>,
    /// `(-1)^(m - N/2)` for spectral index `m`.
    sign_freq: Vec<f64>,
}

/// Uniform periodic lattice on `[-L, L)^d`. Cheap to clone; FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_len: f64,
    cells_per_unit: usize,
    plans: Arc<Plans>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.half_len == other.half_len
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("half_len", &self.half_len)
            .finish()
    }
}

impl Grid {
    /// Builds the lattice. `n` must be even and at least 8, `2 * half_len` a
    /// positive integer, and `dim` one of 1, 2, 3.
    pub fn new(dim: usize, n: usize, half_len: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!("unsupported dimension {dim}")));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("N = {n} is odd")));
        }
        if n < 8 {
            return Err(Error::InvalidGrid(format!("N = {n} is below the minimum of 8")));
        }
        let side = 2.0 * half_len;
        if !(side.is_finite() && side >= 1.0 && side.fract() == 0.0) {
            return Err(Error::InvalidGrid(format!(
                "2L = {side} is not a positive integer"
            )));
        }
        if n.checked_pow(dim as u32).is_none() {
            return Err(Error::InvalidGrid("N^d overflows".into()));
        }
        let mut planner = FftPlanner::new();
        let sign = |k: i64| if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let half = (n / 2) as i64;
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            sign_pos: (0..n as i64).map(sign).collect(),
            sign_freq: (0..n as i64).map(|m| sign(m - half)).collect(),
        };
        Ok(Self {
            dim,
            n,
            half_len,
            cells_per_unit: side as usize,
            plans: Arc::new(plans),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_len(&self) -> f64 {
        self.half_len
    }

    /// Total number of samples, `N^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_len / self.n as f64
    }

    pub fn dxi(&self) -> f64 {
        1.0 / (2.0 * self.half_len)
    }

    /// `dx^d`, the quadrature weight in physical space.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    /// `dxi^d`, the quadrature weight in frequency space.
    pub fn freq_cell_volume(&self) -> f64 {
        self.dxi().powi(self.dim as i32)
    }

    /// Lattice frequencies per axis inside one unit cube, i.e. `2L`.
    pub fn cells_per_unit(&self) -> usize {
        self.cells_per_unit
    }

    /// Largest resolved frequency `N / (4L)`.
    pub fn max_frequency(&self) -> f64 {
        self.n as f64 / (4.0 * self.half_len)
    }

    /// Largest box radius `n_max` admissible for a smooth partition:
    /// the largest integer not exceeding `N/(4L) - 1`.
    pub fn max_partition_radius(&self) -> i64 {
        (self.max_frequency() - 1.0).floor() as i64
    }

    pub fn position(&self, j: usize) -> f64 {
        -self.half_len + j as f64 * self.dx()
    }

    /// Signed integer frequency label `k = m - N/2` of spectral index `m`.
    pub fn freq_label(&self, m: usize) -> i64 {
        m as i64 - (self.n / 2) as i64
    }

    pub fn frequency(&self, m: usize) -> f64 {
        self.freq_label(m) as f64 * self.dxi()
    }

    /// Unit-cube index of the lattice frequency with label `k`, computed in
    /// exact integer arithmetic: the unique `n` with `k/(2L) in (n - 1/2, n + 1/2]`.
    pub fn box_of_label(&self, k: i64) -> i64 {
        let m = self.cells_per_unit as i64;
        // ceil((2k - m) / (2m))
        let num = 2 * k - m;
        let den = 2 * m;
        -((-num).div_euclid(den))
    }

    /// Per-axis multi-index of flat index `idx`; unused trailing slots are zero.
    pub fn unravel(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn ravel(&self, multi: &[usize]) -> usize {
        multi[..self.dim].iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Physical coordinates of flat index `idx`.
    pub fn point(&self, idx: usize) -> [f64; MAX_DIM] {
        let multi = self.unravel(idx);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.position(multi[a]);
        }
        x
    }

    /// Frequency coordinates of flat spectral index `idx`.
    pub fn freq_point(&self, idx: usize) -> [f64; MAX_DIM] {
        let multi = self.unravel(idx);
        let mut xi = [0.0; MAX_DIM];
        for a in 0..self.dim {
            xi[a] = self.frequency(multi[a]);
        }
        xi
    }

    /// Integer frequency labels of flat spectral index `idx`.
    pub fn freq_labels(&self, idx: usize) -> [i64; MAX_DIM] {
        let multi = self.unravel(idx);
        let mut k = [0; MAX_DIM];
        for a in 0..self.dim {
            k[a] = self.freq_label(multi[a]);
        }
        k
    }

    /// `|xi|^2` at flat spectral index `idx`.
    pub fn freq_norm_sq(&self, idx: usize) -> f64 {
        let xi = self.freq_point(idx);
        xi[..self.dim].iter().map(|v| v * v).sum()
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn transform_in_place(&self, data: &mut [C64], forward: bool) {
        let n = self.n;
        let plans = &*self.plans;
        let (fft, pre, post) = if forward {
            (&plans.forward, &plans.sign_pos, &plans.sign_freq)
        } else {
            (&plans.inverse, &plans.sign_freq, &plans.sign_pos)
        };
        let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
        let mut lines = vec![C64::default(); data.len()];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let outer = data.len() / (n * stride);
            // gather lines along `axis` into contiguous storage
            let mut line = 0;
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * n * stride + inner;
                    let dst = &mut lines[line * n..(line + 1) * n];
                    for (j, v) in dst.iter_mut().enumerate() {
                        *v = data[base + j * stride] * pre[j];
                    }
                    line += 1;
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            let mut line = 0;
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * n * stride + inner;
                    let src = &lines[line * n..(line + 1) * n];
                    for (j, v) in src.iter().enumerate() {
                        data[base + j * stride] = v * post[j];
                    }
                    line += 1;
                }
            }
        }
        let scale = if forward {
            self.cell_volume()
        } else {
            self.freq_cell_volume()
        };
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

fn check_finite(values: &[C64]) -> Result<()> {
    match values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        None => Ok(()),
        Some(i) => Err(Error::InvalidParameter(format!(
            "non-finite sample at index {i}"
        ))),
    }
}

macro_rules! sampled_type {
    ($name:ident) => {
        impl $name {
            pub fn new(grid: &Grid, values: Vec<C64>) -> Result<Self> {
                if values.len() != grid.len() {
                    return Err(Error::InvalidParameter(format!(
                        "expected {} samples, got {}",
                        grid.len(),
                        values.len()
                    )));
                }
                check_finite(&values)?;
                Ok(Self {
                    grid: grid.clone(),
                    values,
                })
            }

            pub fn zeros(grid: &Grid) -> Self {
                Self {
                    grid: grid.clone(),
                    values: vec![C64::default(); grid.len()],
                }
            }

            pub fn grid(&self) -> &Grid {
                &self.grid
            }

            pub fn values(&self) -> &[C64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [C64] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<C64> {
                self.values
            }

            pub fn scaled(&self, c: C64) -> Self {
                Self {
                    grid: self.grid.clone(),
                    values: self.values.iter().map(|v| v * c).collect(),
                }
            }

            pub fn conj(&self) -> Self {
                Self {
                    grid: self.grid.clone(),
                    values: self.values.iter().map(|v| v.conj()).collect(),
                }
            }

            /// Pointwise product.
            pub fn mul(&self, other: &Self) -> Result<Self> {
                self.grid.ensure_same(&other.grid)?;
                Ok(Self {
                    grid: self.grid.clone(),
                    values: self
                        .values
                        .iter()
                        .zip(&other.values)
                        .map(|(a, b)| a * b)
                        .collect(),
                })
            }

            pub fn sub(&self, other: &Self) -> Result<Self> {
                self.grid.ensure_same(&other.grid)?;
                Ok(Self {
                    grid: self.grid.clone(),
                    values: self
                        .values
                        .iter()
                        .zip(&other.values)
                        .map(|(a, b)| a - b)
                        .collect(),
                })
            }

            pub fn add(&self, other: &Self) -> Result<Self> {
                self.grid.ensure_same(&other.grid)?;
                Ok(Self {
                    grid: self.grid.clone(),
                    values: self
                        .values
                        .iter()
                        .zip(&other.values)
                        .map(|(a, b)| a + b)
                        .collect(),
                })
            }

            pub fn is_finite(&self) -> bool {
                self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
            }

            pub(crate) fn from_raw(grid: &Grid, values: Vec<C64>) -> Self {
                debug_assert_eq!(values.len(), grid.len());
                Self {
                    grid: grid.clone(),
                    values,
                }
            }
        }
    };
}

/// Complex samples in physical space.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<C64>,
}

/// Complex samples on the centered frequency lattice.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    values: Vec<C64>,
}

sampled_type!(Field);
sampled_type!(SpectralField);

impl Field {
    /// Samples `f` at every lattice point.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> C64) -> Self {
        let values = (0..grid.len())
            .map(|i| f(&grid.point(i)[..grid.dim()]))
            .collect();
        Self::from_raw(grid, values)
    }

    pub fn forward(&self) -> SpectralField {
        forward_transform(self)
    }
}

impl SpectralField {
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> C64) -> Self {
        let values = (0..grid.len())
            .map(|i| f(&grid.freq_point(i)[..grid.dim()]))
            .collect();
        Self::from_raw(grid, values)
    }

    pub fn inverse(&self) -> Field {
        inverse_transform(self)
    }
}

/// Riemann-sum Fourier transform `F f(xi) = sum_x f(x) e^{-2 pi i x.xi} dx^d`
/// on the centered frequency lattice.
pub fn forward_transform(f: &Field) -> SpectralField {
    let mut values = f.values.clone();
    f.grid.transform_in_place(&mut values, true);
    SpectralField::from_raw(&f.grid, values)
}

/// Inverse of [`forward_transform`]: `f(x) = sum_xi F(xi) e^{2 pi i x.xi} dxi^d`.
pub fn inverse_transform(spec: &SpectralField) -> Field {
    let mut values = spec.values.clone();
    spec.grid.transform_in_place(&mut values, false);
    Field::from_raw(&spec.grid, values)
}

/// The unique `n in Z^d` with `xi in n + (-1/2, 1/2]^d`.
pub fn box_index(xi: &[f64]) -> Vec<i64> {
    xi.iter().map(|&v| (v - 0.5).ceil() as i64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn direct_dft(f: &Field) -> Vec<C64> {
        let g = f.grid();
        (0..g.len())
            .map(|m| {
                let xi = g.freq_point(m);
                (0..g.len())
                    .map(|j| {
                        let x = g.point(j);
                        let phase: f64 = (0..g.dim()).map(|a| x[a] * xi[a]).sum();
                        f.values()[j] * C64::from_polar(1.0, -2.0 * PI * phase)
                    })
                    .sum::<C64>()
                    * g.cell_volume()
            })
            .collect()
    }

    #[test]
    fn grid_spacings() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        assert_eq!(g.dx(), 1.0 / 16.0);
        assert_eq!(g.dxi(), 1.0 / 16.0);
        assert_eq!(g.cells_per_unit(), 16);
        let g = Grid::new(2, 128, 4.0).unwrap();
        assert_eq!(g.dx(), 1.0 / 16.0);
        assert_eq!(g.dxi(), 1.0 / 8.0);
        assert_eq!(g.dx() * g.dxi() * g.n() as f64, 1.0);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(Grid::new(1, 257, 8.0), Err(Error::InvalidGrid(_))));
        assert!(Grid::new(1, 256, 8.25).is_err());
        assert!(Grid::new(4, 16, 2.0).is_err());
        assert!(Grid::new(0, 16, 2.0).is_err());
        assert!(Grid::new(1, 6, 2.0).is_err());
        assert!(Grid::new(1, 64, 1.5).is_ok());
    }

    #[test]
    fn box_index_endpoints() {
        assert_eq!(box_index(&[0.5]), vec![0]);
        assert_eq!(box_index(&[0.5 + 1e-9]), vec![1]);
        assert_eq!(box_index(&[-0.5, 1.2]), vec![-1, 1]);
        assert_eq!(box_index(&[-0.5 + 1e-9]), vec![0]);
    }

    #[test]
    fn lattice_box_matches_real_box_index() {
        for &l in &[0.5, 1.0, 1.5, 4.0, 8.0] {
            let g = Grid::new(1, 64, l).unwrap();
            for m in 0..g.n() {
                let k = g.freq_label(m);
                assert_eq!(g.box_of_label(k), box_index(&[g.frequency(m)])[0], "L={l} k={k}");
            }
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = Grid::new(2, 16, 2.0).unwrap();
        let f = Field::zeros(&g);
        assert!(f.forward().values().iter().all(|v| *v == C64::default()));
        let s = SpectralField::zeros(&g);
        assert!(s.inverse().values().iter().all(|v| *v == C64::default()));
    }

    #[test]
    fn gaussian_is_self_dual() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let f = Field::from_fn(&g, |x| C64::from(f64::exp(-PI * x[0] * x[0])));
        let spec = f.forward();
        let err = (0..g.n())
            .map(|m| {
                let xi = g.frequency(m);
                (spec.values()[m] - f64::exp(-PI * xi * xi)).norm()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn matches_direct_summation() {
        for (d, n, l) in [(1, 16, 2.0), (2, 8, 1.5), (3, 8, 1.0)] {
            let g = Grid::new(d, n, l).unwrap();
            let f = Field::from_fn(&g, |x| {
                let r: f64 = x.iter().enumerate().map(|(a, v)| (a as f64 + 1.0) * v).sum();
                C64::new(r.sin(), (0.3 * r).cos() + r * r * 0.01)
            });
            let fast = f.forward();
            let slow = direct_dft(&f);
            for (a, b) in fast.values().iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12, "d={d}");
            }
        }
    }

    #[test]
    fn delta_spectrum_inverts_to_constant() {
        let g = Grid::new(2, 16, 2.0).unwrap();
        let mut s = SpectralField::zeros(&g);
        let origin = g.ravel(&[8, 8]);
        s.values_mut()[origin] = C64::new(1.0, 0.0);
        let f = s.inverse();
        // direct sum: single term e^{0} dxi^d
        for v in f.values() {
            assert!((v - C64::from(g.freq_cell_volume())).norm() < 1e-15);
        }
    }

    #[test]
    fn round_trip_and_plancherel() {
        let g = Grid::new(2, 32, 2.0).unwrap();
        let f = Field::from_fn(&g, |x| C64::new((x[0] * 3.0).sin() + x[1], x[0] * x[1]));
        let back = f.forward().inverse();
        let scale = f.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).norm() < 1e-12 * scale);
        }
        let lhs: f64 = f.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * g.cell_volume();
        let rhs: f64 =
            f.forward().values().iter().map(|v| v.norm_sqr()).sum::<f64>() * g.freq_cell_volume();
        assert!((lhs - rhs).abs() < 1e-12 * lhs);
    }

    #[test]
    fn shift_is_modulation() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let f = Field::from_fn(&g, |x| C64::new(f64::exp(-x[0] * x[0]), 0.2 * x[0]));
        let n = g.n();
        let shifted = Field::new(
            &g,
            (0..n).map(|j| f.values()[(j + n - 1) % n]).collect(),
        )
        .unwrap();
        let a = f.forward();
        let b = shifted.forward();
        for m in 0..n {
            let phase = C64::from_polar(1.0, -2.0 * PI * g.dx() * g.frequency(m));
            assert!((b.values()[m] - a.values()[m] * phase).norm() < 1e-12);
        }
    }

    #[test]
    fn unit_cubes_partition_the_lattice() {
        let g = Grid::new(2, 64, 2.0).unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for idx in 0..g.len() {
            let k = g.freq_labels(idx);
            let b = (g.box_of_label(k[0]), g.box_of_label(k[1]));
            *counts.entry(b).or_insert(0usize) += 1;
        }
        let limit = g.max_frequency();
        let per_cube = g.cells_per_unit().pow(2);
        for (&(b0, b1), &c) in &counts {
            if (b0.abs().max(b1.abs()) as f64) < limit {
                assert_eq!(c, per_cube);
            }
        }
        assert_eq!(counts.values().sum::<usize>(), g.len());
    }
}
