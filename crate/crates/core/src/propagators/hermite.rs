//! Normalized Hermite functions on the lattice and the semigroup
//! `e^{-itH} f = sum_alpha e^{-it(2|alpha| + d)} <f, Phi_alpha> Phi_alpha`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, C64};
use crate::spaces::lebesgue_norm;

/// Largest tolerated deviation of the lattice Gram matrix from the identity.
const GRAM_TOL: f64 = 1e-10;
/// Largest tolerated `L^2` residual `||f - P f|| / ||f||` in [`HermiteBasis::evolve`].
pub const TAIL_TOL: f64 = 1e-8;

/// `Phi_0, ..., Phi_K` sampled on one axis, tensorized over `d` axes.
#[derive(Clone, Debug)]
pub struct HermiteBasis {
    grid: Grid,
    degree: usize,
    /// `funcs[k * N + j] = Phi_k(x_j)`.
    funcs: Vec<f64>,
    /// `2|alpha| + d` for each multi-index, row-major in `alpha`.
    eig: Vec<f64>,
}

/// `Phi_k(x)` for `k = 0..=degree` by the three-term recurrence
/// `Phi_{k+1} = sqrt(2/(k+1)) x Phi_k - sqrt(k/(k+1)) Phi_{k-1}`, carrying the
/// Gaussian factor as a separate exponent so large `|x|` neither underflows
/// early nor overflows.
fn hermite_column(x: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut expo = -0.5 * x * x;
    let scale_at = |a: f64, e: f64| {
        if a == 0.0 {
            0.0
        } else {
            a.signum() * (a.abs().ln() + e).exp()
        }
    };
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25);
    out.push(scale_at(cur, expo));
    for k in 0..degree {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > 1e150 {
            prev *= 1e-150;
            cur *= 1e-150;
            expo += 150.0 * std::f64::consts::LN_10;
        }
        out.push(scale_at(cur, expo));
    }
    out
}

pub fn build_hermite_basis(grid: &Grid, degree: usize) -> Result<HermiteBasis> {
    let n = grid.n();
    let k1 = degree + 1;
    let turning = (2.0 * degree as f64 + 1.0).sqrt();
    if turning >= grid.half_len() {
        return Err(Error::InvalidParameter(format!(
            "Hermite degree K = {degree} is not resolved: turning point {turning:.3} reaches L = {}",
            grid.half_len()
        )));
    }
    // Phi_k is, up to a phase, its own transform at xi = x / (2 pi)
    if turning / (2.0 * PI) >= grid.max_frequency() {
        return Err(Error::InvalidParameter(format!(
            "Hermite degree K = {degree} is not resolved: spectral turning point {:.3} exceeds N/(4L) = {}",
            turning / (2.0 * PI),
            grid.max_frequency()
        )));
    }
    let mut funcs = vec![0.0; k1 * n];
    for j in 0..n {
        for (k, v) in hermite_column(grid.position(j), degree).into_iter().enumerate() {
            funcs[k * n + j] = v;
        }
    }
    let dx = grid.dx();
    let mut worst: f64 = 0.0;
    for a in 0..k1 {
        for b in a..k1 {
            let ip: f64 = (0..n).map(|j| funcs[a * n + j] * funcs[b * n + j]).sum::<f64>() * dx;
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((ip - target).abs());
        }
    }
    if worst > GRAM_TOL {
        return Err(Error::InvalidParameter(format!(
            "Hermite degree K = {degree} is not resolved on this grid: Gram matrix deviates from identity by {worst:.2e}"
        )));
    }
    let d = grid.dim();
    let total = k1.pow(d as u32);
    let eig = (0..total)
        .map(|mut idx| {
            let mut deg = 0;
            for _ in 0..d {
                deg += idx % k1;
                idx /= k1;
            }
            (2 * deg + d) as f64
        })
        .collect();
    Ok(HermiteBasis {
        grid: grid.clone(),
        degree,
        funcs,
        eig,
    })
}

/// Applies `mat` (`rows x cols`, row-major) along `axis` of a row-major tensor
/// with extents `dims`; `dims[axis]` must equal `cols` and becomes `rows`.
fn apply_axis<F: Fn(usize, usize) -> f64>(
    data: &[C64],
    dims: &mut [usize],
    axis: usize,
    rows: usize,
    cols: usize,
    mat: F,
) -> Vec<C64> {
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut out = vec![C64::default(); outer * rows * inner];
    for o in 0..outer {
        for r in 0..rows {
            let dst = &mut out[(o * rows + r) * inner..(o * rows + r + 1) * inner];
            for c in 0..cols {
                let m = mat(r, c);
                if m == 0.0 {
                    continue;
                }
                let src = &data[(o * cols + c) * inner..(o * cols + c + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s * m;
                }
            }
        }
    }
    dims[axis] = rows;
    out
}

impl HermiteBasis {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `Phi_k` on the axis lattice.
    pub fn function(&self, k: usize) -> &[f64] {
        let n = self.grid.n();
        &self.funcs[k * n..(k + 1) * n]
    }

    /// `2|alpha| + d` in coefficient order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig
    }

    /// `<f, Phi_alpha>` for all `alpha` with every `alpha_a <= K`, row-major.
    pub fn coefficients(&self, f: &Field) -> Vec<C64> {
        let n = self.grid.n();
        let k1 = self.degree + 1;
        let d = self.grid.dim();
        let dx = self.grid.dx();
        let mut dims = vec![n; d];
        let mut data = f.values().to_vec();
        for axis in 0..d {
            data = apply_axis(&data, &mut dims, axis, k1, n, |r, c| self.funcs[r * n + c] * dx);
        }
        data
    }

    pub fn synthesize(&self, coeffs: &[C64]) -> Field {
        let n = self.grid.n();
        let k1 = self.degree + 1;
        let d = self.grid.dim();
        let mut dims = vec![k1; d];
        let mut data = coeffs.to_vec();
        for axis in 0..d {
            data = apply_axis(&data, &mut dims, axis, n, k1, |r, c| self.funcs[c * n + r]);
        }
        Field::from_raw(&self.grid, data)
    }

    /// `|| f - sum_alpha <f, Phi_alpha> Phi_alpha ||_{L^2} / ||f||_{L^2}`.
    pub fn tail(&self, f: &Field) -> f64 {
        let norm = lebesgue_norm(f, 2.0).expect("p = 2");
        if norm == 0.0 {
            return 0.0;
        }
        let back = self.synthesize(&self.coefficients(f));
        lebesgue_norm(&f.sub(&back).expect("same grid"), 2.0).expect("p = 2") / norm
    }

    /// `e^{-itH} f`; fails if `f` is not captured by the truncated basis.
    pub fn evolve(&self, f: &Field, t: f64) -> Result<Field> {
        self.grid.ensure_same(f.grid())?;
        let tail = self.tail(f);
        if tail > TAIL_TOL {
            return Err(Error::TruncationTail { tail, limit: TAIL_TOL });
        }
        let mut c = self.coefficients(f);
        for (v, l) in c.iter_mut().zip(&self.eig) {
            *v *= C64::from_polar(1.0, -t * l);
        }
        Ok(self.synthesize(&c))
    }
}

/// `e^{-itH} f` with a freshly built basis of degree `degree` per axis.
pub fn harmonic_evolve(f: &Field, t: f64, degree: usize) -> Result<Field> {
    build_hermite_basis(f.grid(), degree)?.evolve(f, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{generate, EnsembleConfig};
    use crate::spaces::{modulation_norm_stft, oscillator_window};

    fn grid1() -> Grid {
        Grid::new(1, 512, 16.0).unwrap()
    }

    fn narrow_member(g: &Grid, id: u64) -> Field {
        let cfg = EnsembleConfig::default().oscillator_adapted();
        generate(g, &cfg.with_count(id as usize + 1).with_seed(11))
            .unwrap()
            .remove(id as usize)
    }

    #[test]
    fn ground_state_and_orthonormality() {
        let g = grid1();
        let b = build_hermite_basis(&g, 64).unwrap();
        for j in 0..g.n() {
            let x = g.position(j);
            let expect = PI.powf(-0.25) * (-0.5 * x * x).exp();
            assert!((b.function(0)[j] - expect).abs() < 1e-15);
        }
        // Gram matrix is checked in the constructor; spot check
        let ip: f64 = b.function(7).iter().zip(b.function(7)).map(|(a, c)| a * c).sum::<f64>() * g.dx();
        assert!((ip - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eigen_residual_by_spectral_differentiation() {
        let g = grid1();
        let kmax = 64;
        let b = build_hermite_basis(&g, kmax).unwrap();
        for k in 0..=kmax / 2 {
            let phi = Field::from_raw(&g, b.function(k).iter().map(|&v| C64::from(v)).collect());
            let spec = phi.forward();
            let lap = crate::grid::SpectralField::from_raw(
                &g,
                spec.values()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * 4.0 * PI * PI * g.freq_norm_sq(i))
                    .collect(),
            )
            .inverse();
            let h = Field::from_raw(
                &g,
                (0..g.n())
                    .map(|j| {
                        let x = g.position(j);
                        lap.values()[j] + phi.values()[j] * (x * x - (2 * k + 1) as f64)
                    })
                    .collect(),
            );
            let res = lebesgue_norm(&h, 2.0).unwrap();
            assert!(res < 1e-6, "k {k}: residual {res}");
        }
    }

    #[test]
    fn rejects_unresolved_degree() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        assert!(build_hermite_basis(&g, 64).is_err());
        let g = Grid::new(1, 64, 16.0).unwrap();
        assert!(build_hermite_basis(&g, 64).is_err());
    }

    #[test]
    fn eigenstates_rotate_by_their_phase() {
        let g = grid1();
        let b = build_hermite_basis(&g, 64).unwrap();
        for k in [0usize, 3, 10] {
            let phi = Field::from_raw(&g, b.function(k).iter().map(|&v| C64::from(v)).collect());
            let t = 0.37;
            let out = b.evolve(&phi, t).unwrap();
            let phase = C64::from_polar(1.0, -t * (2 * k + 1) as f64);
            for (o, p) in out.values().iter().zip(phi.values()) {
                assert!((o - p * phase).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn periodicity_group_law_and_unitarity() {
        let g = grid1();
        let b = build_hermite_basis(&g, 64).unwrap();
        let f = narrow_member(&g, 0);
        let back = b.evolve(&f, 2.0 * PI).unwrap();
        for (a, c) in back.values().iter().zip(f.values()) {
            assert!((a - c).norm() < 1e-8);
        }
        let two = b.evolve(&b.evolve(&f, 0.3).unwrap(), 0.9).unwrap();
        let one = b.evolve(&f, 1.2).unwrap();
        for (a, c) in two.values().iter().zip(one.values()) {
            assert!((a - c).norm() < 1e-8);
        }
        let ratio = lebesgue_norm(&one, 2.0).unwrap() / lebesgue_norm(&f, 2.0).unwrap();
        assert!((ratio - 1.0).abs() < 1e-8);
    }

    #[test]
    fn tail_is_reported() {
        let g = grid1();
        let b = build_hermite_basis(&g, 8).unwrap();
        let f = Field::from_fn(&g, |x| C64::from_polar((-(x[0] - 6.0).powi(2)).exp(), 5.0 * x[0]));
        assert!(matches!(b.evolve(&f, 1.0), Err(Error::TruncationTail { .. })));
    }

    #[test]
    fn tensor_coefficients_factor() {
        let g = Grid::new(2, 64, 8.0).unwrap();
        let g1 = Grid::new(1, 64, 8.0).unwrap();
        let k = 10;
        let b = build_hermite_basis(&g, k).unwrap();
        let b1 = build_hermite_basis(&g1, k).unwrap();
        let fa = |x: f64| C64::from_polar((-0.6 * (x - 0.5).powi(2)).exp(), 0.8 * x);
        let fb = |x: f64| C64::new((-(x + 0.3).powi(2)).exp(), 0.5 * (-0.5 * x * x).exp());
        let f = Field::from_fn(&g, |x| fa(x[0]) * fb(x[1]));
        let ca = b1.coefficients(&Field::from_fn(&g1, |x| fa(x[0])));
        let cb = b1.coefficients(&Field::from_fn(&g1, |x| fb(x[0])));
        let c = b.coefficients(&f);
        for i in 0..=k {
            for j in 0..=k {
                assert!((c[i * (k + 1) + j] - ca[i] * cb[j]).norm() < 1e-12);
            }
        }
        // eigenvalue bookkeeping: degree i + j
        assert_eq!(b.eigenvalues()[3 * (k + 1) + 4], (2 * 7 + 2) as f64);
    }

    #[test]
    fn modulation_pp_isometry_with_oscillator_window() {
        let g = grid1();
        let b = build_hermite_basis(&g, 64).unwrap();
        let w = oscillator_window(&g);
        let f = narrow_member(&g, 1);
        for p in [1.0, 2.0, 4.0] {
            let base = modulation_norm_stft(&f, p, p, 0.0, &w).unwrap();
            for t in [0.3, 1.0, 2.5] {
                let after = modulation_norm_stft(&b.evolve(&f, t).unwrap(), p, p, 0.0, &w).unwrap();
                assert!((after / base - 1.0).abs() < 1e-3, "p {p} t {t}: {}", after / base);
            }
        }
    }
}
