//! The Hartree kernel `K(x) = lambda |x|^{-gamma}` as a Fourier multiplier
//! `K^(xi) = lambda C(d, gamma) |xi|^{gamma - d}`, its split into the pieces
//! `k1` (`|xi| <= 1`) and `k2` (`|xi| > 1`), and the trilinear term
//! `H(f, g, h) = (K * (f conj(g))) h`.
//!
//! The constant `C(d, gamma)` is the one for which `F(|x|^{-gamma}) = C |xi|^{gamma-d}`
//! under `F f(xi) = int f(x) e^{-2 pi i x.xi} dx`; other conventions rescale it.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SpectralField, C64};
use crate::spaces::{amalgam_norm_spectral, lebesgue_norm, BoxNorms};

fn check_gamma(d: usize, gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < d as f64 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "gamma = {gamma} violates 0 < gamma < d = {d}"
        )))
    }
}

/// `C(d, gamma) = pi^{gamma - d/2} Gamma((d - gamma)/2) / Gamma(gamma/2)`.
pub fn riesz_constant(d: usize, gamma: f64) -> Result<f64> {
    check_gamma(d, gamma)?;
    let d = d as f64;
    Ok(PI.powf(gamma - d / 2.0) * gamma_fn((d - gamma) / 2.0) / gamma_fn(gamma / 2.0))
}

/// Mean of `|y|^{-a}` over the unit cube `[-1/2, 1/2]^d`, `0 < a < d`.
///
/// The cube splits into `2d` pyramids with apex at the origin; the radial
/// integral is exact and the face integral is smooth.
pub fn cube_average_power(d: usize, a: f64) -> f64 {
    let face = match d {
        1 => 0.5f64.powf(-a),
        2 => {
            let q = GaussLegendre::new(NonZeroUsize::new(64).unwrap());
            q.integrate(-0.5, 0.5, |u| (0.25 + u * u).powf(-a / 2.0))
        }
        _ => {
            let q = GaussLegendre::new(NonZeroUsize::new(48).unwrap());
            q.integrate(-0.5, 0.5, |u| {
                q.integrate(-0.5, 0.5, |v| (0.25 + u * u + v * v).powf(-a / 2.0))
            })
        }
    };
    2.0 * d as f64 * 0.5 * face / (d as f64 - a)
}

#[derive(Clone, Debug)]
pub struct HartreeKernel {
    pub lambda: f64,
    pub gamma: f64,
    pub dim: usize,
    /// `lambda C(d, gamma)`.
    pub c: f64,
    /// Value assigned at `xi = 0`: the mean of `c |xi|^{gamma-d}` over the frequency cell.
    pub zero_mode: f64,
    pub symbol: SpectralField,
    pub k1: SpectralField,
    pub k2: SpectralField,
}

/// Builds `K^` on the frequency lattice of `grid`. Lattice points with
/// `|xi| = 1` belong to `k1`.
pub fn make_kernel(grid: &Grid, lambda: f64, gamma: f64) -> Result<HartreeKernel> {
    let d = grid.dim();
    let c = lambda * riesz_constant(d, gamma)?;
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda = {lambda}")));
    }
    let a = d as f64 - gamma;
    let zero_mode = c * grid.dxi().powf(-a) * cube_average_power(d, a);
    let m2 = (grid.cells_per_unit() * grid.cells_per_unit()) as i64;
    let len = grid.len();
    let mut symbol = Vec::with_capacity(len);
    let mut k1 = Vec::with_capacity(len);
    let mut k2 = Vec::with_capacity(len);
    for i in 0..len {
        let k = grid.freq_labels(i);
        let k2sum: i64 = k[..d].iter().map(|v| v * v).sum();
        let v = if k2sum == 0 {
            zero_mode
        } else {
            c * grid.freq_norm_sq(i).powf(-a / 2.0)
        };
        symbol.push(C64::from(v));
        // |xi|^2 = k2sum / (2L)^2, compared exactly
        if k2sum <= m2 {
            k1.push(C64::from(v));
            k2.push(C64::default());
        } else {
            k1.push(C64::default());
            k2.push(C64::from(v));
        }
    }
    Ok(HartreeKernel {
        lambda,
        gamma,
        dim: d,
        c,
        zero_mode,
        symbol: SpectralField::new(grid, symbol)?,
        k1: SpectralField::new(grid, k1)?,
        k2: SpectralField::new(grid, k2)?,
    })
}

impl HartreeKernel {
    pub fn grid(&self) -> &Grid {
        self.symbol.grid()
    }

    /// `K^` at an arbitrary integer frequency label vector, including labels
    /// outside the stored lattice.
    pub fn symbol_at_label(&self, k: &[i64]) -> f64 {
        let k2: i64 = k.iter().map(|v| v * v).sum();
        if k2 == 0 {
            self.zero_mode
        } else {
            let dxi = self.grid().dxi();
            self.c * (k2 as f64 * dxi * dxi).powf(-(self.dim as f64 - self.gamma) / 2.0)
        }
    }

    /// `K * w` for `w` given in frequency space.
    pub fn apply_spectral(&self, w: &SpectralField) -> Result<Field> {
        Ok(self.symbol.mul(w)?.inverse())
    }
}

/// `F^{-1}(K^ w^)`, the periodic realization of `K * w`.
pub fn convolve_kernel(kernel: &HartreeKernel, w: &Field) -> Result<Field> {
    kernel.grid().ensure_same(w.grid())?;
    kernel.apply_spectral(&w.forward())
}

/// `(K * (f conj(g))) h`.
pub fn trilinear(kernel: &HartreeKernel, f: &Field, g: &Field, h: &Field) -> Result<Field> {
    let potential = convolve_kernel(kernel, &f.mul(&g.conj())?)?;
    potential.mul(h)
}

/// `|| K * (f conj(g)) ||_{FL^1}`.
pub fn potential_fl1(kernel: &HartreeKernel, f: &Field, g: &Field) -> Result<f64> {
    let spec = f.mul(&g.conj())?.forward();
    kernel.grid().ensure_same(spec.grid())?;
    let sum: f64 = spec
        .values()
        .iter()
        .zip(kernel.symbol.values())
        .map(|(a, k)| a.norm() * k.re.abs())
        .sum();
    Ok(sum * spec.grid().freq_cell_volume())
}

fn pairing_inputs(f: &Field, g: &Field) -> Result<(Vec<f64>, Vec<f64>)> {
    f.grid().ensure_same(g.grid())?;
    let a = f.forward().values().iter().map(|v| v.norm()).collect();
    // (f conj g)^(xi) = sum_{xi1 - xi2 = xi} f^(xi1) conj(g^(xi2))
    let b = g.forward().values().iter().map(|v| v.norm()).collect();
    Ok((a, b))
}

/// `sum_{xi1, xi2} |f^(xi1)| |g^(xi2)| |K^(xi1 - xi2)| dxi^{2d}`, the
/// discrete Riesz pairing `<I|f^|, |g^|>`; it bounds `||K * (f conj g)||_{FL^1}`. Evaluated as a zero-padded
/// FFT convolution followed by one sum.
pub fn riesz_pairing(kernel: &HartreeKernel, f: &Field, g: &Field) -> Result<f64> {
    kernel.grid().ensure_same(f.grid())?;
    let (a, b) = pairing_inputs(f, g)?;
    let grid = kernel.grid();
    let d = grid.dim();
    let n = grid.n();
    let n2 = 2 * n;
    let pad = Grid::new(d, n2, n as f64 / 2.0)?;
    // labels k in [-N/2, N/2) sit at padded index k + N; kernel labels in (-N, N)
    let mut av = vec![C64::default(); pad.len()];
    for (i, v) in a.iter().enumerate() {
        let multi = grid.unravel(i);
        let mut p = [0usize; 3];
        for ax in 0..d {
            p[ax] = multi[ax] + n / 2;
        }
        av[pad.ravel(&p)] = C64::from(*v);
    }
    let mut kv = vec![C64::default(); pad.len()];
    let mut label = [0i64; 3];
    for (i, slot) in kv.iter_mut().enumerate() {
        let multi = pad.unravel(i);
        let mut inside = true;
        for ax in 0..d {
            label[ax] = multi[ax] as i64 - n as i64;
            inside &= label[ax] > -(n as i64);
        }
        if inside {
            *slot = C64::from(kernel.symbol_at_label(&label[..d]).abs());
        }
    }
    let conv = Field::new(&pad, av)?
        .forward()
        .mul(&Field::new(&pad, kv)?.forward())?
        .inverse();
    let unit = pad.cell_volume();
    let mut sum = 0.0;
    for (i, v) in b.iter().enumerate() {
        let multi = grid.unravel(i);
        let mut p = [0usize; 3];
        for ax in 0..d {
            p[ax] = multi[ax] + n / 2;
        }
        sum += v * conv.values()[pad.ravel(&p)].re / unit;
    }
    Ok(sum * grid.freq_cell_volume().powi(2))
}

/// Double-loop evaluation of [`riesz_pairing`], `O(N^{2d})`.
pub fn riesz_pairing_direct(kernel: &HartreeKernel, f: &Field, g: &Field) -> Result<f64> {
    kernel.grid().ensure_same(f.grid())?;
    let (a, b) = pairing_inputs(f, g)?;
    let grid = kernel.grid();
    let d = grid.dim();
    let mut sum = 0.0;
    let mut diff = [0i64; 3];
    for (i, av) in a.iter().enumerate() {
        let ki = grid.freq_labels(i);
        for (j, bv) in b.iter().enumerate() {
            let kj = grid.freq_labels(j);
            for ax in 0..d {
                diff[ax] = ki[ax] - kj[ax];
            }
            sum += av * bv * kernel.symbol_at_label(&diff[..d]).abs();
        }
    }
    Ok(sum * grid.freq_cell_volume().powi(2))
}

/// Which trilinear estimate a ratio is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum Variant {
    /// `||H||_{w^{p,q}} / prod ||.||_{w^{p,q}}` for `q <= 2d/(d+gamma) <= p`.
    A,
    /// Both sides in `w^{p,q} cap L^2` for `q < 2d/(d+gamma)`, `q <= p`.
    B1,
    /// `||H||_{w^{p,q}} / prod ||.||_{w^{p,q} cap L^2}` for `q > 2d/(d-2 gamma)`, `p <= q`.
    B2,
    /// `||H||_Y / ((||f||_2 ||g||_2 + ||f||_{2 rho} ||g||_{2 rho}) ||h||_Y)`,
    /// `Y = w^{p,q}`, for `gamma < d/2` and `d/(d-gamma) < rho <= 2`.
    C { rho: f64 },
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::A => write!(f, "A"),
            Variant::B1 => write!(f, "B1"),
            Variant::B2 => write!(f, "B2"),
            Variant::C { rho } => write!(f, "C(rho={rho})"),
        }
    }
}

fn require(cond: bool, what: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Hypothesis(what()))
    }
}

impl Variant {
    /// Rejects `(d, gamma, p, q)` outside the estimate's hypotheses, naming the
    /// first violated inequality.
    pub fn check(&self, d: usize, gamma: f64, p: f64, q: f64) -> Result<()> {
        check_gamma(d, gamma).map_err(|_| Error::Hypothesis(format!("0 < gamma < d fails for gamma = {gamma}, d = {d}")))?;
        require(p >= 1.0 && q >= 1.0, || format!("1 <= p, q fails for p = {p}, q = {q}"))?;
        let df = d as f64;
        let crit = 2.0 * df / (df + gamma);
        match *self {
            Variant::A => {
                require(q <= crit, || format!("q <= 2d/(d+gamma) = {crit} fails for q = {q}"))?;
                require(crit <= p, || format!("2d/(d+gamma) = {crit} <= p fails for p = {p}"))
            }
            Variant::B1 => {
                require(q < crit, || format!("q < 2d/(d+gamma) = {crit} fails for q = {q}"))?;
                require(q <= p, || format!("q <= p fails for p = {p}, q = {q}"))
            }
            Variant::B2 => {
                let den = df - 2.0 * gamma;
                require(den > 0.0, || {
                    format!("2d/(d-2 gamma) is not finite (gamma = {gamma} >= d/2 = {})", df / 2.0)
                })?;
                let lo = 2.0 * df / den;
                require(q > lo, || format!("q > 2d/(d-2 gamma) = {lo} fails for q = {q}"))?;
                require(p <= q, || format!("p <= q fails for p = {p}, q = {q}"))
            }
            Variant::C { rho } => {
                require(gamma < df / 2.0, || format!("gamma < d/2 = {} fails for gamma = {gamma}", df / 2.0))?;
                let lo = df / (df - gamma);
                require(lo < rho && rho <= 2.0, || {
                    format!("d/(d-gamma) = {lo} < rho <= 2 fails for rho = {rho}")
                })
            }
        }
    }
}

/// Norms of one ensemble member that every variant draws on.
struct MemberNorms {
    amalgam: f64,
    l2: f64,
    l2rho: f64,
}

fn member_norms(f: &Field, p: f64, q: f64, rho: f64) -> Result<MemberNorms> {
    Ok(MemberNorms {
        amalgam: BoxNorms::compute(&f.forward(), p)?.combine(q, 0.0),
        l2: lebesgue_norm(f, 2.0)?,
        l2rho: lebesgue_norm(f, 2.0 * rho)?,
    })
}

/// The ratio for a single triple.
pub fn trilinear_ratio(
    kernel: &HartreeKernel,
    (f, g, h): (&Field, &Field, &Field),
    p: f64,
    q: f64,
    variant: Variant,
) -> Result<f64> {
    variant.check(kernel.dim, kernel.gamma, p, q)?;
    let rho = match variant {
        Variant::C { rho } => rho,
        _ => 1.0,
    };
    let out = trilinear(kernel, f, g, h)?;
    let target_w = amalgam_norm_spectral(&out.forward(), p, q, 0.0)?;
    let nf = member_norms(f, p, q, rho)?;
    let ng = member_norms(g, p, q, rho)?;
    let nh = member_norms(h, p, q, rho)?;
    let cap = |n: &MemberNorms| n.amalgam.max(n.l2);
    let (num, den) = match variant {
        Variant::A => (target_w, nf.amalgam * ng.amalgam * nh.amalgam),
        Variant::B1 => (
            target_w.max(lebesgue_norm(&out, 2.0)?),
            cap(&nf) * cap(&ng) * cap(&nh),
        ),
        Variant::B2 => (target_w, cap(&nf) * cap(&ng) * cap(&nh)),
        Variant::C { .. } => (target_w, (nf.l2 * ng.l2 + nf.l2rho * ng.l2rho) * nh.amalgam),
    };
    if num == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrilinearRow {
    pub variant: String,
    pub d: usize,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub member: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrilinearReport {
    pub variant: Variant,
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
    pub max: f64,
    pub median: f64,
    pub ratios: Vec<f64>,
}

impl TrilinearReport {
    pub fn rows(&self, kernel: &HartreeKernel) -> Vec<TrilinearRow> {
        self.ratios
            .iter()
            .enumerate()
            .map(|(member, &ratio)| TrilinearRow {
                variant: self.variant.to_string(),
                d: kernel.dim,
                gamma: kernel.gamma,
                p: self.p,
                q: self.q,
                n: kernel.grid().n(),
                member,
                ratio,
            })
            .collect()
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ratios over the triples `(e_i, e_{i+1}, e_{i+2})` (indices mod the ensemble size).
pub fn estimate_trilinear_constants(
    kernel: &HartreeKernel,
    ensemble: &[Field],
    p: f64,
    q: f64,
    variant: Variant,
) -> Result<TrilinearReport> {
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    variant.check(kernel.dim, kernel.gamma, p, q)?;
    let n = ensemble.len();
    let ratios = (0..n)
        .into_par_iter()
        .map(|i| {
            let t = (&ensemble[i], &ensemble[(i + 1) % n], &ensemble[(i + 2) % n]);
            trilinear_ratio(kernel, t, p, q, variant)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrilinearReport {
        variant,
        p,
        q,
        gamma: kernel.gamma,
        max: ratios.iter().copied().fold(0.0, f64::max),
        median: median(&ratios),
        ratios,
    })
}

/// Writes rows as CSV with header `variant,d,gamma,p,q,N,member,ratio`.
pub fn write_trilinear_csv<W: Write>(w: W, rows: &[TrilinearRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}
