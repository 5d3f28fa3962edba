//! Function-space norms: `L^p`, `FL^p`, Fourier amalgam `w^{p,q}_s`,
//! modulation `M^{p,q}_s` (box decomposition and STFT forms), `H^s`, and
//! space-time `L^q_t L^r_x`.
//!
//! Exponents are plain `f64` values in `[1, inf]`; `f64::INFINITY` selects the
//! sup norm over lattice points (or over boxes for the outer index).

mod partition;
mod stft;

pub use partition::{bump, build_partition, modulation_norm_decomp, Partition};
pub use stft::{gaussian_window, modulation_norm_stft, oscillator_window, stft_column};

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SpectralField, C64};

/// Outermost-shell share above which amalgam sums are reported as truncated.
pub const TAIL_WARN_FRACTION: f64 = 1e-10;

pub fn check_exponent(name: &'static str, value: f64) -> Result<()> {
    if value >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent { name, value })
    }
}

/// Japanese bracket `(1 + |v|^2)^{1/2}`.
pub fn bracket(v: &[f64]) -> f64 {
    (1.0 + v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// `(sum_i |a_i|^p w)^{1/p}`, or `max |a_i|` for `p = inf`. Rescales by the
/// maximum so large exponents do not overflow.
pub(crate) fn weighted_lp(mags: &[f64], p: f64, weight: f64) -> f64 {
    let max = mags.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return max;
    }
    let sum: f64 = mags.iter().map(|m| (m / max).powf(p)).sum();
    max * (sum * weight).powf(1.0 / p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Lebesgue,
    FourierLebesgue,
    FourierAmalgam,
    ModulationDecomp,
    ModulationStft,
    Sobolev,
}

/// Which norm to evaluate. `q` is ignored by the single-index norms; `s` is
/// the `<n>^s` (or `<xi>^s`) weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub kind: NormKind,
    #[serde(with = "exponent_serde")]
    pub p: f64,
    #[serde(with = "exponent_serde", default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub s: f64,
}

fn default_q() -> f64 {
    2.0
}

/// Exponents serialize as numbers, with `"inf"` standing for infinity.
pub mod exponent_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "infinity" | "Infinity" => Ok(f64::INFINITY),
                other => Err(de::Error::custom(format!("bad exponent {other:?}"))),
            },
        }
    }
}

impl NormSpec {
    pub fn new(kind: NormKind, p: f64, q: f64, s: f64) -> Self {
        Self { kind, p, q, s }
    }

    pub fn lebesgue(p: f64) -> Self {
        Self::new(NormKind::Lebesgue, p, p, 0.0)
    }

    pub fn amalgam(p: f64, q: f64) -> Self {
        Self::new(NormKind::FourierAmalgam, p, q, 0.0)
    }

    pub fn modulation(p: f64, q: f64) -> Self {
        Self::new(NormKind::ModulationDecomp, p, q, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent("p", self.p)?;
        check_exponent("q", self.q)?;
        if !self.s.is_finite() {
            return Err(Error::InvalidParameter(format!("weight s = {}", self.s)));
        }
        Ok(())
    }

    /// Evaluates the norm with default auxiliary data: the widest partition the
    /// grid allows and the normalized Gaussian STFT window.
    pub fn evaluate(&self, f: &Field) -> Result<f64> {
        self.validate()?;
        match self.kind {
            NormKind::Lebesgue => lebesgue_norm(f, self.p),
            NormKind::FourierLebesgue => fourier_lebesgue_norm(f, self.p),
            NormKind::FourierAmalgam => amalgam_norm(f, self.p, self.q, self.s),
            NormKind::ModulationDecomp => {
                let part = build_partition(f.grid(), f.grid().max_partition_radius())?;
                modulation_norm_decomp(f, self.p, self.q, self.s, &part)
            }
            NormKind::ModulationStft => {
                let window = gaussian_window(f.grid());
                modulation_norm_stft(f, self.p, self.q, self.s, &window)
            }
            NormKind::Sobolev => Ok(sobolev_norm(f, self.s)),
        }
    }

    pub fn label(&self) -> String {
        let e = |v: f64| {
            if v.is_infinite() {
                "inf".to_string()
            } else {
                format!("{v}")
            }
        };
        match self.kind {
            NormKind::Lebesgue => format!("L^{}", e(self.p)),
            NormKind::FourierLebesgue => format!("FL^{}", e(self.p)),
            NormKind::Sobolev => format!("H^{}", self.s),
            NormKind::FourierAmalgam => format!("w^{{{},{}}}_{}", e(self.p), e(self.q), self.s),
            NormKind::ModulationDecomp => format!("M^{{{},{}}}_{}", e(self.p), e(self.q), self.s),
            NormKind::ModulationStft => {
                format!("M_stft^{{{},{}}}_{}", e(self.p), e(self.q), self.s)
            }
        }
    }
}

pub fn lebesgue_norm(f: &Field, p: f64) -> Result<f64> {
    check_exponent("p", p)?;
    let mags: Vec<f64> = f.values().iter().map(|v| v.norm()).collect();
    Ok(weighted_lp(&mags, p, f.grid().cell_volume()))
}

/// `L^p` norm of spectral samples with respect to `dxi^d`.
pub fn spectral_lebesgue_norm(spec: &SpectralField, p: f64) -> Result<f64> {
    check_exponent("p", p)?;
    let mags: Vec<f64> = spec.values().iter().map(|v| v.norm()).collect();
    Ok(weighted_lp(&mags, p, spec.grid().freq_cell_volume()))
}

pub fn fourier_lebesgue_norm(f: &Field, p: f64) -> Result<f64> {
    spectral_lebesgue_norm(&f.forward(), p)
}

/// Per-box `L^p_xi` norms of a spectrum over the sharp unit cubes.
#[derive(Clone, Debug)]
pub struct BoxNorms {
    /// Lowest box index on each axis.
    pub lo: i64,
    /// Boxes per axis.
    pub per_axis: usize,
    pub dim: usize,
    pub norms: Vec<f64>,
}

impl BoxNorms {
    pub fn compute(spec: &SpectralField, p: f64) -> Result<Self> {
        check_exponent("p", p)?;
        let g = spec.grid();
        let n = g.n();
        let lo = g.box_of_label(g.freq_label(0));
        let hi = g.box_of_label(g.freq_label(n - 1));
        let per_axis = (hi - lo + 1) as usize;
        let axis_box: Vec<usize> = (0..n)
            .map(|m| (g.box_of_label(g.freq_label(m)) - lo) as usize)
            .collect();
        let nboxes = per_axis.pow(g.dim() as u32);
        let max = spec.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut acc = vec![0.0; nboxes];
        for (idx, v) in spec.values().iter().enumerate() {
            let multi = g.unravel(idx);
            let b = multi[..g.dim()]
                .iter()
                .fold(0, |acc, &m| acc * per_axis + axis_box[m]);
            let mag = v.norm();
            if p.is_infinite() {
                acc[b] = f64::max(acc[b], mag);
            } else if max > 0.0 {
                acc[b] += (mag / max).powf(p);
            }
        }
        if p.is_finite() {
            let w = g.freq_cell_volume();
            for a in &mut acc {
                *a = max * (*a * w).powf(1.0 / p);
            }
        }
        Ok(Self {
            lo,
            per_axis,
            dim: g.dim(),
            norms: acc,
        })
    }

    /// Integer box index of flat box position `b`.
    pub fn box_of(&self, mut b: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            out[a] = (b % self.per_axis) as i64 + self.lo;
            b /= self.per_axis;
        }
        out
    }

    /// Weighted `l^q` combination `|| <n>^s ||box||_p ||_{l^q}`.
    pub fn combine(&self, q: f64, s: f64) -> f64 {
        let weighted: Vec<f64> = self
            .norms
            .iter()
            .enumerate()
            .map(|(b, &v)| {
                if v == 0.0 || s == 0.0 {
                    v
                } else {
                    let n: Vec<f64> = self.box_of(b).iter().map(|&k| k as f64).collect();
                    v * bracket(&n).powf(s)
                }
            })
            .collect();
        weighted_lp(&weighted, q, 1.0)
    }

    /// Share of the outermost box shell in the weighted sum.
    pub fn tail_fraction(&self, q: f64, s: f64) -> f64 {
        let total = self.combine(q, s);
        if total == 0.0 {
            return 0.0;
        }
        let outer = self.lo.abs().max((self.lo + self.per_axis as i64 - 1).abs());
        let shell_max = (0..self.norms.len())
            .filter(|&b| self.box_of(b).iter().map(|k| k.abs()).max().unwrap_or(0) >= outer)
            .map(|b| {
                let n: Vec<f64> = self.box_of(b).iter().map(|&k| k as f64).collect();
                self.norms[b] * bracket(&n).powf(s)
            })
            .fold(0.0, f64::max);
        shell_max / total
    }
}

/// `|| <n>^s || chi_{n + (-1/2,1/2]^d} spec ||_{L^p} ||_{l^q_n}` for an
/// already-transformed spectrum.
pub fn amalgam_norm_spectral(spec: &SpectralField, p: f64, q: f64, s: f64) -> Result<f64> {
    check_exponent("q", q)?;
    let boxes = BoxNorms::compute(spec, p)?;
    let value = boxes.combine(q, s);
    let tail = boxes.tail_fraction(q, s);
    if tail > TAIL_WARN_FRACTION {
        log::warn!(
            "amalgam norm: outermost frequency shell carries {tail:.2e} of the total; grid may be under-resolved"
        );
    }
    Ok(value)
}

pub fn amalgam_norm(f: &Field, p: f64, q: f64, s: f64) -> Result<f64> {
    amalgam_norm_spectral(&f.forward(), p, q, s)
}

/// `|| <xi>^s f^ ||_{L^2}`.
pub fn sobolev_norm(f: &Field, s: f64) -> f64 {
    let spec = f.forward();
    let g = f.grid();
    let sum: f64 = spec
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| (1.0 + g.freq_norm_sq(i)).powf(s) * v.norm_sqr())
        .sum();
    (sum * g.freq_cell_volume()).sqrt()
}

/// Trapezoid weights for a sample of times.
pub(crate) fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = times[i] - times[i - 1];
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
    }
    w
}

/// `(int ||u(t)||_{L^r}^q dt)^{1/q}` by the trapezoid rule over the samples,
/// or `max_t ||u(t)||_{L^r}` for `q = inf`.
pub fn spacetime_norm_samples(times: &[f64], states: &[Field], q: f64, r: f64) -> Result<f64> {
    check_exponent("q", q)?;
    check_exponent("r", r)?;
    if states.is_empty() || times.len() != states.len() {
        return Err(Error::Empty("trajectory"));
    }
    let slices = states
        .iter()
        .map(|u| lebesgue_norm(u, r))
        .collect::<Result<Vec<_>>>()?;
    if q.is_infinite() {
        return Ok(slices.iter().copied().fold(0.0, f64::max));
    }
    if states.len() < 2 {
        return Err(Error::Empty("trajectory needs at least two samples"));
    }
    let w = trapezoid_weights(times);
    let sum: f64 = slices.iter().zip(&w).map(|(v, w)| v.powf(q) * w).sum();
    Ok(sum.powf(1.0 / q))
}

pub fn spacetime_norm(traj: &Trajectory, q: f64, r: f64) -> Result<f64> {
    spacetime_norm_samples(&traj.times, &traj.states, q, r)
}

/// The field with `f^(xi) = |xi|^{-d/2}` on `0 < |xi| <= 1` and zero elsewhere,
/// including at the lattice origin. It has finite `w^{p,q}` norm for `p < 2`
/// while its `L^2` norm diverges logarithmically as the lattice is refined.
pub fn witness_spectrum(grid: &Grid) -> SpectralField {
    let m2 = (grid.cells_per_unit() * grid.cells_per_unit()) as i64;
    let d = grid.dim() as f64;
    let values = (0..grid.len())
        .map(|i| {
            let k = grid.freq_labels(i);
            let k2: i64 = k[..grid.dim()].iter().map(|v| v * v).sum();
            if k2 == 0 || k2 > m2 {
                C64::default()
            } else {
                C64::from(grid.freq_norm_sq(i).powf(-d / 4.0))
            }
        })
        .collect();
    SpectralField::new(grid, values).expect("witness spectrum is finite")
}

pub fn witness_function(grid: &Grid) -> Field {
    witness_spectrum(grid).inverse()
}
