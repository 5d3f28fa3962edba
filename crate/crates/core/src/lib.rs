//! Pseudospectral laboratory for the mixed fractional Hartree equation
//! `i u_t + ((-Delta)^{s1} + (-Delta)^{s2}) u = (K * |u|^2) u`, `K = lambda |x|^{-gamma}`,
//! its harmonic-oscillator variant, and the function-space norms and
//! estimates its well-posedness theory rests on.
//!
//! Layout:
//! - [`grid`]: periodic lattice, Fourier convention, field storage and I/O.
//! - [`spaces`]: `L^p`, `FL^p`, Fourier amalgam, modulation, Sobolev and space-time norms.
//! - [`hartree`]: the Hartree kernel as a Fourier multiplier and the trilinear term.
//! - [`propagators`]: the free mixed fractional flow and the Hermite semigroup.
//! - [`dynamics`]: Duhamel/Picard solver, Strang split-step integrator, diagnostics.
//! - [`ensemble`]: seeded random test fields.
//! - [`verify`]: estimate checks bundled into suites.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod hartree;
pub mod propagators;
pub mod spaces;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Field, Grid, SpectralField, C64};
