//! Data-driven spectral analysis of Koopman operators.
//!
//! Given snapshot data `(x, F(x))` of a dynamical system, this crate builds
//! Galerkin matrices over a dictionary of observables and computes:
//!
//! * eigenvalue candidates together with *data-computable residuals* that
//!   certify them (or expose them as spectral pollution),
//! * practical approximations of ε-pseudospectra on grids in the complex
//!   plane, with the one-sided guarantee that accepted points carry small
//!   residual in the large-data limit,
//! * smoothed spectral measures of measure-preserving systems, through two
//!   routes: filtered Fourier (autocorrelation) sums, and convolution with
//!   high-order rational kernels evaluated via resolvents,
//! * a kernelized pipeline that learns a compact dictionary from data in a
//!   reproducing-kernel Hilbert space, for high-dimensional state spaces.
//!
//! The crate is organized bottom-up: [`dynamics`] (benchmark systems and
//! snapshot generation), [`quadrature`] (sampling rules and weights),
//! [`dictionary`] (observable bases), [`galerkin`] (matrix assembly,
//! residuals, pseudospectra), [`measure_filter`] and [`measure_rational`]
//! (the two spectral-measure routes), [`kernelized`] (dictionary learning),
//! and [`io`] (CSV / binary / JSON artifacts).

pub mod dictionary;
pub mod dynamics;
pub mod error;
pub mod galerkin;
pub mod io;
pub mod kernelized;
pub mod linalg;
pub mod measure_filter;
pub mod measure_rational;
pub mod quadrature;

pub use error::{Error, Result};
pub use linalg::{C64, CMat, CVec, RVec};
