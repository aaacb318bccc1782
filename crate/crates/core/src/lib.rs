//! Boundedness analysis for energy-preserving quadratic systems
//! `dx/dt = c + L x + phi(x)`, with `phi_i(x) = x^T Q_i x` and `x . phi(x) = 0`.
//!
//! The crate covers the shifted-energy trapping-region test, the planar
//! canonical form with its complete classification, effective-nonlinearity
//! checks, quartic Lyapunov certificates, and a numerical integrator used to
//! cross-check every analytical verdict.

pub mod builtin;
pub mod canonical2d;
pub mod certificate;
pub mod effective;
pub mod error;
pub mod format;
pub mod linalg;
pub mod simulate;
pub mod system;
pub mod trap;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use system::{QuadraticSystem, ShiftedSystem};
