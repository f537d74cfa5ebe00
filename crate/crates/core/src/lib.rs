//! Small-noise and wing asymptotics for stochastic volatility models.
//!
//! * [`control`]: affine control systems, Hamiltonian extremals, shooting and
//!   the deterministic Malliavin matrix.
//! * [`stein_stein`]: closed-form minimizers and local-variance wing slopes.
//! * [`heston`]: moment explosion and the Heston slope formula.
//! * [`fourier`]: characteristic-function pricing and Dupire local variance.
//! * [`mc`]: Euler–Maruyama simulation and kernel conditional expectations.

pub mod control;
pub mod error;
pub mod fourier;
pub mod heston;
pub mod mc;
pub mod quadrature;
pub mod roots;
pub mod stein_stein;

pub use error::{Error, Result};
