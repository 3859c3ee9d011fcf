//! Euler–Maruyama density schemes for density-dependent SDEs driven by
//! rotationally invariant α-stable noise on a periodic grid.

pub mod density_scheme;
pub mod drift;
pub mod error;
pub mod fpe_solver;
pub mod grid;
pub mod harness;
pub mod heat_kernel;
pub mod particles;
pub mod spectral;
pub mod stable_noise;

pub use error::{Error, Result};
