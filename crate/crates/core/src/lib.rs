//! Spectral numerics for the stochastic heat equation driven by spatially
//! colored Gaussian noise: covariance kernels, lattice Fourier transforms,
//! fractional operators, exact per-mode simulation, deterministic heat solvers,
//! the reproducing kernel Hilbert space of the solution, and numerical
//! germ-Markov diagnostics.

pub mod error;
pub mod fracops;
pub mod io;
pub mod lattice;
pub mod markov;
pub mod pde;
pub mod profiles;
pub mod quadrature;
pub mod rkhs;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
pub use lattice::{Field, Layout, LaplacianSymbol, Representation, SpaceTimeLattice, TimeRule};
pub use spectral::{KernelFamily, SpectralMeasure};
