//! Simulation and inversion toolkit for NV-center two-dimensional nanoscale
//! NMR: propagates an electron-nuclear spin system under dynamical-decoupling
//! pulse protocols, produces 1D/2D spectra, and inverts them into coupling
//! parameters, diamond-lattice positions, bond lengths, and small-molecule
//! geometry.

pub mod constants;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod hamiltonian;
pub mod inversion;
pub mod io;
pub mod par;
pub mod propagate;
pub mod sequence;
pub mod spectra;
pub mod system;
pub mod tensor;

pub use error::{Error, Result};
