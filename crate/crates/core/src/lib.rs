//! Random walks among deterministic conductances on `Z^d`.
//!
//! The crate is `no_std` (it only needs `alloc`). It contains:
//!
//! - [`environment`]: lazily evaluated conductance configurations (constant,
//!   periodic, quasiperiodic, hashed i.i.d., perturbed, shifted).
//! - [`observable`] and [`averaging`]: local observables of the environment and
//!   their spatial block averages, moment and temperedness scans.
//! - [`walk`]: the discrete- and continuous-time conductance walk.
//! - [`solver`]: finite-window generator, Dirichlet and massive Poisson solves.
//! - [`corrector`]: the explicit one-dimensional corrector, the approximate
//!   corrector `chi_eps` and the second-order corrector `theta`.
//! - [`homogenize`]: Dirichlet energies and the effective covariance.
//! - [`stats`]: small statistical helpers shared by the experiments.
#![no_std]

extern crate alloc;

pub mod averaging;
pub mod corrector;
pub mod environment;
mod error;
pub mod homogenize;
pub mod lattice;
pub(crate) mod math;
pub mod observable;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod walk;

pub use environment::{Distribution, Environment, PeriodicCell, PerturbRule};
pub use error::{Error, Result};
pub use lattice::{Edge, Site, MAX_DIM};
pub use observable::{EnvView, LocalObservable};
