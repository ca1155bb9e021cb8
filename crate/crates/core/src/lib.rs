//! Boundary-driven multi-velocity exclusion process with momentum-conserving
//! collisions.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the algorithmic
//! parts only:
//!
//! * [`model`]: velocity sets, collision rules, conserved site quantities.
//! * [`thermo`]: product measures `m_λ`, the density/momentum map and its
//!   Newton inverse, compressibility and reservoir boundary data.
//! * [`lattice`]: slab geometry, occupancy storage, local-equilibrium
//!   sampling and empirical profiles.
//! * [`dynamics`]: the continuous-time Markov chain at diffusive speed
//!   (exact Gillespie with a rate tree), Dynkin martingale estimator, and an
//!   exact generator builder for tiny systems.
//! * [`pde`]: finite-difference solver for the one-dimensional hydrodynamic
//!   system under Dirichlet, Robin and Neumann closures, its weak residual,
//!   and a Fourier energy functional.
//!
//! File formats, the experiment harness and the command line live in the
//! `mvex` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod pde;
pub mod rng;
pub mod thermo;

pub use lattice::{Configuration, EmpiricalProfile, LatticeGeom};
pub use model::{CollisionRule, SiteObservable, VelocityModel};
pub use thermo::{ChemicalPotential, HydroVector};
