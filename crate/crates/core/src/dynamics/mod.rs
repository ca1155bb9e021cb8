//! Markov dynamics at diffusive speed `N²`: symmetric and weakly asymmetric
//! exclusion per velocity, momentum-conserving collisions, and Glauber
//! reservoirs damped by `N^{-θ}` on the two faces `x_1 = 1` and `x_1 = N−1`.

use alloc::vec::Vec;

use crate::lattice::{LatticeError, LatticeGeom, MAX_DIM};
use crate::model::VelocityModel;
use crate::thermo::Reservoirs;

mod dynkin;
pub mod generator;
mod jump;
mod sim;
pub mod tree;

pub use dynkin::{drift, dynkin_martingale, martingale_path, MartingaleStat};
pub use jump::{default_jump_law, Jump, JumpLaw};
pub use sim::{simulate, BoundaryCounters, Event, Simulator, StepOutcome};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("velocity {velocity} is not a lattice vector; supply a jump law")]
    NonLatticeVelocity { velocity: usize },
    #[error("jump law has {found} velocity entries, expected {expected}")]
    JumpLawShape { expected: usize, found: usize },
    #[error("jump law for velocity {velocity} has mean {mean:?}, which differs from the velocity")]
    WrongMean { velocity: usize, mean: Vec<f64> },
    #[error("jump law for velocity {velocity} sums to {total}, not 1")]
    NotNormalised { velocity: usize, total: f64 },
    #[error("jump law for velocity {velocity} has probability {probability} outside [0,1]")]
    BadProbability { velocity: usize, probability: f64 },
    #[error("jump law for velocity {velocity} contains the zero displacement")]
    ZeroDisplacement { velocity: usize },
    #[error("jump law for velocity {velocity} moves along an axis beyond the model dimension")]
    JumpOutsideDimension { velocity: usize },
    #[error("theta must be finite and non-negative, got {0}")]
    Theta(f64),
    #[error("the slab geometry needs reservoir profiles")]
    MissingReservoirs,
    #[error("reservoir profiles have {found} velocities, expected {expected}")]
    ReservoirShape { expected: usize, found: usize },
    #[error("model dimension {model} does not match lattice dimension {lattice}")]
    ModelDimension { model: usize, lattice: usize },
    #[error("state space of 2^{bits} configurations exceeds the 2^20 limit")]
    StateSpaceTooLarge { bits: usize },
    #[error("no replicas were run")]
    EmptyStatistic,
    #[error("snapshot times must be sorted and non-negative")]
    Snapshots,
    #[error("test function has {found} values, expected {expected}")]
    TestFunctionShape { expected: usize, found: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// The generator `𝓛_{N,θ} = N²{𝓛^b_{N,θ} + 𝓛^c + 𝓛^{ex}}` on one geometry.
///
/// On a torus geometry there is no boundary part and `reservoirs` is
/// ignored.
#[derive(Debug, Clone)]
pub struct Dynamics<'m> {
    model: &'m VelocityModel,
    geom: LatticeGeom,
    theta: f64,
    jumps: JumpLaw,
    reservoirs: Option<Reservoirs>,
}

impl<'m> Dynamics<'m> {
    pub fn new(
        model: &'m VelocityModel,
        geom: LatticeGeom,
        theta: f64,
        jumps: JumpLaw,
        reservoirs: Option<Reservoirs>,
    ) -> Result<Self, DynamicsError> {
        if model.dim() != geom.dim() {
            return Err(DynamicsError::ModelDimension {
                model: model.dim(),
                lattice: geom.dim(),
            });
        }
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(DynamicsError::Theta(theta));
        }
        if jumps.len() != model.len() {
            return Err(DynamicsError::JumpLawShape {
                expected: model.len(),
                found: jumps.len(),
            });
        }
        if !geom.is_torus() {
            match &reservoirs {
                None => return Err(DynamicsError::MissingReservoirs),
                Some(r) if r.alpha.len() != model.len() || r.beta.len() != model.len() => {
                    return Err(DynamicsError::ReservoirShape {
                        expected: model.len(),
                        found: r.alpha.len().min(r.beta.len()),
                    })
                }
                _ => {}
            }
        }
        Ok(Self {
            model,
            geom,
            theta,
            jumps,
            reservoirs,
        })
    }

    pub fn model(&self) -> &'m VelocityModel {
        self.model
    }

    pub fn geom(&self) -> &LatticeGeom {
        &self.geom
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn jumps(&self) -> &JumpLaw {
        &self.jumps
    }

    pub fn reservoirs(&self) -> Option<&Reservoirs> {
        self.reservoirs.as_ref()
    }

    /// `N²`.
    pub fn speed(&self) -> f64 {
        let n = self.geom.n() as f64;
        n * n
    }

    /// `N^{2−θ}`, the prefactor of reservoir flip rates.
    pub fn boundary_speed(&self) -> f64 {
        libm::pow(self.geom.n() as f64, 2.0 - self.theta)
    }

    /// `P_N(z, v)` summed over the jump law and the symmetric part:
    /// `½ Σ_j (δ_{z,e_j} + δ_{z,−e_j}) + p(z, v)/N`, as a list of distinct
    /// displacements with their weights.
    pub fn kernel(&self, v: usize) -> Vec<([i64; MAX_DIM], f64)> {
        let d = self.geom.dim();
        let inv_n = 1.0 / self.geom.n() as f64;
        let mut out: Vec<([i64; MAX_DIM], f64)> = Vec::new();
        let mut add = |z: [i64; MAX_DIM], w: f64| {
            if let Some(e) = out.iter_mut().find(|(y, _)| *y == z) {
                e.1 += w;
            } else {
                out.push((z, w));
            }
        };
        for axis in 0..d {
            for s in [1i64, -1] {
                let mut z = [0i64; MAX_DIM];
                z[axis] = s;
                add(z, 0.5);
            }
        }
        for j in self.jumps.jumps(v) {
            if j.probability > 0.0 {
                add(j.displacement, j.probability * inv_n);
            }
        }
        out
    }

    /// Reservoir density for velocity `v` at a boundary site.
    pub fn reservoir_density(&self, left: bool, site: usize, v: usize) -> f64 {
        let r = self.reservoirs.as_ref().expect("slab dynamics carries reservoirs");
        let (tr, k) = self.geom.transverse(site);
        let prof = if left { &r.alpha } else { &r.beta };
        prof.value(v, &tr[..k])
    }
}
