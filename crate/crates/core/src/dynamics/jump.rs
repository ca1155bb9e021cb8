//! Weakly asymmetric jump laws `p(z, v)`.

use alloc::vec::Vec;

use crate::lattice::MAX_DIM;
use crate::model::VelocityModel;

use super::DynamicsError;

const MEAN_TOL: f64 = 1e-12;

/// One displacement with its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub displacement: [i64; MAX_DIM],
    pub probability: f64,
}

/// Per-velocity finite-range transition probabilities with mean `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLaw {
    dim: usize,
    per_velocity: Vec<Vec<Jump>>,
    range: f64,
}

impl JumpLaw {
    /// Validates normalisation, bounds and the mean constraint `Σ_z z p(z,v) = v`.
    pub fn new(model: &VelocityModel, per_velocity: Vec<Vec<Jump>>) -> Result<Self, DynamicsError> {
        if per_velocity.len() != model.len() {
            return Err(DynamicsError::JumpLawShape {
                expected: model.len(),
                found: per_velocity.len(),
            });
        }
        let d = model.dim();
        if d > MAX_DIM {
            return Err(DynamicsError::Lattice(crate::lattice::LatticeError::Dimension(d)));
        }
        let mut range: f64 = 0.0;
        for (v, jumps) in per_velocity.iter().enumerate() {
            let mut total = 0.0;
            let mut mean = [0.0f64; MAX_DIM];
            for j in jumps {
                if j.displacement[d..].iter().any(|&c| c != 0) {
                    return Err(DynamicsError::JumpOutsideDimension { velocity: v });
                }
                if j.displacement[..d].iter().all(|&c| c == 0) {
                    return Err(DynamicsError::ZeroDisplacement { velocity: v });
                }
                if !(0.0..=1.0).contains(&j.probability) {
                    return Err(DynamicsError::BadProbability {
                        velocity: v,
                        probability: j.probability,
                    });
                }
                total += j.probability;
                for k in 0..d {
                    mean[k] += j.displacement[k] as f64 * j.probability;
                }
                let norm = libm::sqrt(j.displacement[..d].iter().map(|&c| (c * c) as f64).sum::<f64>());
                range = range.max(norm);
            }
            if libm::fabs(total - 1.0) > MEAN_TOL {
                return Err(DynamicsError::NotNormalised { velocity: v, total });
            }
            let target = model.velocity(v);
            if (0..d).any(|k| libm::fabs(mean[k] - target[k]) > MEAN_TOL) {
                return Err(DynamicsError::WrongMean {
                    velocity: v,
                    mean: mean[..d].to_vec(),
                });
            }
        }
        Ok(Self {
            dim: d,
            per_velocity,
            range,
        })
    }

    /// `p(z, v) = 1` at `z = v`; needs every velocity on the integer lattice.
    pub fn deterministic(model: &VelocityModel) -> Result<Self, DynamicsError> {
        let d = model.dim();
        let mut per_velocity = Vec::with_capacity(model.len());
        for (idx, v) in model.velocities().enumerate() {
            let mut z = [0i64; MAX_DIM];
            for k in 0..d.min(MAX_DIM) {
                let r = libm::round(v[k]);
                if libm::fabs(r - v[k]) > MEAN_TOL {
                    return Err(DynamicsError::NonLatticeVelocity { velocity: idx });
                }
                z[k] = r as i64;
            }
            per_velocity.push(alloc::vec![Jump {
                displacement: z,
                probability: 1.0,
            }]);
        }
        Self::new(model, per_velocity)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Range bound `𝔎`: the largest Euclidean jump length.
    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn jumps(&self, v: usize) -> &[Jump] {
        &self.per_velocity[v]
    }

    pub fn len(&self) -> usize {
        self.per_velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_velocity.is_empty()
    }

    /// Relabels velocities: entry `v` takes the law of `perm[v]` with the
    /// displacements mapped through `map`.
    pub fn permuted(&self, perm: &[usize], map: impl Fn([i64; MAX_DIM]) -> [i64; MAX_DIM]) -> Self {
        Self {
            dim: self.dim,
            per_velocity: perm
                .iter()
                .map(|&src| {
                    self.per_velocity[src]
                        .iter()
                        .map(|j| Jump {
                            displacement: map(j.displacement),
                            probability: j.probability,
                        })
                        .collect()
                })
                .collect(),
            range: self.range,
        }
    }
}

/// Default law: deterministic displacement by `v`.
pub fn default_jump_law(model: &VelocityModel) -> Result<JumpLaw, DynamicsError> {
    JumpLaw::deterministic(model)
}
