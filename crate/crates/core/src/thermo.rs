//! Grand-canonical product measures and the density/momentum parameterisation.
//!
//! For a chemical potential `λ ∈ ℝ^{d+1}` the site measure `m_λ` occupies
//! each velocity independently with probability `θ_v(λ) = σ(λ·ṽ)`, `σ` the
//! logistic function. The map `λ ↦ (ρ, ϱ)(λ) = Σ_v ṽ θ_v(λ)` is inverted by
//! damped Newton iteration ([`inverse_map`]); membership of `(ρ, ϱ)` in the
//! admissible set `𝔘` is decided by whether that inversion succeeds.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg;
use crate::model::VelocityModel;

pub const NEWTON_TOL: f64 = 1e-12;
const EDGE_MARGIN: f64 = 1e-9;
pub const NEWTON_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ThermoError {
    #[error("state {0:?} is outside the admissible density/momentum region")]
    NotInU(Vec<f64>),
    #[error("expected {expected} components, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("reservoir profile for velocity {velocity} leaves (0,1): range [{lo}, {hi}]")]
    ProfileOutOfRange { velocity: usize, lo: f64, hi: f64 },
    #[error("expected {expected} reservoir profiles, got {found}")]
    ProfileCount { expected: usize, found: usize },
    #[error("Fourier mode has wavevector of length {found}, expected {expected}")]
    ModeShape { expected: usize, found: usize },
}

/// `λ = (λ_0, …, λ_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChemicalPotential(pub Vec<f64>);

impl ChemicalPotential {
    pub fn zero(components: usize) -> Self {
        Self(vec![0.0; components])
    }

    /// `λ·ṽ` for one velocity.
    #[inline]
    pub fn dot(&self, tilde: &[f64]) -> f64 {
        self.0.iter().zip(tilde).map(|(a, b)| a * b).sum()
    }
}

/// `(ρ, ϱ_1, …, ϱ_d)`: density and momentum per site.
#[derive(Debug, Clone, PartialEq)]
pub struct HydroVector(pub Vec<f64>);

impl HydroVector {
    pub fn new(rho: f64, momentum: &[f64]) -> Self {
        let mut v = Vec::with_capacity(momentum.len() + 1);
        v.push(rho);
        v.extend_from_slice(momentum);
        Self(v)
    }

    pub fn rho(&self) -> f64 {
        self.0[0]
    }

    pub fn momentum(&self) -> &[f64] {
        &self.0[1..]
    }

    /// The symmetric state `(|𝒱|/2, 0, …, 0)`.
    pub fn symmetric(model: &VelocityModel) -> Self {
        let mut v = vec![0.0; model.components()];
        v[0] = model.len() as f64 / 2.0;
        Self(v)
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `log(p / (1 - p))`.
#[inline]
pub fn logit(p: f64) -> f64 {
    libm::log(p) - libm::log1p(-p)
}

/// Static compressibility `χ(r) = r(1 - r)`.
#[inline]
pub fn chi(r: f64) -> f64 {
    r * (1.0 - r)
}

/// `θ_v(λ)` for a velocity vector `v`.
pub fn theta_v(lambda: &ChemicalPotential, v: &[f64]) -> f64 {
    let arg = lambda.0[0] + v.iter().zip(&lambda.0[1..]).map(|(a, b)| a * b).sum::<f64>();
    sigmoid(arg)
}

/// `θ_v(λ)` for every velocity of the model, in model order.
pub fn thetas(lambda: &ChemicalPotential, model: &VelocityModel) -> Vec<f64> {
    (0..model.len()).map(|i| sigmoid(lambda.dot(model.tilde(i)))).collect()
}

/// `(ρ, ϱ)(λ) = Σ_v ṽ θ_v(λ)`.
pub fn forward_map(lambda: &ChemicalPotential, model: &VelocityModel) -> HydroVector {
    let mut out = vec![0.0; model.components()];
    for i in 0..model.len() {
        let th = sigmoid(lambda.dot(model.tilde(i)));
        for (o, t) in out.iter_mut().zip(model.tilde(i)) {
            *o += th * t;
        }
    }
    HydroVector(out)
}

/// Jacobian of [`forward_map`], `Σ_v χ(θ_v) ṽ ṽᵀ`, row-major.
pub fn forward_jacobian(lambda: &ChemicalPotential, model: &VelocityModel) -> Vec<f64> {
    let c = model.components();
    let mut jac = vec![0.0; c * c];
    for i in 0..model.len() {
        let t = model.tilde(i);
        let w = chi(sigmoid(lambda.dot(t)));
        for a in 0..c {
            for b in 0..c {
                jac[a * c + b] += w * t[a] * t[b];
            }
        }
    }
    jac
}

fn residual(lambda: &ChemicalPotential, model: &VelocityModel, target: &[f64]) -> Vec<f64> {
    let mut r = forward_map(lambda, model).0;
    r.iter_mut().zip(target).for_each(|(a, b)| *a -= b);
    r
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, libm::fabs(*x)))
}

fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// `Λ(p)`: chemical potential whose product measure has mean `p`.
///
/// Newton iteration from `λ = 0` with the analytic Jacobian. A full step is
/// tried first and halved while the residual norm does not decrease. Fails
/// with [`ThermoError::NotInU`] when 100 iterations do not reach
/// `‖(ρ,ϱ)(λ) − p‖_∞ ≤ 1e-12`, or when some `θ_v` ends within
/// `1e-9` of 0 or 1, where the residual can no longer tell the point from
/// the edge of `𝔘`.
pub fn inverse_map(p: &HydroVector, model: &VelocityModel) -> Result<ChemicalPotential, ThermoError> {
    let c = model.components();
    if p.0.len() != c {
        return Err(ThermoError::Shape {
            expected: c,
            found: p.0.len(),
        });
    }
    let not_in_u = || ThermoError::NotInU(p.0.clone());
    if p.0.iter().any(|x| !x.is_finite()) {
        return Err(not_in_u());
    }
    let mut lambda = ChemicalPotential::zero(c);
    let mut r = residual(&lambda, model, &p.0);
    let accept = |lambda: ChemicalPotential| {
        let interior = (0..model.len()).all(|i| {
            let th = sigmoid(lambda.dot(model.tilde(i)));
            th > EDGE_MARGIN && th < 1.0 - EDGE_MARGIN
        });
        if interior {
            Ok(lambda)
        } else {
            Err(ThermoError::NotInU(p.0.clone()))
        }
    };
    for _ in 0..NEWTON_MAX_ITER {
        if norm_inf(&r) <= NEWTON_TOL {
            return accept(lambda);
        }
        let jac = forward_jacobian(&lambda, model);
        let step = linalg::solve(c, &jac, &r).ok_or_else(not_in_u)?;
        let base = norm2(&r);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = ChemicalPotential(lambda.0.iter().zip(&step).map(|(l, s)| l - scale * s).collect());
            let rt = residual(&trial, model, &p.0);
            if rt.iter().all(|x| x.is_finite()) && norm2(&rt) < base {
                lambda = trial;
                r = rt;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // no descent left: either converged to round-off or outside 𝔘
            if norm_inf(&r) <= NEWTON_TOL {
                continue;
            }
            return Err(not_in_u());
        }
    }
    if norm_inf(&r) <= NEWTON_TOL {
        return accept(lambda);
    }
    Err(not_in_u())
}

/// Whether `p` lies in `𝔘`, decided by running [`inverse_map`].
pub fn in_u(p: &HydroVector, model: &VelocityModel) -> bool {
    inverse_map(p, model).is_ok()
}

/// `Φ_v(p) = χ(θ_v(Λ(p)))`.
pub fn phi_v(p: &HydroVector, v: usize, model: &VelocityModel) -> Result<f64, ThermoError> {
    let lambda = inverse_map(p, model)?;
    Ok(chi(sigmoid(lambda.dot(model.tilde(v)))))
}

/// `Φ_v(p)` for every velocity.
pub fn phis(p: &HydroVector, model: &VelocityModel) -> Result<Vec<f64>, ThermoError> {
    let lambda = inverse_map(p, model)?;
    Ok((0..model.len())
        .map(|i| chi(sigmoid(lambda.dot(model.tilde(i)))))
        .collect())
}

/// Closed forms for Model I in one dimension, velocities ordered `(+1, -1)`.
///
/// There `θ_{±1}(Λ(ρ, ϱ)) = (ρ ± ϱ)/2`, so `𝔘 = {0 < (ρ ± ϱ)/2 < 1}`.
pub mod line {
    use super::*;

    pub fn in_u(rho: f64, momentum: f64) -> bool {
        let plus = 0.5 * (rho + momentum);
        let minus = 0.5 * (rho - momentum);
        plus > 0.0 && plus < 1.0 && minus > 0.0 && minus < 1.0
    }

    /// `(θ_{+1}, θ_{-1})`.
    pub fn thetas(rho: f64, momentum: f64) -> (f64, f64) {
        (0.5 * (rho + momentum), 0.5 * (rho - momentum))
    }

    pub fn inverse(rho: f64, momentum: f64) -> Option<ChemicalPotential> {
        if !in_u(rho, momentum) {
            return None;
        }
        let (tp, tm) = thetas(rho, momentum);
        let (a, b) = (logit(tp), logit(tm));
        Some(ChemicalPotential(vec![0.5 * (a + b), 0.5 * (a - b)]))
    }

    /// `(Φ_{+1}, Φ_{-1})`.
    pub fn phis(rho: f64, momentum: f64) -> (f64, f64) {
        let (tp, tm) = thetas(rho, momentum);
        (chi(tp), chi(tm))
    }
}

/// Which boundary hyperplane a reservoir sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `u_1 = 0`, reservoir densities `α_v`.
    Left,
    /// `u_1 = 1`, reservoir densities `β_v`.
    Right,
}

/// One Fourier mode `a cos(2π k·ũ) + b sin(2π k·ũ)` on `𝕋^{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMode {
    pub wavevector: Vec<i32>,
    pub cos: f64,
    pub sin: f64,
}

/// A reservoir density on `𝕋^{d-1}`: a mean plus finitely many modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierProfile {
    pub mean: f64,
    pub modes: Vec<FourierMode>,
}

impl FourierProfile {
    pub fn constant(value: f64) -> Self {
        Self {
            mean: value,
            modes: Vec::new(),
        }
    }

    pub fn value(&self, transverse: &[f64]) -> f64 {
        let mut s = self.mean;
        for m in &self.modes {
            let phase: f64 = m
                .wavevector
                .iter()
                .zip(transverse)
                .map(|(k, u)| *k as f64 * u)
                .sum::<f64>()
                * 2.0
                * core::f64::consts::PI;
            s += m.cos * libm::cos(phase) + m.sin * libm::sin(phase);
        }
        s
    }

    /// Guaranteed range `mean ± Σ(|a| + |b|)`.
    pub fn bounds(&self) -> (f64, f64) {
        let amp: f64 = self.modes.iter().map(|m| libm::fabs(m.cos) + libm::fabs(m.sin)).sum();
        (self.mean - amp, self.mean + amp)
    }
}

/// Per-velocity reservoir densities on one side, validated into `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirProfile {
    per_velocity: Vec<FourierProfile>,
}

impl ReservoirProfile {
    /// Validation uses the conservative range bound of each profile, so a
    /// profile is rejected unless its mean plus total mode amplitude stays
    /// strictly inside `(0, 1)`.
    pub fn new(model: &VelocityModel, per_velocity: Vec<FourierProfile>) -> Result<Self, ThermoError> {
        if per_velocity.len() != model.len() {
            return Err(ThermoError::ProfileCount {
                expected: model.len(),
                found: per_velocity.len(),
            });
        }
        for (velocity, p) in per_velocity.iter().enumerate() {
            for m in &p.modes {
                if m.wavevector.len() != model.dim() - 1 {
                    return Err(ThermoError::ModeShape {
                        expected: model.dim() - 1,
                        found: m.wavevector.len(),
                    });
                }
            }
            let (lo, hi) = p.bounds();
            if !(lo > 0.0 && hi < 1.0) || !lo.is_finite() || !hi.is_finite() {
                return Err(ThermoError::ProfileOutOfRange { velocity, lo, hi });
            }
        }
        Ok(Self { per_velocity })
    }

    pub fn constant(model: &VelocityModel, values: &[f64]) -> Result<Self, ThermoError> {
        Self::new(model, values.iter().map(|&v| FourierProfile::constant(v)).collect())
    }

    pub fn uniform(model: &VelocityModel, value: f64) -> Result<Self, ThermoError> {
        Self::constant(model, &vec![value; model.len()])
    }

    pub fn len(&self) -> usize {
        self.per_velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_velocity.is_empty()
    }

    pub fn profiles(&self) -> &[FourierProfile] {
        &self.per_velocity
    }

    /// Density of reservoir velocity `v` at transverse position `ũ`.
    pub fn value(&self, v: usize, transverse: &[f64]) -> f64 {
        self.per_velocity[v].value(transverse)
    }

    /// The profile with velocity labels permuted: entry `v` takes the
    /// profile of `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            per_velocity: perm.iter().map(|&i| self.per_velocity[i].clone()).collect(),
        }
    }
}

/// `α_v` and `β_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoirs {
    pub alpha: ReservoirProfile,
    pub beta: ReservoirProfile,
}

impl Reservoirs {
    pub fn side(&self, side: Side) -> &ReservoirProfile {
        match side {
            Side::Left => &self.alpha,
            Side::Right => &self.beta,
        }
    }

    /// Boundary data `d(u) = Σ_v ṽ α_v(ũ)` (left) or `Σ_v ṽ β_v(ũ)` (right).
    pub fn boundary_data(&self, model: &VelocityModel, side: Side, transverse: &[f64]) -> HydroVector {
        boundary_data(self.side(side), model, transverse)
    }
}

/// `Σ_v ṽ γ_v(ũ)` for reservoir densities `γ`.
pub fn boundary_data(profile: &ReservoirProfile, model: &VelocityModel, transverse: &[f64]) -> HydroVector {
    let mut out = vec![0.0; model.components()];
    for v in 0..model.len() {
        let a = profile.value(v, transverse);
        for (o, t) in out.iter_mut().zip(model.tilde(v)) {
            *o += a * t;
        }
    }
    HydroVector(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn theta_examples() {
        let m = VelocityModel::model_one(1).unwrap();
        let zero = ChemicalPotential::zero(2);
        assert_eq!(theta_v(&zero, m.velocity(0)), 0.5);
        let l3 = ChemicalPotential(vec![3f64.ln(), 0.0]);
        assert!(close(theta_v(&l3, m.velocity(1)), 0.75, 1e-15));
        let l = ChemicalPotential(vec![0.0, 1.0]);
        let e = core::f64::consts::E;
        assert!(close(theta_v(&l, m.velocity(0)), e / (1.0 + e), 1e-15));
        assert!(close(theta_v(&l, m.velocity(0)), 0.731059, 1e-6));
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!(sigmoid(-800.0).is_finite());
        assert!(close(sigmoid(-40.0), (-40f64).exp(), 1e-30));
    }

    #[test]
    fn forward_examples() {
        let m2 = VelocityModel::model_one(2).unwrap();
        assert_eq!(forward_map(&ChemicalPotential::zero(3), &m2).0, vec![2.0, 0.0, 0.0]);
        let m1 = VelocityModel::model_one(1).unwrap();
        let p = forward_map(&ChemicalPotential(vec![0.0, 1.0]), &m1);
        assert!(close(p.rho(), 1.0, 1e-15));
        assert!(close(p.momentum()[0], 0.462117, 1e-6));
    }

    #[test]
    fn inverse_of_symmetric_state_is_zero() {
        for d in 1..=3 {
            let m = VelocityModel::model_one(d).unwrap();
            let lam = inverse_map(&HydroVector::symmetric(&m), &m).unwrap();
            assert!(lam.0.iter().all(|x| x.abs() < 1e-14));
        }
    }

    #[test]
    fn inverse_matches_line_closed_form() {
        let m = VelocityModel::model_one(1).unwrap();
        for &(rho, mom) in &[(1.0, 0.3), (0.4, -0.2), (1.7, 0.2), (0.05, 0.0)] {
            let lam = inverse_map(&HydroVector::new(rho, &[mom]), &m).unwrap();
            let th = thetas(&lam, &m);
            assert!(close(th[0], (rho + mom) / 2.0, 1e-10));
            assert!(close(th[1], (rho - mom) / 2.0, 1e-10));
            let closed = line::inverse(rho, mom).unwrap();
            assert!(close(lam.0[0], closed.0[0], 1e-9));
            assert!(close(lam.0[1], closed.0[1], 1e-9));
        }
    }

    #[test]
    fn outside_u_is_rejected() {
        let m = VelocityModel::model_one(1).unwrap();
        for &(rho, mom) in &[(2.5, 0.0), (1.0, 1.0), (-0.1, 0.0), (1.0, 1.5)] {
            assert!(matches!(
                inverse_map(&HydroVector::new(rho, &[mom]), &m),
                Err(ThermoError::NotInU(_))
            ));
            assert!(!line::in_u(rho, mom));
        }
        assert!(matches!(
            phi_v(&HydroVector::new(3.0, &[0.0]), 0, &m),
            Err(ThermoError::NotInU(_))
        ));
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi(0.0), 0.0);
        assert_eq!(chi(0.5), 0.25);
        assert_eq!(chi(1.0), 0.0);
    }

    #[test]
    fn phi_examples() {
        for d in 1..=3 {
            let m = VelocityModel::model_one(d).unwrap();
            for v in 0..m.len() {
                assert!(close(phi_v(&HydroVector::symmetric(&m), v, &m).unwrap(), 0.25, 1e-13));
            }
        }
        let m = VelocityModel::model_one(1).unwrap();
        let p = HydroVector::new(0.9, &[0.4]);
        assert!(close(phi_v(&p, 0, &m).unwrap(), chi(0.65), 1e-10));
        assert!(close(phi_v(&p, 1, &m).unwrap(), chi(0.25), 1e-10));
    }

    #[test]
    fn boundary_data_examples() {
        let m = VelocityModel::model_one(1).unwrap();
        let a = ReservoirProfile::uniform(&m, 0.35).unwrap();
        let d = boundary_data(&a, &m, &[]);
        assert!(close(d.rho(), 0.7, 1e-15) && d.momentum()[0] == 0.0);
        let a = ReservoirProfile::constant(&m, &[0.8, 0.2]).unwrap();
        let d = boundary_data(&a, &m, &[]);
        assert!(close(d.rho(), 1.0, 1e-15));
        assert!(close(d.momentum()[0], 0.6, 1e-15));
    }

    #[test]
    fn profile_validation() {
        let m = VelocityModel::model_one(1).unwrap();
        assert!(matches!(
            ReservoirProfile::constant(&m, &[1.0, 0.5]),
            Err(ThermoError::ProfileOutOfRange { velocity: 0, .. })
        ));
        assert!(matches!(
            ReservoirProfile::constant(&m, &[0.5]),
            Err(ThermoError::ProfileCount { .. })
        ));
        let m2 = VelocityModel::model_one(2).unwrap();
        let wavy = FourierProfile {
            mean: 0.5,
            modes: vec![FourierMode {
                wavevector: vec![1],
                cos: 0.2,
                sin: 0.1,
            }],
        };
        let r = ReservoirProfile::new(&m2, vec![wavy.clone(); 4]).unwrap();
        let v = r.value(0, &[0.25]);
        assert!(close(v, 0.6, 1e-14));
        let bad = FourierProfile {
            mean: 0.5,
            modes: vec![FourierMode {
                wavevector: vec![1],
                cos: 0.4,
                sin: 0.2,
            }],
        };
        assert!(ReservoirProfile::new(&m2, vec![bad; 4]).is_err());
    }
}
