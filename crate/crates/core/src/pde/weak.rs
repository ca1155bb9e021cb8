use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use super::{BoundaryCondition, Field, PdeError, Problem};

/// Default truncation of the energy spectrum.
pub const Z_MAX: usize = 64;

const CLASS_TOL: f64 = 1e-12;

/// A smooth scalar test function `G(t, u)` with the derivatives the weak
/// form needs. It is applied to every component.
pub trait TestFunction {
    fn value(&self, t: f64, u: f64) -> f64;
    fn dt(&self, t: f64, u: f64) -> f64;
    fn du(&self, t: f64, u: f64) -> f64;
    fn duu(&self, t: f64, u: f64) -> f64;
}

/// Incremental evaluator of the weak-formulation functional
///
/// ```text
/// ∫p(T)G(T) − ∫p(0)G(0) − ∫₀ᵀ S(t) dt,
/// S = ∫p(∂_tG + ½∂²G) + ∫D ∂G + c/2 (d(1) − p(1))G(1) − c/2 (p(0) − d(0))G(0)
///     − ½ p(1)∂G(1) + ½ p(0)∂G(0)
/// ```
///
/// with `c` the Robin coefficient (zero for Dirichlet and Neumann). Space
/// integrals use the trapezoidal rule on the field grid, the time integral
/// the trapezoidal rule over the fed time levels.
pub struct WeakResidual<'p, 'm, G: TestFunction> {
    problem: &'p Problem<'m>,
    g: G,
    start: Option<Vec<f64>>,
    end: Vec<f64>,
    last: Option<(f64, Vec<f64>)>,
    integral: Vec<f64>,
    error: Option<PdeError>,
}

impl<'p, 'm, G: TestFunction> WeakResidual<'p, 'm, G> {
    pub fn new(problem: &'p Problem<'m>, g: G) -> Self {
        let c = problem.model().components();
        Self {
            problem,
            g,
            start: None,
            end: vec![0.0; c],
            last: None,
            integral: vec![0.0; c],
            error: None,
        }
    }

    /// Adds one time level; levels must come in increasing time order.
    pub fn feed(&mut self, t: f64, field: &Field) {
        if self.error.is_some() {
            return;
        }
        match self.level(t, field) {
            Ok((pair, s)) => {
                if self.start.is_none() {
                    self.start = Some(pair.clone());
                }
                if let Some((t0, s0)) = &self.last {
                    let w = 0.5 * (t - t0);
                    for k in 0..s.len() {
                        self.integral[k] += w * (s0[k] + s[k]);
                    }
                }
                self.end = pair;
                self.last = Some((t, s));
            }
            Err(e) => self.error = Some(e),
        }
    }

    fn level(&self, t: f64, field: &Field) -> Result<(Vec<f64>, Vec<f64>), PdeError> {
        let bc = self.problem.bc();
        if bc == BoundaryCondition::Dirichlet {
            for u in [0.0, 1.0] {
                let value = self.g.value(t, u);
                if libm::fabs(value) > CLASS_TOL {
                    return Err(PdeError::TestFunctionClassViolation { u, value });
                }
            }
        }
        let c = field.components();
        let h = field.h();
        let mut pair = vec![0.0; c];
        let mut s = vec![0.0; c];
        let mut drift = vec![0.0; c];
        for i in 0..field.nodes() {
            let u = field.u(i);
            let w = if i == 0 || i == field.cells() { 0.5 * h } else { h };
            let p = field.at(i);
            let g = self.g.value(t, u);
            let gen = self.g.dt(t, u) + 0.5 * self.g.duu(t, u);
            let gu = self.g.du(t, u);
            self.problem.drift_vector(p, &mut drift)?;
            for k in 0..c {
                pair[k] += w * p[k] * g;
                s[k] += w * (p[k] * gen + drift[k] * gu);
            }
        }
        let coef = bc.weak_coefficient();
        let (d0, d1) = self.problem.boundary_values();
        let p0 = field.at(0);
        let p1 = field.at(field.cells());
        let (g0, g1) = (self.g.value(t, 0.0), self.g.value(t, 1.0));
        let (gu0, gu1) = (self.g.du(t, 0.0), self.g.du(t, 1.0));
        for k in 0..c {
            s[k] += 0.5 * coef * (d1.0[k] - p1[k]) * g1 - 0.5 * coef * (p0[k] - d0.0[k]) * g0;
            s[k] += -0.5 * p1[k] * gu1 + 0.5 * p0[k] * gu0;
        }
        Ok((pair, s))
    }

    /// The residual per component.
    pub fn finish(self) -> Result<Vec<f64>, PdeError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let start = self.start.unwrap_or_else(|| vec![0.0; self.end.len()]);
        Ok((0..self.end.len())
            .map(|k| self.end[k] - start[k] - self.integral[k])
            .collect())
    }
}

/// Fourier coefficients `⟨p̄_k, ψ_z⟩`, `z = 0..=Z_max`, of a difference of
/// two fields, with `ψ_0 = 1`, `ψ_z = √2 sin(zπu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpectrum {
    /// `coefficients[k][z]`.
    pub coefficients: Vec<Vec<f64>>,
}

impl EnergySpectrum {
    /// `1 / (2 a_z)` with `a_z = (zπ)² + 1`.
    pub fn weight(z: usize) -> f64 {
        let a = (z as f64 * PI) * (z as f64 * PI) + 1.0;
        0.5 / a
    }

    /// `V_k = Σ_z ⟨p̄_k, ψ_z⟩² / (2 a_z)` for every component.
    pub fn values(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|cs| cs.iter().enumerate().map(|(z, c)| c * c * Self::weight(z)).sum())
            .collect()
    }
}

/// Spectrum of `a − b` by trapezoidal quadrature on the shared grid.
pub fn energy(a: &Field, b: &Field, z_max: usize) -> Result<EnergySpectrum, PdeError> {
    a.same_grid(b)?;
    let c = a.components();
    let h = a.h();
    let mut coefficients = vec![vec![0.0; z_max + 1]; c];
    for i in 0..a.nodes() {
        let u = a.u(i);
        let w = if i == 0 || i == a.cells() { 0.5 * h } else { h };
        let (pa, pb) = (a.at(i), b.at(i));
        for z in 0..=z_max {
            let psi = if z == 0 {
                1.0
            } else {
                SQRT_2 * libm::sin(z as f64 * PI * u)
            };
            for k in 0..c {
                coefficients[k][z] += w * (pa[k] - pb[k]) * psi;
            }
        }
    }
    Ok(EnergySpectrum { coefficients })
}
