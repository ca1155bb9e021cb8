//! One-dimensional hydrodynamic system
//!
//! ```text
//! ∂_t p = ∂_u F,   F = ½ ∂_u p − D(p),   D_k(p) = Σ_v ṽ_k v_1 Φ_v(p)
//! ```
//!
//! for `p = (ρ, ϱ)` on `[0, 1]`, discretised by explicit finite volumes on a
//! uniform node grid. Closures:
//!
//! * Dirichlet: `p(0) = d(0)`, `p(1) = d(1)`.
//! * Robin with coefficient `κ`: `∂_u p − 2D = κ(p − d(0))` at `u = 0` and
//!   `κ(d(1) − p)` at `u = 1`, i.e. the boundary flux is `F(0) = κ/2 (p − d(0))`.
//! * Neumann: Robin with `κ = 0`, zero total flux.
//!
//! Robin and Neumann nodes carry half cells, which is the flux form of a
//! centred ghost-node closure. With trapezoidal mass the scheme conserves
//! `∫p` exactly up to the boundary fluxes.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::VelocityModel;
use crate::thermo::{self, HydroVector, ThermoError};

mod weak;

pub use weak::{energy, EnergySpectrum, TestFunction, WeakResidual, Z_MAX};

/// Diffusive CFL factor: `dt ≤ 0.2 h²`.
pub const CFL_DIFFUSIVE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PdeError {
    #[error("time step {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("node {node} (u = {u}) left the admissible region at t = {t}: {value:?}")]
    NotInU {
        node: usize,
        u: f64,
        t: f64,
        value: Vec<f64>,
    },
    #[error("the PDE solver handles one-dimensional models only, got d = {0}")]
    Dimension(usize),
    #[error("grid needs at least 2 cells, got {0}")]
    Grid(usize),
    #[error("expected {expected} values, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("horizon and snapshot times must be finite, sorted and within [0, T]")]
    Times,
    #[error("test function is {value} at u = {u}; the Dirichlet class needs G(t,0) = G(t,1) = 0")]
    TestFunctionClassViolation { u: f64, value: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

/// Boundary regime with its coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet,
    Robin { kappa: f64 },
    Neumann,
}

impl BoundaryCondition {
    /// The regime attached to a reservoir exponent: Dirichlet below 1, Robin
    /// at 1 with coefficient `kappa`, Neumann above.
    pub fn from_theta(theta: f64, kappa: f64) -> Self {
        if theta < 1.0 {
            Self::Dirichlet
        } else if theta == 1.0 {
            Self::Robin { kappa }
        } else {
            Self::Neumann
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Dirichlet => "dirichlet",
            Self::Robin { .. } => "robin",
            Self::Neumann => "neumann",
        }
    }

    /// The coefficient in front of the boundary integrals of the weak form.
    pub fn weak_coefficient(&self) -> f64 {
        match self {
            Self::Robin { kappa } => *kappa,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriftMode {
    /// `D` evaluated at the face-averaged state.
    #[default]
    Central,
    /// Local Lax–Friedrichs (Rusanov) face drift.
    Upwind,
    /// Pure diffusion `∂_t p = ½ ∂²p`.
    Off,
}

/// Node values on `u_i = i/M`, `i = 0..=M`, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    cells: usize,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(cells: usize, components: usize, values: Vec<f64>) -> Result<Self, PdeError> {
        if cells < 2 {
            return Err(PdeError::Grid(cells));
        }
        if values.len() != (cells + 1) * components {
            return Err(PdeError::Shape {
                expected: (cells + 1) * components,
                found: values.len(),
            });
        }
        Ok(Self {
            cells,
            components,
            values,
        })
    }

    /// Samples `f(u)` at every node.
    pub fn from_fn<F: FnMut(f64) -> Vec<f64>>(cells: usize, components: usize, mut f: F) -> Result<Self, PdeError> {
        let mut values = Vec::with_capacity((cells + 1) * components);
        for i in 0..=cells {
            let p = f(i as f64 / cells as f64);
            if p.len() != components {
                return Err(PdeError::Shape {
                    expected: components,
                    found: p.len(),
                });
            }
            values.extend_from_slice(&p);
        }
        Self::new(cells, components, values)
    }

    /// Number of cells `M`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn u(&self, node: usize) -> f64 {
        node as f64 / self.cells as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.components..(node + 1) * self.components]
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.values.chunks_exact(self.components).map(|c| c[k]).collect()
    }

    /// Trapezoidal `∫₀¹ p_k du` for every component.
    pub fn integral(&self) -> Vec<f64> {
        let h = self.h();
        let mut out = vec![0.0; self.components];
        for (i, node) in self.values.chunks_exact(self.components).enumerate() {
            let w = if i == 0 || i == self.cells { 0.5 * h } else { h };
            for (o, x) in out.iter_mut().zip(node) {
                *o += w * x;
            }
        }
        out
    }

    /// Piecewise-linear interpolation at `u ∈ [0, 1]`.
    pub fn interpolate(&self, u: f64) -> Vec<f64> {
        let s = (u.clamp(0.0, 1.0)) * self.cells as f64;
        let i = (libm::floor(s) as usize).min(self.cells - 1);
        let w = s - i as f64;
        let a = self.at(i);
        let b = self.at(i + 1);
        a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect()
    }

    /// `max_i |a_i − b_i|` per component.
    pub fn max_diff(&self, other: &Field) -> Result<Vec<f64>, PdeError> {
        self.same_grid(other)?;
        let mut out = vec![0.0f64; self.components];
        for (a, b) in self
            .values
            .chunks_exact(self.components)
            .zip(other.values.chunks_exact(self.components))
        {
            for k in 0..self.components {
                out[k] = out[k].max(libm::fabs(a[k] - b[k]));
            }
        }
        Ok(out)
    }

    fn same_grid(&self, other: &Field) -> Result<(), PdeError> {
        if self.cells != other.cells || self.components != other.components {
            Err(PdeError::GridMismatch)
        } else {
            Ok(())
        }
    }
}

/// The hydrodynamic system for one model, closure and boundary data.
#[derive(Debug, Clone)]
pub struct Problem<'m> {
    model: &'m VelocityModel,
    closed_form: bool,
    bc: BoundaryCondition,
    left: HydroVector,
    right: HydroVector,
    drift: DriftMode,
}

impl<'m> Problem<'m> {
    /// `left = d(0)`, `right = d(1)`.
    pub fn new(
        model: &'m VelocityModel,
        bc: BoundaryCondition,
        left: HydroVector,
        right: HydroVector,
        drift: DriftMode,
    ) -> Result<Self, PdeError> {
        if model.dim() != 1 {
            return Err(PdeError::Dimension(model.dim()));
        }
        let c = model.components();
        for p in [&left, &right] {
            if p.0.len() != c {
                return Err(PdeError::Shape {
                    expected: c,
                    found: p.0.len(),
                });
            }
        }
        let closed_form = model.len() == 2 && model.velocity(0) == [1.0] && model.velocity(1) == [-1.0];
        Ok(Self {
            model,
            closed_form,
            bc,
            left,
            right,
            drift,
        })
    }

    pub fn model(&self) -> &'m VelocityModel {
        self.model
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn drift_mode(&self) -> DriftMode {
        self.drift
    }

    pub fn boundary_values(&self) -> (&HydroVector, &HydroVector) {
        (&self.left, &self.right)
    }

    pub fn in_u(&self, p: &[f64]) -> bool {
        if self.closed_form {
            thermo::line::in_u(p[0], p[1])
        } else {
            thermo::in_u(&HydroVector(p.to_vec()), self.model)
        }
    }

    /// `D(p) = Σ_v ṽ v_1 Φ_v(p)`; zero when the drift is switched off.
    pub fn drift_vector(&self, p: &[f64], out: &mut [f64]) -> Result<(), PdeError> {
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.drift == DriftMode::Off {
            return Ok(());
        }
        if self.closed_form {
            if !thermo::line::in_u(p[0], p[1]) {
                return Err(ThermoError::NotInU(p.to_vec()).into());
            }
            let (fp, fm) = thermo::line::phis(p[0], p[1]);
            out[0] = fp - fm;
            out[1] = fp + fm;
            return Ok(());
        }
        let phis = thermo::phis(&HydroVector(p.to_vec()), self.model)?;
        for (v, phi) in phis.iter().enumerate() {
            let v1 = self.model.velocity(v)[0];
            for (o, t) in out.iter_mut().zip(self.model.tilde(v)) {
                *o += t * v1 * phi;
            }
        }
        Ok(())
    }

    /// Largest `‖∂D/∂p‖_∞` over the nodes, by central differences.
    pub fn drift_speed(&self, field: &Field) -> Result<f64, PdeError> {
        if self.drift == DriftMode::Off {
            return Ok(0.0);
        }
        let c = field.components;
        let mut worst: f64 = 0.0;
        let mut a = vec![0.0; c];
        let mut b = vec![0.0; c];
        let step = 1e-6;
        for node in 0..field.nodes() {
            let p = field.at(node);
            let mut row_sums = vec![0.0; c];
            for j in 0..c {
                let mut q = p.to_vec();
                q[j] += step;
                let mut r = p.to_vec();
                r[j] -= step;
                if !(self.in_u(&q) && self.in_u(&r)) {
                    continue;
                }
                self.drift_vector(&q, &mut a)?;
                self.drift_vector(&r, &mut b)?;
                for i in 0..c {
                    row_sums[i] += libm::fabs(a[i] - b[i]) / (2.0 * step);
                }
            }
            worst = worst.max(row_sums.iter().cloned().fold(0.0, f64::max));
        }
        Ok(worst)
    }

    /// Face fluxes `F_{i+½}`, `i = 0..M`, face-major.
    pub fn flux(&self, field: &Field) -> Result<Vec<f64>, PdeError> {
        let c = field.components;
        let h = field.h();
        let mut out = vec![0.0; field.cells * c];
        let mut mid = vec![0.0; c];
        let mut dm = vec![0.0; c];
        let mut da = vec![0.0; c];
        let mut db = vec![0.0; c];
        for i in 0..field.cells {
            let a = field.at(i);
            let b = field.at(i + 1);
            let f = &mut out[i * c..(i + 1) * c];
            match self.drift {
                DriftMode::Off => dm.iter_mut().for_each(|x| *x = 0.0),
                DriftMode::Central => {
                    for k in 0..c {
                        mid[k] = 0.5 * (a[k] + b[k]);
                    }
                    self.drift_vector(&mid, &mut dm)?;
                }
                DriftMode::Upwind => {
                    self.drift_vector(a, &mut da)?;
                    self.drift_vector(b, &mut db)?;
                    let s = self.local_speed(a, b)?;
                    for k in 0..c {
                        dm[k] = 0.5 * (da[k] + db[k]) - 0.5 * s * (b[k] - a[k]);
                    }
                }
            }
            for k in 0..c {
                f[k] = 0.5 * (b[k] - a[k]) / h - dm[k];
            }
        }
        Ok(out)
    }

    fn local_speed(&self, a: &[f64], b: &[f64]) -> Result<f64, PdeError> {
        let c = a.len();
        let mut values = Vec::with_capacity(2 * c);
        values.extend_from_slice(a);
        values.extend_from_slice(b);
        let two = Field {
            cells: 1,
            components: c,
            values,
        };
        self.drift_speed(&two)
    }

    /// Boundary fluxes `(F(0), F(1))` for Robin and Neumann closures.
    pub fn boundary_flux(&self, field: &Field) -> (Vec<f64>, Vec<f64>) {
        let kappa = match self.bc {
            BoundaryCondition::Robin { kappa } => kappa,
            _ => 0.0,
        };
        let first = field.at(0);
        let last = field.at(field.cells);
        let left = first
            .iter()
            .zip(&self.left.0)
            .map(|(p, d)| 0.5 * kappa * (p - d))
            .collect();
        let right = last
            .iter()
            .zip(&self.right.0)
            .map(|(p, d)| 0.5 * kappa * (d - p))
            .collect();
        (left, right)
    }

    /// Largest admissible step: `0.2 h²`, further limited by `h / max|∂D/∂p|`.
    pub fn max_dt(&self, field: &Field) -> Result<f64, PdeError> {
        let h = field.h();
        let mut limit = CFL_DIFFUSIVE * h * h;
        let a = self.drift_speed(field)?;
        if a > 0.0 {
            limit = limit.min(h / a);
        }
        if let BoundaryCondition::Robin { kappa } = self.bc {
            if kappa > 0.0 {
                limit = limit.min(h / kappa);
            }
        }
        Ok(limit)
    }

    /// Pins Dirichlet boundary nodes to `d(0)`, `d(1)`; no-op otherwise.
    pub fn apply_bc(&self, field: &mut Field) {
        if self.bc == BoundaryCondition::Dirichlet {
            let c = field.components;
            let m = field.cells;
            field.values[..c].copy_from_slice(&self.left.0);
            field.values[m * c..].copy_from_slice(&self.right.0);
        }
    }

    /// One explicit Euler step. The CFL test is `dt ≤ 0.2 h² (1 + 1e-12)`;
    /// the drift limit is checked by [`Problem::solve`] once per run.
    pub fn advance(&self, field: &Field, dt: f64) -> Result<Field, PdeError> {
        let h = field.h();
        let limit = CFL_DIFFUSIVE * h * h;
        if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
            return Err(PdeError::CflViolation { dt, limit });
        }
        let c = field.components;
        let m = field.cells;
        let flux = self.flux(field)?;
        let mut next = field.clone();
        for i in 1..m {
            for k in 0..c {
                next.values[i * c + k] += dt * (flux[i * c + k] - flux[(i - 1) * c + k]) / h;
            }
        }
        match self.bc {
            BoundaryCondition::Dirichlet => self.apply_bc(&mut next),
            _ => {
                let (fl, fr) = self.boundary_flux(field);
                for k in 0..c {
                    next.values[k] += dt * 2.0 * (flux[k] - fl[k]) / h;
                    next.values[m * c + k] += dt * 2.0 * (fr[k] - flux[(m - 1) * c + k]) / h;
                }
            }
        }
        if self.drift != DriftMode::Off {
            for node in 0..=m {
                let p = next.at(node);
                if !self.in_u(p) {
                    return Err(PdeError::NotInU {
                        node,
                        u: next.u(node),
                        t: f64::NAN,
                        value: p.to_vec(),
                    });
                }
            }
        }
        Ok(next)
    }

    /// Marches from `initial` to `horizon` with step `dt` (`None`: the
    /// largest admissible step, shrunk to divide the gaps between
    /// snapshots evenly). Snapshot times must be sorted within
    /// `[0, horizon]`; each is hit exactly. `observe(t, field)` sees every
    /// time level including `t = 0`.
    pub fn solve<F>(
        &self,
        initial: &Field,
        horizon: f64,
        dt: Option<f64>,
        snapshots: &[f64],
        mut observe: F,
    ) -> Result<Vec<(f64, Field)>, PdeError>
    where
        F: FnMut(f64, &Field),
    {
        if initial.components != self.model.components() {
            return Err(PdeError::Shape {
                expected: self.model.components(),
                found: initial.components,
            });
        }
        if !(horizon.is_finite() && horizon >= 0.0)
            || snapshots.iter().any(|&t| !(t >= 0.0 && t <= horizon))
            || snapshots.windows(2).any(|w| w[0] > w[1])
        {
            return Err(PdeError::Times);
        }
        let limit = self.max_dt(initial)?;
        let dt_max = match dt {
            Some(dt) => {
                let diffusive = CFL_DIFFUSIVE * initial.h() * initial.h();
                if !(dt > 0.0 && dt <= diffusive * (1.0 + 1e-12)) || dt > limit * (1.0 + 1e-12) {
                    return Err(PdeError::CflViolation { dt, limit });
                }
                dt
            }
            None => limit,
        };
        let mut field = initial.clone();
        self.apply_bc(&mut field);
        if self.drift != DriftMode::Off {
            for node in 0..field.nodes() {
                if !self.in_u(field.at(node)) {
                    return Err(PdeError::NotInU {
                        node,
                        u: field.u(node),
                        t: 0.0,
                        value: field.at(node).to_vec(),
                    });
                }
            }
        }
        let mut t = 0.0;
        observe(t, &field);
        let mut out = Vec::with_capacity(snapshots.len());
        let mut stops: Vec<f64> = snapshots.to_vec();
        if stops.last().is_none_or(|&s| s < horizon) {
            stops.push(horizon);
        }
        let mut recorded = 0;
        for &stop in &stops {
            let gap = stop - t;
            if gap > 0.0 {
                let steps = libm::ceil(gap / dt_max * (1.0 - 1e-12)).max(1.0) as usize;
                let tau = gap / steps as f64;
                let t0 = t;
                for s in 1..=steps {
                    field = self.advance(&field, tau).map_err(|e| match e {
                        PdeError::NotInU { node, u, value, .. } => PdeError::NotInU {
                            node,
                            u,
                            t: t0 + s as f64 * tau,
                            value,
                        },
                        other => other,
                    })?;
                    t = if s == steps { stop } else { t0 + s as f64 * tau };
                    observe(t, &field);
                }
            }
            while recorded < snapshots.len() && snapshots[recorded] <= t {
                out.push((snapshots[recorded], field.clone()));
                recorded += 1;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn model() -> VelocityModel {
        VelocityModel::model_one(1).unwrap()
    }

    #[test]
    fn constant_state_is_stationary() {
        let m = model();
        let d = HydroVector(vec![1.0, 0.0]);
        let pr = Problem::new(&m, BoundaryCondition::Dirichlet, d.clone(), d, DriftMode::Central).unwrap();
        let f0 = Field::from_fn(32, 2, |_| vec![1.0, 0.0]).unwrap();
        let out = pr.solve(&f0, 0.01, None, &[0.01], |_, _| {}).unwrap();
        let diff = out[0].1.max_diff(&f0).unwrap();
        assert!(diff.iter().all(|x| *x < 1e-14), "{diff:?}");
    }

    #[test]
    fn linear_profile_has_exact_diffusive_flux() {
        let m = model();
        let d = HydroVector(vec![1.0, 0.0]);
        let pr = Problem::new(&m, BoundaryCondition::Neumann, d.clone(), d, DriftMode::Off).unwrap();
        let f = Field::from_fn(16, 2, |u| vec![0.5 + 0.8 * u, 0.0]).unwrap();
        for x in pr.flux(&f).unwrap().chunks_exact(2) {
            assert!((x[0] - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_mode_decay() {
        let m = model();
        let d = HydroVector(vec![1.0, 0.0]);
        let pr = Problem::new(&m, BoundaryCondition::Dirichlet, d.clone(), d, DriftMode::Off).unwrap();
        let f = Field::from_fn(64, 2, |u| vec![1.0 + 0.5 * libm::sin(PI * u), 0.0]).unwrap();
        let t = 0.05;
        let out = pr.solve(&f, t, None, &[t], |_, _| {}).unwrap();
        let decay = libm::exp(-PI * PI * t / 2.0);
        let err = (0..=64)
            .map(|i| (out[0].1.at(i)[0] - 1.0 - 0.5 * decay * libm::sin(PI * i as f64 / 64.0)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn neumann_conserves_integrals() {
        let m = model();
        let pr = Problem::new(
            &m,
            BoundaryCondition::Neumann,
            HydroVector(vec![1.0, 0.0]),
            HydroVector(vec![1.0, 0.0]),
            DriftMode::Central,
        )
        .unwrap();
        let f = Field::from_fn(40, 2, |u| vec![1.0 + 0.3 * libm::cos(PI * u), 0.2 * u]).unwrap();
        let before = f.integral();
        let mut worst: f64 = 0.0;
        pr.solve(&f, 0.1, None, &[], |_, g| {
            let now = g.integral();
            worst = worst.max((now[0] - before[0]).abs()).max((now[1] - before[1]).abs());
        })
        .unwrap();
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn robin_with_matching_data_is_neumann() {
        let m = model();
        let f = Field::from_fn(20, 2, |u| vec![0.8 + 0.2 * u, 0.1]).unwrap();
        let left = HydroVector(f.at(0).to_vec());
        let right = HydroVector(f.at(20).to_vec());
        let robin = Problem::new(
            &m,
            BoundaryCondition::Robin { kappa: 1.0 },
            left.clone(),
            right.clone(),
            DriftMode::Central,
        )
        .unwrap();
        let neumann = Problem::new(&m, BoundaryCondition::Neumann, left, right, DriftMode::Central).unwrap();
        let dt = 0.2 / 400.0;
        assert_eq!(robin.advance(&f, dt).unwrap(), neumann.advance(&f, dt).unwrap());
    }

    #[test]
    fn cfl_and_admissibility_errors() {
        let m = model();
        let d = HydroVector(vec![1.0, 0.0]);
        let pr = Problem::new(&m, BoundaryCondition::Dirichlet, d.clone(), d, DriftMode::Central).unwrap();
        let f = Field::from_fn(10, 2, |_| vec![1.0, 0.0]).unwrap();
        assert!(matches!(pr.advance(&f, 0.01), Err(PdeError::CflViolation { .. })));
        let bad = Field::from_fn(10, 2, |u| vec![1.0, if u > 0.45 && u < 0.55 { 1.5 } else { 0.0 }]).unwrap();
        assert!(matches!(
            pr.solve(&bad, 0.01, None, &[], |_, _| {}),
            Err(PdeError::NotInU { node: 5, .. })
        ));
    }

    #[test]
    fn regime_map() {
        assert_eq!(BoundaryCondition::from_theta(0.0, 1.0), BoundaryCondition::Dirichlet);
        assert_eq!(BoundaryCondition::from_theta(0.99, 1.0), BoundaryCondition::Dirichlet);
        assert_eq!(
            BoundaryCondition::from_theta(1.0, 1.0),
            BoundaryCondition::Robin { kappa: 1.0 }
        );
        assert_eq!(BoundaryCondition::from_theta(2.0, 1.0), BoundaryCondition::Neumann);
    }
}
