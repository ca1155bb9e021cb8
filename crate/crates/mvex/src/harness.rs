//! Replicated simulations compared against the hydrodynamic PDE.

use mvex_core::dynamics::{default_jump_law, simulate, Dynamics, DynamicsError, Simulator};
use mvex_core::lattice::{sample_local_equilibrium, LatticeError};
use mvex_core::pde::{BoundaryCondition, DriftMode, Field, PdeError, Problem};
use mvex_core::rng;
use mvex_core::thermo::{boundary_data, HydroVector, Reservoirs};
use mvex_core::{EmpiricalProfile, LatticeGeom, VelocityModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::io::{IoError, ModelSpec, ReservoirSpec};

/// Robin coefficient `κ` in `∂_u p − 2D = κ(p − d)` that matches the lattice
/// flux balance at `θ = 1`: the reservoir feeds site 1 at rate `N(α − η)`,
/// so the macroscopic inflow is `d(0) − p(0)`.
pub const LATTICE_ROBIN: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("theta = {theta} selects the {expected} regime, but the experiment declares {declared}")]
    RegimeMismatch {
        theta: f64,
        declared: &'static str,
        expected: &'static str,
    },
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Pde(#[from] PdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Dirichlet,
    Robin,
    Neumann,
}

impl Regime {
    /// `θ ∈ [0, 1)` Dirichlet, `θ = 1` Robin, `θ > 1` Neumann.
    pub fn from_theta(theta: f64) -> Self {
        if theta < 1.0 {
            Regime::Dirichlet
        } else if theta == 1.0 {
            Regime::Robin
        } else {
            Regime::Neumann
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Dirichlet => "dirichlet",
            Regime::Robin => "robin",
            Regime::Neumann => "neumann",
        }
    }

    pub fn boundary_condition(self, kappa: f64) -> BoundaryCondition {
        match self {
            Regime::Dirichlet => BoundaryCondition::Dirichlet,
            Regime::Robin => BoundaryCondition::Robin { kappa },
            Regime::Neumann => BoundaryCondition::Neumann,
        }
    }
}

/// Initial macroscopic profile as a function of `u_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialProfile {
    Constant {
        value: Vec<f64>,
    },
    /// `(1 − u) left + u right + bump · sin(πu)`.
    Linear {
        left: Vec<f64>,
        right: Vec<f64>,
        #[serde(default)]
        bump: Vec<f64>,
    },
}

impl InitialProfile {
    pub fn eval(&self, u: f64) -> Vec<f64> {
        match self {
            InitialProfile::Constant { value } => value.clone(),
            InitialProfile::Linear { left, right, bump } => {
                let s = (std::f64::consts::PI * u).sin();
                left.iter()
                    .zip(right)
                    .enumerate()
                    .map(|(k, (a, b))| (1.0 - u) * a + u * b + bump.get(k).copied().unwrap_or(0.0) * s)
                    .collect()
            }
        }
    }

    fn components(&self) -> usize {
        match self {
            InitialProfile::Constant { value } => value.len(),
            InitialProfile::Linear { left, .. } => left.len(),
        }
    }
}

/// Box-kernel half-width used before comparing with the PDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// Fixed macroscopic `ε`.
    Width(f64),
    /// `ε = cells / N`.
    Cells(f64),
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Width(0.03)
    }
}

impl Smoothing {
    pub fn epsilon(self, n: usize) -> f64 {
        match self {
            Smoothing::Width(e) => e,
            Smoothing::Cells(c) => c / n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftScheme {
    #[default]
    Central,
    Upwind,
}

fn default_kappa() -> f64 {
    LATTICE_ROBIN
}

fn default_cells() -> usize {
    256
}

/// One hydrodynamic-limit experiment in `d = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub model: ModelSpec,
    pub theta: f64,
    /// Expected regime; checked against `theta` when present.
    #[serde(default)]
    pub regime: Option<Regime>,
    #[serde(default = "default_kappa")]
    pub robin_kappa: f64,
    pub sizes: Vec<usize>,
    pub replicas: usize,
    pub initial: InitialProfile,
    pub reservoirs: ReservoirSpec,
    #[serde(default)]
    pub smoothing: Smoothing,
    pub times: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_cells")]
    pub pde_cells: usize,
    #[serde(default)]
    pub drift: DriftScheme,
}

impl Experiment {
    /// The regime `θ` selects, after checking any declared regime.
    pub fn validate(&self) -> Result<Regime, HarnessError> {
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(HarnessError::Invalid(format!(
                "theta must be finite and non-negative, got {}",
                self.theta
            )));
        }
        let expected = Regime::from_theta(self.theta);
        if let Some(declared) = self.regime {
            if declared != expected {
                return Err(HarnessError::RegimeMismatch {
                    theta: self.theta,
                    declared: declared.name(),
                    expected: expected.name(),
                });
            }
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|&n| n < 4) {
            return Err(HarnessError::Invalid("sizes must be non-empty and each N ≥ 4".into()));
        }
        if self.replicas == 0 {
            return Err(HarnessError::Invalid("at least one replica is needed".into()));
        }
        if self.times.is_empty()
            || self.times.iter().any(|t| !(t.is_finite() && *t > 0.0))
            || self.times.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(HarnessError::Invalid(
                "comparison times must be positive and increasing".into(),
            ));
        }
        Ok(expected)
    }
}

/// Errors for one `(N, t)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub time: f64,
    pub epsilon: f64,
    /// Per component, on the PDE grid.
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    /// Replica standard error of the smoothed mean, averaged over the grid.
    pub stderr: Vec<f64>,
    /// `|⟨π^N, G⟩ − ∫ G p|` for the basket [`TEST_BASKET`], `[g][component]`.
    pub test_errors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub regime: Regime,
    pub boundary: String,
    pub rows: Vec<ComparisonRow>,
    /// Least-squares slope of `log L¹` against `log N` at each time,
    /// `[time][component]`.
    pub slopes: Vec<Vec<f64>>,
}

impl ComparisonReport {
    pub fn row(&self, n: usize, time: f64) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.n == n && r.time == time)
    }
}

/// Names of the fixed test functions used in the `⟨π, G⟩` form.
pub const TEST_BASKET: [&str; 4] = ["1", "sin(pi u)", "u", "cos(pi u)"];

fn basket(k: usize, u: f64) -> f64 {
    let pi = std::f64::consts::PI;
    match k {
        0 => 1.0,
        1 => (pi * u).sin(),
        2 => u,
        _ => (pi * u).cos(),
    }
}

/// Model, reservoirs and PDE problem pieces shared by the CLI and harness.
pub struct Setup {
    pub model: VelocityModel,
    pub reservoirs: Reservoirs,
    pub left: HydroVector,
    pub right: HydroVector,
}

impl Setup {
    pub fn new(model: &ModelSpec, reservoirs: &ReservoirSpec) -> Result<Self, HarnessError> {
        let model = model.build()?;
        let reservoirs = reservoirs.build(&model)?;
        let t = vec![0.0; model.dim().saturating_sub(1)];
        let left = boundary_data(&reservoirs.alpha, &model, &t);
        let right = boundary_data(&reservoirs.beta, &model, &t);
        Ok(Self {
            model,
            reservoirs,
            left,
            right,
        })
    }

    pub fn problem(&self, bc: BoundaryCondition, drift: DriftMode) -> Result<Problem<'_>, HarnessError> {
        Ok(Problem::new(
            &self.model,
            bc,
            self.left.clone(),
            self.right.clone(),
            drift,
        )?)
    }
}

/// Stream id of replica `r` at size `N`: sizes never share streams.
pub fn replica_stream(n: usize, r: usize) -> u64 {
    ((n as u64) << 32) | r as u64
}

/// Runs `replicas` independent trajectories in parallel from local
/// equilibrium and returns, per replica, the profiles at `times`.
pub fn run_replicas(
    dynamics: &Dynamics<'_>,
    initial: &(dyn Fn(f64) -> Vec<f64> + Sync),
    times: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<Vec<EmpiricalProfile>>, HarnessError> {
    let geom = *dynamics.geom();
    let model = dynamics.model();
    let n = geom.n();
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, replica_stream(n, r));
            let start = sample_local_equilibrium(geom, model, |u| HydroVector(initial(u[0])), &mut rng)?;
            let snaps = simulate(dynamics, start, times, &mut rng)?;
            Ok(snaps.into_iter().map(|(_, p)| p).collect())
        })
        .collect()
}

/// Empirical profile (sites at `x/N`) linearly interpolated at `u`, held
/// constant beyond the first and last sites.
pub fn interpolate_profile(profile: &EmpiricalProfile, k: usize, u: f64) -> f64 {
    let g = profile.geom();
    let n = g.n() as f64;
    let last = g.first_extent();
    let x = (u * n).clamp(1.0, last as f64);
    let i = (x.floor() as usize).min(last - 1).max(1);
    let w = x - i as f64;
    let a = profile.at(i - 1)[k];
    if i == last {
        return a;
    }
    let b = profile.at(i)[k];
    (1.0 - w) * a + w * b
}

/// `(L¹, L²)` per component between a profile and a field, trapezoid on the
/// field grid.
pub fn profile_errors(profile: &EmpiricalProfile, field: &Field) -> (Vec<f64>, Vec<f64>) {
    let c = field.components();
    let h = field.h();
    let mut l1 = vec![0.0; c];
    let mut l2 = vec![0.0; c];
    for i in 0..field.nodes() {
        let w = if i == 0 || i == field.cells() { 0.5 * h } else { h };
        let u = field.u(i);
        for k in 0..c {
            let d = interpolate_profile(profile, k, u) - field.at(i)[k];
            l1[k] += w * d.abs();
            l2[k] += w * d * d;
        }
    }
    (l1, l2.into_iter().map(f64::sqrt).collect())
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Solves the PDE matching an experiment and returns the fields at its times.
pub fn reference_solution(exp: &Experiment, setup: &Setup, regime: Regime) -> Result<Vec<Field>, HarnessError> {
    let bc = regime.boundary_condition(exp.robin_kappa);
    let drift = match exp.drift {
        DriftScheme::Central => DriftMode::Central,
        DriftScheme::Upwind => DriftMode::Upwind,
    };
    let problem = setup.problem(bc, drift)?;
    let c = setup.model.components();
    let init = Field::from_fn(exp.pde_cells, c, |u| exp.initial.eval(u))?;
    let horizon = *exp.times.last().expect("validated");
    Ok(problem
        .solve(&init, horizon, None, &exp.times, |_, _| {})?
        .into_iter()
        .map(|(_, f)| f)
        .collect())
}

/// The hydrodynamic-limit comparison. `progress` sees each row as soon as
/// it is complete.
pub fn run_convergence<F>(exp: &Experiment, mut progress: F) -> Result<ComparisonReport, HarnessError>
where
    F: FnMut(&ComparisonRow),
{
    let regime = exp.validate()?;
    let setup = Setup::new(&exp.model, &exp.reservoirs)?;
    let model = &setup.model;
    if model.dim() != 1 {
        return Err(HarnessError::Invalid("the PDE comparison is one-dimensional".into()));
    }
    if exp.initial.components() != model.components() {
        return Err(HarnessError::Invalid(
            "initial profile has the wrong number of components".into(),
        ));
    }
    let reference = reference_solution(exp, &setup, regime)?;
    let c = model.components();
    let jumps = default_jump_law(model)?;
    let mut rows = Vec::new();
    for &n in &exp.sizes {
        let geom = LatticeGeom::slab(1, n)?;
        let dynamics = Dynamics::new(model, geom, exp.theta, jumps.clone(), Some(setup.reservoirs.clone()))?;
        let init = |u: f64| exp.initial.eval(u);
        let runs = run_replicas(&dynamics, &init, &exp.times, exp.replicas, exp.seed)?;
        let eps = exp.smoothing.epsilon(n);
        for (j, &t) in exp.times.iter().enumerate() {
            let per: Vec<EmpiricalProfile> = runs.iter().map(|r| r[j].clone()).collect();
            let mean = EmpiricalProfile::mean(&per)?;
            let smooth = mean.smooth(eps)?;
            let field = &reference[j];
            let (l1, l2) = profile_errors(&smooth, field);

            let smoothed: Vec<EmpiricalProfile> = per.iter().map(|p| p.smooth(eps)).collect::<Result<_, _>>()?;
            let m = per.len() as f64;
            let mut stderr = vec![0.0; c];
            if per.len() > 1 {
                let sites = geom.sites();
                for s in 0..sites {
                    for k in 0..c {
                        let mu = smooth.at(s)[k];
                        let var: f64 = smoothed.iter().map(|p| (p.at(s)[k] - mu).powi(2)).sum::<f64>() / (m - 1.0);
                        stderr[k] += (var / m).sqrt() / sites as f64;
                    }
                }
            }

            let mut test_errors = Vec::with_capacity(TEST_BASKET.len());
            for g in 0..TEST_BASKET.len() {
                let gs = geom.sample(|u| basket(g, u[0]));
                let emp = mean.pair(&gs)?;
                let h = field.h();
                let mut exact = vec![0.0; c];
                for i in 0..field.nodes() {
                    let w = if i == 0 || i == field.cells() { 0.5 * h } else { h };
                    let gu = basket(g, field.u(i));
                    for k in 0..c {
                        exact[k] += w * gu * field.at(i)[k];
                    }
                }
                test_errors.push((0..c).map(|k| (emp[k] - exact[k]).abs()).collect());
            }

            let row = ComparisonRow {
                n,
                time: t,
                epsilon: eps,
                l1,
                l2,
                stderr,
                test_errors,
            };
            progress(&row);
            rows.push(row);
        }
    }
    let logn: Vec<f64> = exp.sizes.iter().map(|&n| (n as f64).ln()).collect();
    let slopes = exp
        .times
        .iter()
        .map(|&t| {
            (0..c)
                .map(|k| {
                    let ys: Vec<f64> = exp
                        .sizes
                        .iter()
                        .map(|&n| rows.iter().find(|r| r.n == n && r.time == t).expect("row").l1[k].ln())
                        .collect();
                    slope(&logn, &ys)
                })
                .collect()
        })
        .collect();
    Ok(ComparisonReport {
        regime,
        boundary: regime.boundary_condition(exp.robin_kappa).name().to_string(),
        rows,
        slopes,
    })
}

/// Boundary diagnostics across `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub model: ModelSpec,
    pub thetas: Vec<f64>,
    pub n: usize,
    pub replicas: usize,
    pub horizon: f64,
    /// Every `α_v` and `β_v`.
    pub reservoir: f64,
    /// Initial per-velocity density, uniform in space.
    pub initial: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub theta: f64,
    pub regime: Regime,
    /// `Σ_v α_v`.
    pub reservoir_mass: f64,
    /// Time average of `I_0` over the boundary sites on `[T/2, T]`.
    pub boundary_mass: f64,
    pub boundary_mass_stderr: f64,
    /// Reservoir events summed over replicas.
    pub boundary_events: u64,
    /// Poisson mean bound `M · 2 · |𝒱| · N^{d−1} · N^{2−θ} · T`.
    pub event_bound: f64,
    /// 0.999 quantile of Poisson(`event_bound`).
    pub event_quantile: u64,
    /// Net macroscopic mass leaving per unit time, `N^{-d}(out − in)/T`.
    pub net_current: f64,
    pub net_current_stderr: f64,
}

struct ScanSample {
    boundary_mass: f64,
    events: u64,
    net_out: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

pub fn regime_scan(cfg: &ScanConfig) -> Result<Vec<ScanRow>, HarnessError> {
    let model = cfg.model.build()?;
    if cfg.replicas == 0 || cfg.horizon.is_nan() || cfg.horizon <= 0.0 {
        return Err(HarnessError::Invalid(
            "scan needs replicas and a positive horizon".into(),
        ));
    }
    let reservoirs =
        ReservoirSpec::constant(&vec![cfg.reservoir; model.len()], &vec![cfg.reservoir; model.len()]).build(&model)?;
    let geom = LatticeGeom::slab(model.dim(), cfg.n)?;
    let jumps = default_jump_law(&model)?;
    let nv = model.len();
    let mut rows = Vec::new();
    let left = geom.boundary_sites(true);
    let right = geom.boundary_sites(false);
    let faces: Vec<usize> = left.iter().chain(&right).copied().collect();
    let volume = geom.volume_element();
    let horizon = cfg.horizon;
    for (ti, &theta) in cfg.thetas.iter().enumerate() {
        let dynamics = Dynamics::new(&model, geom, theta, jumps.clone(), Some(reservoirs.clone()))?;
        let samples: Vec<ScanSample> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| -> Result<ScanSample, HarnessError> {
                let mut rng = rng::stream(cfg.seed, ((ti as u64) << 40) | replica_stream(cfg.n, r));
                let start = sample_local_equilibrium(
                    geom,
                    &model,
                    |_| {
                        let mut p = vec![0.0; model.components()];
                        for v in 0..nv {
                            for (o, t) in p.iter_mut().zip(model.tilde(v)) {
                                *o += cfg.initial * t;
                            }
                        }
                        HydroVector(p)
                    },
                    &mut rng,
                )?;
                let mut sim = Simulator::new(&dynamics, start)?;
                sim.run_until(0.5 * horizon, &mut rng, |_, _| {});
                let mut acc = 0.0;
                sim.run_until(horizon, &mut rng, |config, dt| {
                    let mass: u32 = faces.iter().map(|&s| config.site(s).count_ones()).sum();
                    acc += mass as f64 * dt;
                });
                let counters = sim.counters();
                Ok(ScanSample {
                    boundary_mass: acc / (0.5 * horizon) / faces.len() as f64,
                    events: counters.total(),
                    net_out: -(counters.net_inflow() as f64) * volume / horizon,
                })
            })
            .collect::<Result<_, _>>()?;
        let (bm, bse) = mean_stderr(&samples.iter().map(|s| s.boundary_mass).collect::<Vec<_>>());
        let (nc, nse) = mean_stderr(&samples.iter().map(|s| s.net_out).collect::<Vec<_>>());
        let events = samples.iter().map(|s| s.events).sum();
        let transverse = (cfg.n as f64).powi(model.dim() as i32 - 1);
        let bound = cfg.replicas as f64 * 2.0 * nv as f64 * transverse * (cfg.n as f64).powf(2.0 - theta) * horizon;
        let quantile = if bound > 0.0 {
            Poisson::new(bound).map(|p| p.inverse_cdf(0.999)).unwrap_or(u64::MAX)
        } else {
            0
        };
        rows.push(ScanRow {
            theta,
            regime: Regime::from_theta(theta),
            reservoir_mass: cfg.reservoir * nv as f64,
            boundary_mass: bm,
            boundary_mass_stderr: bse,
            boundary_events: events,
            event_bound: bound,
            event_quantile: quantile,
            net_current: nc,
            net_current_stderr: nse,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_map_is_the_trichotomy() {
        assert_eq!(Regime::from_theta(0.0), Regime::Dirichlet);
        assert_eq!(Regime::from_theta(0.5), Regime::Dirichlet);
        assert_eq!(Regime::from_theta(1.0), Regime::Robin);
        assert_eq!(Regime::from_theta(2.0), Regime::Neumann);
    }

    #[test]
    fn interpolation_is_exact_on_linear_profiles() {
        let g = LatticeGeom::slab(1, 10).unwrap();
        let values: Vec<f64> = (1..10).flat_map(|x| [x as f64 / 10.0, 0.0]).collect();
        let p = EmpiricalProfile::from_values(g, 2, values).unwrap();
        for u in [0.1, 0.25, 0.5, 0.73, 0.9] {
            assert!((interpolate_profile(&p, 0, u) - u).abs() < 1e-12);
        }
        assert!((interpolate_profile(&p, 0, 0.0) - 0.1).abs() < 1e-12);
        assert!((interpolate_profile(&p, 0, 1.0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [64.0f64, 128.0, 256.0].iter().map(|x| x.ln()).collect();
        let ys: Vec<f64> = [64.0f64, 128.0, 256.0]
            .iter()
            .map(|x| (3.0 * x.powf(-0.5)).ln())
            .collect();
        assert!((slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }
}
