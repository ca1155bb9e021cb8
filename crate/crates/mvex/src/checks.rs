//! Exact tiny-system checks and statistical self-tests, collected into one
//! pass/fail table.

use mvex_core::dynamics::generator::{self, Mutation, Parts};
use mvex_core::dynamics::{default_jump_law, dynkin_martingale, Dynamics, Simulator};
use mvex_core::lattice::{sample_local_equilibrium, Configuration, ProductMeasure};
use mvex_core::rng::{self, uniform};
use mvex_core::thermo::{forward_map, inverse_map, line, ChemicalPotential, HydroVector, ReservoirProfile, Reservoirs};
use mvex_core::{LatticeGeom, VelocityModel};
use serde::Serialize;

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    pub seed: u64,
    /// Corrupts one exclusion rate in the stationarity check.
    pub mutate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// The measured quantity compared with `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &'static str, value: f64, threshold: f64, detail: String) -> Self {
        Self {
            name,
            passed: value.is_finite() && value <= threshold,
            value,
            threshold,
            detail,
        }
    }

    fn failed(name: &'static str, detail: String) -> Self {
        Self {
            name,
            passed: false,
            value: f64::NAN,
            threshold: f64::NAN,
            detail,
        }
    }
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn uniform_reservoirs(model: &VelocityModel, value: f64) -> Reservoirs {
    Reservoirs {
        alpha: ReservoirProfile::uniform(model, value).expect("value in (0,1)"),
        beta: ReservoirProfile::uniform(model, value).expect("value in (0,1)"),
    }
}

fn random_lambda(rng: &mut rng::StreamRng, components: usize, scale: f64) -> ChemicalPotential {
    ChemicalPotential((0..components).map(|_| scale * (2.0 * uniform(rng) - 1.0)).collect())
}

/// `‖μ_λᵀ L‖_∞` on the 3-site torus, Model I, `d = 1`, random `λ`.
pub fn stationarity(seed: u64, mutate: bool) -> CheckResult {
    let name = "stationarity";
    let model = VelocityModel::model_one(1).expect("model I");
    let geom = LatticeGeom::torus(1, 3).expect("torus");
    let run = || -> Result<(f64, Vec<f64>), String> {
        let dynamics = Dynamics::new(
            &model,
            geom,
            0.0,
            default_jump_law(&model).map_err(|e| e.to_string())?,
            None,
        )
        .map_err(|e| e.to_string())?;
        let mutation = mutate.then_some(Mutation { site: 0, factor: 1.5 });
        let l = generator::build(&dynamics, Parts::ALL, mutation).map_err(|e| e.to_string())?;
        let mut rng = rng::stream(seed, 1);
        let lambda = random_lambda(&mut rng, model.components(), 1.5);
        let template = Configuration::empty(geom, &model);
        let mu = generator::measure_vector(&ProductMeasure::homogeneous(geom, &model, &lambda), &template)
            .map_err(|e| e.to_string())?;
        let worst = l.left_apply(&mu).iter().fold(0.0f64, |a, x| a.max(x.abs()));
        Ok((worst, lambda.0))
    };
    match run() {
        Ok((worst, lambda)) => {
            CheckResult::at_most(name, worst, 1e-12, format!("lambda = {lambda:?}, mutated = {mutate}"))
        }
        Err(e) => CheckResult::failed(name, e),
    }
}

/// Every collision rule conserves site mass and momentum, over all site
/// words of Model I in `d = 2, 3`.
pub fn collision_conservation() -> CheckResult {
    let mut worst = 0.0f64;
    let mut rules = 0;
    for d in [2, 3] {
        let model = VelocityModel::model_one(d).expect("model I");
        for rule in model.collisions() {
            rules += 1;
            for w in 0..=model.full_mask() {
                if !rule.fires(w) {
                    continue;
                }
                let a = model.site_observable(w);
                let b = model.site_observable(rule.apply(w));
                for (x, y) in a.0.iter().zip(&b.0) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    CheckResult::at_most(
        "collision_conservation",
        worst,
        1e-12,
        format!("{rules} rules over d = 2, 3"),
    )
}

/// `𝓛^c` applied to `Σ_x G(x) I_k(η_x)` vanishes identically.
pub fn collision_annihilates(seed: u64) -> CheckResult {
    let name = "collision_annihilates_observables";
    let model = VelocityModel::model_one(2).expect("model I");
    let geom = LatticeGeom::slab(2, 2).expect("slab");
    let run = || -> Result<f64, String> {
        let dynamics = Dynamics::new(
            &model,
            geom,
            0.0,
            default_jump_law(&model).map_err(|e| e.to_string())?,
            Some(uniform_reservoirs(&model, 0.5)),
        )
        .map_err(|e| e.to_string())?;
        let l = generator::build(&dynamics, Parts::COLLISION, None).map_err(|e| e.to_string())?;
        let mut rng = rng::stream(seed, 2);
        let g: Vec<f64> = (0..geom.sites()).map(|_| uniform(&mut rng)).collect();
        let mut worst = 0.0f64;
        for k in 0..model.components() {
            let f = generator::observable(&dynamics, &g, k);
            worst = l.apply(&f).iter().fold(worst, |a, x| a.max(x.abs()));
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => CheckResult::at_most(name, w, 1e-12, format!("{} sites, Model I d = 2", geom.sites())),
        Err(e) => CheckResult::failed(name, e),
    }
}

/// `Λ(forward(λ)) = λ` on 100 random `λ` per dimension, and the `d = 1`
/// Newton output against the closed form.
pub fn thermo_round_trip(seed: u64) -> CheckResult {
    let mut rng = rng::stream(seed, 3);
    let mut worst = 0.0f64;
    for d in 1..=3 {
        let model = VelocityModel::model_one(d).expect("model I");
        for _ in 0..100 {
            let lambda = random_lambda(&mut rng, model.components(), 2.0);
            let p = forward_map(&lambda, &model);
            match inverse_map(&p, &model) {
                Ok(back) => {
                    for (a, b) in back.0.iter().zip(&lambda.0) {
                        worst = worst.max((a - b).abs());
                    }
                }
                Err(e) => return CheckResult::failed("thermo_round_trip", format!("d = {d}: {e}")),
            }
            if d == 1 {
                let (rho, m) = (p.0[0], p.0[1]);
                let (tp, tm) = line::thetas(rho, m);
                let newton = mvex_core::thermo::thetas(&inverse_map(&p, &model).expect("checked"), &model);
                worst = worst.max((newton[0] - tp).abs()).max((newton[1] - tm).abs());
                worst = worst
                    .max((tp - 0.5 * (rho + m)).abs())
                    .max((tm - 0.5 * (rho - m)).abs());
            }
        }
    }
    CheckResult::at_most(
        "thermo_round_trip",
        worst,
        1e-10,
        "300 random lambda, d = 1, 2, 3".into(),
    )
}

/// `⟨𝓛^c√f, √f⟩_ν` directly and as `−½D^c(f)`, for 20 random densities.
pub fn dirichlet_identity(seed: u64) -> CheckResult {
    let name = "dirichlet_identity";
    let model = VelocityModel::model_one(2).expect("model I");
    let geom = LatticeGeom::slab(2, 2).expect("slab");
    let run = || -> Result<f64, String> {
        let dynamics = Dynamics::new(
            &model,
            geom,
            0.0,
            default_jump_law(&model).map_err(|e| e.to_string())?,
            Some(uniform_reservoirs(&model, 0.5)),
        )
        .map_err(|e| e.to_string())?;
        let l = generator::build(&dynamics, Parts::COLLISION, None).map_err(|e| e.to_string())?;
        let mut rng = rng::stream(seed, 4);
        let template = Configuration::empty(geom, &model);
        let lambda = random_lambda(&mut rng, model.components(), 1.0);
        let nu = generator::measure_vector(&ProductMeasure::homogeneous(geom, &model, &lambda), &template)
            .map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let raw: Vec<f64> = (0..l.states()).map(|_| uniform(&mut rng) + 0.05).collect();
            let z: f64 = raw.iter().zip(&nu).map(|(f, n)| f * n).sum();
            let f: Vec<f64> = raw.iter().map(|x| x / z).collect();
            let (a, b) = generator::dirichlet_pair(&l, &nu, &f);
            worst = worst.max((a - b).abs());
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => CheckResult::at_most(name, w, 1e-10, "20 random densities, Model I d = 2, 2 sites".into()),
        Err(e) => CheckResult::failed(name, e),
    }
}

/// Largest `|mean| / stderr` of the Dynkin martingale over two test
/// functions, both components and `t ∈ {0.02, 0.05}`.
pub fn dynkin(seed: u64, n: usize, replicas: usize) -> CheckResult {
    let name = "dynkin_martingale";
    let model = VelocityModel::model_one(1).expect("model I");
    let run = || -> Result<(f64, usize), String> {
        let geom = LatticeGeom::slab(1, n).map_err(|e| e.to_string())?;
        let reservoirs = Reservoirs {
            alpha: ReservoirProfile::constant(&model, &[0.8, 0.6]).map_err(|e| e.to_string())?,
            beta: ReservoirProfile::constant(&model, &[0.3, 0.3]).map_err(|e| e.to_string())?,
        };
        let dynamics = Dynamics::new(
            &model,
            geom,
            0.5,
            default_jump_law(&model).map_err(|e| e.to_string())?,
            Some(reservoirs),
        )
        .map_err(|e| e.to_string())?;
        let pi = std::f64::consts::PI;
        let tests = vec![geom.sample(|u| (pi * u[0]).sin()), geom.sample(|u| u[0] * u[0])];
        let stats = dynkin_martingale(&dynamics, &tests, &[0.02, 0.05], replicas, seed, |rng| {
            sample_local_equilibrium(
                geom,
                &model,
                |u| HydroVector(vec![0.6 + 0.3 * u[0], 0.1 - 0.2 * u[0]]),
                rng,
            )
            .expect("profile inside U")
        })
        .map_err(|e| e.to_string())?;
        let worst = stats
            .iter()
            .map(|s| {
                if s.stderr > 0.0 {
                    s.mean.abs() / s.stderr
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0f64, f64::max);
        Ok((worst, stats.len()))
    };
    match run() {
        Ok((w, cells)) => CheckResult::at_most(
            name,
            w,
            3.0,
            format!("max |mean|/stderr over {cells} cells, N = {n}, M = {replicas}"),
        ),
        Err(e) => CheckResult::failed(name, e),
    }
}

/// Monte Carlo state frequencies at time `t` against `μ₀ e^{tL}`, as the
/// largest standardized deviation over states.
pub fn tiny_law(seed: u64, samples: usize) -> CheckResult {
    let name = "tiny_system_law";
    let model = VelocityModel::model_one(1).expect("model I");
    let run = || -> Result<f64, String> {
        let geom = LatticeGeom::slab(1, 4).map_err(|e| e.to_string())?;
        let reservoirs = Reservoirs {
            alpha: ReservoirProfile::constant(&model, &[0.7, 0.2]).map_err(|e| e.to_string())?,
            beta: ReservoirProfile::uniform(&model, 0.4).map_err(|e| e.to_string())?,
        };
        let dynamics = Dynamics::new(
            &model,
            geom,
            0.5,
            default_jump_law(&model).map_err(|e| e.to_string())?,
            Some(reservoirs),
        )
        .map_err(|e| e.to_string())?;
        let l = generator::build(&dynamics, Parts::ALL, None).map_err(|e| e.to_string())?;
        let start = Configuration::empty(geom, &model);
        let mut mu = vec![0.0; l.states()];
        mu[generator::encode(&start)] = 1.0;
        let t = 0.02;
        let law = l.evolve(&mu, t);
        let mut counts = vec![0usize; l.states()];
        let mut rng = rng::stream(seed, 6);
        for _ in 0..samples {
            let mut sim = Simulator::new(&dynamics, start.clone()).map_err(|e| e.to_string())?;
            sim.run_until(t, &mut rng, |_, _| {});
            counts[generator::encode(sim.config())] += 1;
        }
        let s = samples as f64;
        let mut worst = 0.0f64;
        for (c, p) in counts.iter().zip(&law) {
            let sd = (p * (1.0 - p) / s).sqrt().max(1.0 / s);
            worst = worst.max((*c as f64 / s - p).abs() / sd);
        }
        Ok(worst)
    };
    match run() {
        // 64 states: a 4.5σ envelope keeps the family-wise false alarm rate near 4e-4
        Ok(w) => CheckResult::at_most(
            name,
            w,
            4.5,
            format!("{samples} trajectories, 64 states, max standardized deviation"),
        ),
        Err(e) => CheckResult::failed(name, e),
    }
}

/// Incremental rate table against a rebuild after `10⁵` events.
pub fn rate_table(seed: u64) -> CheckResult {
    let name = "rate_table_drift";
    let model = VelocityModel::model_one(2).expect("model I");
    let run = || -> Result<f64, String> {
        let geom = LatticeGeom::slab(2, 12).map_err(|e| e.to_string())?;
        let reservoirs = uniform_reservoirs(&model, 0.4);
        let dynamics = Dynamics::new(
            &model,
            geom,
            0.5,
            default_jump_law(&model).map_err(|e| e.to_string())?,
            Some(reservoirs),
        )
        .map_err(|e| e.to_string())?;
        let mut rng = rng::stream(seed, 7);
        let start = sample_local_equilibrium(geom, &model, |_| HydroVector(vec![1.0, 0.1, -0.1]), &mut rng)
            .map_err(|e| e.to_string())?;
        let mut sim = Simulator::new(&dynamics, start).map_err(|e| e.to_string())?;
        for _ in 0..100_000 {
            sim.step(&mut rng);
        }
        Ok(sim.rate_drift())
    };
    match run() {
        Ok(w) => CheckResult::at_most(name, w, 1e-9, "10^5 events, Model I d = 2, N = 12".into()),
        Err(e) => CheckResult::failed(name, e),
    }
}

/// Runs every check. Failures are reported, never raised.
pub fn check_suite(options: CheckOptions) -> Vec<CheckResult> {
    let seed = options.seed;
    vec![
        stationarity(seed, options.mutate),
        collision_conservation(),
        collision_annihilates(seed),
        thermo_round_trip(seed),
        dirichlet_identity(seed),
        tiny_law(seed, 20_000),
        rate_table(seed),
        dynkin(seed, 32, 200),
    ]
}

/// Plain-text table, one line per check.
pub fn render(results: &[CheckResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "{:<36} {:<4} value={:.3e} threshold={:.1e}  {}\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.value,
            r.threshold,
            r.detail
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_checks_pass() {
        assert!(stationarity(1, false).passed);
        assert!(collision_conservation().passed);
        assert!(collision_annihilates(1).passed);
        assert!(thermo_round_trip(1).passed);
        assert!(dirichlet_identity(1).passed);
    }

    #[test]
    fn mutation_breaks_stationarity() {
        let r = stationarity(1, true);
        assert!(!r.passed, "{r:?}");
    }
}
