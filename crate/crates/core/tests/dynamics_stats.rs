//! Statistical checks of the particle system against exact answers.

use mvex_core::dynamics::generator::{self, Parts};
use mvex_core::dynamics::{default_jump_law, Dynamics, Event, Simulator, StepOutcome};
use mvex_core::lattice::{empirical_profile, sample_local_equilibrium};
use mvex_core::rng::stream;
use mvex_core::thermo::{ReservoirProfile, Reservoirs};
use mvex_core::{Configuration, HydroVector, LatticeGeom, VelocityModel};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var)
}

// A lone +e1 particle on the torus moves by ±1/N at total rate N² and by
// +1/N at rate N, so its macroscopic displacement at time t has mean t and
// variance t(1 + 1/N).
#[test]
fn single_particle_displacement() {
    let model = VelocityModel::model_one(1).unwrap();
    let n = 16;
    let geom = LatticeGeom::torus(1, n).unwrap();
    let dynamics = Dynamics::new(&model, geom, 0.0, default_jump_law(&model).unwrap(), None).unwrap();
    let t = 0.5;
    let replicas = 4000;
    let mut xs = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let mut rng = stream(11, r as u64);
        let mut config = Configuration::empty(geom, &model);
        config.set(0, 0, true);
        let mut sim = Simulator::new(&dynamics, config).unwrap();
        let mut x = 0i64;
        loop {
            let before = sim.time();
            match sim.step(&mut rng) {
                StepOutcome::Fired { event, dt } => {
                    if before + dt > t {
                        break;
                    }
                    if let Event::Jump { from, to, .. } = event {
                        let d = geom.coords(to)[0] - geom.coords(from)[0];
                        x += (d + n as i64 / 2).rem_euclid(n as i64) - n as i64 / 2;
                    }
                }
                StepOutcome::Absorbed => unreachable!(),
            }
        }
        xs.push(x as f64 / n as f64);
    }
    let (mean, var) = mean_var(&xs);
    let expect_var = t * (1.0 + 1.0 / n as f64);
    let m = replicas as f64;
    assert!((mean - t).abs() < 4.0 * (expect_var / m).sqrt(), "mean {mean}");
    // displacement is close to Gaussian: Var(s²) ≈ 2σ⁴/(M − 1)
    assert!(
        (var - expect_var).abs() < 4.0 * expect_var * (2.0 / (m - 1.0)).sqrt(),
        "var {var} vs {expect_var}"
    );
}

fn reflect(config: &Configuration, model: &VelocityModel) -> Configuration {
    let geom = *config.geom();
    let sites = geom.sites();
    let mut out = Configuration::empty(geom, model);
    for i in 0..sites {
        for v in 0..model.len() {
            if config.get(i, v) {
                out.set(sites - 1 - i, model.reflection(v), true);
            }
        }
    }
    out
}

// Mirroring space (u → 1 − u), velocities (v → −v) and the two reservoirs
// (α_v ↔ β_{−v}) maps the process onto itself, so momentum pairings flip
// sign in distribution.
#[test]
fn mirrored_system_flips_momentum() {
    let model = VelocityModel::model_one(1).unwrap();
    let geom = LatticeGeom::slab(1, 16).unwrap();
    let perm: Vec<usize> = (0..model.len()).map(|v| model.reflection(v)).collect();
    let alpha = ReservoirProfile::constant(&model, &[0.8, 0.3]).unwrap();
    let beta = ReservoirProfile::constant(&model, &[0.4, 0.6]).unwrap();
    let jumps = default_jump_law(&model).unwrap();
    let original = Dynamics::new(
        &model,
        geom,
        0.5,
        jumps.clone(),
        Some(Reservoirs {
            alpha: alpha.clone(),
            beta: beta.clone(),
        }),
    )
    .unwrap();
    let mirrored = Dynamics::new(
        &model,
        geom,
        0.5,
        jumps.permuted(&perm, |z| [-z[0], z[1], z[2]]),
        Some(Reservoirs {
            alpha: beta.permuted(&perm),
            beta: alpha.permuted(&perm),
        }),
    )
    .unwrap();
    let g_one = geom.sample(|_| 1.0);
    let g_lin = geom.sample(|u| u[0]);
    let g_mirror = geom.sample(|u| 1.0 - u[0]);
    let replicas = 600;
    let t = 0.05;
    let mut a = [Vec::new(), Vec::new()];
    let mut b = [Vec::new(), Vec::new()];
    for r in 0..replicas {
        let mut rng = stream(21, r as u64);
        let start = sample_local_equilibrium(
            geom,
            &model,
            |u| HydroVector(vec![0.8 + 0.4 * u[0], 0.3 - 0.5 * u[0]]),
            &mut rng,
        )
        .unwrap();
        let flipped = reflect(&start, &model);
        let mut s1 = Simulator::new(&original, start).unwrap();
        s1.run_until(t, &mut rng, |_, _| {});
        let mut rng2 = stream(22, r as u64);
        let mut s2 = Simulator::new(&mirrored, flipped).unwrap();
        s2.run_until(t, &mut rng2, |_, _| {});
        let p1 = empirical_profile(s1.config(), &model);
        let p2 = empirical_profile(s2.config(), &model);
        a[0].push(p1.pair(&g_one).unwrap()[1]);
        a[1].push(p1.pair(&g_lin).unwrap()[1]);
        b[0].push(-p2.pair(&g_one).unwrap()[1]);
        b[1].push(-p2.pair(&g_mirror).unwrap()[1]);
    }
    for k in 0..2 {
        let (ma, va) = mean_var(&a[k]);
        let (mb, vb) = mean_var(&b[k]);
        let se = ((va + vb) / replicas as f64).sqrt();
        assert!((ma - mb).abs() < 4.0 * se, "test {k}: {ma} vs {mb} (se {se})");
    }
}

// Occupation frequencies of a tiny two-dimensional system with collisions
// against the exact law.
#[test]
fn tiny_law_with_collisions() {
    let model = VelocityModel::model_one(2).unwrap();
    let geom = LatticeGeom::slab(2, 2).unwrap();
    let reservoirs = Reservoirs {
        alpha: ReservoirProfile::constant(&model, &[0.7, 0.2, 0.5, 0.4]).unwrap(),
        beta: ReservoirProfile::uniform(&model, 0.3).unwrap(),
    };
    let dynamics = Dynamics::new(&model, geom, 1.0, default_jump_law(&model).unwrap(), Some(reservoirs)).unwrap();
    let l = generator::build(&dynamics, Parts::ALL, None).unwrap();
    let start = Configuration::empty(geom, &model);
    let mut mu = vec![0.0; l.states()];
    mu[generator::encode(&start)] = 1.0;
    let t = 0.15;
    let law = l.evolve(&mu, t);
    let samples = 20_000;
    let mut counts = vec![0usize; l.states()];
    let mut rng = stream(31, 0);
    for _ in 0..samples {
        let mut sim = Simulator::new(&dynamics, start.clone()).unwrap();
        sim.run_until(t, &mut rng, |_, _| {});
        counts[generator::encode(sim.config())] += 1;
    }
    let s = samples as f64;
    let chi2: f64 = counts
        .iter()
        .zip(&law)
        .filter(|(_, p)| **p * s >= 5.0)
        .map(|(c, p)| (*c as f64 - p * s).powi(2) / (p * s))
        .sum();
    let cells = law.iter().filter(|p| **p * s >= 5.0).count() as f64;
    // χ² with ~cells − 1 degrees of freedom; mean k, sd √(2k)
    let k = cells - 1.0;
    assert!(chi2 < k + 5.0 * (2.0 * k).sqrt(), "chi2 = {chi2} over {cells} cells");
}
