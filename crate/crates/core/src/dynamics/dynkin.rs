//! Dynkin martingales `M_t(G) = ⟨π_t,G⟩ − ⟨π_0,G⟩ − ∫₀ᵗ 𝓛⟨π_s,G⟩ ds`.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use super::sim::Simulator;
use super::{Dynamics, DynamicsError};
use crate::lattice::{empirical_profile, Configuration};
use crate::rng::{self, StreamRng};

/// `𝓛_{N,θ}⟨π^{k,N}, G⟩` at the configuration, for every component `k`.
///
/// Written out from the generator itself: each symmetric neighbour, each
/// drift displacement, each collision and each reservoir flip contributes
/// its rate times the jump of the observable. It does not share any table
/// with the simulator.
pub fn drift(dynamics: &Dynamics<'_>, config: &Configuration, g: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    let geom = dynamics.geom();
    if g.len() != geom.sites() {
        return Err(DynamicsError::TestFunctionShape {
            expected: geom.sites(),
            found: g.len(),
        });
    }
    let model = dynamics.model();
    let d = geom.dim();
    let c = model.components();
    let n2 = dynamics.speed();
    let inv_n = 1.0 / geom.n() as f64;
    let mut out = vec![0.0; c];

    // exclusion: Σ_x Σ_v Σ_z P_N(z,v) η(x,v)(1−η(x+z,v)) ṽ (G(x+z) − G(x))
    let mut unit = [0i64; 3];
    for x in 0..geom.sites() {
        let word = config.site(x);
        for v in 0..model.len() {
            if word >> v & 1 == 0 {
                continue;
            }
            let mut acc = 0.0;
            for axis in 0..d {
                for s in [1i64, -1] {
                    unit[axis] = s;
                    if let Some(y) = geom.shift(x, &unit[..d]) {
                        if !config.get(y, v) {
                            acc += 0.5 * (g[y] - g[x]);
                        }
                    }
                    unit[axis] = 0;
                }
            }
            for j in dynamics.jumps().jumps(v) {
                if let Some(y) = geom.shift(x, &j.displacement[..d]) {
                    if !config.get(y, v) {
                        acc += j.probability * inv_n * (g[y] - g[x]);
                    }
                }
            }
            for (o, t) in out.iter_mut().zip(model.tilde(v)) {
                *o += n2 * acc * t;
            }
        }
    }

    // collisions: the site observable is invariant, kept for completeness
    let mut before = vec![0.0; c];
    let mut after = vec![0.0; c];
    for x in 0..geom.sites() {
        let word = config.site(x);
        for q in model.collisions() {
            if q.fires(word) {
                before.iter_mut().for_each(|b| *b = 0.0);
                after.iter_mut().for_each(|a| *a = 0.0);
                model.accumulate_site(word, 1.0, &mut before);
                model.accumulate_site(q.apply(word), 1.0, &mut after);
                for k in 0..c {
                    out[k] += n2 * g[x] * (after[k] - before[k]);
                }
            }
        }
    }

    // reservoirs: rate N^{2−θ}(α(1−η) + (1−α)η), jump ±ṽ G(x)
    if !geom.is_torus() {
        let b = dynamics.boundary_speed();
        for left in [true, false] {
            for x in geom.boundary_sites(left) {
                for v in 0..model.len() {
                    let a = dynamics.reservoir_density(left, x, v);
                    let (rate, sign) = if config.get(x, v) { (1.0 - a, -1.0) } else { (a, 1.0) };
                    for (o, t) in out.iter_mut().zip(model.tilde(v)) {
                        *o += b * rate * sign * t * g[x];
                    }
                }
            }
        }
    }

    let w = geom.volume_element();
    out.iter_mut().for_each(|o| *o *= w);
    Ok(out)
}

/// One trajectory: `M_t(G)` for every test function, at every time in
/// `times`, returned as `[test][time][component]`.
pub fn martingale_path<R: RngCore + ?Sized>(
    dynamics: &Dynamics<'_>,
    initial: Configuration,
    tests: &[Vec<f64>],
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<Vec<f64>>>, DynamicsError> {
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[0] > w[1]) {
        return Err(DynamicsError::Snapshots);
    }
    let model = dynamics.model();
    let start = empirical_profile(&initial, model);
    let mut base = Vec::with_capacity(tests.len());
    for g in tests {
        base.push(start.pair(g)?);
    }
    let c = model.components();
    let mut integral = vec![vec![0.0; c]; tests.len()];
    let mut out = vec![Vec::with_capacity(times.len()); tests.len()];
    let mut sim = Simulator::new(dynamics, initial)?;
    let mut failure = None;
    for &t in times {
        sim.run_until(t, rng, |config, dt| {
            for (i, g) in tests.iter().enumerate() {
                match drift(dynamics, config, g) {
                    Ok(dr) => integral[i].iter_mut().zip(&dr).for_each(|(a, b)| *a += b * dt),
                    Err(e) => failure = Some(e),
                }
            }
        });
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let now = empirical_profile(sim.config(), model);
        for (i, g) in tests.iter().enumerate() {
            let p = now.pair(g)?;
            out[i].push((0..c).map(|k| p[k] - base[i][k] - integral[i][k]).collect());
        }
    }
    Ok(out)
}

/// Replica mean and standard error of one martingale coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleStat {
    pub test: usize,
    pub time: f64,
    pub component: usize,
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

impl MartingaleStat {
    /// `|mean| ≤ k · stderr`.
    pub fn within(&self, k: f64) -> bool {
        libm::fabs(self.mean) <= k * self.stderr
    }
}

/// Runs `replicas` independent trajectories, replica `r` on stream `r` of
/// `seed`, each started from `init(rng)` drawn on the same stream.
pub fn dynkin_martingale<F>(
    dynamics: &Dynamics<'_>,
    tests: &[Vec<f64>],
    times: &[f64],
    replicas: usize,
    seed: u64,
    mut init: F,
) -> Result<Vec<MartingaleStat>, DynamicsError>
where
    F: FnMut(&mut StreamRng) -> Configuration,
{
    if replicas == 0 {
        return Err(DynamicsError::EmptyStatistic);
    }
    let c = dynamics.model().components();
    let cells = tests.len() * times.len() * c;
    let mut sum = vec![0.0; cells];
    let mut sq = vec![0.0; cells];
    for r in 0..replicas {
        let mut rng = rng::stream(seed, r as u64);
        let start = init(&mut rng);
        let path = martingale_path(dynamics, start, tests, times, &mut rng)?;
        for (i, per_time) in path.iter().enumerate() {
            for (j, vals) in per_time.iter().enumerate() {
                for (k, &m) in vals.iter().enumerate() {
                    let idx = (i * times.len() + j) * c + k;
                    sum[idx] += m;
                    sq[idx] += m * m;
                }
            }
        }
    }
    let mf = replicas as f64;
    let mut out = Vec::with_capacity(cells);
    for i in 0..tests.len() {
        for (j, &t) in times.iter().enumerate() {
            for k in 0..c {
                let idx = (i * times.len() + j) * c + k;
                let mean = sum[idx] / mf;
                let var = if replicas > 1 {
                    ((sq[idx] - mf * mean * mean) / (mf - 1.0)).max(0.0)
                } else {
                    0.0
                };
                out.push(MartingaleStat {
                    test: i,
                    time: t,
                    component: k,
                    mean,
                    stderr: libm::sqrt(var / mf),
                    replicas,
                });
            }
        }
    }
    Ok(out)
}
