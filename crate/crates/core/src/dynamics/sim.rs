//! Exact continuous-time simulation with incremental rate maintenance.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use super::tree::SumTree;
use super::{Dynamics, DynamicsError};
use crate::lattice::{empirical_profile, Configuration, EmpiricalProfile};
use crate::rng;
use crate::thermo::Side;

const NONE: u32 = u32::MAX;

/// One transition of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Jump {
        from: usize,
        to: usize,
        velocity: usize,
    },
    Collision {
        site: usize,
        rule: usize,
    },
    Boundary {
        site: usize,
        velocity: usize,
        side: Side,
        inserted: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// An event fired after `dt` units of macroscopic time.
    Fired { event: Event, dt: f64 },
    /// Every clock has rate zero.
    Absorbed,
}

/// Reservoir event tallies per face.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BoundaryCounters {
    pub left_in: u64,
    pub left_out: u64,
    pub right_in: u64,
    pub right_out: u64,
}

impl BoundaryCounters {
    /// Net number of particles that entered the system.
    pub fn net_inflow(&self) -> i64 {
        self.left_in as i64 + self.right_in as i64 - self.left_out as i64 - self.right_out as i64
    }

    pub fn total(&self) -> u64 {
        self.left_in + self.left_out + self.right_in + self.right_out
    }
}

/// Gillespie simulator over every clock of the generator.
///
/// Clocks, in leaf order of the rate tree:
/// * exclusion: one per `(site, velocity, displacement in supp P_N(·, v))`;
/// * collision: one per `(site, rule)`;
/// * boundary: one per `(face, boundary site, velocity)`.
///
/// Rates already carry the `N²` factor, so elapsed times are macroscopic.
pub struct Simulator<'d, 'm> {
    dynamics: &'d Dynamics<'m>,
    config: Configuration,
    time: f64,
    events: u64,
    counters: BoundaryCounters,
    nv: usize,
    // exclusion moves
    move_offset: Vec<usize>,
    move_rate: Vec<f64>,
    moves_total: usize,
    targets: Vec<u32>,
    sources: Vec<u32>,
    // collisions
    rules_by_velocity: Vec<Vec<usize>>,
    collision_base: usize,
    // boundary
    boundary_base: usize,
    left_slot: Vec<u32>,
    right_slot: Vec<u32>,
    left_sites: Vec<usize>,
    right_sites: Vec<usize>,
    left_alpha: Vec<f64>,
    right_beta: Vec<f64>,
    boundary_speed: f64,
    tree: SumTree,
}

impl<'d, 'm> Simulator<'d, 'm> {
    pub fn new(dynamics: &'d Dynamics<'m>, config: Configuration) -> Result<Self, DynamicsError> {
        let geom = *dynamics.geom();
        if config.geom() != &geom || config.velocities() != dynamics.model().len() {
            return Err(DynamicsError::Lattice(crate::lattice::LatticeError::Shape {
                expected: geom.sites(),
                found: config.geom().sites(),
            }));
        }
        let model = dynamics.model();
        let nv = model.len();
        let sites = geom.sites();
        let speed = dynamics.speed();
        let d = geom.dim();

        let mut move_offset = Vec::with_capacity(nv + 1);
        let mut move_rate = Vec::new();
        let mut move_disp = Vec::new();
        for v in 0..nv {
            move_offset.push(move_rate.len());
            for (z, w) in dynamics.kernel(v) {
                move_rate.push(speed * w);
                move_disp.push(z);
            }
        }
        move_offset.push(move_rate.len());
        let moves_total = move_rate.len();

        let mut targets = vec![NONE; sites * moves_total];
        let mut sources = vec![NONE; sites * moves_total];
        for x in 0..sites {
            for (m, z) in move_disp.iter().enumerate() {
                if let Some(y) = geom.shift(x, &z[..d]) {
                    targets[x * moves_total + m] = y as u32;
                }
                let neg = [-z[0], -z[1], -z[2]];
                if let Some(y) = geom.shift(x, &neg[..d]) {
                    sources[x * moves_total + m] = y as u32;
                }
            }
        }

        let rules = model.collisions();
        let mut rules_by_velocity = vec![Vec::new(); nv];
        for (i, q) in rules.iter().enumerate() {
            for v in [q.v, q.w, q.v_out, q.w_out] {
                if !rules_by_velocity[v].contains(&i) {
                    rules_by_velocity[v].push(i);
                }
            }
        }
        let collision_base = sites * moves_total;
        let boundary_base = collision_base + sites * rules.len();

        let left_sites = geom.boundary_sites(true);
        let right_sites = geom.boundary_sites(false);
        let mut left_slot = vec![NONE; sites];
        let mut right_slot = vec![NONE; sites];
        let mut left_alpha = Vec::with_capacity(left_sites.len() * nv);
        let mut right_beta = Vec::with_capacity(right_sites.len() * nv);
        for (b, &s) in left_sites.iter().enumerate() {
            left_slot[s] = b as u32;
            for v in 0..nv {
                left_alpha.push(dynamics.reservoir_density(true, s, v));
            }
        }
        for (b, &s) in right_sites.iter().enumerate() {
            right_slot[s] = b as u32;
            for v in 0..nv {
                right_beta.push(dynamics.reservoir_density(false, s, v));
            }
        }
        let leaves = boundary_base + (left_sites.len() + right_sites.len()) * nv;

        let mut sim = Self {
            dynamics,
            config,
            time: 0.0,
            events: 0,
            counters: BoundaryCounters::default(),
            nv,
            move_offset,
            move_rate,
            moves_total,
            targets,
            sources,
            rules_by_velocity,
            collision_base,
            boundary_base,
            left_slot,
            right_slot,
            left_sites,
            right_sites,
            left_alpha,
            right_beta,
            boundary_speed: dynamics.boundary_speed(),
            tree: SumTree::new(leaves),
        };
        let rates = sim.all_rates();
        sim.tree.rebuild(&rates);
        Ok(sim)
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn into_config(self) -> Configuration {
        self.config
    }

    /// Macroscopic time elapsed.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn counters(&self) -> BoundaryCounters {
        self.counters
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    pub fn clocks(&self) -> usize {
        self.tree.len()
    }

    /// Every clock rate recomputed from the current configuration.
    pub fn all_rates(&self) -> Vec<f64> {
        let sites = self.config.geom().sites();
        let mut out = Vec::with_capacity(self.tree.len());
        for x in 0..sites {
            for v in 0..self.nv {
                for m in self.move_offset[v]..self.move_offset[v + 1] {
                    out.push(self.exclusion_rate(x, v, m));
                }
            }
        }
        let nr = self.dynamics.model().collisions().len();
        for x in 0..sites {
            for r in 0..nr {
                out.push(self.collision_rate(x, r));
            }
        }
        for b in 0..self.left_sites.len() {
            for v in 0..self.nv {
                out.push(self.boundary_rate(true, b, v));
            }
        }
        for b in 0..self.right_sites.len() {
            for v in 0..self.nv {
                out.push(self.boundary_rate(false, b, v));
            }
        }
        out
    }

    /// Largest relative gap between the maintained rates and a rebuild.
    pub fn rate_drift(&self) -> f64 {
        let fresh = self.all_rates();
        let mut fresh_tree = SumTree::new(fresh.len());
        fresh_tree.rebuild(&fresh);
        let mut worst: f64 = 0.0;
        for (a, b) in self.tree.leaves().iter().zip(&fresh) {
            let scale = a.abs().max(b.abs()).max(1e-300);
            if a != b {
                worst = worst.max((a - b).abs() / scale);
            }
        }
        let (ta, tb) = (self.tree.total(), fresh_tree.total());
        if ta != tb {
            worst = worst.max((ta - tb).abs() / ta.abs().max(tb.abs()));
        }
        worst
    }

    #[inline]
    fn exclusion_rate(&self, x: usize, v: usize, m: usize) -> f64 {
        let y = self.targets[x * self.moves_total + m];
        if y == NONE || !self.config.get(x, v) || self.config.get(y as usize, v) {
            0.0
        } else {
            self.move_rate[m]
        }
    }

    #[inline]
    fn collision_rate(&self, x: usize, r: usize) -> f64 {
        if self.dynamics.model().collisions()[r].fires(self.config.site(x)) {
            self.dynamics.speed()
        } else {
            0.0
        }
    }

    #[inline]
    fn boundary_rate(&self, left: bool, b: usize, v: usize) -> f64 {
        let (site, density) = if left {
            (self.left_sites[b], self.left_alpha[b * self.nv + v])
        } else {
            (self.right_sites[b], self.right_beta[b * self.nv + v])
        };
        let r = if self.config.get(site, v) {
            1.0 - density
        } else {
            density
        };
        self.boundary_speed * r
    }

    fn refresh_slot(&mut self, x: usize, v: usize) {
        for m in self.move_offset[v]..self.move_offset[v + 1] {
            let rate = self.exclusion_rate(x, v, m);
            self.tree.set(x * self.moves_total + m, rate);
            let y = self.sources[x * self.moves_total + m];
            if y != NONE {
                let y = y as usize;
                let rate = self.exclusion_rate(y, v, m);
                self.tree.set(y * self.moves_total + m, rate);
            }
        }
        let nr = self.dynamics.model().collisions().len();
        for i in 0..self.rules_by_velocity[v].len() {
            let r = self.rules_by_velocity[v][i];
            let rate = self.collision_rate(x, r);
            self.tree.set(self.collision_base + x * nr + r, rate);
        }
        let b = self.left_slot[x];
        if b != NONE {
            let rate = self.boundary_rate(true, b as usize, v);
            self.tree.set(self.boundary_base + b as usize * self.nv + v, rate);
        }
        let b = self.right_slot[x];
        if b != NONE {
            let rate = self.boundary_rate(false, b as usize, v);
            let off = self.boundary_base + (self.left_sites.len() + b as usize) * self.nv + v;
            self.tree.set(off, rate);
        }
    }

    fn decode(&self, leaf: usize) -> Event {
        if leaf < self.collision_base {
            let x = leaf / self.moves_total;
            let m = leaf % self.moves_total;
            let v = self.move_offset.partition_point(|&o| o <= m) - 1;
            let to = self.targets[leaf] as usize;
            Event::Jump {
                from: x,
                to,
                velocity: v,
            }
        } else if leaf < self.boundary_base {
            let nr = self.dynamics.model().collisions().len();
            let k = leaf - self.collision_base;
            Event::Collision {
                site: k / nr,
                rule: k % nr,
            }
        } else {
            let k = leaf - self.boundary_base;
            let slot = k / self.nv;
            let v = k % self.nv;
            let (site, side) = if slot < self.left_sites.len() {
                (self.left_sites[slot], Side::Left)
            } else {
                (self.right_sites[slot - self.left_sites.len()], Side::Right)
            };
            Event::Boundary {
                site,
                velocity: v,
                side,
                inserted: !self.config.get(site, v),
            }
        }
    }

    /// Applies an event to the configuration and refreshes affected clocks.
    pub fn apply(&mut self, event: Event) {
        match event {
            Event::Jump { from, to, velocity } => {
                self.config.flip(from, velocity);
                self.config.flip(to, velocity);
                self.refresh_slot(from, velocity);
                self.refresh_slot(to, velocity);
            }
            Event::Collision { site, rule } => {
                let q = self.dynamics.model().collisions()[rule];
                let w = self.config.site(site);
                self.config.set_site(site, q.apply(w));
                for v in [q.v, q.w, q.v_out, q.w_out] {
                    self.refresh_slot(site, v);
                }
            }
            Event::Boundary {
                site,
                velocity,
                side,
                inserted,
            } => {
                self.config.flip(site, velocity);
                match (side, inserted) {
                    (Side::Left, true) => self.counters.left_in += 1,
                    (Side::Left, false) => self.counters.left_out += 1,
                    (Side::Right, true) => self.counters.right_in += 1,
                    (Side::Right, false) => self.counters.right_out += 1,
                }
                self.refresh_slot(site, velocity);
            }
        }
        self.events += 1;
    }

    fn pick<R: RngCore + ?Sized>(&self, rng: &mut R) -> Option<(Event, f64)> {
        let total = self.tree.total();
        if total <= 0.0 {
            return None;
        }
        let dt = rng::exponential(rng, total);
        let leaf = self.tree.find(rng::uniform(rng) * total);
        Some((self.decode(leaf), dt))
    }

    /// Draws the holding time and the next event, then applies it.
    pub fn step<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        match self.pick(rng) {
            None => StepOutcome::Absorbed,
            Some((event, dt)) => {
                self.apply(event);
                self.time += dt;
                StepOutcome::Fired { event, dt }
            }
        }
    }

    /// Runs to macroscopic time `until`. `hold(config, duration)` is called
    /// for every interval the configuration stays unchanged, before the
    /// event that ends it is applied, and for the final partial interval.
    pub fn run_until<R, F>(&mut self, until: f64, rng: &mut R, mut hold: F)
    where
        R: RngCore + ?Sized,
        F: FnMut(&Configuration, f64),
    {
        while self.time < until {
            match self.pick(rng) {
                None => {
                    hold(&self.config, until - self.time);
                    self.time = until;
                }
                Some((event, dt)) => {
                    if self.time + dt >= until {
                        hold(&self.config, until - self.time);
                        self.time = until;
                    } else {
                        hold(&self.config, dt);
                        self.apply(event);
                        self.time += dt;
                    }
                }
            }
        }
    }
}

/// Runs one trajectory and records the empirical profile at each snapshot
/// time (macroscopic units, sorted, non-negative).
pub fn simulate<R: RngCore + ?Sized>(
    dynamics: &Dynamics<'_>,
    initial: Configuration,
    snapshots: &[f64],
    rng: &mut R,
) -> Result<Vec<(f64, EmpiricalProfile)>, DynamicsError> {
    if snapshots.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || snapshots.windows(2).any(|w| w[0] > w[1]) {
        return Err(DynamicsError::Snapshots);
    }
    let mut sim = Simulator::new(dynamics, initial)?;
    let model = dynamics.model();
    let mut out = Vec::with_capacity(snapshots.len());
    for &t in snapshots {
        sim.run_until(t, rng, |_, _| {});
        out.push((t, empirical_profile(sim.config(), model)));
    }
    Ok(out)
}
