//! Exact generator matrices for tiny systems.
//!
//! A state is a bitmask with bit `site · |𝒱| + v` set when `η(site, v) = 1`.
//! Rows are stored sparsely; the diagonal is `−Σ` of the off-diagonal
//! entries of the row, summed in storage order, so every row sum is zero.

use alloc::vec;
use alloc::vec::Vec;

use super::{Dynamics, DynamicsError};
use crate::lattice::{Configuration, ProductMeasure};

/// Largest number of occupancy bits accepted.
pub const MAX_BITS: usize = 20;
/// Largest state count accepted by [`Generator::to_dense`].
pub const MAX_DENSE: usize = 4096;

/// Which parts of the generator to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Parts {
    pub exclusion: bool,
    pub collision: bool,
    pub boundary: bool,
}

impl Parts {
    pub const ALL: Parts = Parts {
        exclusion: true,
        collision: true,
        boundary: true,
    };
    pub const COLLISION: Parts = Parts {
        exclusion: false,
        collision: true,
        boundary: false,
    };
}

/// Multiplies every exclusion rate out of `site` by `factor`.
///
/// A deliberately corrupted generator used as a negative control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mutation {
    pub site: usize,
    pub factor: f64,
}

#[derive(Debug, Clone)]
pub struct Generator {
    bits: usize,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    rates: Vec<f64>,
    diag: Vec<f64>,
}

/// Builds the rate matrix of `N²{𝓛^b + 𝓛^c + 𝓛^{ex}}` restricted to
/// `parts`. On a torus geometry the boundary part is absent.
pub fn build(dynamics: &Dynamics<'_>, parts: Parts, mutation: Option<Mutation>) -> Result<Generator, DynamicsError> {
    let geom = dynamics.geom();
    let model = dynamics.model();
    let nv = model.len();
    let sites = geom.sites();
    let bits = sites * nv;
    if bits > MAX_BITS {
        return Err(DynamicsError::StateSpaceTooLarge { bits });
    }
    let d = geom.dim();
    let n2 = dynamics.speed();
    let inv_n = 1.0 / geom.n() as f64;
    let bit = |x: usize, v: usize| x * nv + v;

    // exclusion channels (from, to, v, rate) listed straight from P_N:
    // the symmetric nearest neighbours and the drift law separately
    let mut channels: Vec<(usize, usize, usize, f64)> = Vec::new();
    if parts.exclusion {
        let mut unit = [0i64; 3];
        for x in 0..sites {
            let scale = match mutation {
                Some(m) if m.site == x => m.factor,
                _ => 1.0,
            };
            for v in 0..nv {
                for axis in 0..d {
                    for s in [1i64, -1] {
                        unit[axis] = s;
                        if let Some(y) = geom.shift(x, &unit[..d]) {
                            if y != x {
                                channels.push((x, y, v, scale * n2 * 0.5));
                            }
                        }
                        unit[axis] = 0;
                    }
                }
                for j in dynamics.jumps().jumps(v) {
                    if j.probability == 0.0 {
                        continue;
                    }
                    if let Some(y) = geom.shift(x, &j.displacement[..d]) {
                        if y != x {
                            channels.push((x, y, v, scale * n2 * j.probability * inv_n));
                        }
                    }
                }
            }
        }
    }
    let boundary: Vec<(usize, usize, f64)> = if parts.boundary && !geom.is_torus() {
        let mut b = Vec::new();
        for left in [true, false] {
            for x in geom.boundary_sites(left) {
                for v in 0..nv {
                    b.push((x, v, dynamics.reservoir_density(left, x, v)));
                }
            }
        }
        b
    } else {
        Vec::new()
    };
    let bspeed = dynamics.boundary_speed();
    let site_mask = model.full_mask();

    let states = 1usize << bits;
    let mut row_start = Vec::with_capacity(states + 1);
    let mut cols = Vec::new();
    let mut rates = Vec::new();
    let mut diag = Vec::with_capacity(states);
    for s in 0..states {
        row_start.push(cols.len());
        let first = cols.len();
        for &(x, y, v, r) in &channels {
            if s >> bit(x, v) & 1 == 1 && s >> bit(y, v) & 1 == 0 {
                cols.push((s ^ (1 << bit(x, v)) ^ (1 << bit(y, v))) as u32);
                rates.push(r);
            }
        }
        if parts.collision {
            for x in 0..sites {
                let word = ((s >> (x * nv)) as u64) & site_mask;
                for q in model.collisions() {
                    if q.fires(word) {
                        let new = q.apply(word);
                        let t = (s & !((site_mask as usize) << (x * nv))) | ((new as usize) << (x * nv));
                        cols.push(t as u32);
                        rates.push(n2);
                    }
                }
            }
        }
        for &(x, v, a) in &boundary {
            let occupied = s >> bit(x, v) & 1 == 1;
            let r = bspeed * if occupied { 1.0 - a } else { a };
            if r > 0.0 {
                cols.push((s ^ (1 << bit(x, v))) as u32);
                rates.push(r);
            }
        }
        let mut out = 0.0;
        for r in &rates[first..] {
            out += r;
        }
        diag.push(-out);
    }
    row_start.push(cols.len());
    Ok(Generator {
        bits,
        row_start,
        cols,
        rates,
        diag,
    })
}

impl Generator {
    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn states(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal entries of row `s` as `(column, rate)`; columns may repeat.
    pub fn row(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[s]..self.row_start[s + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.rates[r])
            .map(|(&c, &w)| (c as usize, w))
    }

    /// Largest `|Σ_j L_{ij}|` over rows, off-diagonals summed in storage order.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.states())
            .map(|s| {
                let mut acc = 0.0;
                for (_, w) in self.row(s) {
                    acc += w;
                }
                libm::fabs(acc + self.diag[s])
            })
            .fold(0.0, f64::max)
    }

    /// `(L f)(η) = Σ_ξ L(η, ξ) f(ξ)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.states())
            .map(|s| {
                let mut acc = self.diag[s] * f[s];
                for (c, w) in self.row(s) {
                    acc += w * f[c];
                }
                acc
            })
            .collect()
    }

    /// `(μᵀ L)(ξ) = Σ_η μ(η) L(η, ξ)`.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = mu.iter().zip(&self.diag).map(|(m, d)| m * d).collect();
        for s in 0..self.states() {
            let m = mu[s];
            if m == 0.0 {
                continue;
            }
            for (c, w) in self.row(s) {
                out[c] += m * w;
            }
        }
        out
    }

    /// Row-major dense copy; only for at most [`MAX_DENSE`] states.
    pub fn to_dense(&self) -> Result<Vec<f64>, DynamicsError> {
        let n = self.states();
        if n > MAX_DENSE {
            return Err(DynamicsError::StateSpaceTooLarge { bits: self.bits });
        }
        let mut a = vec![0.0; n * n];
        for s in 0..n {
            a[s * n + s] = self.diag[s];
            for (c, w) in self.row(s) {
                a[s * n + c] += w;
            }
        }
        Ok(a)
    }

    /// `μ e^{tL}` by a truncated Taylor series on `[0, t]` split into steps
    /// short enough that `‖τ L‖₁ ≤ 1`; each series stops once a term's
    /// `ℓ¹` norm drops below `1e-12 · ‖μ‖₁ / steps`.
    pub fn evolve(&self, mu: &[f64], t: f64) -> Vec<f64> {
        let q = self.diag.iter().fold(0.0f64, |a, d| a.max(-d));
        let steps = libm::ceil(2.0 * q * t).max(1.0) as usize;
        let tau = t / steps as f64;
        let norm0: f64 = mu.iter().map(|x| x.abs()).sum();
        let tol = 1e-12 * norm0.max(f64::MIN_POSITIVE) / steps as f64;
        let mut cur = mu.to_vec();
        for _ in 0..steps {
            let mut term = cur.clone();
            let mut acc = cur.clone();
            for k in 1..200 {
                term = self.left_apply(&term);
                let f = tau / k as f64;
                term.iter_mut().for_each(|x| *x *= f);
                acc.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
                if term.iter().map(|x| x.abs()).sum::<f64>() < tol {
                    break;
                }
            }
            cur = acc;
        }
        cur
    }
}

/// State index of a configuration.
pub fn encode(config: &Configuration) -> usize {
    let nv = config.velocities();
    config
        .words()
        .iter()
        .enumerate()
        .fold(0usize, |acc, (x, &w)| acc | ((w as usize) << (x * nv)))
}

/// Configuration of a state index.
pub fn decode(state: usize, template: &Configuration) -> Configuration {
    let nv = template.velocities();
    let mask = (1usize << nv) - 1;
    let words = (0..template.geom().sites())
        .map(|x| ((state >> (x * nv)) & mask) as u64)
        .collect();
    Configuration::from_words(*template.geom(), nv, words).expect("state fits the template")
}

/// The product measure as a probability vector over states.
pub fn measure_vector(measure: &ProductMeasure, template: &Configuration) -> Result<Vec<f64>, DynamicsError> {
    let bits = template.geom().sites() * template.velocities();
    if bits > MAX_BITS {
        return Err(DynamicsError::StateSpaceTooLarge { bits });
    }
    let nv = template.velocities();
    let sites = template.geom().sites();
    let mask = (1usize << nv) - 1;
    let site_tables: Vec<Vec<f64>> = (0..sites)
        .map(|x| (0..=mask).map(|w| measure.site_probability(x, w as u64)).collect())
        .collect();
    Ok((0..1usize << bits)
        .map(|s| {
            let mut p = 1.0;
            for (x, table) in site_tables.iter().enumerate() {
                p *= table[(s >> (x * nv)) & mask];
            }
            p
        })
        .collect())
}

/// Values of `η ↦ Σ_x G(x) I_k(η_x)` for every state.
pub fn observable(dynamics: &Dynamics<'_>, g: &[f64], k: usize) -> Vec<f64> {
    let model = dynamics.model();
    let nv = model.len();
    let sites = dynamics.geom().sites();
    let mask = (1usize << nv) - 1;
    let per_word: Vec<f64> = (0..=mask).map(|w| model.site_observable(w as u64).0[k]).collect();
    (0..1usize << (sites * nv))
        .map(|s| (0..sites).map(|x| g[x] * per_word[(s >> (x * nv)) & mask]).sum())
        .collect()
}

/// `⟨L√f, √f⟩_ν` evaluated two ways: directly as `Σ ν √f · L√f`, and as
/// `−½ D(f)` with `D(f) = Σ_η ν(η) Σ_ξ L(η,ξ)(√f(ξ) − √f(η))²`.
///
/// The two agree whenever `ν` is reversible for `L`.
pub fn dirichlet_pair(generator: &Generator, nu: &[f64], f: &[f64]) -> (f64, f64) {
    let root: Vec<f64> = f.iter().map(|x| libm::sqrt(*x)).collect();
    let lr = generator.apply(&root);
    let direct: f64 = nu.iter().zip(&root).zip(&lr).map(|((n, r), l)| n * r * l).sum();
    let mut form = 0.0;
    for s in 0..generator.states() {
        let mut row = 0.0;
        for (c, w) in generator.row(s) {
            let diff = root[c] - root[s];
            row += w * diff * diff;
        }
        form += nu[s] * row;
    }
    (direct, -0.5 * form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::default_jump_law;
    use crate::lattice::LatticeGeom;
    use crate::model::VelocityModel;
    use crate::rng::{stream, uniform};
    use crate::thermo::{ChemicalPotential, ReservoirProfile, Reservoirs};

    #[test]
    fn rows_sum_to_zero_and_off_diagonals_non_negative() {
        let m = VelocityModel::model_one(1).unwrap();
        let g = LatticeGeom::slab(1, 4).unwrap();
        let r = Reservoirs {
            alpha: ReservoirProfile::constant(&m, &[0.7, 0.2]).unwrap(),
            beta: ReservoirProfile::uniform(&m, 0.4).unwrap(),
        };
        let dynamics = Dynamics::new(&m, g, 0.5, default_jump_law(&m).unwrap(), Some(r)).unwrap();
        let l = build(&dynamics, Parts::ALL, None).unwrap();
        assert_eq!(l.states(), 64);
        assert_eq!(l.max_row_sum(), 0.0);
        assert!(l.rates.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn torus_product_measure_is_stationary() {
        let m = VelocityModel::model_one(1).unwrap();
        let g = LatticeGeom::torus(1, 3).unwrap();
        let dynamics = Dynamics::new(&m, g, 0.0, default_jump_law(&m).unwrap(), None).unwrap();
        let l = build(&dynamics, Parts::ALL, None).unwrap();
        let template = Configuration::empty(g, &m);
        let mu = measure_vector(
            &ProductMeasure::homogeneous(g, &m, &ChemicalPotential(vec![0.3, -0.8])),
            &template,
        )
        .unwrap();
        let res = l.left_apply(&mu);
        assert!(res.iter().all(|x| x.abs() < 1e-12));
        let bad = build(&dynamics, Parts::ALL, Some(Mutation { site: 0, factor: 1.5 })).unwrap();
        assert!(bad.left_apply(&mu).iter().any(|x| x.abs() > 1e-6));
    }

    #[test]
    fn evolve_matches_dense_two_state_chain() {
        // one site, one velocity pair on a slab with N = 2: only reservoir flips
        let m = VelocityModel::model_one(1).unwrap();
        let g = LatticeGeom::slab(1, 2).unwrap();
        let r = Reservoirs {
            alpha: ReservoirProfile::uniform(&m, 0.3).unwrap(),
            beta: ReservoirProfile::uniform(&m, 0.3).unwrap(),
        };
        let dynamics = Dynamics::new(&m, g, 0.0, default_jump_law(&m).unwrap(), Some(r)).unwrap();
        let l = build(&dynamics, Parts::ALL, None).unwrap();
        // each bit flips independently: on at rate 2·4·0.3, off at 2·4·0.7
        let t = 0.1;
        let lam = 8.0;
        let p_on = 0.3 * (1.0 - libm::exp(-lam * t));
        let law = l.evolve(&[1.0, 0.0, 0.0, 0.0], t);
        let expect = [
            (1.0 - p_on) * (1.0 - p_on),
            p_on * (1.0 - p_on),
            p_on * (1.0 - p_on),
            p_on * p_on,
        ];
        for (a, b) in law.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let m = VelocityModel::model_one(2).unwrap();
        let g = LatticeGeom::slab(2, 2).unwrap();
        let template = Configuration::empty(g, &m);
        for s in [0usize, 1, 77, 255] {
            assert_eq!(encode(&decode(s, &template)), s);
        }
    }

    #[test]
    fn collision_dirichlet_identity() {
        let m = VelocityModel::model_one(2).unwrap();
        let g = LatticeGeom::slab(2, 2).unwrap();
        let r = Reservoirs {
            alpha: ReservoirProfile::uniform(&m, 0.5).unwrap(),
            beta: ReservoirProfile::uniform(&m, 0.5).unwrap(),
        };
        let dynamics = Dynamics::new(&m, g, 0.0, default_jump_law(&m).unwrap(), Some(r)).unwrap();
        let l = build(&dynamics, Parts::COLLISION, None).unwrap();
        let template = Configuration::empty(g, &m);
        let nu = measure_vector(
            &ProductMeasure::homogeneous(g, &m, &ChemicalPotential(vec![0.1, 0.4, -0.3])),
            &template,
        )
        .unwrap();
        let mut rng = stream(4, 0);
        let f: Vec<f64> = (0..l.states()).map(|_| uniform(&mut rng) + 0.1).collect();
        let (a, b) = dirichlet_pair(&l, &nu, &f);
        assert!(a < 0.0);
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn too_large_rejected() {
        let m = VelocityModel::model_one(3).unwrap();
        let g = LatticeGeom::slab(3, 2).unwrap();
        let r = Reservoirs {
            alpha: ReservoirProfile::uniform(&m, 0.5).unwrap(),
            beta: ReservoirProfile::uniform(&m, 0.5).unwrap(),
        };
        let dynamics = Dynamics::new(&m, g, 0.0, default_jump_law(&m).unwrap(), Some(r)).unwrap();
        assert!(matches!(
            build(&dynamics, Parts::ALL, None),
            Err(DynamicsError::StateSpaceTooLarge { bits: 24 })
        ));
    }
}
