//! Slab geometry, occupancy storage, product-measure sampling and empirical
//! profiles.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::model::VelocityModel;
use crate::rng;
use crate::thermo::{self, HydroVector};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatticeError {
    #[error("lattice dimension must be 1..=3, got {0}")]
    Dimension(usize),
    #[error("scaling parameter N must be at least 2, got {0}")]
    TooSmall(usize),
    #[error("profile value {state:?} at site {site} (u = {position:?}) is outside the admissible region")]
    NotInU {
        site: usize,
        position: Vec<f64>,
        state: Vec<f64>,
    },
    #[error("expected {expected} values, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("smoothing half-width must lie in (0, 1/2), got {0}")]
    Width(f64),
    #[error("model dimension {model} does not match lattice dimension {lattice}")]
    ModelDimension { model: usize, lattice: usize },
    #[error("cannot average an empty list of profiles")]
    NoProfiles,
}

/// `D^d_N = {1, …, N−1} × 𝕋^{d−1}_N`, or the full torus `𝕋^d_N`.
///
/// Sites are numbered with coordinate 1 varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeGeom {
    dim: usize,
    n: usize,
    torus: bool,
}

impl LatticeGeom {
    /// The slab with open coordinate 1 and periodic coordinates `2..d`.
    pub fn slab(dim: usize, n: usize) -> Result<Self, LatticeError> {
        Self::build(dim, n, false)
    }

    /// The fully periodic torus `𝕋^d_N` (no reservoirs).
    pub fn torus(dim: usize, n: usize) -> Result<Self, LatticeError> {
        Self::build(dim, n, true)
    }

    fn build(dim: usize, n: usize, torus: bool) -> Result<Self, LatticeError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(LatticeError::Dimension(dim));
        }
        if n < 2 {
            return Err(LatticeError::TooSmall(n));
        }
        Ok(Self { dim, n, torus })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Scaling parameter `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_torus(&self) -> bool {
        self.torus
    }

    /// Number of sites along coordinate 1.
    pub fn first_extent(&self) -> usize {
        if self.torus {
            self.n
        } else {
            self.n - 1
        }
    }

    fn first_offset(&self) -> i64 {
        if self.torus {
            0
        } else {
            1
        }
    }

    pub fn sites(&self) -> usize {
        self.first_extent() * self.n.pow(self.dim as u32 - 1)
    }

    /// Integer coordinates of a site; unused trailing entries are zero.
    pub fn coords(&self, site: usize) -> [i64; MAX_DIM] {
        let mut out = [0i64; MAX_DIM];
        let e1 = self.first_extent();
        out[0] = (site % e1) as i64 + self.first_offset();
        let mut rest = site / e1;
        for c in out.iter_mut().take(self.dim).skip(1) {
            *c = (rest % self.n) as i64;
            rest /= self.n;
        }
        out
    }

    /// Site index from coordinates already inside the lattice.
    pub fn index(&self, coords: &[i64]) -> Option<usize> {
        let e1 = self.first_extent() as i64;
        let x1 = coords[0] - self.first_offset();
        if x1 < 0 || x1 >= e1 {
            return None;
        }
        let mut idx = x1 as usize;
        let mut stride = e1 as usize;
        for &c in coords.iter().take(self.dim).skip(1) {
            if c < 0 || c >= self.n as i64 {
                return None;
            }
            idx += c as usize * stride;
            stride *= self.n;
        }
        Some(idx)
    }

    /// The site at `site + displacement`, wrapping periodic coordinates.
    /// `None` when coordinate 1 leaves the slab.
    pub fn shift(&self, site: usize, displacement: &[i64]) -> Option<usize> {
        let mut c = self.coords(site);
        let n = self.n as i64;
        for (k, d) in displacement.iter().enumerate().take(self.dim) {
            c[k] += d;
            if k > 0 || self.torus {
                c[k] = c[k].rem_euclid(n);
            }
        }
        self.index(&c[..self.dim])
    }

    /// Macroscopic position `x/N`.
    pub fn position(&self, site: usize) -> [f64; MAX_DIM] {
        let c = self.coords(site);
        let inv = 1.0 / self.n as f64;
        let mut out = [0.0; MAX_DIM];
        for k in 0..self.dim {
            out[k] = c[k] as f64 * inv;
        }
        out
    }

    /// Transverse position `x̃/N` (empty slice content for `d = 1`).
    pub fn transverse(&self, site: usize) -> ([f64; MAX_DIM - 1], usize) {
        let p = self.position(site);
        let mut out = [0.0; MAX_DIM - 1];
        out[..self.dim - 1].copy_from_slice(&p[1..self.dim]);
        (out, self.dim - 1)
    }

    /// Sites with `x_1 = 1` (left) or `x_1 = N − 1` (right). Empty on the torus.
    pub fn boundary_sites(&self, left: bool) -> Vec<usize> {
        if self.torus {
            return Vec::new();
        }
        let x1 = if left { 1 } else { self.n as i64 - 1 };
        (0..self.sites()).filter(|&s| self.coords(s)[0] == x1).collect()
    }

    /// Evaluates `g(x/N)` at every site.
    pub fn sample<F: FnMut(&[f64]) -> f64>(&self, mut g: F) -> Vec<f64> {
        (0..self.sites()).map(|s| g(&self.position(s)[..self.dim])).collect()
    }

    /// `N^{-d}`.
    pub fn volume_element(&self) -> f64 {
        libm::pow(self.n as f64, -(self.dim as f64))
    }
}

/// Occupancies `η(x, v) ∈ {0, 1}`: one `u64` word per site, bit `v` for
/// velocity index `v`, sites in [`LatticeGeom`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    geom: LatticeGeom,
    velocities: usize,
    bits: Vec<u64>,
}

impl Configuration {
    pub fn empty(geom: LatticeGeom, model: &VelocityModel) -> Self {
        Self {
            geom,
            velocities: model.len(),
            bits: vec![0; geom.sites()],
        }
    }

    pub fn full(geom: LatticeGeom, model: &VelocityModel) -> Self {
        Self {
            geom,
            velocities: model.len(),
            bits: vec![model.full_mask(); geom.sites()],
        }
    }

    /// Wraps raw site words; extra bits above `velocities` must be clear.
    pub fn from_words(geom: LatticeGeom, velocities: usize, bits: Vec<u64>) -> Result<Self, LatticeError> {
        if bits.len() != geom.sites() {
            return Err(LatticeError::Shape {
                expected: geom.sites(),
                found: bits.len(),
            });
        }
        let mask = if velocities >= 64 {
            u64::MAX
        } else {
            (1u64 << velocities) - 1
        };
        if bits.iter().any(|b| b & !mask != 0) {
            return Err(LatticeError::Shape {
                expected: velocities,
                found: 64,
            });
        }
        Ok(Self { geom, velocities, bits })
    }

    pub fn geom(&self) -> &LatticeGeom {
        &self.geom
    }

    pub fn velocities(&self) -> usize {
        self.velocities
    }

    #[inline]
    pub fn get(&self, site: usize, v: usize) -> bool {
        self.bits[site] >> v & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, site: usize, v: usize, occupied: bool) {
        if occupied {
            self.bits[site] |= 1 << v;
        } else {
            self.bits[site] &= !(1 << v);
        }
    }

    #[inline]
    pub fn flip(&mut self, site: usize, v: usize) {
        self.bits[site] ^= 1 << v;
    }

    #[inline]
    pub fn site(&self, site: usize) -> u64 {
        self.bits[site]
    }

    #[inline]
    pub fn set_site(&mut self, site: usize, word: u64) {
        self.bits[site] = word;
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    /// Number of occupied `(site, velocity)` slots.
    pub fn particles(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// `Σ_x 𝐈(η_x)`.
    pub fn totals(&self, model: &VelocityModel) -> Vec<f64> {
        let mut acc = vec![0.0; model.components()];
        for &w in &self.bits {
            model.accumulate_site(w, 1.0, &mut acc);
        }
        acc
    }

    /// Relabels velocities: new bit `v` is old bit `perm[v]`.
    pub fn permute_velocities(&self, perm: &[usize]) -> Self {
        let bits = self
            .bits
            .iter()
            .map(|&w| {
                perm.iter()
                    .enumerate()
                    .fold(0u64, |acc, (v, &src)| acc | ((w >> src & 1) << v))
            })
            .collect();
        Self {
            geom: self.geom,
            velocities: self.velocities,
            bits,
        }
    }
}

/// Per-site occupation probabilities `θ_v(Λ(h(x/N)))` of a product measure.
///
/// Computing the Newton inverse once per site and reusing it for every
/// replica is the reason this is a separate type.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasure {
    geom: LatticeGeom,
    velocities: usize,
    probs: Vec<f64>,
}

impl ProductMeasure {
    /// Local equilibrium associated to a profile `u ↦ (ρ, ϱ)(u)`.
    pub fn from_profile<F>(geom: LatticeGeom, model: &VelocityModel, mut profile: F) -> Result<Self, LatticeError>
    where
        F: FnMut(&[f64]) -> HydroVector,
    {
        if model.dim() != geom.dim() {
            return Err(LatticeError::ModelDimension {
                model: model.dim(),
                lattice: geom.dim(),
            });
        }
        let nv = model.len();
        let mut probs = Vec::with_capacity(geom.sites() * nv);
        for site in 0..geom.sites() {
            let pos = geom.position(site);
            let u = &pos[..geom.dim()];
            let state = profile(u);
            let lambda = thermo::inverse_map(&state, model).map_err(|_| LatticeError::NotInU {
                site,
                position: u.to_vec(),
                state: state.0.clone(),
            })?;
            probs.extend(thermo::thetas(&lambda, model));
        }
        Ok(Self {
            geom,
            velocities: nv,
            probs,
        })
    }

    /// Every site distributed as `m_λ` for one fixed `λ`.
    pub fn homogeneous(geom: LatticeGeom, model: &VelocityModel, lambda: &thermo::ChemicalPotential) -> Self {
        let th = thermo::thetas(lambda, model);
        let mut probs = Vec::with_capacity(geom.sites() * th.len());
        for _ in 0..geom.sites() {
            probs.extend_from_slice(&th);
        }
        Self {
            geom,
            velocities: model.len(),
            probs,
        }
    }

    pub fn geom(&self) -> &LatticeGeom {
        &self.geom
    }

    /// `θ_v` at one site.
    pub fn prob(&self, site: usize, v: usize) -> f64 {
        self.probs[site * self.velocities + v]
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mut bits = vec![0u64; self.geom.sites()];
        for (site, word) in bits.iter_mut().enumerate() {
            for v in 0..self.velocities {
                if rng::bernoulli(rng, self.probs[site * self.velocities + v]) {
                    *word |= 1 << v;
                }
            }
        }
        Configuration {
            geom: self.geom,
            velocities: self.velocities,
            bits,
        }
    }

    /// Probability of a full configuration (tiny systems only).
    pub fn probability(&self, config: &Configuration) -> f64 {
        let mut p = 1.0;
        for site in 0..self.geom.sites() {
            let w = config.site(site);
            for v in 0..self.velocities {
                let th = self.prob(site, v);
                p *= if w >> v & 1 == 1 { th } else { 1.0 - th };
            }
        }
        p
    }

    /// Probability of one site word under the site marginal.
    pub fn site_probability(&self, site: usize, word: u64) -> f64 {
        let mut p = 1.0;
        for v in 0..self.velocities {
            let th = self.prob(site, v);
            p *= if word >> v & 1 == 1 { th } else { 1.0 - th };
        }
        p
    }
}

/// Draws a configuration whose site `x` has law `m_{Λ((ρ₀,ϱ₀)(x/N))}`.
pub fn sample_local_equilibrium<F, R>(
    geom: LatticeGeom,
    model: &VelocityModel,
    profile: F,
    rng: &mut R,
) -> Result<Configuration, LatticeError>
where
    F: FnMut(&[f64]) -> HydroVector,
    R: RngCore + ?Sized,
{
    Ok(ProductMeasure::from_profile(geom, model, profile)?.sample(rng))
}

/// Draws from the reference measure `ν^N_h`, site `x` with law
/// `m_{Λ(h(x/N))}`. A constant `h` gives a homogeneous product measure.
pub fn sample_reference<F, R>(
    geom: LatticeGeom,
    model: &VelocityModel,
    h: F,
    rng: &mut R,
) -> Result<Configuration, LatticeError>
where
    F: FnMut(&[f64]) -> HydroVector,
    R: RngCore + ?Sized,
{
    sample_local_equilibrium(geom, model, h, rng)
}

/// `𝐈(η_x)` at every site: the atoms of the empirical measures `π^{k,N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalProfile {
    geom: LatticeGeom,
    components: usize,
    values: Vec<f64>,
}

impl EmpiricalProfile {
    pub fn zeros(geom: LatticeGeom, components: usize) -> Self {
        Self {
            geom,
            components,
            values: vec![0.0; geom.sites() * components],
        }
    }

    pub fn from_values(geom: LatticeGeom, components: usize, values: Vec<f64>) -> Result<Self, LatticeError> {
        if values.len() != geom.sites() * components {
            return Err(LatticeError::Shape {
                expected: geom.sites() * components,
                found: values.len(),
            });
        }
        Ok(Self {
            geom,
            components,
            values,
        })
    }

    pub fn geom(&self) -> &LatticeGeom {
        &self.geom
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Flat site-major storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, site: usize) -> &[f64] {
        &self.values[site * self.components..(site + 1) * self.components]
    }

    /// Component `k` at every site.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.values.chunks_exact(self.components).map(|c| c[k]).collect()
    }

    /// `⟨π^{k,N}, G⟩ = N^{-d} Σ_x G(x/N) I_k(η_x)` for every `k`.
    pub fn pair(&self, g: &[f64]) -> Result<Vec<f64>, LatticeError> {
        if g.len() != self.geom.sites() {
            return Err(LatticeError::Shape {
                expected: self.geom.sites(),
                found: g.len(),
            });
        }
        let mut out = vec![0.0; self.components];
        for (gx, vals) in g.iter().zip(self.values.chunks_exact(self.components)) {
            for (o, v) in out.iter_mut().zip(vals) {
                *o += gx * v;
            }
        }
        let w = self.geom.volume_element();
        out.iter_mut().for_each(|o| *o *= w);
        Ok(out)
    }

    /// Pointwise mean, summed in list order.
    pub fn mean(profiles: &[EmpiricalProfile]) -> Result<Self, LatticeError> {
        let first = profiles.first().ok_or(LatticeError::NoProfiles)?;
        let mut acc = Self::zeros(first.geom, first.components);
        for p in profiles {
            if p.values.len() != acc.values.len() {
                return Err(LatticeError::Shape {
                    expected: acc.values.len(),
                    found: p.values.len(),
                });
            }
            acc.values.iter_mut().zip(&p.values).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / profiles.len() as f64;
        acc.values.iter_mut().for_each(|a| *a *= inv);
        Ok(acc)
    }

    /// Box-kernel smoothing with half-width `ε` (macroscopic units).
    ///
    /// The kernel covers the sites with `|y_i − x_i| ≤ εN` in every
    /// coordinate. Coordinates `2..d` wrap; coordinate 1 is cut at the slab
    /// ends and the average is renormalised by the number of sites kept.
    pub fn smooth(&self, epsilon: f64) -> Result<Self, LatticeError> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(LatticeError::Width(epsilon));
        }
        let half = libm::floor(epsilon * self.geom.n as f64 + 1e-9) as i64;
        let mut cur = self.values.clone();
        for axis in 0..self.geom.dim {
            cur = self.box_pass(&cur, axis, half);
        }
        Ok(Self {
            geom: self.geom,
            components: self.components,
            values: cur,
        })
    }

    fn box_pass(&self, input: &[f64], axis: usize, half: i64) -> Vec<f64> {
        let c = self.components;
        let mut out = vec![0.0; input.len()];
        let mut disp = [0i64; MAX_DIM];
        for site in 0..self.geom.sites() {
            let acc = &mut out[site * c..(site + 1) * c];
            let mut count = 0usize;
            for off in -half..=half {
                disp[axis] = off;
                if let Some(y) = self.geom.shift(site, &disp[..self.geom.dim]) {
                    for (a, v) in acc.iter_mut().zip(&input[y * c..(y + 1) * c]) {
                        *a += v;
                    }
                    count += 1;
                }
            }
            disp[axis] = 0;
            let inv = 1.0 / count as f64;
            acc.iter_mut().for_each(|a| *a *= inv);
        }
        out
    }
}

/// `values[x] = 𝐈(η_x)`.
pub fn empirical_profile(config: &Configuration, model: &VelocityModel) -> EmpiricalProfile {
    let c = model.components();
    let mut values = vec![0.0; config.geom.sites() * c];
    for (site, chunk) in values.chunks_exact_mut(c).enumerate() {
        model.accumulate_site(config.site(site), 1.0, chunk);
    }
    EmpiricalProfile {
        geom: config.geom,
        components: c,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn geometry_round_trip() {
        for (d, n) in [(1, 5), (2, 4), (3, 3)] {
            let g = LatticeGeom::slab(d, n).unwrap();
            assert_eq!(g.sites(), (n - 1) * n.pow(d as u32 - 1));
            for s in 0..g.sites() {
                let c = g.coords(s);
                assert!(c[0] >= 1 && c[0] <= n as i64 - 1);
                assert_eq!(g.index(&c[..d]), Some(s));
            }
        }
        let t = LatticeGeom::torus(1, 3).unwrap();
        assert_eq!(t.sites(), 3);
        assert_eq!(t.shift(2, &[1]), Some(0));
        let s = LatticeGeom::slab(1, 4).unwrap();
        assert_eq!(s.shift(2, &[1]), None);
        assert_eq!(s.shift(0, &[-1]), None);
        let s2 = LatticeGeom::slab(2, 4).unwrap();
        let corner = s2.index(&[1, 0]).unwrap();
        assert_eq!(s2.shift(corner, &[0, -1]), s2.index(&[1, 3]));
        assert!(LatticeGeom::slab(1, 1).is_err());
        assert!(LatticeGeom::slab(4, 4).is_err());
    }

    #[test]
    fn symmetric_profile_gives_fair_coins() {
        let m = VelocityModel::model_one(1).unwrap();
        let g = LatticeGeom::slab(1, 16).unwrap();
        let pm = ProductMeasure::from_profile(g, &m, |_| HydroVector::symmetric(&m)).unwrap();
        for s in 0..g.sites() {
            for v in 0..2 {
                assert!((pm.prob(s, v) - 0.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = VelocityModel::model_one(2).unwrap();
        let g = LatticeGeom::slab(2, 8).unwrap();
        let prof = |u: &[f64]| HydroVector::new(1.0 + 0.5 * u[0], &[0.2 * u[1], -0.1]);
        let a = sample_local_equilibrium(g, &m, prof, &mut stream(11, 0)).unwrap();
        let b = sample_local_equilibrium(g, &m, prof, &mut stream(11, 0)).unwrap();
        let c = sample_local_equilibrium(g, &m, prof, &mut stream(11, 1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_reports_bad_point() {
        let m = VelocityModel::model_one(1).unwrap();
        let g = LatticeGeom::slab(1, 8).unwrap();
        let err = sample_local_equilibrium(
            g,
            &m,
            |u: &[f64]| HydroVector::new(if u[0] > 0.5 { 2.5 } else { 1.0 }, &[0.0]),
            &mut stream(0, 0),
        )
        .unwrap_err();
        match err {
            LatticeError::NotInU { site, position, .. } => {
                assert_eq!(site, 4);
                assert!((position[0] - 5.0 / 8.0).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empirical_profile_examples() {
        let m = VelocityModel::model_one(1).unwrap();
        let g = LatticeGeom::slab(1, 6).unwrap();
        let empty = Configuration::empty(g, &m);
        assert!(empirical_profile(&empty, &m).values().iter().all(|&v| v == 0.0));
        let mut one = empty.clone();
        one.set(2, 1, true);
        let p = empirical_profile(&one, &m);
        for s in 0..g.sites() {
            let expect = if s == 2 { [1.0, -1.0] } else { [0.0, 0.0] };
            assert_eq!(p.at(s), &expect);
        }
    }

    #[test]
    fn pairing_constant_on_full_config() {
        for (d, n) in [(1usize, 8usize), (2, 5)] {
            let m = VelocityModel::model_one(d).unwrap();
            let g = LatticeGeom::slab(d, n).unwrap();
            let p = empirical_profile(&Configuration::full(g, &m), &m);
            let out = p.pair(&vec![1.0; g.sites()]).unwrap();
            let expect = 2.0 * d as f64 * (n as f64 - 1.0) / n as f64;
            assert!((out[0] - expect).abs() < 1e-13);
            assert!(out[1..].iter().all(|x| x.abs() < 1e-13));
            assert!(p.pair(&vec![0.0; g.sites()]).unwrap().iter().all(|&x| x == 0.0));
            assert!(p.pair(&[1.0]).is_err());
        }
    }

    #[test]
    fn smoothing_constant_and_identity() {
        let g = LatticeGeom::slab(2, 10).unwrap();
        let vals: Vec<f64> = (0..g.sites() * 3).map(|i| (i % 3) as f64 + 0.5).collect();
        let p = EmpiricalProfile::from_values(g, 3, vals).unwrap();
        let s = p.smooth(0.25).unwrap();
        for (a, b) in s.values().iter().zip(p.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        let raw: Vec<f64> = (0..g.sites()).map(|i| (i * 7 % 11) as f64).collect();
        let q = EmpiricalProfile::from_values(g, 1, raw).unwrap();
        assert_eq!(q.smooth(0.09).unwrap(), q);
        assert!(q.smooth(0.5).is_err());
        assert!(q.smooth(0.0).is_err());
    }

    #[test]
    fn block_average_examples() {
        use crate::model::block_average;
        let m = VelocityModel::model_one(1).unwrap();
        let g = LatticeGeom::slab(1, 8).unwrap();
        let mut c = Configuration::empty(g, &m);
        assert_eq!(block_average(&c, &m, 3, 2).unwrap(), vec![0.0, 0.0]);
        c.set(3, 0, true);
        c.set(0, 1, true);
        assert_eq!(block_average(&c, &m, 3, 0).unwrap(), vec![1.0, 1.0]);
        // site 0 truncates to {0, 1}
        assert_eq!(block_average(&c, &m, 0, 1).unwrap(), vec![0.5, -0.5]);
        assert!(block_average(&c, &m, 0, -1).is_err());
    }
}
