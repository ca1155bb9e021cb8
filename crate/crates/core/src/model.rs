//! Velocity sets, momentum-conserving collisions and conserved site quantities.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::lattice::Configuration;

/// Tolerance used when comparing velocity coordinates.
pub const VELOCITY_TOL: f64 = 1e-12;

/// Largest velocity set representable with one `u64` occupancy word per site.
pub const MAX_VELOCITIES: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("velocity set is empty")]
    Empty,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("velocity {index} has {found} coordinates, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("velocity {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("velocities {first} and {second} coincide")]
    Duplicate { first: usize, second: usize },
    #[error("velocity set has {0} entries, at most 64 are supported")]
    TooMany(usize),
    #[error("velocity set is not closed under signed coordinate permutations; missing {}", MissingList(.missing))]
    NotClosed { missing: Vec<Vec<f64>> },
    #[error("block half-width must be non-negative, got {0}")]
    NegativeHalfWidth(i64),
}

struct MissingList<'a>(&'a [Vec<f64>]);

impl fmt::Display for MissingList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v:?}")?;
        }
        Ok(())
    }
}

/// A collision `(v, w) -> (v', w')` at one site, stored as velocity indices.
///
/// Particles with velocities `v` and `w` are replaced by particles with
/// velocities `v'` and `w'`; the move is allowed only when the outgoing
/// slots are empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CollisionRule {
    pub v: usize,
    pub w: usize,
    pub v_out: usize,
    pub w_out: usize,
}

impl CollisionRule {
    pub fn new(v: usize, w: usize, v_out: usize, w_out: usize) -> Self {
        Self { v, w, v_out, w_out }
    }

    /// `{v,w}` and `{v',w'}` are disjoint two-element sets.
    pub fn is_effective(&self) -> bool {
        self.v != self.w
            && self.v_out != self.w_out
            && self.v != self.v_out
            && self.v != self.w_out
            && self.w != self.v_out
            && self.w != self.w_out
    }

    /// The reverse collision `(v', w') -> (v, w)`.
    pub fn reversed(&self) -> Self {
        Self::new(self.v_out, self.w_out, self.v, self.w)
    }

    fn in_mask(&self) -> u64 {
        (1u64 << self.v) | (1u64 << self.w)
    }

    fn out_mask(&self) -> u64 {
        (1u64 << self.v_out) | (1u64 << self.w_out)
    }

    /// Collision indicator `p_c ∈ {0, 1}` for one site occupancy.
    #[inline]
    pub fn fires(&self, site: u64) -> bool {
        let inm = self.in_mask();
        site & inm == inm && site & self.out_mask() == 0
    }

    /// Site occupancy after the collision; identity when the rule does not fire.
    #[inline]
    pub fn apply(&self, site: u64) -> u64 {
        if self.fires(site) {
            site ^ self.in_mask() ^ self.out_mask()
        } else {
            site
        }
    }
}

/// Mass and momentum `(I_0, I_1, …, I_d)` of one site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteObservable(pub Vec<f64>);

impl SiteObservable {
    pub fn mass(&self) -> f64 {
        self.0[0]
    }

    pub fn momentum(&self) -> &[f64] {
        &self.0[1..]
    }
}

/// Which reading of the Model II velocity set to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelTwoVariant {
    /// Interpretation A: the eight signed permutations of `(ϖ, ϖ, ϖ)`.
    #[default]
    Cube,
    /// The 24 signed permutations of `(1, 1, ϖ)`.
    Mixed,
}

/// A finite velocity set in `ℝ^d` together with its effective collision set.
///
/// The order of `velocities` is the velocity index used everywhere else
/// (occupancy bits, reservoir profiles, jump laws).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    name: &'static str,
    dim: usize,
    velocities: Vec<f64>,
    tilde: Vec<f64>,
    collisions: Vec<CollisionRule>,
}

impl VelocityModel {
    /// Validates a user velocity set and enumerates its collisions.
    pub fn new(dim: usize, velocities: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        Self::with_name("custom", dim, velocities)
    }

    fn with_name(name: &'static str, dim: usize, velocities: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        if velocities.is_empty() {
            return Err(ModelError::Empty);
        }
        if velocities.len() > MAX_VELOCITIES {
            return Err(ModelError::TooMany(velocities.len()));
        }
        for (index, v) in velocities.iter().enumerate() {
            if v.len() != dim {
                return Err(ModelError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(ModelError::NonFinite { index });
            }
        }
        for i in 0..velocities.len() {
            for j in 0..i {
                if same_vector(&velocities[i], &velocities[j]) {
                    return Err(ModelError::Duplicate { first: j, second: i });
                }
            }
        }
        let missing = missing_images(&velocities);
        if !missing.is_empty() {
            return Err(ModelError::NotClosed { missing });
        }
        let collisions = enumerate_collisions(&velocities);
        let mut tilde = Vec::with_capacity(velocities.len() * (dim + 1));
        for v in &velocities {
            tilde.push(1.0);
            tilde.extend_from_slice(v);
        }
        Ok(Self {
            name,
            dim,
            velocities: velocities.concat(),
            tilde,
            collisions,
        })
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of velocities `|𝒱|`.
    pub fn len(&self) -> usize {
        self.velocities.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    /// Number of conserved components, `d + 1`.
    pub fn components(&self) -> usize {
        self.dim + 1
    }

    pub fn velocity(&self, index: usize) -> &[f64] {
        &self.velocities[index * self.dim..(index + 1) * self.dim]
    }

    /// `ṽ = (1, v_1, …, v_d)`.
    pub fn tilde(&self, index: usize) -> &[f64] {
        let c = self.dim + 1;
        &self.tilde[index * c..(index + 1) * c]
    }

    pub fn velocities(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.velocities.chunks_exact(self.dim)
    }

    pub fn collisions(&self) -> &[CollisionRule] {
        &self.collisions
    }

    /// Index of the velocity equal to `target`, if any.
    pub fn index_of(&self, target: &[f64]) -> Option<usize> {
        self.velocities().position(|v| same_vector(v, target))
    }

    /// Index of `-v` for each velocity `v` (exists by reflection closure).
    pub fn reflection(&self, index: usize) -> usize {
        let neg: Vec<f64> = self.velocity(index).iter().map(|c| -c).collect();
        self.index_of(&neg).expect("velocity set is closed under reflections")
    }

    /// Occupancy word with every velocity present.
    pub fn full_mask(&self) -> u64 {
        if self.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.len()) - 1
        }
    }

    /// `𝐈(ξ)` for a site occupancy bit mask.
    pub fn site_observable(&self, site: u64) -> SiteObservable {
        let mut out = vec![0.0; self.components()];
        self.accumulate_site(site, 1.0, &mut out);
        SiteObservable(out)
    }

    /// `out += weight · 𝐈(ξ)`.
    #[inline]
    pub fn accumulate_site(&self, site: u64, weight: f64, out: &mut [f64]) {
        let mut bits = site;
        while bits != 0 {
            let v = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            for (o, t) in out.iter_mut().zip(self.tilde(v)) {
                *o += weight * t;
            }
        }
    }

    /// Model I: `𝒱 = {±e_1, …, ±e_d}`, ordered `+e_1, -e_1, +e_2, -e_2, …`.
    pub fn model_one(dim: usize) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        let mut vs = Vec::with_capacity(2 * dim);
        for axis in 0..dim {
            for sign in [1.0, -1.0] {
                let mut v = vec![0.0; dim];
                v[axis] = sign;
                vs.push(v);
            }
        }
        Self::with_name("model1", dim, vs)
    }

    /// Model II in three dimensions, built from the positive root of
    /// `ϖ⁴ − 6ϖ² − 1 = 0`.
    pub fn model_two(variant: ModelTwoVariant) -> Self {
        let w = model_two_root();
        let base = match variant {
            ModelTwoVariant::Cube => [w, w, w],
            ModelTwoVariant::Mixed => [1.0, 1.0, w],
        };
        let vs = signed_permutations(&base);
        Self::with_name("model2", 3, vs).expect("signed permutations form a closed set")
    }
}

/// Positive root of `ϖ⁴ − 6ϖ² − 1`, by Newton iteration from 2.5.
pub fn model_two_root() -> f64 {
    let mut x: f64 = 2.5;
    for _ in 0..50 {
        let f = x * x * x * x - 6.0 * x * x - 1.0;
        let df = 4.0 * x * x * x - 12.0 * x;
        let step = f / df;
        x -= step;
        if libm::fabs(step) <= 1e-16 * x {
            break;
        }
    }
    x
}

fn same_vector(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| libm::fabs(x - y) <= VELOCITY_TOL)
}

/// All distinct images of `v` under sign flips and coordinate permutations.
pub fn signed_permutations(v: &[f64]) -> Vec<Vec<f64>> {
    let d = v.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut perm: Vec<usize> = (0..d).collect();
    loop {
        for signs in 0u32..(1 << d) {
            let img: Vec<f64> = (0..d)
                .map(|i| {
                    let c = v[perm[i]];
                    if signs & (1 << i) != 0 {
                        -c
                    } else {
                        c
                    }
                })
                .collect();
            if !out.iter().any(|o| same_vector(o, &img)) {
                out.push(img);
            }
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    out
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Images under signed permutations that are absent from the set.
pub fn missing_images(velocities: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut missing: Vec<Vec<f64>> = Vec::new();
    for v in velocities {
        for img in signed_permutations(v) {
            let present = velocities.iter().any(|u| same_vector(u, &img));
            if !present && !missing.iter().any(|m| same_vector(m, &img)) {
                missing.push(img);
            }
        }
    }
    missing
}

/// Every quadruple `(v, w, v', w') ∈ 𝒱⁴` with `v + w = v' + w'`, in
/// lexicographic index order, without the effectiveness filter.
pub fn enumerate_collisions_raw(velocities: &[Vec<f64>]) -> Vec<CollisionRule> {
    let n = velocities.len();
    let d = velocities.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    let mut sum = vec![0.0; d];
    for a in 0..n {
        for b in 0..n {
            for (k, s) in sum.iter_mut().enumerate() {
                *s = velocities[a][k] + velocities[b][k];
            }
            for c in 0..n {
                for e in 0..n {
                    let conserves =
                        (0..d).all(|k| libm::fabs(velocities[c][k] + velocities[e][k] - sum[k]) <= VELOCITY_TOL);
                    if conserves {
                        out.push(CollisionRule::new(a, b, c, e));
                    }
                }
            }
        }
    }
    out
}

/// The effective momentum-conserving collisions: `{v,w}` and `{v',w'}`
/// disjoint two-element sets. The dropped quadruples have rate zero or act
/// as the identity.
pub fn enumerate_collisions(velocities: &[Vec<f64>]) -> Vec<CollisionRule> {
    enumerate_collisions_raw(velocities)
        .into_iter()
        .filter(CollisionRule::is_effective)
        .collect()
}

/// Average of `𝐈(η_z)` over the cube `x + {-L..L}^d`.
///
/// Coordinates `2..d` wrap periodically. In coordinate 1 the cube is cut to
/// the sites that exist and the average divides by the number of sites
/// actually summed.
pub fn block_average(
    config: &Configuration,
    model: &VelocityModel,
    center: usize,
    half_width: i64,
) -> Result<Vec<f64>, ModelError> {
    if half_width < 0 {
        return Err(ModelError::NegativeHalfWidth(half_width));
    }
    let geom = config.geom();
    let mut acc = vec![0.0; model.components()];
    let mut count = 0usize;
    let side = 2 * half_width + 1;
    let cells = (side as usize).pow(geom.dim() as u32);
    let mut offset = [0i64; 3];
    for cell in 0..cells {
        let mut rem = cell;
        for o in offset.iter_mut().take(geom.dim()) {
            *o = (rem % side as usize) as i64 - half_width;
            rem /= side as usize;
        }
        if let Some(site) = geom.shift(center, &offset[..geom.dim()]) {
            model.accumulate_site(config.site(site), 1.0, &mut acc);
            count += 1;
        }
    }
    let inv = 1.0 / count as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_one_sizes() {
        let m1 = VelocityModel::model_one(1).unwrap();
        assert_eq!(m1.len(), 2);
        assert!(m1.collisions().is_empty());

        let m2 = VelocityModel::model_one(2).unwrap();
        assert_eq!(m2.len(), 4);
        assert_eq!(m2.collisions().len(), 8);
        // (e1, -e1) -> (e2, -e2)
        assert!(m2.collisions().contains(&CollisionRule::new(0, 1, 2, 3)));
    }

    #[test]
    fn collisions_conserve_momentum_and_are_closed_under_reversal() {
        for m in [
            VelocityModel::model_one(3).unwrap(),
            VelocityModel::model_two(ModelTwoVariant::Cube),
            VelocityModel::model_two(ModelTwoVariant::Mixed),
        ] {
            for q in m.collisions() {
                for k in 0..m.dim() {
                    let lhs = m.velocity(q.v)[k] + m.velocity(q.w)[k];
                    let rhs = m.velocity(q.v_out)[k] + m.velocity(q.w_out)[k];
                    assert!((lhs - rhs).abs() <= VELOCITY_TOL);
                }
                assert!(m.collisions().contains(&q.reversed()));
            }
        }
    }

    #[test]
    fn model_two_root_matches_closed_form() {
        let w = model_two_root();
        let closed = (3.0 + 10f64.sqrt()).sqrt();
        assert!((w - closed).abs() < 1e-14);
        assert!((w - 2.482394).abs() < 1e-6);
        let m = VelocityModel::model_two(ModelTwoVariant::Cube);
        assert_eq!(m.len(), 8);
        assert_eq!(m.dim(), 3);
        let mixed = VelocityModel::model_two(ModelTwoVariant::Mixed);
        assert_eq!(mixed.len(), 24);
    }

    #[test]
    fn closure_failure_reports_missing_vectors() {
        let err = VelocityModel::new(2, vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap_err();
        match err {
            ModelError::NotClosed { missing } => {
                assert_eq!(missing.len(), 2);
                assert!(missing.iter().any(|m| m == &vec![0.0, 1.0]));
                assert!(missing.iter().any(|m| m == &vec![0.0, -1.0]));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_shape_errors() {
        assert!(matches!(
            VelocityModel::new(1, vec![vec![1.0], vec![-1.0], vec![1.0]]),
            Err(ModelError::Duplicate { first: 0, second: 2 })
        ));
        assert!(matches!(
            VelocityModel::new(2, vec![vec![1.0]]),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert_eq!(VelocityModel::new(1, vec![]), Err(ModelError::Empty));
    }

    #[test]
    fn site_observable_examples() {
        let m = VelocityModel::model_one(1).unwrap();
        assert_eq!(m.site_observable(0).0, vec![0.0, 0.0]);
        assert_eq!(m.site_observable(0b01).0, vec![1.0, 1.0]);
        for d in 1..=3 {
            let m = VelocityModel::model_one(d).unwrap();
            let full = m.site_observable(m.full_mask());
            assert_eq!(full.mass(), 2.0 * d as f64);
            assert!(full.momentum().iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn rule_application() {
        let q = CollisionRule::new(0, 1, 2, 3);
        assert!(q.fires(0b0011));
        assert_eq!(q.apply(0b0011), 0b1100);
        assert!(!q.fires(0b0111));
        assert_eq!(q.apply(0b0111), 0b0111);
        assert!(!CollisionRule::new(0, 1, 0, 1).is_effective());
        assert!(!CollisionRule::new(0, 1, 1, 0).is_effective());
        assert!(!CollisionRule::new(0, 0, 2, 3).is_effective());
    }

    #[test]
    fn reflection_index() {
        let m = VelocityModel::model_one(2).unwrap();
        assert_eq!(m.reflection(0), 1);
        assert_eq!(m.reflection(3), 2);
    }
}
