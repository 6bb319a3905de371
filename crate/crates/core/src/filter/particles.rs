//! Particle population: initialization, prediction, birth and resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::FilterError;
use crate::evidential::{EvidentialGrid, GridSpec};

/// A weighted hypothesis of occupancy at a world-frame position moving with
/// a world-frame velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Particle {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub weight: f64,
}

/// Fixed-size particle population with its own random stream.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BirthPlacement {
    /// Cells drawn in proportion to posterior occupied mass.
    #[default]
    Occupancy,
    /// Cells drawn uniformly.
    Uniform,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn from_particles(particles: Vec<Particle>, seed: u64) -> Self {
        Self {
            particles,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[inline]
fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    } else {
        0.0
    }
}

/// Uniform positions over the grid extent, zero-mean Gaussian velocities and
/// equal weights `w0`.
pub fn init_particles(
    spec: &GridSpec,
    anchor: [f64; 2],
    count: usize,
    sigma_v: f64,
    w0: f64,
    seed: u64,
) -> Result<ParticleSet, FilterError> {
    if count == 0 {
        return Err(FilterError::InvalidConfig("particle count must be >= 1".into()));
    }
    if !(sigma_v > 0.0) {
        return Err(FilterError::InvalidConfig("sigma_v must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = spec.world_bounds(anchor);
    let particles = (0..count)
        .map(|_| Particle {
            x: rng.random_range(lo[0]..hi[0]),
            y: rng.random_range(lo[1]..hi[1]),
            vx: gauss(&mut rng, sigma_v),
            vy: gauss(&mut rng, sigma_v),
            weight: w0,
        })
        .collect();
    Ok(ParticleSet { particles, rng })
}

/// Constant-velocity motion with additive Gaussian noise; weights decay by
/// `p_survive`. Particles that leave the grid anchored at `anchor` get zero
/// weight and are replaced at resampling.
#[allow(clippy::too_many_arguments)]
pub fn predict_particles(
    ps: &mut ParticleSet,
    dt: f64,
    q_pos: f64,
    q_vel: f64,
    p_survive: f64,
    spec: &GridSpec,
    anchor: [f64; 2],
) {
    let (lo, hi) = spec.world_bounds(anchor);
    let rng = &mut ps.rng;
    for p in &mut ps.particles {
        p.x += p.vx * dt + gauss(rng, q_pos);
        p.y += p.vy * dt + gauss(rng, q_pos);
        p.vx += gauss(rng, q_vel);
        p.vy += gauss(rng, q_vel);
        p.weight *= p_survive;
        if !(p.x >= lo[0] && p.x < hi[0] && p.y >= lo[1] && p.y < hi[1]) {
            p.weight = 0.0;
        }
    }
}

/// Draws `n_birth` new particles and returns them; the caller appends them to
/// the resampling pool.
///
/// Each newborn carries `weight_fraction / n_birth * Σ m_occ` so that births
/// add `weight_fraction` of the posterior occupied mass in total.
pub fn birth_particles(
    ps: &mut ParticleSet,
    posterior: &EvidentialGrid,
    n_birth: usize,
    sigma_v: f64,
    weight_fraction: f64,
    placement: BirthPlacement,
) -> Vec<Particle> {
    let total_mass: f64 = posterior.cells.iter().map(|c| c.m_occ).sum();
    if n_birth == 0 || !(total_mass > 0.0) {
        return Vec::new();
    }
    let spec = posterior.spec;
    let cs = spec.cell_size();
    let weight = weight_fraction / n_birth as f64 * total_mass;
    let cumulative: Vec<f64> = match placement {
        BirthPlacement::Occupancy => posterior
            .cells
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c.m_occ;
                Some(*acc)
            })
            .collect(),
        BirthPlacement::Uniform => (1..=spec.cell_count()).map(|i| i as f64).collect(),
    };
    let top = *cumulative.last().unwrap();
    let rng = &mut ps.rng;
    (0..n_birth)
        .map(|_| {
            let u = rng.random::<f64>() * top;
            let cell = cumulative
                .partition_point(|&c| c <= u)
                .min(cumulative.len() - 1);
            let (row, col) = (cell / spec.cells_per_side, cell % spec.cells_per_side);
            let (dx, dy) = spec.cell_center(row, col);
            Particle {
                x: posterior.anchor[0] + dx + (rng.random::<f64>() - 0.5) * cs,
                y: posterior.anchor[1] + dy + (rng.random::<f64>() - 0.5) * cs,
                vx: gauss(rng, sigma_v),
                vy: gauss(rng, sigma_v),
                weight,
            }
        })
        .collect()
}

/// Systematic resampling of exactly `count` particles with a seeded offset.
/// Every output particle carries `Σ w / count`.
pub fn resample<R: Rng>(pool: &[Particle], count: usize, rng: &mut R) -> Result<Vec<Particle>, FilterError> {
    let offset = rng.random::<f64>();
    resample_with_offset(pool, count, offset)
}

/// Systematic resampling with pointers at `(offset + k) * W / count`,
/// `offset ∈ [0, 1)`.
pub fn resample_with_offset(
    pool: &[Particle],
    count: usize,
    offset: f64,
) -> Result<Vec<Particle>, FilterError> {
    let total: f64 = pool.iter().map(|p| p.weight).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(FilterError::DegenerateWeights);
    }
    let step = total / count as f64;
    let weight = step;
    let mut out = Vec::with_capacity(count);
    let mut i = 0;
    let mut cum = pool[0].weight;
    for k in 0..count {
        let u = (offset + k as f64) * step;
        while cum <= u && i + 1 < pool.len() {
            i += 1;
            cum += pool[i].weight;
        }
        // Floating-point slack at the tail can land on a zero-weight particle.
        let mut j = i;
        while pool[j].weight <= 0.0 && j > 0 {
            j -= 1;
        }
        out.push(Particle { weight, ..pool[j] });
    }
    Ok(out)
}

/// Little-endian `f32` quintuples `(x, y, vx, vy, w)`.
pub fn particles_to_bytes(particles: &[Particle]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 * particles.len());
    for p in particles {
        for v in [p.x, p.y, p.vx, p.vy, p.weight] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn particles_from_bytes(bytes: &[u8]) -> Result<Vec<Particle>, FilterError> {
    if bytes.len() % 20 != 0 {
        return Err(FilterError::Format(format!(
            "particle dump length {} is not a multiple of 20",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(20)
        .map(|c| {
            let f = |o: usize| f32::from_le_bytes(c[o..o + 4].try_into().unwrap()) as f64;
            Particle {
                x: f(0),
                y: f(4),
                vx: f(8),
                vy: f(12),
                weight: f(16),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidential::{vacuous_grid, MassCell};

    fn particle(x: f64, vx: f64, weight: f64) -> Particle {
        Particle { x, y: 0.0, vx, vy: 0.0, weight }
    }

    #[test]
    fn init_statistics() {
        let spec = GridSpec::default();
        let ps = init_particles(&spec, [0.0, 0.0], 10_000, 4.0, 0.01, 5).unwrap();
        assert_eq!(ps.len(), 10_000);
        let bound = 3.0 * 4.0 / 100.0;
        let mx = ps.particles.iter().map(|p| p.vx).sum::<f64>() / 1e4;
        let my = ps.particles.iter().map(|p| p.vy).sum::<f64>() / 1e4;
        assert!(mx.abs() < bound && my.abs() < bound, "{mx} {my}");
        let (lo, hi) = spec.world_bounds([0.0, 0.0]);
        for p in &ps.particles {
            assert!(p.x >= lo[0] && p.x < hi[0] && p.y >= lo[1] && p.y < hi[1]);
            assert_eq!(p.weight, 0.01);
            assert!(spec.cell_of(p.x, p.y).is_some());
        }
        assert!(init_particles(&spec, [0.0, 0.0], 0, 4.0, 0.01, 5).is_err());
        assert!(init_particles(&spec, [0.0, 0.0], 10, 0.0, 0.01, 5).is_err());
    }

    #[test]
    fn noiseless_prediction() {
        let spec = GridSpec::default();
        let mut ps = ParticleSet::from_particles(vec![particle(0.0, 1.0, 0.5), particle(2.0, 0.0, 0.5)], 0);
        predict_particles(&mut ps, 0.1, 0.0, 0.0, 1.0, &spec, [0.0, 0.0]);
        assert!((ps.particles[0].x - 0.1).abs() < 1e-15);
        assert_eq!(ps.particles[1].x, 2.0);
        assert_eq!(ps.particles[1].weight, 0.5);
    }

    #[test]
    fn survival_scales_weights_and_exits_are_zeroed() {
        let spec = GridSpec::default();
        let mut ps = init_particles(&spec, [0.0, 0.0], 1000, 1.0, 0.01, 1).unwrap();
        let before = ps.total_weight();
        let mut copy = ps.clone();
        predict_particles(&mut copy, 0.1, 0.0, 0.0, 0.99, &spec, [0.0, 0.0]);
        let inside = copy.particles.iter().filter(|p| p.weight > 0.0).count();
        assert!((copy.total_weight() - 0.99 * 0.01 * inside as f64).abs() < 1e-12);
        assert!(inside as f64 * 0.01 <= before);
        ps.particles[0] = particle(21.0, 10.0, 0.3);
        predict_particles(&mut ps, 0.1, 0.0, 0.0, 0.99, &spec, [0.0, 0.0]);
        assert_eq!(ps.particles[0].weight, 0.0);
    }

    #[test]
    fn births_follow_occupancy() {
        let spec = GridSpec::new(16, 8.0).unwrap();
        let mut post = vacuous_grid(spec);
        post.set(3, 11, MassCell::occupied(0.8));
        let mut ps = ParticleSet::from_particles(vec![], 3);
        assert!(birth_particles(&mut ps, &post, 0, 2.0, 0.1, BirthPlacement::Occupancy).is_empty());
        let born = birth_particles(&mut ps, &post, 500, 2.0, 0.1, BirthPlacement::Occupancy);
        assert_eq!(born.len(), 500);
        for p in &born {
            assert_eq!(post.cell_index_of_world(p.x, p.y), Some(spec.index(3, 11)));
            assert!((p.weight - 0.1 / 500.0 * 0.8).abs() < 1e-15);
        }
    }

    #[test]
    fn resample_uniform_pool_is_fixed_point() {
        let pool: Vec<Particle> = (0..50).map(|i| particle(i as f64, 0.0, 0.02)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = resample(&pool, 50, &mut rng).unwrap();
        let xs: Vec<f64> = out.iter().map(|p| p.x).collect();
        assert_eq!(xs, (0..50).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn resample_hand_trace() {
        let pool = vec![particle(0.0, 0.0, 0.75), particle(1.0, 0.0, 0.25)];
        let out = resample_with_offset(&pool, 4, 0.5).unwrap();
        assert_eq!(out.iter().filter(|p| p.x == 0.0).count(), 3);
        assert_eq!(out.iter().filter(|p| p.x == 1.0).count(), 1);
        assert!(out.iter().all(|p| p.weight == 0.25));
    }

    #[test]
    fn resample_skips_zero_weights() {
        let pool = vec![
            particle(0.0, 0.0, 0.0),
            particle(1.0, 0.0, 0.4),
            particle(2.0, 0.0, 0.0),
            particle(3.0, 0.0, 0.6),
            particle(4.0, 0.0, 0.0),
        ];
        for offset in [0.0, 0.3, 0.999_999] {
            let out = resample_with_offset(&pool, 10, offset).unwrap();
            assert_eq!(out.len(), 10);
            assert!(out.iter().all(|p| p.x == 1.0 || p.x == 3.0));
        }
        assert!(matches!(
            resample_with_offset(&[particle(0.0, 0.0, 0.0)], 3, 0.5),
            Err(FilterError::DegenerateWeights)
        ));
    }

    #[test]
    fn dump_round_trip() {
        let ps = vec![Particle { x: 1.5, y: -2.0, vx: 0.25, vy: 3.0, weight: 0.125 }];
        let bytes = particles_to_bytes(&ps);
        assert_eq!(bytes.len(), 20);
        assert_eq!(particles_from_bytes(&bytes).unwrap(), ps);
        assert!(particles_from_bytes(&bytes[..19]).is_err());
    }
}
