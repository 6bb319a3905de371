use super::update::particle_cells;
use super::Particle;
use crate::evidential::EvidentialGrid;

/// Velocity statistics of the particles in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellStats {
    /// Weighted mean velocity relative to the ego, m/s.
    pub mean: [f64; 2],
    /// Weighted covariance of the velocity, (m/s)².
    pub cov: [[f64; 2]; 2],
    pub m_occ: f64,
    pub count: usize,
}

impl CellStats {
    /// Stats need at least two particles carrying weight.
    pub fn is_valid(&self) -> bool {
        self.count >= 2
    }
}

/// Per-cell weighted mean and covariance of particle velocity. Cells with
/// fewer than two weighted particles are left stat-invalid.
pub fn cell_stats(particles: &[Particle], posterior: &EvidentialGrid, ego_velocity: [f64; 2]) -> Vec<CellStats> {
    let n = posterior.cells.len();
    let cells = particle_cells(particles, posterior);
    let mut w = vec![0.0; n];
    let mut sx = vec![[0.0; 2]; n];
    let mut count = vec![0usize; n];
    for (p, c) in particles.iter().zip(&cells) {
        let Some(i) = *c else { continue };
        if p.weight <= 0.0 {
            continue;
        }
        w[i] += p.weight;
        sx[i][0] += p.weight * p.vx;
        sx[i][1] += p.weight * p.vy;
        count[i] += 1;
    }
    let mean: Vec<[f64; 2]> = (0..n)
        .map(|i| if w[i] > 0.0 { [sx[i][0] / w[i], sx[i][1] / w[i]] } else { [0.0; 2] })
        .collect();
    // Second pass around the mean for numerical stability.
    let mut cov = vec![[[0.0; 2]; 2]; n];
    for (p, c) in particles.iter().zip(&cells) {
        let Some(i) = *c else { continue };
        if p.weight <= 0.0 {
            continue;
        }
        let d = [p.vx - mean[i][0], p.vy - mean[i][1]];
        cov[i][0][0] += p.weight * d[0] * d[0];
        cov[i][0][1] += p.weight * d[0] * d[1];
        cov[i][1][1] += p.weight * d[1] * d[1];
    }
    (0..n)
        .map(|i| {
            if count[i] < 2 {
                return CellStats {
                    m_occ: posterior.cells[i].m_occ,
                    count: count[i],
                    ..Default::default()
                };
            }
            let c = cov[i];
            let (a, b, d) = (c[0][0] / w[i], c[0][1] / w[i], c[1][1] / w[i]);
            CellStats {
                mean: [mean[i][0] - ego_velocity[0], mean[i][1] - ego_velocity[1]],
                cov: [[a, b], [b, d]],
                m_occ: posterior.cells[i].m_occ,
                count: count[i],
            }
        })
        .collect()
}

/// Squared Mahalanobis distance `vᵀ (P + εI)⁻¹ v`.
pub fn mahalanobis_sq(v: [f64; 2], p: [[f64; 2]; 2], epsilon: f64) -> f64 {
    let (a, b, c, d) = (p[0][0] + epsilon, p[0][1], p[1][0], p[1][1] + epsilon);
    let det = a * d - b * c;
    // Inverse of [[a, b], [c, d]] is [[d, -b], [-c, a]] / det.
    (v[0] * (d * v[0] - b * v[1]) + v[1] * (-c * v[0] + a * v[1])) / det
}

/// Dynamic mask: stat-valid cells whose mean velocity is significantly
/// non-zero under the cell's own velocity spread.
pub fn mahalanobis_gate(stats: &[CellStats], tau_threshold: f64, epsilon: f64) -> Vec<bool> {
    stats
        .iter()
        .map(|s| s.is_valid() && mahalanobis_sq(s.mean, s.cov, epsilon) > tau_threshold)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidential::{vacuous_grid, GridSpec};

    fn grid() -> EvidentialGrid {
        vacuous_grid(GridSpec::new(8, 4.0).unwrap())
    }

    fn at_cell(g: &EvidentialGrid, row: usize, col: usize, v: [f64; 2], w: f64) -> Particle {
        let (dx, dy) = g.spec.cell_center(row, col);
        Particle {
            x: g.anchor[0] + dx,
            y: g.anchor[1] + dy,
            vx: v[0],
            vy: v[1],
            weight: w,
        }
    }

    #[test]
    fn shared_velocity_has_zero_covariance() {
        let g = grid();
        let ps: Vec<_> = (0..4).map(|_| at_cell(&g, 1, 2, [3.0, 0.0], 0.2)).collect();
        let s = cell_stats(&ps, &g, [0.0, 0.0])[g.spec.index(1, 2)];
        assert!(s.is_valid());
        assert!((s.mean[0] - 3.0).abs() < 1e-12 && s.mean[1] == 0.0);
        assert!(s.cov.iter().flatten().all(|c| c.abs() < 1e-24));
    }

    #[test]
    fn two_particle_covariance() {
        let g = grid();
        let ps = vec![at_cell(&g, 3, 3, [1.0, 0.0], 0.5), at_cell(&g, 3, 3, [-1.0, 0.0], 0.5)];
        let s = cell_stats(&ps, &g, [0.0, 0.0])[g.spec.index(3, 3)];
        assert_eq!(s.mean, [0.0, 0.0]);
        assert_eq!(s.cov, [[1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn single_particle_is_invalid_and_ego_is_subtracted() {
        let g = grid();
        let stats = cell_stats(&[at_cell(&g, 0, 0, [1.0, 1.0], 1.0)], &g, [0.0, 0.0]);
        assert!(!stats[0].is_valid());
        assert!(!mahalanobis_gate(&stats, 5.991, 0.01)[0]);
        let ps = vec![at_cell(&g, 0, 0, [2.0, 1.0], 0.5), at_cell(&g, 0, 0, [2.0, 1.0], 0.5)];
        assert_eq!(cell_stats(&ps, &g, [2.0, 0.0])[0].mean, [0.0, 1.0]);
    }

    #[test]
    fn gate_examples() {
        assert_eq!(mahalanobis_sq([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], 0.0), 0.0);
        assert!((mahalanobis_sq([3.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], 0.0) - 9.0).abs() < 1e-12);
        assert!((mahalanobis_sq([0.1, 0.0], [[0.0; 2]; 2], 0.01) - 1.0).abs() < 1e-12);
        let s = |v, p| CellStats { mean: v, cov: p, m_occ: 1.0, count: 3 };
        let mask = mahalanobis_gate(
            &[
                s([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]),
                s([3.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]),
                s([0.1, 0.0], [[0.0; 2]; 2]),
            ],
            5.991,
            0.01,
        );
        assert_eq!(mask, vec![false, true, false]);
    }
}
