use super::{FilterError, Particle};
use crate::evidential::{EvidentialGrid, GridError, MassCell};

/// Normalized-weight tolerance used by the audit in [`normalize_weights`].
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Flat cell index of every particle, `None` outside the grid.
pub fn particle_cells(particles: &[Particle], grid: &EvidentialGrid) -> Vec<Option<usize>> {
    particles
        .iter()
        .map(|p| grid.cell_index_of_world(p.x, p.y))
        .collect()
}

/// Per-cell weight sums in particle order (deterministic).
pub fn cell_weight_sums(particles: &[Particle], cells: &[Option<usize>], n_cells: usize) -> Vec<f64> {
    let mut sums = vec![0.0; n_cells];
    for (p, c) in particles.iter().zip(cells) {
        if let Some(i) = c {
            sums[*i] += p.weight;
        }
    }
    sums
}

/// Fuses the particle-predicted occupancy with a measurement grid and
/// rescales each cell's particle weights to the posterior occupied mass.
///
/// The predicted cell is `{O: min(1, Σw)}`; with `carry_free` the prior's
/// free mass is kept as well, capped so the cell stays normalized. The
/// predicted cell is discounted by `alpha` before Dempster combination.
/// Cells without particle weight keep their particles untouched.
pub fn update_occupancy(
    particles: &mut [Particle],
    meas: &EvidentialGrid,
    prior: &EvidentialGrid,
    alpha: f64,
    carry_free: bool,
) -> Result<EvidentialGrid, FilterError> {
    meas.check_compatible(prior)?;
    let n = meas.spec.cells_per_side;
    let cells = particle_cells(particles, meas);
    let sums = cell_weight_sums(particles, &cells, meas.cells.len());

    let mut posterior = meas.clone();
    let mut scale = vec![1.0; sums.len()];
    for (i, &w) in sums.iter().enumerate() {
        let m_pred = w.min(1.0);
        let m_free = if carry_free {
            prior.cells[i].m_free.min(1.0 - m_pred)
        } else {
            0.0
        };
        let predicted = MassCell { m_occ: m_pred, m_free };
        let post = predicted
            .discount(alpha)
            .combine(&meas.cells[i])
            .map_err(|e| match e {
                GridError::TotalConflict { conflict } => GridError::CellConflict {
                    row: i / n,
                    col: i % n,
                    conflict,
                },
                other => other,
            })?;
        posterior.cells[i] = post;
        if w > 0.0 {
            scale[i] = post.m_occ / w;
        }
    }
    for (p, c) in particles.iter_mut().zip(&cells) {
        if let Some(i) = c {
            p.weight *= scale[*i];
        }
    }
    Ok(posterior)
}

/// Audits that every cell holding particles carries exactly its posterior
/// occupied mass and enforces it where rounding has drifted. Returns the
/// largest deviation found before enforcement.
pub fn normalize_weights(particles: &mut [Particle], posterior: &EvidentialGrid) -> Result<f64, FilterError> {
    if !particles.iter().any(|p| p.weight > 0.0) {
        return Err(FilterError::DegenerateWeights);
    }
    let cells = particle_cells(particles, posterior);
    let sums = cell_weight_sums(particles, &cells, posterior.cells.len());
    let mut worst: f64 = 0.0;
    let mut scale = vec![1.0; sums.len()];
    for (i, &w) in sums.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let target = posterior.cells[i].m_occ;
        let dev = (w - target).abs();
        worst = worst.max(dev);
        if dev > 0.0 {
            scale[i] = target / w;
        }
    }
    if worst > WEIGHT_TOLERANCE {
        log::debug!("weight audit corrected a deviation of {worst:e}");
    }
    for (p, c) in particles.iter_mut().zip(&cells) {
        if let Some(i) = c {
            p.weight *= scale[*i];
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidential::{vacuous_grid, GridSpec};

    fn spec() -> GridSpec {
        GridSpec::new(8, 4.0).unwrap()
    }

    fn in_cell(grid: &EvidentialGrid, row: usize, col: usize, w: f64, n: usize) -> Vec<Particle> {
        let (dx, dy) = grid.spec.cell_center(row, col);
        (0..n)
            .map(|k| Particle {
                x: grid.anchor[0] + dx + 0.01 * k as f64,
                y: grid.anchor[1] + dy,
                vx: 0.0,
                vy: 0.0,
                weight: w,
            })
            .collect()
    }

    #[test]
    fn hand_derived_update() {
        let prior = vacuous_grid(spec());
        let mut meas = vacuous_grid(spec());
        meas.set(2, 5, MassCell::occupied(0.6));
        let mut ps = in_cell(&meas, 2, 5, 0.1, 5);
        let post = update_occupancy(&mut ps, &meas, &prior, 1.0, true).unwrap();
        // {O:0.5} ⊕ {O:0.6}: 0.30 + 0.20 + 0.30 with no conflict.
        assert!((post.get(2, 5).m_occ - 0.80).abs() < 1e-12);
        for p in &ps {
            assert!((p.weight - 0.1 * 1.6).abs() < 1e-12);
        }
        let audit = normalize_weights(&mut ps, &post).unwrap();
        assert!(audit < 1e-9);
        let sum: f64 = ps.iter().map(|p| p.weight).sum();
        assert!((sum - 0.80).abs() < 1e-9);
    }

    #[test]
    fn vacuous_measurement_is_identity() {
        let prior = vacuous_grid(spec());
        let meas = vacuous_grid(spec());
        let mut ps = in_cell(&meas, 1, 1, 0.3, 2);
        ps.extend(in_cell(&meas, 6, 3, 0.7, 2));
        let before = ps.clone();
        let post = update_occupancy(&mut ps, &meas, &prior, 1.0, true).unwrap();
        assert!((post.get(1, 1).m_occ - 0.6).abs() < 1e-15);
        assert_eq!(post.get(6, 3).m_occ, 1.0);
        // Cell 6,3 is capped at 1 so its weights shrink.
        assert_eq!(ps[..2], before[..2]);
        assert!((ps[2].weight - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_cell_takes_measurement() {
        let prior = vacuous_grid(spec());
        let mut meas = vacuous_grid(spec());
        meas.set(0, 0, MassCell::occupied(0.6));
        let mut ps = in_cell(&meas, 4, 4, 0.2, 1);
        let post = update_occupancy(&mut ps, &meas, &prior, 0.9, true).unwrap();
        assert_eq!(post.get(0, 0), MassCell::occupied(0.6));
        assert!((ps[0].weight - 0.9 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn free_mass_is_carried_when_enabled() {
        let mut prior = vacuous_grid(spec());
        prior.set(3, 3, MassCell::free(0.8));
        let meas = vacuous_grid(spec());
        let mut ps = Vec::new();
        let kept = update_occupancy(&mut ps, &meas, &prior, 0.9, true).unwrap();
        assert!((kept.get(3, 3).m_free - 0.72).abs() < 1e-12);
        let dropped = update_occupancy(&mut ps, &meas, &prior, 0.9, false).unwrap();
        assert_eq!(dropped.get(3, 3).m_free, 0.0);
    }

    #[test]
    fn mismatch_and_degenerate() {
        let a = vacuous_grid(spec());
        let b = vacuous_grid(GridSpec::new(16, 4.0).unwrap());
        assert!(update_occupancy(&mut [], &a, &b, 1.0, true).is_err());
        let mut ps = in_cell(&a, 1, 1, 0.0, 3);
        assert!(matches!(normalize_weights(&mut ps, &a), Err(FilterError::DegenerateWeights)));
        let mut post = vacuous_grid(spec());
        post.set(1, 1, MassCell::occupied(0.3));
        let mut one = in_cell(&post, 1, 1, 0.3, 1);
        normalize_weights(&mut one, &post).unwrap();
        assert_eq!(one[0].weight, 0.3);
    }

    #[test]
    fn certain_conflict_reports_cell() {
        let prior = vacuous_grid(spec());
        let mut meas = vacuous_grid(spec());
        meas.set(2, 3, MassCell::free(1.0));
        let mut ps = in_cell(&meas, 2, 3, 1.0, 1);
        let err = update_occupancy(&mut ps, &meas, &prior, 1.0, true).unwrap_err();
        assert!(matches!(err, FilterError::Grid(GridError::CellConflict { row: 2, col: 3, .. })));
    }
}
