//! Dempster–Shafer occupancy masses and grid-level fusion.
//!
//! The frame of discernment is `{F, O}` (free, occupied). Each cell carries
//! masses on `{O}`, `{F}` and the ignorance set `{F, O}`. Only the first two
//! are stored; the ignorance mass is `1 - m_occ - m_free`, so normalization
//! holds by construction.
//!
//! Grid geometry is ego-centred: the ego cell is `(n/2, n/2)` and its centre
//! coincides with the grid anchor. `+x` (east) increases the column index and
//! `+y` (north) decreases the row index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denominators of Dempster's rule below this value are treated as total conflict.
pub const CONFLICT_EPSILON: f64 = 1e-12;

/// Default information-aging factor per 0.1 s frame.
pub const DEFAULT_ALPHA: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("total conflict between masses (K = {conflict})")]
    TotalConflict { conflict: f64 },
    #[error("total conflict at cell (row {row}, col {col}), K = {conflict}")]
    CellConflict { row: usize, col: usize, conflict: f64 },
    #[error("grid geometry mismatch: {0}")]
    SpecMismatch(String),
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
}

/// Belief masses of a single cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassCell {
    pub m_occ: f64,
    pub m_free: f64,
}

impl Default for MassCell {
    fn default() -> Self {
        Self::VACUOUS
    }
}

impl MassCell {
    /// Total ignorance: all mass on `{F, O}`.
    pub const VACUOUS: MassCell = MassCell { m_occ: 0.0, m_free: 0.0 };

    /// Builds a cell, rejecting masses that violate `m_occ, m_free >= 0` and
    /// `m_occ + m_free <= 1` (1e-9 slack).
    pub fn new(m_occ: f64, m_free: f64) -> Option<Self> {
        let ok = m_occ.is_finite()
            && m_free.is_finite()
            && m_occ >= 0.0
            && m_free >= 0.0
            && m_occ + m_free <= 1.0 + 1e-9;
        ok.then_some(Self { m_occ, m_free })
    }

    pub fn occupied(m: f64) -> Self {
        Self { m_occ: m, m_free: 0.0 }
    }

    pub fn free(m: f64) -> Self {
        Self { m_occ: 0.0, m_free: m }
    }

    /// Mass on `{F, O}`.
    #[inline]
    pub fn m_unknown(&self) -> f64 {
        1.0 - self.m_occ - self.m_free
    }

    pub fn is_vacuous(&self) -> bool {
        self.m_occ == 0.0 && self.m_free == 0.0
    }

    /// Conflict mass `K` between two bodies of evidence.
    #[inline]
    pub fn conflict(&self, other: &MassCell) -> f64 {
        self.m_occ * other.m_free + self.m_free * other.m_occ
    }

    /// Dempster's rule of combination.
    pub fn combine(&self, other: &MassCell) -> Result<MassCell, GridError> {
        combine(*self, *other)
    }

    pub fn discount(&self, alpha: f64) -> MassCell {
        discount(*self, alpha)
    }

    pub fn pignistic(&self) -> f64 {
        pignistic(*self)
    }
}

/// Dempster's rule on the `{F, O}` frame.
///
/// Returns [`GridError::TotalConflict`] when `1 - K < 1e-12`.
pub fn combine(a: MassCell, b: MassCell) -> Result<MassCell, GridError> {
    let (au, bu) = (a.m_unknown(), b.m_unknown());
    let conflict = a.conflict(&b);
    let denom = 1.0 - conflict;
    if denom < CONFLICT_EPSILON {
        return Err(GridError::TotalConflict { conflict });
    }
    let occ = a.m_occ * b.m_occ + a.m_occ * bu + au * b.m_occ;
    let free = a.m_free * b.m_free + a.m_free * bu + au * b.m_free;
    Ok(MassCell {
        m_occ: occ / denom,
        m_free: free / denom,
    })
}

/// Information aging: scales the singleton masses by `alpha` and moves the
/// remainder to `{F, O}`.
pub fn discount(c: MassCell, alpha: f64) -> MassCell {
    debug_assert!((0.0..=1.0).contains(&alpha), "alpha out of range: {alpha}");
    MassCell {
        m_occ: (alpha * c.m_occ).min(1.0),
        m_free: (alpha * c.m_free).min(1.0),
    }
}

/// Pignistic probability of `{O}`: the ignorance mass is split evenly.
#[inline]
pub fn pignistic(c: MassCell) -> f64 {
    c.m_occ + 0.5 * c.m_unknown()
}

/// Pignistic probability of `{F}`.
#[inline]
pub fn pignistic_free(c: MassCell) -> f64 {
    c.m_free + 0.5 * c.m_unknown()
}

/// Square, ego-centred grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub cells_per_side: usize,
    /// Metres.
    pub side_length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            cells_per_side: 128,
            side_length: 42.7,
        }
    }
}

impl GridSpec {
    pub fn new(cells_per_side: usize, side_length: f64) -> Result<Self, GridError> {
        let spec = Self {
            cells_per_side,
            side_length,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.cells_per_side < 2 || self.cells_per_side % 2 != 0 {
            return Err(GridError::InvalidSpec(format!(
                "cells_per_side must be even and >= 2, got {}",
                self.cells_per_side
            )));
        }
        if !(self.side_length.is_finite() && self.side_length > 0.0) {
            return Err(GridError::InvalidSpec(format!(
                "side_length must be positive, got {}",
                self.side_length
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn cell_size(&self) -> f64 {
        self.side_length / self.cells_per_side as f64
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.cells_per_side * self.cells_per_side
    }

    /// Row and column index of the ego cell.
    #[inline]
    pub fn center_index(&self) -> usize {
        self.cells_per_side / 2
    }

    /// Continuous grid coordinates `(col, row)` of an offset from the anchor.
    /// Integer parts are cell indices; the anchor sits at `(n/2 + 0.5, n/2 + 0.5)`.
    #[inline]
    pub fn to_continuous(&self, dx: f64, dy: f64) -> (f64, f64) {
        let cs = self.cell_size();
        let c = self.center_index() as f64 + 0.5;
        (c + dx / cs, c - dy / cs)
    }

    /// Cell `(row, col)` containing an offset from the anchor, if inside the grid.
    #[inline]
    pub fn cell_of(&self, dx: f64, dy: f64) -> Option<(usize, usize)> {
        let (u, v) = self.to_continuous(dx, dy);
        let n = self.cells_per_side as f64;
        if u >= 0.0 && v >= 0.0 && u < n && v < n {
            Some((v as usize, u as usize))
        } else {
            None
        }
    }

    /// Offset of a cell centre from the anchor.
    #[inline]
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let cs = self.cell_size();
        let c = self.center_index() as f64;
        ((col as f64 - c) * cs, (c - row as f64) * cs)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cells_per_side + col
    }

    /// World position of the anchor for an ego at `ego`, snapped to the
    /// cell lattice so that consecutive grids differ by whole-cell shifts.
    pub fn anchor_for(&self, ego: [f64; 2]) -> [f64; 2] {
        let cs = self.cell_size();
        [(ego[0] / cs).round() * cs, (ego[1] / cs).round() * cs]
    }

    /// Lattice coordinates of an anchor produced by [`GridSpec::anchor_for`].
    pub fn anchor_lattice(&self, anchor: [f64; 2]) -> (i64, i64) {
        let cs = self.cell_size();
        ((anchor[0] / cs).round() as i64, (anchor[1] / cs).round() as i64)
    }

    /// World-frame bounding box `(min, max)` of a grid anchored at `anchor`.
    pub fn world_bounds(&self, anchor: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let cs = self.cell_size();
        let wide = (self.center_index() as f64 + 0.5) * cs;
        let narrow = (self.center_index() as f64 - 0.5) * cs;
        // Columns extend further west, rows further north.
        (
            [anchor[0] - wide, anchor[1] - narrow],
            [anchor[0] + narrow, anchor[1] + wide],
        )
    }
}

/// Row-major grid of [`MassCell`]s anchored in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidentialGrid {
    pub spec: GridSpec,
    pub cells: Vec<MassCell>,
    pub frame_index: u64,
    /// Seconds.
    pub timestamp: f64,
    /// World position of the ego cell centre.
    pub anchor: [f64; 2],
}

impl EvidentialGrid {
    pub fn vacuous(spec: GridSpec) -> Self {
        vacuous_grid(spec)
    }

    pub fn with_anchor(mut self, anchor: [f64; 2]) -> Self {
        self.anchor = anchor;
        self
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> MassCell {
        self.cells[self.spec.index(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, cell: MassCell) {
        let i = self.spec.index(row, col);
        self.cells[i] = cell;
    }

    /// Cell index of a world position, if it falls inside the grid.
    #[inline]
    pub fn cell_index_of_world(&self, x: f64, y: f64) -> Option<usize> {
        self.spec
            .cell_of(x - self.anchor[0], y - self.anchor[1])
            .map(|(r, c)| self.spec.index(r, c))
    }

    pub fn pignistic_map(&self) -> Vec<f64> {
        self.cells.iter().map(|c| pignistic(*c)).collect()
    }

    pub fn discounted(&self, alpha: f64) -> Self {
        Self {
            cells: self.cells.iter().map(|c| discount(*c, alpha)).collect(),
            ..self.clone()
        }
    }

    /// Re-anchors the grid, moving content by whole cells. Cells that enter
    /// the grid are vacuous.
    pub fn shifted_to(&self, anchor: [f64; 2]) -> Self {
        let (ox, oy) = self.spec.anchor_lattice(self.anchor);
        let (nx, ny) = self.spec.anchor_lattice(anchor);
        let (dcol, drow) = (nx - ox, oy - ny);
        let n = self.spec.cells_per_side as i64;
        let mut out = Self {
            cells: vec![MassCell::VACUOUS; self.cells.len()],
            anchor,
            ..self.clone()
        };
        if dcol == 0 && drow == 0 {
            out.cells.copy_from_slice(&self.cells);
            return out;
        }
        for row in 0..n {
            let src_row = row + drow;
            if !(0..n).contains(&src_row) {
                continue;
            }
            for col in 0..n {
                let src_col = col + dcol;
                if (0..n).contains(&src_col) {
                    out.cells[(row * n + col) as usize] =
                        self.cells[(src_row * n + src_col) as usize];
                }
            }
        }
        out
    }

    pub fn check_compatible(&self, other: &EvidentialGrid) -> Result<(), GridError> {
        if self.spec != other.spec {
            return Err(GridError::SpecMismatch(format!(
                "{:?} vs {:?}",
                self.spec, other.spec
            )));
        }
        if self.anchor != other.anchor {
            return Err(GridError::SpecMismatch(format!(
                "anchor {:?} vs {:?}",
                self.anchor, other.anchor
            )));
        }
        if self.cells.len() != self.spec.cell_count() || other.cells.len() != other.spec.cell_count() {
            return Err(GridError::SpecMismatch("cell buffer length".into()));
        }
        Ok(())
    }
}

/// A grid of total ignorance.
pub fn vacuous_grid(spec: GridSpec) -> EvidentialGrid {
    EvidentialGrid {
        spec,
        cells: vec![MassCell::VACUOUS; spec.cell_count()],
        frame_index: 0,
        timestamp: 0.0,
        anchor: [0.0, 0.0],
    }
}

/// Per cell: `combine(discount(prior, alpha), measurement)`.
///
/// The output takes the measurement's timestamp and `prior.frame_index + 1`.
pub fn fuse_grid(
    prior: &EvidentialGrid,
    measurement: &EvidentialGrid,
    alpha: f64,
) -> Result<EvidentialGrid, GridError> {
    prior.check_compatible(measurement)?;
    let n = prior.spec.cells_per_side;
    let cells = prior
        .cells
        .iter()
        .zip(&measurement.cells)
        .enumerate()
        .map(|(i, (p, m))| {
            combine(discount(*p, alpha), *m).map_err(|e| match e {
                GridError::TotalConflict { conflict } => GridError::CellConflict {
                    row: i / n,
                    col: i % n,
                    conflict,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvidentialGrid {
        spec: prior.spec,
        cells,
        frame_index: prior.frame_index + 1,
        timestamp: measurement.timestamp,
        anchor: prior.anchor,
    })
}
