use serde::{Deserialize, Serialize};

use super::stats::CellStats;
use crate::egrid::{Egrid, EgridError};
use crate::evidential::{EvidentialGrid, GridSpec};

/// Occupancy packaging of a DOGMa frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DogmaMode {
    /// `[betP_occ, vx, vy]`
    #[default]
    #[serde(rename = "prob", alias = "probabilistic")]
    Probabilistic,
    /// `[m_occ, m_free, vx, vy]`
    #[serde(rename = "dst")]
    Dst,
}

impl DogmaMode {
    pub fn channels(self) -> usize {
        match self {
            DogmaMode::Probabilistic => 3,
            DogmaMode::Dst => 4,
        }
    }

    pub fn from_channels(c: usize) -> Option<Self> {
        match c {
            3 => Some(DogmaMode::Probabilistic),
            4 => Some(DogmaMode::Dst),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DogmaMode::Probabilistic => "prob",
            DogmaMode::Dst => "dst",
        }
    }
}

/// Occupancy plus normalized ego-relative velocity per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DogmaFrame {
    pub spec: GridSpec,
    pub mode: DogmaMode,
    /// Channel-major planes, each row-major over the grid.
    pub channels: Vec<Vec<f64>>,
    pub frame_index: u64,
    pub timestamp: f64,
    pub anchor: [f64; 2],
}

impl DogmaFrame {
    /// Pignistic occupancy probability per cell, whatever the mode.
    pub fn occupancy(&self) -> Vec<f64> {
        match self.mode {
            DogmaMode::Probabilistic => self.channels[0].clone(),
            DogmaMode::Dst => self.channels[0]
                .iter()
                .zip(&self.channels[1])
                .map(|(&o, &f)| o + (1.0 - o - f) / 2.0)
                .collect(),
        }
    }

    pub fn velocity_x(&self) -> &[f64] {
        &self.channels[self.mode.channels() - 2]
    }

    pub fn velocity_y(&self) -> &[f64] {
        &self.channels[self.mode.channels() - 1]
    }

    pub fn to_egrid(&self) -> Egrid {
        let n = self.spec.cells_per_side;
        let planes: Vec<&[f64]> = self.channels.iter().map(|c| c.as_slice()).collect();
        Egrid::from_planes(n, n, self.frame_index, self.timestamp, &planes).expect("planes match grid size")
    }

    /// Rebuilds a frame from a square 3- or 4-channel EGRID. The anchor is not
    /// stored in the file and is set to the origin.
    pub fn from_egrid(e: &Egrid, side_length: f64) -> Result<Self, EgridError> {
        let mode = DogmaMode::from_channels(e.channels)
            .ok_or_else(|| EgridError::Layout(format!("expected 3 or 4 channels, found {}", e.channels)))?;
        if e.height != e.width {
            return Err(EgridError::Layout(format!("grid is {}x{}, expected square", e.height, e.width)));
        }
        let spec = GridSpec::new(e.height, side_length).map_err(|err| EgridError::Layout(err.to_string()))?;
        let channels = (0..e.channels)
            .map(|c| e.channel(c).iter().map(|&v| v as f64).collect())
            .collect();
        Ok(Self {
            spec,
            mode,
            channels,
            frame_index: e.frame_index,
            timestamp: e.timestamp,
            anchor: [0.0, 0.0],
        })
    }
}

/// Packs the posterior occupancy and the gated, normalized velocities.
/// Velocities survive only in dynamic cells with `m_occ >= m_occ_min` and are
/// clamped to `[-1, 1]` after division by `v_max`.
pub fn build_dogma(
    posterior: &EvidentialGrid,
    stats: &[CellStats],
    dynamic: &[bool],
    v_max: f64,
    m_occ_min: f64,
    mode: DogmaMode,
) -> DogmaFrame {
    let n = posterior.cells.len();
    let mut vx = vec![0.0; n];
    let mut vy = vec![0.0; n];
    for i in 0..n {
        if dynamic[i] && posterior.cells[i].m_occ >= m_occ_min {
            vx[i] = (stats[i].mean[0] / v_max).clamp(-1.0, 1.0);
            vy[i] = (stats[i].mean[1] / v_max).clamp(-1.0, 1.0);
        }
    }
    let channels = match mode {
        DogmaMode::Probabilistic => vec![posterior.pignistic_map(), vx, vy],
        DogmaMode::Dst => vec![
            posterior.cells.iter().map(|c| c.m_occ).collect(),
            posterior.cells.iter().map(|c| c.m_free).collect(),
            vx,
            vy,
        ],
    };
    DogmaFrame {
        spec: posterior.spec,
        mode,
        channels,
        frame_index: posterior.frame_index,
        timestamp: posterior.timestamp,
        anchor: posterior.anchor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidential::{vacuous_grid, MassCell};

    fn setup(v: [f64; 2], dynamic: bool, m_occ: f64) -> DogmaFrame {
        let mut g = vacuous_grid(GridSpec::new(4, 2.0).unwrap());
        g.set(0, 0, MassCell::new(m_occ, 0.1).unwrap());
        let mut stats = vec![CellStats::default(); 16];
        stats[0] = CellStats { mean: v, count: 5, m_occ, ..Default::default() };
        let mut mask = vec![false; 16];
        mask[0] = dynamic;
        build_dogma(&g, &stats, &mask, 20.0, 0.1, DogmaMode::Dst)
    }

    #[test]
    fn normalization_clamp_and_gating() {
        let f = setup([20.0, 0.0], true, 0.8);
        assert_eq!((f.velocity_x()[0], f.velocity_y()[0]), (1.0, 0.0));
        let f = setup([30.0, -10.0], true, 0.8);
        assert_eq!((f.velocity_x()[0], f.velocity_y()[0]), (1.0, -0.5));
        let f = setup([30.0, -10.0], false, 0.8);
        assert_eq!((f.velocity_x()[0], f.velocity_y()[0]), (0.0, 0.0));
        let f = setup([10.0, 0.0], true, 0.05);
        assert_eq!(f.velocity_x()[0], 0.0);
    }

    #[test]
    fn modes_share_occupancy() {
        let dst = setup([1.0, 0.0], true, 0.5);
        let mut g = vacuous_grid(GridSpec::new(4, 2.0).unwrap());
        g.set(0, 0, MassCell::new(0.5, 0.1).unwrap());
        let prob = build_dogma(&g, &[CellStats::default(); 16], &[false; 16], 20.0, 0.1, DogmaMode::Probabilistic);
        assert_eq!(prob.channels.len(), 3);
        assert_eq!(dst.channels.len(), 4);
        for (a, b) in prob.occupancy().iter().zip(dst.occupancy()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn egrid_round_trip() {
        let f = setup([4.0, 2.0], true, 0.5);
        let back = DogmaFrame::from_egrid(&f.to_egrid(), 2.0).unwrap();
        assert_eq!(back.mode, DogmaMode::Dst);
        assert_eq!(back.channels[2][0], 0.2f32 as f64);
    }
}
