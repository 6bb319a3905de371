use super::{SceneConfig, SceneState};
use crate::egrid::Egrid;
use crate::evidential::GridSpec;

/// Which shape a cell belongs to. Agents take precedence over static shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    None,
    Static(usize),
    Agent(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub spec: GridSpec,
    pub anchor: [f64; 2],
    pub frame_index: u64,
    pub timestamp: f64,
    pub occupied: Vec<bool>,
    /// Owner velocity relative to the ego, m/s; zero in free cells.
    pub velocity: Vec<[f64; 2]>,
    pub owner: Vec<Owner>,
}

impl GroundTruth {
    pub fn agent_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.owner
            .iter()
            .enumerate()
            .filter(|(_, o)| matches!(o, Owner::Agent(_)))
            .map(|(i, _)| i)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// Channels `[occupancy, vx_rel, vy_rel]`.
    pub fn to_egrid(&self) -> Egrid {
        let n = self.spec.cells_per_side;
        let occ: Vec<f64> = self.occupied.iter().map(|&o| o as u8 as f64).collect();
        let vx: Vec<f64> = self.velocity.iter().map(|v| v[0]).collect();
        let vy: Vec<f64> = self.velocity.iter().map(|v| v[1]).collect();
        Egrid::from_planes(n, n, self.frame_index, self.timestamp, &[&occ, &vx, &vy])
            .expect("planes match grid size")
    }
}

/// Exact occupancy and relative velocity on the ego-anchored grid: a cell is
/// occupied iff it overlaps some shape with positive area.
pub fn ground_truth(state: &SceneState, cfg: &SceneConfig, spec: &GridSpec) -> GroundTruth {
    let anchor = spec.anchor_for(state.ego.position());
    let n = spec.cells_per_side;
    let half = spec.cell_size() / 2.0;
    let shapes = cfg.shapes(state);
    let ego_v = state.ego_velocity;

    let mut occupied = vec![false; n * n];
    let mut velocity = vec![[0.0; 2]; n * n];
    let mut owner = vec![Owner::None; n * n];
    for row in 0..n {
        for col in 0..n {
            let (dx, dy) = spec.cell_center(row, col);
            let center = [anchor[0] + dx, anchor[1] + dy];
            let mut best = Owner::None;
            for (shape, who) in &shapes {
                if !shape.overlaps_square(center, half) {
                    continue;
                }
                best = match (best, *who) {
                    (Owner::Agent(_), _) => best,
                    (_, w @ Owner::Agent(_)) => w,
                    (Owner::None, w) => w,
                    (b, _) => b,
                };
            }
            let i = spec.index(row, col);
            owner[i] = best;
            match best {
                Owner::None => {}
                Owner::Static(_) => {
                    occupied[i] = true;
                    velocity[i] = [-ego_v[0], -ego_v[1]];
                }
                Owner::Agent(k) => {
                    occupied[i] = true;
                    let v = state.agents[k].velocity;
                    velocity[i] = [v[0] - ego_v[0], v[1] - ego_v[1]];
                }
            }
        }
    }
    GroundTruth {
        spec: *spec,
        anchor,
        frame_index: state.frame_index,
        timestamp: state.timestamp(cfg),
        occupied,
        velocity,
        owner,
    }
}
