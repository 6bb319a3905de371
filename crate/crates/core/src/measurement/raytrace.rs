//! Free-space carving between the ego cell and each return.

use super::{Label, MeasurementGrid, PointCloud};
use crate::evidential::GridSpec;

/// Amanatides–Woo traversal from `start` to `end` in continuous grid
/// coordinates `(col, row)`.
///
/// Returns the cells strictly between the start cell and the end cell, in
/// traversal order, and the end cell if it lies inside the grid. The walk
/// stops at the grid boundary when the end point is outside.
pub fn trace_cells(
    spec: &GridSpec,
    start: (f64, f64),
    end: (f64, f64),
) -> (Vec<(usize, usize)>, Option<(usize, usize)>) {
    let n = spec.cells_per_side as i64;
    let inside = |c: i64, r: i64| c >= 0 && r >= 0 && c < n && r < n;
    let (u0, v0) = start;
    let (u1, v1) = end;
    let (mut cx, mut cy) = (u0.floor() as i64, v0.floor() as i64);
    let (ex, ey) = (u1.floor() as i64, v1.floor() as i64);
    let end_cell = inside(ex, ey).then_some((ey as usize, ex as usize));

    let axis = |p0: f64, d: f64, cell: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, (cell as f64 + 1.0 - p0) / d, 1.0 / d)
        } else if d < 0.0 {
            (-1, (p0 - cell as f64) / -d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut t_max_x, t_delta_x) = axis(u0, u1 - u0, cx);
    let (step_y, mut t_max_y, t_delta_y) = axis(v0, v1 - v0, cy);

    let mut between = Vec::new();
    let max_steps = (ex - cx).abs() + (ey - cy).abs();
    for _ in 0..max_steps {
        if (cx, cy) == (ex, ey) {
            break;
        }
        let t = if t_max_x < t_max_y {
            cx += step_x;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            cy += step_y;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };
        if t > 1.0 || !inside(cx, cy) || (cx, cy) == (ex, ey) {
            break;
        }
        between.push((cy as usize, cx as usize));
    }
    (between, end_cell)
}

/// Projects every return to the plane and labels the grid: hit cells are
/// `Occupied`, cells crossed on the way from the ego cell are `Free` unless
/// some beam of the scan hit them, everything else stays `Unknown`.
///
/// The grid is anchored at the sensor position snapped to the cell lattice
/// and aligned with the world axes.
pub fn raytrace(pc: &PointCloud, spec: &GridSpec) -> MeasurementGrid {
    let pose = pc.sensor_pose;
    let anchor = spec.anchor_for(pose.position());
    let mut grid = MeasurementGrid::unknown(*spec, anchor, pc.frame_index);
    let (ox, oy) = (pose.x - anchor[0], pose.y - anchor[1]);
    let start = spec.to_continuous(ox, oy);

    let ends: Vec<(f64, f64)> = pc
        .points
        .iter()
        .map(|p| {
            let (dx, dy) = pose.rotate(p.x as f64, p.y as f64);
            spec.to_continuous(ox + dx, oy + dy)
        })
        .collect();

    let mut free = Vec::new();
    for &end in &ends {
        let (between, hit) = trace_cells(spec, start, end);
        if let Some((r, c)) = hit {
            grid.labels[spec.index(r, c)] = Label::Occupied;
        }
        free.extend(between);
    }
    for (r, c) in free {
        let l = &mut grid.labels[spec.index(r, c)];
        *l = l.merge(Label::Free);
    }
    grid
}
