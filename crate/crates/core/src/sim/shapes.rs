use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Aabb(Rect),
    Oriented {
        center: [f64; 2],
        /// Half extents along and across the heading.
        half: [f64; 2],
        heading: f64,
    },
}

impl Shape {
    pub fn oriented(center: [f64; 2], length: f64, width: f64, heading: f64) -> Self {
        Shape::Oriented {
            center,
            half: [length / 2.0, width / 2.0],
            heading,
        }
    }

    /// Centre, half extents and unit axes of the rectangle.
    fn frame(&self) -> ([f64; 2], [f64; 2], [f64; 2], [f64; 2]) {
        match *self {
            Shape::Aabb(r) => (
                [(r.min[0] + r.max[0]) / 2.0, (r.min[1] + r.max[1]) / 2.0],
                [(r.max[0] - r.min[0]) / 2.0, (r.max[1] - r.min[1]) / 2.0],
                [1.0, 0.0],
                [0.0, 1.0],
            ),
            Shape::Oriented {
                center,
                half,
                heading,
            } => {
                let (s, c) = heading.sin_cos();
                (center, half, [c, s], [-s, c])
            }
        }
    }

    /// Distance along a unit-direction ray to the first boundary crossing in
    /// front of the origin.
    pub fn ray_hit(&self, origin: [f64; 2], dir: [f64; 2]) -> Option<f64> {
        let (center, half, u, v) = self.frame();
        let rel = [origin[0] - center[0], origin[1] - center[1]];
        let o = [rel[0] * u[0] + rel[1] * u[1], rel[0] * v[0] + rel[1] * v[1]];
        let d = [dir[0] * u[0] + dir[1] * u[1], dir[0] * v[0] + dir[1] * v[1]];
        let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..2 {
            if d[k] == 0.0 {
                if o[k].abs() > half[k] {
                    return None;
                }
                continue;
            }
            let t1 = (-half[k] - o[k]) / d[k];
            let t2 = (half[k] - o[k]) / d[k];
            t_near = t_near.max(t1.min(t2));
            t_far = t_far.min(t1.max(t2));
        }
        if t_near > t_far || t_far < 0.0 {
            return None;
        }
        // Origin inside the shape: the ray leaves through the far side.
        Some(if t_near >= 0.0 { t_near } else { t_far })
    }

    /// Whether an axis-aligned square overlaps the shape with positive area.
    pub fn overlaps_square(&self, center: [f64; 2], half_side: f64) -> bool {
        let (c, half, u, v) = self.frame();
        let d = [center[0] - c[0], center[1] - c[1]];
        let axes = [[1.0, 0.0], [0.0, 1.0], u, v];
        axes.iter().all(|a| {
            let dist = (d[0] * a[0] + d[1] * a[1]).abs();
            let r_square = half_side * (a[0].abs() + a[1].abs());
            let r_shape = half[0] * (u[0] * a[0] + u[1] * a[1]).abs()
                + half[1] * (v[0] * a[0] + v[1] * a[1]).abs();
            dist < r_square + r_shape - 1e-12
        })
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (c, half, u, v) = self.frame();
        let d = [p[0] - c[0], p[1] - c[1]];
        (d[0] * u[0] + d[1] * u[1]).abs() <= half[0] && (d[0] * v[0] + d[1] * v[1]).abs() <= half[1]
    }

    /// Distance from a point to the rectangle boundary.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        let (c, half, u, v) = self.frame();
        let d = [p[0] - c[0], p[1] - c[1]];
        let q = [
            (d[0] * u[0] + d[1] * u[1]).abs() - half[0],
            (d[0] * v[0] + d[1] * v[1]).abs() - half[1],
        ];
        let outside = (q[0].max(0.0).powi(2) + q[1].max(0.0).powi(2)).sqrt();
        let inside = q[0].max(q[1]).min(0.0);
        (outside + inside).abs()
    }
}
