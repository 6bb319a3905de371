//! RANSAC ground-plane removal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MeasurementError, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundParams {
    pub iterations: usize,
    /// Metres.
    pub inlier_threshold: f64,
    /// Radians from horizontal.
    pub max_tilt: f64,
    /// Minimum inlier share for a plane to count as ground.
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_threshold: 0.15,
            max_tilt: 15f64.to_radians(),
            min_inlier_fraction: 0.1,
            seed: 0,
        }
    }
}

/// `normal · p + offset = 0`, unit normal with non-negative `z` component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Plane {
    fn from_normal(n: [f64; 3], through: [f64; 3]) -> Option<Self> {
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if !(len > 1e-12) {
            return None;
        }
        let s = if n[2] < 0.0 { -1.0 / len } else { 1.0 / len };
        let normal = [n[0] * s, n[1] * s, n[2] * s];
        let offset = -(normal[0] * through[0] + normal[1] * through[1] + normal[2] * through[2]);
        Some(Self { normal, offset })
    }

    fn through(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Option<Self> {
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        Self::from_normal(n, a)
    }

    /// Angle between the plane and the horizontal, radians.
    pub fn tilt(&self) -> f64 {
        self.normal[2].clamp(-1.0, 1.0).acos()
    }

    #[inline]
    pub fn distance(&self, p: [f64; 3]) -> f64 {
        (self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] + self.offset).abs()
    }
}

#[derive(Debug, Clone)]
pub struct GroundSegmentation {
    /// Input cloud with ground inliers removed.
    pub cloud: PointCloud,
    /// `true` for points classified as ground, in input order.
    pub ground_mask: Vec<bool>,
    pub plane: Plane,
}

/// Fits a ground plane by RANSAC over random 3-point samples, refines it by
/// least squares on the inliers and removes the inliers.
///
/// Fails with [`MeasurementError::NoGroundFound`] when no admissible plane
/// reaches `min_inlier_fraction`; callers then keep the input unchanged.
pub fn segment_ground(
    pc: &PointCloud,
    params: &GroundParams,
) -> Result<GroundSegmentation, MeasurementError> {
    if pc.is_empty() {
        return Err(MeasurementError::EmptyCloud);
    }
    if !(params.inlier_threshold > 0.0) {
        return Err(MeasurementError::InvalidParameter(format!(
            "inlier_threshold must be positive, got {}",
            params.inlier_threshold
        )));
    }
    let pts: Vec<[f64; 3]> = pc
        .points
        .iter()
        .map(|p| [p.x as f64, p.y as f64, p.z as f64])
        .collect();
    let n = pts.len();
    let count_inliers = |plane: &Plane| {
        pts.iter()
            .filter(|p| plane.distance(**p) < params.inlier_threshold)
            .count()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Plane, usize)> = None;
    if n >= 3 {
        for _ in 0..params.iterations {
            let idx = rand::seq::index::sample(&mut rng, n, 3);
            let Some(plane) = Plane::through(pts[idx.index(0)], pts[idx.index(1)], pts[idx.index(2)])
            else {
                continue;
            };
            if plane.tilt() > params.max_tilt {
                continue;
            }
            let inliers = count_inliers(&plane);
            if best.is_none_or(|(_, b)| inliers > b) {
                best = Some((plane, inliers));
            }
        }
    }

    let best_fraction = best.map_or(0.0, |(_, c)| c as f64 / n as f64);
    let (mut plane, mut inliers) = match best {
        Some(b) if best_fraction >= params.min_inlier_fraction => b,
        _ => return Err(MeasurementError::NoGroundFound { best_fraction }),
    };

    let support: Vec<[f64; 3]> = pts
        .iter()
        .copied()
        .filter(|p| plane.distance(*p) < params.inlier_threshold)
        .collect();
    if let Some(refined) = least_squares_plane(&support) {
        let refined_inliers = count_inliers(&refined);
        if refined.tilt() <= params.max_tilt && refined_inliers >= inliers {
            plane = refined;
            inliers = refined_inliers;
        }
    }
    log::debug!("ground plane {plane:?} with {inliers}/{n} inliers");

    let ground_mask: Vec<bool> = pts
        .iter()
        .map(|p| plane.distance(*p) < params.inlier_threshold)
        .collect();
    let points = pc
        .points
        .iter()
        .zip(&ground_mask)
        .filter(|(_, g)| !**g)
        .map(|(p, _)| *p)
        .collect();
    Ok(GroundSegmentation {
        cloud: PointCloud::new(points, pc.sensor_pose, pc.frame_index),
        ground_mask,
        plane,
    })
}

/// Fits `z = a x + b y + c` by ordinary least squares.
fn least_squares_plane(pts: &[[f64; 3]]) -> Option<Plane> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mean = pts.iter().fold([0.0; 3], |m, p| [m[0] + p[0], m[1] + p[1], m[2] + p[2]]);
    let mean = [mean[0] / n, mean[1] / n, mean[2] / n];
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let (x, y, z) = (p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sxz += x * z;
        syz += y * z;
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() < 1e-12 * (sxx * syy).max(1e-300) {
        return None;
    }
    let a = (sxz * syy - syz * sxy) / det;
    let b = (syz * sxx - sxz * sxy) / det;
    Plane::from_normal([-a, -b, 1.0], mean)
}
