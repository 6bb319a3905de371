use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{SceneConfig, SceneState};
use crate::measurement::{Point, PointCloud, Pose2};

pub const NON_GROUND_LABEL: u8 = 0;
pub const GROUND_LABEL: u8 = 1;

const OBSTACLE_REFLECTANCE: f32 = 0.5;
const GROUND_REFLECTANCE: f32 = 0.2;

/// A simulated sweep with one ground label per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub cloud: PointCloud,
    /// `1` for ground, `0` otherwise; the `.lbl` sidecar contents.
    pub labels: Vec<u8>,
}

impl Scan {
    pub fn ground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == GROUND_LABEL).count()
    }
}

/// Noise generator for a frame: one ChaCha stream per frame index.
fn frame_rng(cfg: &SceneConfig, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(frame);
    rng
}

/// Casts the sensor beams in `state` with the scene's seeded noise.
pub fn scan(state: &SceneState, cfg: &SceneConfig) -> Scan {
    scan_with_rng(state, cfg, &mut frame_rng(cfg, state.frame_index))
}

/// Beams are spread evenly across the angular span, centred on the ego
/// heading; each returns the nearest shape boundary within `max_range`
/// plus Gaussian range noise. Points are expressed in the sensor frame.
pub fn scan_with_rng<R: Rng>(state: &SceneState, cfg: &SceneConfig, rng: &mut R) -> Scan {
    let sensor = &cfg.sensor;
    let ego = state.ego;
    let shapes = cfg.shapes(state);
    let range_noise = (sensor.range_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, sensor.range_noise_sigma).unwrap());

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let origin = ego.position();
    for i in 0..sensor.beam_count {
        let rel = -sensor.angular_span / 2.0
            + sensor.angular_span * (i as f64 + 0.5) / sensor.beam_count as f64;
        let (s, c) = (ego.heading + rel).sin_cos();
        let nearest = shapes
            .iter()
            .filter_map(|(shape, _)| shape.ray_hit(origin, [c, s]))
            .fold(f64::INFINITY, f64::min);
        if !(nearest <= sensor.max_range) {
            continue;
        }
        let r = match &range_noise {
            Some(n) => nearest + n.sample(rng),
            None => nearest,
        };
        if r <= 0.0 || r > sensor.max_range {
            continue;
        }
        let (rs, rc) = rel.sin_cos();
        points.push(Point::new(
            (r * rc) as f32,
            (r * rs) as f32,
            sensor.obstacle_z as f32,
            OBSTACLE_REFLECTANCE,
        ));
        labels.push(NON_GROUND_LABEL);
    }

    let ground = &cfg.ground_plane;
    if ground.enabled && ground.point_count > 0 {
        let z_noise = (ground.z_noise_sigma > 0.0).then(|| Normal::new(0.0, ground.z_noise_sigma).unwrap());
        for _ in 0..ground.point_count {
            let r = ground.radius * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let (x, y) = (r * a.cos(), r * a.sin());
            let dz = z_noise.as_ref().map_or(0.0, |n| n.sample(rng));
            points.push(Point::new(
                x as f32,
                y as f32,
                (x * ground.tilt.tan() + dz) as f32,
                GROUND_REFLECTANCE,
            ));
            labels.push(GROUND_LABEL);
        }
    }

    Scan {
        cloud: PointCloud::new(points, ego, state.frame_index),
        labels,
    }
}

/// Labelled cloud for ground-segmentation checks: a noisy (optionally tilted)
/// ground disc of radius 15 m plus a box pillar with returns between 0.5 m
/// and 2 m above the ground.
pub fn labeled_ground_scene(
    seed: u64,
    ground_points: usize,
    obstacle_points: usize,
    sigma_z: f64,
    tilt: f64,
) -> Scan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma_z.max(f64::MIN_POSITIVE)).unwrap();
    let slope = tilt.tan();
    let mut points = Vec::with_capacity(ground_points + obstacle_points);
    let mut labels = Vec::with_capacity(ground_points + obstacle_points);
    for _ in 0..ground_points {
        let r = 15.0 * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let (x, y) = (r * a.cos(), r * a.sin());
        let z = x * slope + if sigma_z > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        points.push(Point::new(x as f32, y as f32, z as f32, GROUND_REFLECTANCE));
        labels.push(GROUND_LABEL);
    }
    for _ in 0..obstacle_points {
        let x = rng.random_range(4.0..5.0);
        let y = rng.random_range(-0.5..0.5);
        let z = x * slope + rng.random_range(0.5..2.0);
        points.push(Point::new(x as f32, y as f32, z as f32, OBSTACLE_REFLECTANCE));
        labels.push(NON_GROUND_LABEL);
    }
    Scan {
        cloud: PointCloud::new(points, Pose2::default(), 0),
        labels,
    }
}
