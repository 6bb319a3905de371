//! Deterministic planar world with constant-velocity agents and a
//! beam-casting LiDAR, plus exact occupancy and velocity ground truth.

mod scan;
mod scenes;
mod shapes;
mod truth;

pub use scan::{labeled_ground_scene, scan, scan_with_rng, Scan, GROUND_LABEL, NON_GROUND_LABEL};
pub use scenes::{standard_scene, StandardScene, STANDARD_SCENES};
pub use shapes::{Rect, Shape};
pub use truth::{ground_truth, GroundTruth, Owner};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::Pose2;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    Invalid(String),
    #[error("scene config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl From<serde_json::Error> for SceneError {
    fn from(e: serde_json::Error) -> Self {
        SceneError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// Extent along the heading, metres.
    pub length: f64,
    /// Extent across the heading, metres.
    pub width: f64,
    pub pose: Pose2,
    /// World-frame velocity, m/s.
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EgoTrajectory {
    ConstantVelocity { start: Pose2, velocity: [f64; 2] },
    /// One pose per frame; the last pose is held past the end.
    Poses(Vec<Pose2>),
}

impl Default for EgoTrajectory {
    fn default() -> Self {
        EgoTrajectory::ConstantVelocity {
            start: Pose2::default(),
            velocity: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub beam_count: usize,
    /// Radians, centred on the ego heading.
    pub angular_span: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    /// Height of obstacle returns, metres.
    pub obstacle_z: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            beam_count: 1440,
            angular_span: std::f64::consts::TAU,
            max_range: 40.0,
            range_noise_sigma: 0.02,
            obstacle_z: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundPlaneConfig {
    pub enabled: bool,
    pub point_count: usize,
    /// Radius of the disc of ground returns around the ego, metres.
    pub radius: f64,
    pub z_noise_sigma: f64,
    /// Slope about the sensor y axis, radians.
    pub tilt: f64,
}

impl Default for GroundPlaneConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            point_count: 4000,
            radius: 20.0,
            z_noise_sigma: 0.02,
            tilt: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_frame_count")]
    pub frame_count: usize,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub static_shapes: Vec<Rect>,
    #[serde(default)]
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub ego: EgoTrajectory,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub ground_plane: GroundPlaneConfig,
}

fn default_frame_count() -> usize {
    50
}

fn default_frame_rate() -> f64 {
    10.0
}

impl SceneConfig {
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let cfg: SceneConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene config serializes")
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(m));
        if self.sensor.beam_count < 1 {
            return bad("sensor.beam_count must be >= 1".into());
        }
        if !(self.sensor.max_range > 0.0) {
            return bad("sensor.max_range must be positive".into());
        }
        if !(self.sensor.range_noise_sigma >= 0.0) || !(self.ground_plane.z_noise_sigma >= 0.0) {
            return bad("noise sigmas must be non-negative".into());
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad("frame_rate must be positive".into());
        }
        for (i, a) in self.agents.iter().enumerate() {
            if !(a.length > 0.0 && a.width > 0.0) {
                return bad(format!("agent {i} must have positive extent"));
            }
        }
        for (i, r) in self.static_shapes.iter().enumerate() {
            if !(r.max[0] > r.min[0] && r.max[1] > r.min[1]) {
                return bad(format!("static shape {i} must have positive extent"));
            }
        }
        if let EgoTrajectory::Poses(p) = &self.ego {
            if p.is_empty() {
                return bad("ego pose list is empty".into());
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    fn ego_at(&self, frame: u64) -> (Pose2, [f64; 2]) {
        match &self.ego {
            EgoTrajectory::ConstantVelocity { start, velocity } => {
                let t = frame as f64 / self.frame_rate;
                (
                    Pose2::new(start.x + velocity[0] * t, start.y + velocity[1] * t, start.heading),
                    *velocity,
                )
            }
            EgoTrajectory::Poses(poses) => {
                let k = (frame as usize).min(poses.len() - 1);
                let velocity = if poses.len() < 2 {
                    [0.0, 0.0]
                } else {
                    let (a, b) = if k + 1 < poses.len() { (k, k + 1) } else { (k - 1, k) };
                    [
                        (poses[b].x - poses[a].x) * self.frame_rate,
                        (poses[b].y - poses[a].y) * self.frame_rate,
                    ]
                };
                (poses[k], velocity)
            }
        }
    }

    /// Ground-truth state at a frame in closed form.
    pub fn state_at(&self, frame: u64) -> SceneState {
        let t = frame as f64 / self.frame_rate;
        let agents = self
            .agents
            .iter()
            .map(|a| AgentState {
                pose: Pose2::new(
                    a.pose.x + a.velocity[0] * t,
                    a.pose.y + a.velocity[1] * t,
                    a.pose.heading,
                ),
                velocity: a.velocity,
            })
            .collect();
        let (ego, ego_velocity) = self.ego_at(frame);
        SceneState {
            frame_index: frame,
            agents,
            ego,
            ego_velocity,
        }
    }

    pub fn initial_state(&self) -> SceneState {
        self.state_at(0)
    }

    /// World-frame shapes present in a state: static shapes first, then agents.
    pub fn shapes(&self, state: &SceneState) -> Vec<(Shape, Owner)> {
        let statics = self
            .static_shapes
            .iter()
            .enumerate()
            .map(|(i, r)| (Shape::Aabb(*r), Owner::Static(i)));
        let agents = state
            .agents
            .iter()
            .zip(&self.agents)
            .enumerate()
            .map(|(i, (s, c))| {
                (
                    Shape::oriented([s.pose.x, s.pose.y], c.length, c.width, s.pose.heading),
                    Owner::Agent(i),
                )
            });
        statics.chain(agents).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub pose: Pose2,
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub frame_index: u64,
    pub agents: Vec<AgentState>,
    pub ego: Pose2,
    pub ego_velocity: [f64; 2],
}

impl SceneState {
    pub fn timestamp(&self, cfg: &SceneConfig) -> f64 {
        self.frame_index as f64 / cfg.frame_rate
    }
}

/// Advances one frame: agents by `velocity / frame_rate`, the ego along its
/// trajectory.
pub fn step(state: &SceneState, cfg: &SceneConfig) -> SceneState {
    cfg.state_at(state.frame_index + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_with_agent(v: [f64; 2]) -> SceneConfig {
        SceneConfig {
            name: "t".into(),
            frame_count: 10,
            frame_rate: 10.0,
            seed: 0,
            static_shapes: vec![],
            agents: vec![AgentConfig {
                length: 4.0,
                width: 2.0,
                pose: Pose2::default(),
                velocity: v,
            }],
            ego: EgoTrajectory::default(),
            sensor: SensorConfig::default(),
            ground_plane: GroundPlaneConfig::default(),
        }
    }

    #[test]
    fn step_advances_agents() {
        let cfg = cfg_with_agent([5.0, 0.0]);
        let s1 = step(&cfg.initial_state(), &cfg);
        assert!((s1.agents[0].pose.x - 0.5).abs() < 1e-12);
        assert_eq!(s1.agents[0].pose.y, 0.0);

        let still = cfg_with_agent([0.0, 0.0]);
        assert_eq!(step(&still.initial_state(), &still).agents[0].pose, Pose2::default());

        let diag = cfg_with_agent([1.0, 1.0]);
        let mut s = diag.initial_state();
        for _ in 0..10 {
            s = step(&s, &diag);
        }
        assert!((s.agents[0].pose.x - 1.0).abs() < 1e-12);
        assert!((s.agents[0].pose.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ego_pose_list_velocity() {
        let mut cfg = cfg_with_agent([0.0, 0.0]);
        cfg.ego = EgoTrajectory::Poses(vec![
            Pose2::new(0.0, 0.0, 0.0),
            Pose2::new(0.0, 0.2, 0.0),
            Pose2::new(0.0, 0.4, 0.0),
        ]);
        let s = cfg.state_at(1);
        assert_eq!(s.ego, Pose2::new(0.0, 0.2, 0.0));
        assert!((s.ego_velocity[1] - 2.0).abs() < 1e-12);
        let last = cfg.state_at(7);
        assert_eq!(last.ego, Pose2::new(0.0, 0.4, 0.0));
    }

    #[test]
    fn validation_and_parse_errors() {
        let mut cfg = cfg_with_agent([0.0, 0.0]);
        cfg.sensor.beam_count = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = cfg_with_agent([0.0, 0.0]);
        cfg.agents[0].width = 0.0;
        assert!(cfg.validate().is_err());

        let err = SceneConfig::from_json("{\n  \"frame_count\": 3,\n  \"bogus\": 1\n}").unwrap_err();
        assert!(matches!(err, SceneError::Parse { line: 3, .. }), "{err}");
        let err = SceneConfig::from_json("{ \"frame_count\": ").unwrap_err();
        assert!(matches!(err, SceneError::Parse { .. }));
    }

    #[test]
    fn json_round_trip() {
        let cfg = cfg_with_agent([1.0, -2.0]);
        assert_eq!(SceneConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
