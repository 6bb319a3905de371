//! End-to-end wiring: point cloud → ground removal → ray tracing →
//! evidential measurement → particle filter.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidential::{EvidentialGrid, GridSpec};
use crate::filter::{DogmaFilter, DogmaMode, FilterConfig, FilterError, FilterStep};
use crate::measurement::{
    raytrace, segment_ground, to_evidential, GroundParams, MeasurementError, PointCloud, Pose2,
};
use crate::sim::{ground_truth, scan, GroundTruth, Scan, SceneConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid pipeline config: {0}")]
    Invalid(String),
    #[error("frame {frame}: {source}")]
    Measurement {
        frame: u64,
        #[source]
        source: MeasurementError,
    },
    #[error("frame {frame}: {source}")]
    Filter {
        frame: u64,
        #[source]
        source: FilterError,
    },
}

/// Every tunable of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: GridSpec,
    pub m_occ_meas: f64,
    pub m_free_meas: f64,
    pub remove_ground: bool,
    pub ground: GroundParams,
    /// Filter constants; its `seed` is replaced by the run seed.
    pub filter: FilterConfig,
    pub mode: DogmaMode,
    pub seed: u64,
    pub frames_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Also write the fused evidential posterior of each frame.
    pub dump_posterior: bool,
    /// Also write the normalized particle population of each frame.
    pub dump_particles: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            m_occ_meas: 0.6,
            m_free_meas: 0.6,
            remove_ground: true,
            ground: GroundParams::default(),
            filter: FilterConfig::default(),
            mode: DogmaMode::Probabilistic,
            seed: 0,
            frames_dir: None,
            out_dir: None,
            dump_posterior: false,
            dump_particles: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| PipelineError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.grid
            .validate()
            .map_err(|e| PipelineError::Invalid(e.to_string()))?;
        for (name, m) in [("m_occ_meas", self.m_occ_meas), ("m_free_meas", self.m_free_meas)] {
            if !(m > 0.0 && m <= 1.0) {
                return Err(PipelineError::Invalid(format!("{name} must be in (0, 1], got {m}")));
            }
        }
        if !(self.ground.inlier_threshold > 0.0) || !(0.0..=1.0).contains(&self.ground.min_inlier_fraction) {
            return Err(PipelineError::Invalid("ground parameters out of range".into()));
        }
        self.effective_filter()
            .validate()
            .map_err(|e| PipelineError::Invalid(e.to_string()))
    }

    /// Filter config with the run seed applied.
    pub fn effective_filter(&self) -> FilterConfig {
        FilterConfig {
            seed: self.seed,
            ..self.filter.clone()
        }
    }
}

/// Ground removal (when enabled), ray tracing and the inverse sensor model.
///
/// A cloud without an admissible ground plane is ray traced as is.
pub fn measurement_from_cloud(
    cloud: &PointCloud,
    timestamp: f64,
    cfg: &PipelineConfig,
) -> Result<EvidentialGrid, MeasurementError> {
    let obstacles = if cfg.remove_ground && !cloud.is_empty() {
        let params = GroundParams {
            seed: cfg.seed ^ cloud.frame_index,
            ..cfg.ground
        };
        match segment_ground(cloud, &params) {
            Ok(seg) => seg.cloud,
            Err(MeasurementError::NoGroundFound { best_fraction }) => {
                log::warn!(
                    "frame {}: no ground plane (best inlier fraction {best_fraction:.3}), keeping all points",
                    cloud.frame_index
                );
                cloud.clone()
            }
            Err(e) => return Err(e),
        }
    } else {
        cloud.clone()
    };
    let mg = raytrace(&obstacles, &cfg.grid);
    to_evidential(&mg, cfg.m_occ_meas, cfg.m_free_meas, timestamp)
}

/// World-frame ego velocities from consecutive poses: forward differences,
/// with the last frame reusing the previous interval.
pub fn ego_velocities(poses: &[Pose2], dt: f64) -> Vec<[f64; 2]> {
    let n = poses.len();
    (0..n)
        .map(|k| {
            if n < 2 {
                return [0.0, 0.0];
            }
            let (a, b) = if k + 1 < n { (k, k + 1) } else { (k - 1, k) };
            [(poses[b].x - poses[a].x) / dt, (poses[b].y - poses[a].y) / dt]
        })
        .collect()
}

/// Runs the filter over measurement grids, returning one step per frame.
pub fn run_pipeline(
    measurements: &[EvidentialGrid],
    velocities: &[[f64; 2]],
    cfg: &PipelineConfig,
    keep_particles: bool,
) -> Result<Vec<FilterStep>, PipelineError> {
    if measurements.is_empty() {
        return Err(PipelineError::Filter {
            frame: 0,
            source: FilterError::EmptySequence,
        });
    }
    let mut filter = DogmaFilter::new(cfg.effective_filter(), cfg.mode)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    measurements
        .iter()
        .zip(velocities)
        .map(|(m, v)| {
            filter
                .step(m, *v, keep_particles)
                .map_err(|source| PipelineError::Filter {
                    frame: m.frame_index,
                    source,
                })
        })
        .collect()
}

/// Simulated frames with everything needed to run and score the filter.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub scans: Vec<Scan>,
    pub poses: Vec<Pose2>,
    pub measurements: Vec<EvidentialGrid>,
    pub velocities: Vec<[f64; 2]>,
    pub truths: Vec<GroundTruth>,
}

/// Simulates `frames` frames of a scene and turns each scan into a
/// measurement grid.
pub fn simulate_run(scene: &SceneConfig, frames: usize, cfg: &PipelineConfig) -> Result<SimRun, PipelineError> {
    let mut run = SimRun {
        scans: Vec::with_capacity(frames),
        poses: Vec::with_capacity(frames),
        measurements: Vec::with_capacity(frames),
        velocities: Vec::new(),
        truths: Vec::with_capacity(frames),
    };
    for k in 0..frames as u64 {
        let state = scene.state_at(k);
        let s = scan(&state, scene);
        let m = measurement_from_cloud(&s.cloud, state.timestamp(scene), cfg)
            .map_err(|source| PipelineError::Measurement { frame: k, source })?;
        run.truths.push(ground_truth(&state, scene, &cfg.grid));
        run.poses.push(state.ego);
        run.measurements.push(m);
        run.scans.push(s);
    }
    run.velocities = ego_velocities(&run.poses, scene.dt());
    Ok(run)
}
