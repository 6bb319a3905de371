//! Point clouds to evidential measurement grids: ingestion, ground removal
//! and ray tracing.

mod ground;
mod raytrace;
mod velodyne;

pub use ground::{segment_ground, GroundParams, GroundSegmentation, Plane};
pub use raytrace::{raytrace, trace_cells};
pub use velodyne::{
    list_frame_files, parse_velodyne_bin, read_pose_csv, serialize_velodyne_bin, write_pose_csv,
    PoseRecord,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidential::{EvidentialGrid, GridSpec, MassCell};

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("point buffer length {0} is not a multiple of 16 bytes")]
    TrailingBytes(usize),
    #[error("non-finite value in point {index}")]
    NonFinite { index: usize },
    #[error("no ground plane found (best inlier fraction {best_fraction:.3})")]
    NoGroundFound { best_fraction: f64 },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("pose file {path}, line {line}: {message}")]
    PoseFormat {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Planar pose: metres and radians (counter-clockwise from east).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Rotates a sensor-frame offset into world-aligned axes.
    #[inline]
    pub fn rotate(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (c * x - s * y, s * x + c * y)
    }
}

/// A single LiDAR return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub reflectance: f32,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, reflectance: f32) -> Self {
        Self { x, y, z, reflectance }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.reflectance.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub sensor_pose: Pose2,
    pub frame_index: u64,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, sensor_pose: Pose2, frame_index: u64) -> Self {
        Self {
            points,
            sensor_pose,
            frame_index,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Label {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

impl Label {
    /// Label merge: `Occupied > Free > Unknown`.
    #[inline]
    pub fn merge(self, other: Label) -> Label {
        self.max(other)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGrid {
    pub spec: GridSpec,
    pub labels: Vec<Label>,
    pub frame_index: u64,
    /// World position of the ego cell centre.
    pub anchor: [f64; 2],
}

impl MeasurementGrid {
    pub fn unknown(spec: GridSpec, anchor: [f64; 2], frame_index: u64) -> Self {
        Self {
            spec,
            labels: vec![Label::Unknown; spec.cell_count()],
            frame_index,
            anchor,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Label {
        self.labels[self.spec.index(row, col)]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Inverse sensor model: `Occupied -> {O: m_occ}`, `Free -> {F: m_free}`,
/// `Unknown -> vacuous`.
pub fn to_evidential(
    mg: &MeasurementGrid,
    m_occ_meas: f64,
    m_free_meas: f64,
    timestamp: f64,
) -> Result<EvidentialGrid, MeasurementError> {
    for (name, m) in [("m_occ_meas", m_occ_meas), ("m_free_meas", m_free_meas)] {
        if !(m > 0.0 && m <= 1.0) {
            return Err(MeasurementError::InvalidParameter(format!(
                "{name} must be in (0, 1], got {m}"
            )));
        }
    }
    let occ = MassCell::occupied(m_occ_meas);
    let free = MassCell::free(m_free_meas);
    let cells = mg
        .labels
        .iter()
        .map(|l| match l {
            Label::Occupied => occ,
            Label::Free => free,
            Label::Unknown => MassCell::VACUOUS,
        })
        .collect();
    Ok(EvidentialGrid {
        spec: mg.spec,
        cells,
        frame_index: mg.frame_index,
        timestamp,
        anchor: mg.anchor,
    })
}
