//! KITTI raw Velodyne `.bin` frames and the pose sidecar CSV.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MeasurementError, Point, PointCloud, Pose2};

/// Decodes consecutive little-endian `f32` quadruples `(x, y, z, reflectance)`.
pub fn parse_velodyne_bin(bytes: &[u8]) -> Result<PointCloud, MeasurementError> {
    if bytes.len() % 16 != 0 {
        return Err(MeasurementError::TrailingBytes(bytes.len()));
    }
    let points = bytes
        .chunks_exact(16)
        .enumerate()
        .map(|(index, chunk)| {
            let f = |o: usize| f32::from_le_bytes(chunk[o..o + 4].try_into().unwrap());
            let p = Point::new(f(0), f(4), f(8), f(12));
            if p.is_finite() {
                Ok(p)
            } else {
                Err(MeasurementError::NonFinite { index })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PointCloud::new(points, Pose2::default(), 0))
}

pub fn serialize_velodyne_bin(pc: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 * pc.points.len());
    for p in &pc.points {
        for v in [p.x, p.y, p.z, p.reflectance] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Frame files named `NNNNNNNNNN.bin` (ten digits) in frame order.
pub fn list_frame_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>, MeasurementError> {
    let io_err = |source| MeasurementError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("bin") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if stem.len() == 10 && stem.bytes().all(|b| b.is_ascii_digit()) {
            frames.push((stem.parse::<u64>().unwrap(), path));
        }
    }
    frames.sort();
    Ok(frames)
}

/// One row of the pose CSV `frame,x,y,heading`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl PoseRecord {
    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.heading)
    }
}

pub fn read_pose_csv(path: &Path) -> Result<Vec<PoseRecord>, MeasurementError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for record in reader.deserialize::<PoseRecord>() {
        let rec = record.map_err(|e| csv_error(path, e))?;
        if !(rec.x.is_finite() && rec.y.is_finite() && rec.heading.is_finite()) {
            return Err(MeasurementError::PoseFormat {
                path: path.display().to_string(),
                line: out.len() + 2,
                message: "non-finite pose".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_pose_csv(path: &Path, poses: &[PoseRecord]) -> Result<(), MeasurementError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for p in poses {
        w.serialize(p).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| MeasurementError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> MeasurementError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => MeasurementError::Io {
            path: path.display().to_string(),
            source,
        },
        kind => MeasurementError::PoseFormat {
            path: path.display().to_string(),
            line,
            message: format!("{kind:?}"),
        },
    }
}
