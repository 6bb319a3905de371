use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use dogma::egrid::Egrid;
use dogma::filter::{particles_to_bytes, DogmaFilter, DogmaMode};
use dogma::measurement::{parse_velodyne_bin, read_pose_csv, MeasurementError, PointCloud};
use dogma::pipeline::{ego_velocities, measurement_from_cloud};
use dogma::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::simulate::velodyne_dir;
use crate::{create_dir, frame_path, list_frames, read_config, write_file, CliError, Manifest};

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    /// JSON pipeline config; defaults apply when absent.
    pub config: Option<PathBuf>,
    pub frames_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<DogmaMode>,
}

/// Per-frame bookkeeping kept in `frames.csv` next to the DOGMa grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub(crate) struct FrameRecord {
    pub frame: u64,
    pub timestamp: f64,
    pub ego_vx: f64,
    pub ego_vy: f64,
    pub anchor_x: f64,
    pub anchor_y: f64,
}

/// Config with CLI overrides applied, plus the resolved directories.
fn resolve(opts: &PipelineOptions) -> Result<(PipelineConfig, PathBuf, PathBuf), CliError> {
    let mut cfg = match &opts.config {
        Some(p) => PipelineConfig::from_json(&read_config(p)?).map_err(|e| CliError::config(p, e))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = opts.mode {
        cfg.mode = mode;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let frames = opts
        .frames_dir
        .clone()
        .or_else(|| cfg.frames_dir.clone())
        .ok_or_else(|| CliError::Usage("no frames directory (--frames or frames_dir)".into()))?;
    let out = opts
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| CliError::Usage("no output directory (--out or out_dir)".into()))?;
    Ok((cfg, frames, out))
}

/// Canonical JSON of everything that influences the outputs.
fn hashed_config(cfg: &PipelineConfig) -> String {
    PipelineConfig {
        frames_dir: None,
        out_dir: None,
        ..cfg.clone()
    }
    .to_json()
}

/// Runs ingestion, ground removal, ray tracing, fusion and the filter over
/// every frame, writing `dogma/NNNNNNNNNN.egrid`, `frames.csv`, the resolved
/// `config.json` and a manifest. Optional dumps go to `posterior/`
/// (`[m_occ, m_free, dynamic]`) and `particles/`. Returns the frame count.
pub fn cmd_pipeline(opts: &PipelineOptions) -> Result<usize, CliError> {
    let (cfg, frames_dir, out) = resolve(opts)?;
    if !frames_dir.is_dir() {
        return Err(CliError::Usage(format!("frames directory {} not found", frames_dir.display())));
    }
    let pose_path = frames_dir.join("poses.csv");
    if !pose_path.is_file() {
        return Err(CliError::config(&pose_path, "pose file not found"));
    }
    let poses: HashMap<u64, _> = read_pose_csv(&pose_path)
        .map_err(|e| CliError::Data(e.to_string()))?
        .into_iter()
        .map(|r| (r.frame, r.pose()))
        .collect();
    let frames = list_frames(&velodyne_dir(&frames_dir), "bin")?;
    if frames.is_empty() {
        return Err(CliError::Data(format!("no NNNNNNNNNN.bin frames in {}", frames_dir.display())));
    }
    let frame_poses = frames
        .iter()
        .map(|(k, _)| {
            poses
                .get(k)
                .copied()
                .ok_or_else(|| CliError::Data(format!("frame {k}: no pose in {}", pose_path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dt = cfg.filter.dt;
    let velocities = ego_velocities(&frame_poses, dt);

    let dogma_dir = out.join("dogma");
    create_dir(&dogma_dir)?;
    let dump_state = cfg.dump_posterior || cfg.dump_particles;
    let posterior_dir = out.join("posterior");
    let particle_dir = out.join("particles");
    if dump_state {
        create_dir(&posterior_dir)?;
    }
    if cfg.dump_particles {
        create_dir(&particle_dir)?;
    }

    let mut filter = DogmaFilter::new(cfg.effective_filter(), cfg.mode).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut records = Vec::with_capacity(frames.len());
    for (((k, path), pose), v) in frames.iter().zip(&frame_poses).zip(&velocities) {
        let frame_err = |e: MeasurementError| CliError::Data(format!("frame {k}: {e}"));
        let bytes = fs::read(path).map_err(CliError::io(path))?;
        let parsed = parse_velodyne_bin(&bytes).map_err(frame_err)?;
        let cloud = PointCloud::new(parsed.points, *pose, *k);
        let timestamp = *k as f64 * dt;
        let meas = measurement_from_cloud(&cloud, timestamp, &cfg).map_err(frame_err)?;
        let step = filter
            .step(&meas, *v, cfg.dump_particles)
            .map_err(|e| CliError::Data(format!("frame {k}: {e}")))?;
        write_file(&frame_path(&dogma_dir, *k, "egrid"), &step.dogma.to_egrid().to_bytes())?;
        if dump_state {
            let n = cfg.grid.cells_per_side;
            let occ: Vec<f64> = step.posterior.cells.iter().map(|c| c.m_occ).collect();
            let free: Vec<f64> = step.posterior.cells.iter().map(|c| c.m_free).collect();
            let dynamic: Vec<f64> = step.dynamic.iter().map(|&d| d as u8 as f64).collect();
            let e = Egrid::from_planes(n, n, *k, timestamp, &[&occ, &free, &dynamic]).expect("planes match grid");
            write_file(&frame_path(&posterior_dir, *k, "egrid"), &e.to_bytes())?;
        }
        if let Some(ps) = &step.particles {
            write_file(&frame_path(&particle_dir, *k, "bin"), &particles_to_bytes(ps))?;
        }
        records.push(FrameRecord {
            frame: *k,
            timestamp,
            ego_vx: v[0],
            ego_vy: v[1],
            anchor_x: meas.anchor[0],
            anchor_y: meas.anchor[1],
        });
    }
    write_records(&out.join("frames.csv"), &records)?;

    let json = hashed_config(&cfg);
    write_file(&out.join("config.json"), format!("{json}\n").as_bytes())?;
    let mut manifest = Manifest::new("pipeline", &json, cfg.seed, frames.len());
    manifest.mode = Some(cfg.mode.name().into());
    manifest.dt = Some(dt);
    manifest.cells_per_side = Some(cfg.grid.cells_per_side);
    manifest.side_length = Some(cfg.grid.side_length);
    manifest.save(&out)?;
    log::info!("wrote {} DOGMa frames to {}", frames.len(), dogma_dir.display());
    Ok(frames.len())
}

fn write_records(path: &Path, records: &[FrameRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("in-memory write");
    }
    write_file(path, &w.into_inner().expect("in-memory flush"))
}

pub(crate) fn read_records(path: &Path) -> Result<Vec<FrameRecord>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| CliError::Data(format!("{}: {e}", path.display()))))
        .collect()
}
