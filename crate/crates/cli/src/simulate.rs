use std::path::{Path, PathBuf};

use dogma::evidential::GridSpec;
use dogma::measurement::{serialize_velodyne_bin, write_pose_csv, PoseRecord};
use dogma::sim::{ground_truth, scan, standard_scene, SceneConfig, STANDARD_SCENES};

use crate::{create_dir, frame_path, read_config, write_file, CliError, Manifest};

/// Where the scene description comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneSource {
    Path(PathBuf),
    /// One of the built-in scenes, by name.
    Standard(String),
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub scene: SceneSource,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    /// Overrides the scene's frame count.
    pub frame_count: Option<usize>,
    /// Grid of the ground-truth EGRIDs.
    pub grid: GridSpec,
}

impl SimulateOptions {
    pub fn new(scene: SceneSource, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            scene,
            out_dir: out_dir.into(),
            seed: None,
            frame_count: None,
            grid: GridSpec::default(),
        }
    }
}

fn load_scene(source: &SceneSource) -> Result<SceneConfig, CliError> {
    match source {
        SceneSource::Path(p) => SceneConfig::from_json(&read_config(p)?).map_err(|e| CliError::config(p, e)),
        SceneSource::Standard(name) => standard_scene(name).ok_or_else(|| {
            let known: Vec<&str> = STANDARD_SCENES.iter().map(|(n, _)| *n).collect();
            CliError::Usage(format!("unknown scene {name:?}; expected one of {}", known.join(", ")))
        }),
    }
}

/// Writes `velodyne/NNNNNNNNNN.{bin,lbl}`, `poses.csv`,
/// `truth/NNNNNNNNNN.egrid`, the resolved `scene.json` and a manifest.
/// Returns the number of frames written.
pub fn cmd_simulate(opts: &SimulateOptions) -> Result<usize, CliError> {
    let mut scene = load_scene(&opts.scene)?;
    if let Some(seed) = opts.seed {
        scene.seed = seed;
    }
    if let Some(n) = opts.frame_count {
        scene.frame_count = n;
    }
    scene.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    opts.grid.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let out = &opts.out_dir;
    let velodyne = out.join("velodyne");
    let truth = out.join("truth");
    create_dir(&velodyne)?;
    create_dir(&truth)?;

    let mut poses = Vec::with_capacity(scene.frame_count);
    for k in 0..scene.frame_count as u64 {
        let state = scene.state_at(k);
        let s = scan(&state, &scene);
        write_file(&frame_path(&velodyne, k, "bin"), &serialize_velodyne_bin(&s.cloud))?;
        write_file(&frame_path(&velodyne, k, "lbl"), &s.labels)?;
        let gt = ground_truth(&state, &scene, &opts.grid);
        write_file(&frame_path(&truth, k, "egrid"), &gt.to_egrid().to_bytes())?;
        poses.push(PoseRecord {
            frame: k,
            x: state.ego.x,
            y: state.ego.y,
            heading: state.ego.heading,
        });
        log::debug!("frame {k}: {} points", s.cloud.len());
    }
    let pose_path = out.join("poses.csv");
    write_pose_csv(&pose_path, &poses).map_err(|e| CliError::Data(e.to_string()))?;

    let json = scene.to_json();
    write_file(&out.join("scene.json"), format!("{json}\n").as_bytes())?;
    let mut manifest = Manifest::new("simulate", &json, scene.seed, scene.frame_count);
    manifest.dt = Some(scene.dt());
    manifest.cells_per_side = Some(opts.grid.cells_per_side);
    manifest.side_length = Some(opts.grid.side_length);
    manifest.save(out)?;
    log::info!("wrote {} frames of {:?} to {}", scene.frame_count, scene.name, out.display());
    Ok(scene.frame_count)
}

/// Directory holding the `.bin` frames of a simulate-style layout.
pub(crate) fn velodyne_dir(frames_dir: &Path) -> PathBuf {
    let sub = frames_dir.join("velodyne");
    if sub.is_dir() {
        sub
    } else {
        frames_dir.to_path_buf()
    }
}
