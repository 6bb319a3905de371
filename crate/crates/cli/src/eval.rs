use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use dogma::egrid::Egrid;
use dogma::evidential::{EvidentialGrid, GridSpec, MassCell};
use dogma::filter::{particles_from_bytes, DogmaFrame};
use dogma::predict::{
    evaluate, export_sequences, predict, score_predictions, EvalConfig, EvalSequence, MetricsTable, PfState,
    PredictorKind, StaticParticles, HORIZON, SEED_FRAMES, SEQUENCE_LEN,
};
use serde_json::json;

use crate::pipeline::{read_records, FrameRecord};
use crate::{create_dir, frame_path, list_frames, write_file, CliError, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Svg,
}

/// DOGMa frames of one pipeline output directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Option<Manifest>,
    pub frames: Vec<DogmaFrame>,
    records: HashMap<u64, FrameRecord>,
}

impl LoadedRun {
    pub fn dt(&self) -> f64 {
        self.manifest.as_ref().and_then(|m| m.dt).unwrap_or(0.1)
    }

    /// Consecutive, non-overlapping windows of `SEQUENCE_LEN` frames.
    pub fn windows(&self) -> Result<Vec<&[DogmaFrame]>, CliError> {
        if self.frames.len() < SEQUENCE_LEN {
            return Err(CliError::Data(format!(
                "{}: {} frames, a sequence needs {SEQUENCE_LEN}",
                self.dir.display(),
                self.frames.len()
            )));
        }
        let rest = self.frames.len() % SEQUENCE_LEN;
        if rest > 0 {
            log::warn!("{}: ignoring the last {rest} frames", self.dir.display());
        }
        Ok(self.frames.chunks_exact(SEQUENCE_LEN).collect())
    }

    fn spec(&self) -> GridSpec {
        self.frames[0].spec
    }

    /// Particles, gate mask and posterior written for `frame`.
    fn pf_state(&self, frame: u64) -> Result<PfState, CliError> {
        let missing = |what: &str| {
            CliError::Data(format!(
                "{}: frame {frame} has no {what}; run the pipeline with dump_particles",
                self.dir.display()
            ))
        };
        let rec = self.records.get(&frame).ok_or_else(|| missing("frames.csv entry"))?;
        let post_path = frame_path(&self.dir.join("posterior"), frame, "egrid");
        let part_path = frame_path(&self.dir.join("particles"), frame, "bin");
        if !post_path.is_file() {
            return Err(missing("posterior dump"));
        }
        if !part_path.is_file() {
            return Err(missing("particle dump"));
        }
        let e = Egrid::load(&post_path).map_err(|e| CliError::Data(e.to_string()))?;
        let spec = self.spec();
        if e.channels != 3 || e.height != spec.cells_per_side || e.width != spec.cells_per_side {
            return Err(CliError::Data(format!("{}: unexpected layout", post_path.display())));
        }
        let cells = e
            .channel(0)
            .iter()
            .zip(e.channel(1))
            .map(|(&o, &f)| {
                let m_occ = (o as f64).clamp(0.0, 1.0);
                MassCell {
                    m_occ,
                    m_free: (f as f64).clamp(0.0, 1.0 - m_occ),
                }
            })
            .collect();
        let bytes = fs::read(&part_path).map_err(CliError::io(&part_path))?;
        let particles =
            particles_from_bytes(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", part_path.display())))?;
        Ok(PfState {
            particles,
            dynamic: e.channel(2).iter().map(|&d| d > 0.5).collect(),
            posterior: EvidentialGrid {
                spec,
                cells,
                frame_index: frame,
                timestamp: rec.timestamp,
                anchor: [rec.anchor_x, rec.anchor_y],
            },
            ego_velocity: [rec.ego_vx, rec.ego_vy],
        })
    }
}

/// Reads `DIR/dogma/*.egrid` (or `DIR/*.egrid`) with the manifest and the
/// per-frame records when present. A missing or empty directory is a usage
/// error.
pub fn load_run(dir: &Path) -> Result<LoadedRun, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
    }
    let manifest = dir.join("manifest.json").is_file().then(|| Manifest::load(dir)).transpose()?;
    let side = manifest
        .as_ref()
        .and_then(|m| m.side_length)
        .unwrap_or(GridSpec::default().side_length);
    let dogma_dir = if dir.join("dogma").is_dir() { dir.join("dogma") } else { dir.to_path_buf() };
    let files = list_frames(&dogma_dir, "egrid")?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("no DOGMa frames in {}", dogma_dir.display())));
    }
    let frames = files
        .iter()
        .map(|(_, p)| {
            let e = Egrid::load(p).map_err(|e| CliError::Data(e.to_string()))?;
            DogmaFrame::from_egrid(&e, side).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if frames.iter().any(|f| f.mode != frames[0].mode || f.spec != frames[0].spec) {
        return Err(CliError::Data(format!("{}: frames differ in layout", dogma_dir.display())));
    }
    let rec_path = dir.join("frames.csv");
    let records = if rec_path.is_file() {
        read_records(&rec_path)?.into_iter().map(|r| (r.frame, r)).collect()
    } else {
        HashMap::new()
    };
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest,
        frames,
        records,
    })
}

/// Occupancy grids (channel 0) of `DIR/NNNNNNNNNN.egrid`, keyed by frame.
fn load_occupancy_dir(dir: &Path) -> Result<HashMap<u64, Vec<f64>>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
    }
    list_frames(dir, "egrid")?
        .into_iter()
        .map(|(k, p)| {
            let e = Egrid::load(&p).map_err(|e| CliError::Data(e.to_string()))?;
            Ok((k, e.channel(0).iter().map(|&v| v as f64).collect()))
        })
        .collect()
}

/// One evaluation sequence with where it came from.
struct Window<'a> {
    run: &'a LoadedRun,
    frames: &'a [DogmaFrame],
}

impl Window<'_> {
    fn seed_frame(&self) -> u64 {
        self.frames[SEED_FRAMES - 1].frame_index
    }

    fn target_frames(&self) -> impl Iterator<Item = u64> + '_ {
        self.frames[SEED_FRAMES..].iter().map(|f| f.frame_index)
    }
}

fn windows(runs: &[LoadedRun]) -> Result<Vec<Window<'_>>, CliError> {
    let mut out = Vec::new();
    for run in runs {
        out.extend(run.windows()?.into_iter().map(|frames| Window { run, frames }));
    }
    Ok(out)
}

fn load_runs(dirs: &[PathBuf]) -> Result<Vec<LoadedRun>, CliError> {
    if dirs.is_empty() {
        return Err(CliError::Usage("no input directory (--frames)".into()));
    }
    dirs.iter().map(|d| load_run(d)).collect()
}

fn build_sequences(
    wins: &[Window],
    targets: &[HashMap<u64, Vec<f64>>],
    runs: &[LoadedRun],
    with_pf: bool,
) -> Result<Vec<EvalSequence>, CliError> {
    wins.iter()
        .map(|w| {
            let mut seq = EvalSequence::from_frames(w.frames);
            let run_index = runs.iter().position(|r| std::ptr::eq(r, w.run)).expect("window of a loaded run");
            if let Some(t) = targets.get(run_index) {
                for (slot, k) in seq.occupancy[SEED_FRAMES..].iter_mut().zip(w.target_frames()) {
                    *slot = t
                        .get(&k)
                        .cloned()
                        .ok_or_else(|| CliError::Data(format!("no target grid for frame {k}")))?;
                }
            }
            if with_pf {
                seq.pf_state = Some(w.run.pf_state(w.seed_frame())?);
            }
            Ok(seq)
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct PredictOptions {
    pub runs: Vec<PathBuf>,
    pub predictors: Vec<PredictorKind>,
    pub out_dir: PathBuf,
    pub static_particles: StaticParticles,
}

fn dedup(kinds: &[PredictorKind]) -> Vec<PredictorKind> {
    let mut out = Vec::new();
    for &k in kinds {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

/// Writes every built-in prediction as `OUT/<predictor>/NNNN/<frame>.egrid`
/// (one occupancy channel per target frame), the layout `eval
/// --predictions` reads. Returns the number of sequences.
pub fn cmd_predict(opts: &PredictOptions) -> Result<usize, CliError> {
    let predictors = dedup(&opts.predictors);
    if predictors.is_empty() {
        return Err(CliError::Usage("no predictor given".into()));
    }
    let runs = load_runs(&opts.runs)?;
    let wins = windows(&runs)?;
    let with_pf = predictors.contains(&PredictorKind::Pf);
    let seqs = build_sequences(&wins, &[], &runs, with_pf)?;
    let cfg = EvalConfig {
        dt: runs[0].dt(),
        static_particles: opts.static_particles,
    };
    for &kind in &predictors {
        for (i, (seq, w)) in seqs.iter().zip(&wins).enumerate() {
            let preds = predict(seq, i, kind, &cfg).map_err(|e| CliError::Data(e.to_string()))?;
            let dir = opts.out_dir.join(kind.name()).join(format!("{i:04}"));
            create_dir(&dir)?;
            let n = w.frames[0].spec.cells_per_side;
            for ((pred, k), src) in preds.iter().zip(w.target_frames()).zip(&w.frames[SEED_FRAMES..]) {
                let e = Egrid::from_planes(n, n, k, src.timestamp, &[pred]).expect("plane matches grid");
                write_file(&frame_path(&dir, k, "egrid"), &e.to_bytes())?;
            }
        }
    }
    let names: Vec<&str> = predictors.iter().map(|k| k.name()).collect();
    let cfg_json = json!({
        "predictors": names,
        "static_particles": opts.static_particles,
        "dt": cfg.dt,
        "inputs": input_hashes(&runs),
    })
    .to_string();
    let mut manifest = Manifest::new("predict", &cfg_json, run_seed(&runs), seqs.len() * SEQUENCE_LEN);
    manifest.dt = Some(cfg.dt);
    manifest.save(&opts.out_dir)?;
    Ok(seqs.len())
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub runs: Vec<PathBuf>,
    /// Target grids per run (channel 0, matched by frame index); the DOGMa
    /// occupancy itself is the target when empty.
    pub targets: Vec<PathBuf>,
    /// Externally produced predictions in the `cmd_predict` layout.
    pub predictions: Option<PathBuf>,
    pub predictors: Vec<PredictorKind>,
    pub out_dir: PathBuf,
    /// Both formats when empty.
    pub formats: Vec<OutputFormat>,
    pub static_particles: StaticParticles,
}

impl EvalOptions {
    pub fn new(runs: Vec<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            runs,
            targets: Vec::new(),
            predictions: None,
            predictors: Vec::new(),
            out_dir: out_dir.into(),
            formats: Vec::new(),
            static_particles: StaticParticles::Freeze,
        }
    }
}

/// Predictions of every predictor directory under `dir`, by name.
fn load_predictions(dir: &Path, wins: &[Window]) -> Result<Vec<(String, Vec<Vec<Vec<f64>>>)>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
    }
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(String::from))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let per_seq = wins
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let seq_dir = dir.join(&name).join(format!("{i:04}"));
                    let grids = load_occupancy_dir(&seq_dir).map_err(|e| CliError::Data(e.to_string()))?;
                    if grids.len() != HORIZON {
                        return Err(CliError::Data(format!(
                            "{}: {} predicted frames, expected {HORIZON}",
                            seq_dir.display(),
                            grids.len()
                        )));
                    }
                    w.target_frames()
                        .map(|k| {
                            grids.get(&k).cloned().ok_or_else(|| {
                                CliError::Data(format!("{}: no prediction for frame {k}", seq_dir.display()))
                            })
                        })
                        .collect()
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((name, per_seq))
        })
        .collect()
}

fn input_hashes(runs: &[LoadedRun]) -> Vec<String> {
    runs.iter()
        .map(|r| r.manifest.as_ref().map_or_else(String::new, |m| m.config_sha256.clone()))
        .collect()
}

fn run_seed(runs: &[LoadedRun]) -> u64 {
    runs.iter().find_map(|r| r.manifest.as_ref().map(|m| m.seed)).unwrap_or(0)
}

/// Scores the built-in predictors and any external predictions, writing
/// `metrics.csv` and/or `metrics.svg`. Returns the metrics table.
pub fn cmd_eval(opts: &EvalOptions) -> Result<MetricsTable, CliError> {
    let runs = load_runs(&opts.runs)?;
    if !opts.targets.is_empty() && opts.targets.len() != runs.len() {
        return Err(CliError::Usage(format!(
            "{} target directories for {} input directories",
            opts.targets.len(),
            runs.len()
        )));
    }
    let targets = opts
        .targets
        .iter()
        .map(|d| load_occupancy_dir(d))
        .collect::<Result<Vec<_>, _>>()?;
    let wins = windows(&runs)?;
    let predictors = dedup(&opts.predictors);
    let seqs = build_sequences(&wins, &targets, &runs, predictors.contains(&PredictorKind::Pf))?;
    let cfg = EvalConfig {
        dt: runs[0].dt(),
        static_particles: opts.static_particles,
    };
    let mut table = evaluate(&seqs, &predictors, &cfg).map_err(|e| CliError::Data(e.to_string()))?;
    let mut external = Vec::new();
    if let Some(dir) = &opts.predictions {
        for (name, preds) in load_predictions(dir, &wins)? {
            let rows = score_predictions(&seqs, &name, &preds, cfg.dt).map_err(|e| CliError::Data(e.to_string()))?;
            table.rows.extend(rows);
            external.push(name);
        }
    }

    create_dir(&opts.out_dir)?;
    let formats = if opts.formats.is_empty() {
        vec![OutputFormat::Csv, OutputFormat::Svg]
    } else {
        opts.formats.clone()
    };
    if formats.contains(&OutputFormat::Csv) {
        write_file(&opts.out_dir.join("metrics.csv"), table.to_csv().as_bytes())?;
    }
    if formats.contains(&OutputFormat::Svg) {
        write_file(&opts.out_dir.join("metrics.svg"), table.to_svg().as_bytes())?;
    }
    let names: Vec<&str> = predictors.iter().map(|k| k.name()).collect();
    let cfg_json = json!({
        "predictors": names,
        "external": external,
        "targets": !opts.targets.is_empty(),
        "static_particles": opts.static_particles,
        "dt": cfg.dt,
        "inputs": input_hashes(&runs),
    })
    .to_string();
    let mut manifest = Manifest::new("eval", &cfg_json, run_seed(&runs), seqs.len() * SEQUENCE_LEN);
    manifest.dt = Some(cfg.dt);
    manifest.save(&opts.out_dir)?;
    Ok(table)
}

/// Writes every 20-frame window of the inputs to `OUT/sequences.bin`
/// (one JSON header line, then little-endian `f32` tensors). Returns the
/// number of sequences.
pub fn cmd_export(runs: &[PathBuf], out_dir: &Path, seed: Option<u64>) -> Result<usize, CliError> {
    let runs = load_runs(runs)?;
    let wins = windows(&runs)?;
    let seqs: Vec<Vec<DogmaFrame>> = wins.iter().map(|w| w.frames.to_vec()).collect();
    let seed = seed.unwrap_or_else(|| run_seed(&runs));
    create_dir(out_dir)?;
    let path = out_dir.join("sequences.bin");
    let header = export_sequences(&seqs, seed, &path).map_err(|e| CliError::Data(e.to_string()))?;
    let cfg_json = serde_json::to_string(&header).expect("header serializes");
    Manifest::new("export", &cfg_json, seed, seqs.len() * SEQUENCE_LEN).save(out_dir)?;
    Ok(seqs.len())
}
