//! Occupancy prediction baselines and the seed/horizon evaluation protocol.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidential::EvidentialGrid;
use crate::filter::{particle_cells, DogmaFrame, DogmaMode, Particle};

/// Frames the predictors see before predicting.
pub const SEED_FRAMES: usize = 5;
/// Frames predicted per sequence.
pub const HORIZON: usize = 15;
pub const SEQUENCE_LEN: usize = SEED_FRAMES + HORIZON;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("sequence {index} has {len} frames, expected {expected}")]
    BadSequenceLength {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("grid size mismatch: {0} vs {1} cells")]
    SpecMismatch(usize, usize),
    #[error("sequence {index} has no particle state for the pf predictor")]
    MissingParticles { index: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PredictError + '_ {
    move |source| PredictError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Repeats the last seed frame.
    Static,
    /// Propagates dynamic-cell particles.
    Pf,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Static => "static",
            PredictorKind::Pf => "pf",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "static" => Some(PredictorKind::Static),
            "pf" => Some(PredictorKind::Pf),
            _ => None,
        }
    }
}

/// What happens to particles in cells gated static.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticParticles {
    #[default]
    Freeze,
    Drop,
}

/// `horizon` copies of the last observed occupancy grid.
pub fn static_predictor(last_seen: &[f64], horizon: usize) -> Vec<Vec<f64>> {
    vec![last_seen.to_vec(); horizon]
}

/// Filter state at the last seed frame.
#[derive(Debug, Clone)]
pub struct PfState {
    /// Normalized particles: per-cell sums equal the posterior occupied mass.
    pub particles: Vec<Particle>,
    pub dynamic: Vec<bool>,
    pub posterior: EvidentialGrid,
    /// World-frame ego velocity; predictions stay in the ego-centred grid.
    pub ego_velocity: [f64; 2],
}

/// Predicted occupied mass `min(1, Σw)` per cell for steps `1..=horizon`.
///
/// Particles in dynamic cells move along their ego-relative velocity without
/// noise; particles in static cells are frozen or dropped. Free space is not
/// predicted.
pub fn pf_predictor(state: &PfState, horizon: usize, dt: f64, policy: StaticParticles) -> Vec<Vec<f64>> {
    let grid = &state.posterior;
    let cells = particle_cells(&state.particles, grid);
    let moving: Vec<(Particle, bool)> = state
        .particles
        .iter()
        .zip(&cells)
        .filter_map(|(p, c)| {
            let c = (*c)?;
            let dynamic = state.dynamic[c];
            (dynamic || policy == StaticParticles::Freeze).then_some((*p, dynamic))
        })
        .collect();
    let v_ego = state.ego_velocity;
    (1..=horizon)
        .map(|k| {
            let t = k as f64 * dt;
            let mut mass = vec![0.0; grid.cells.len()];
            for (p, dynamic) in &moving {
                let (x, y) = if *dynamic {
                    (p.x + (p.vx - v_ego[0]) * t, p.y + (p.vy - v_ego[1]) * t)
                } else {
                    (p.x, p.y)
                };
                if let Some(i) = grid.cell_index_of_world(x, y) {
                    mass[i] += p.weight;
                }
            }
            mass.iter_mut().for_each(|m| *m = m.min(1.0));
            mass
        })
        .collect()
}

/// Pignistic occupancy of predicted occupied masses when the free mass is
/// held at its last observed value, capped so each cell stays normalized.
pub fn held_free_pignistic(m_occ: &[f64], last: &EvidentialGrid) -> Vec<f64> {
    m_occ
        .iter()
        .zip(&last.cells)
        .map(|(&m, c)| {
            let f = c.m_free.min(1.0 - m);
            m + (1.0 - m - f) / 2.0
        })
        .collect()
}

/// Mean squared difference over all cells.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64, PredictError> {
    if pred.len() != target.len() {
        return Err(PredictError::SpecMismatch(pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64)
}

/// Mean squared difference over masked cells; `None` if the mask is empty.
pub fn masked_mse(pred: &[f64], target: &[f64], mask: &[bool]) -> Result<Option<f64>, PredictError> {
    if pred.len() != target.len() || mask.len() != pred.len() {
        return Err(PredictError::SpecMismatch(pred.len(), target.len()));
    }
    let (sum, n) = pred
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((a, b), _)| (s + (a - b) * (a - b), n + 1));
    Ok((n > 0).then(|| sum / n as f64))
}

/// One sequence of occupancy grids (pignistic probability per cell).
#[derive(Debug, Clone)]
pub struct EvalSequence {
    pub occupancy: Vec<Vec<f64>>,
    /// Packaging of the source frames. In DST mode the pf prediction keeps
    /// the last observed free mass and is compared through the pignistic
    /// transform; in probabilistic mode its occupied mass is compared as is.
    pub mode: DogmaMode,
    /// Needed by the pf predictor.
    pub pf_state: Option<PfState>,
    /// Optional per-target-step cell masks restricting the error.
    pub region: Option<Vec<Vec<bool>>>,
}

impl EvalSequence {
    pub fn from_frames(frames: &[DogmaFrame]) -> Self {
        Self {
            occupancy: frames.iter().map(DogmaFrame::occupancy).collect(),
            mode: frames.first().map_or(DogmaMode::Probabilistic, |f| f.mode),
            pf_state: None,
            region: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub dt: f64,
    pub static_particles: StaticParticles,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            static_particles: StaticParticles::Freeze,
        }
    }
}

/// Predictions of one predictor for steps `1..=HORIZON` of a sequence.
pub fn predict(
    seq: &EvalSequence,
    index: usize,
    kind: PredictorKind,
    cfg: &EvalConfig,
) -> Result<Vec<Vec<f64>>, PredictError> {
    check_length(seq, index)?;
    match kind {
        PredictorKind::Static => Ok(static_predictor(&seq.occupancy[SEED_FRAMES - 1], HORIZON)),
        PredictorKind::Pf => {
            let state = seq
                .pf_state
                .as_ref()
                .ok_or(PredictError::MissingParticles { index })?;
            let masses = pf_predictor(state, HORIZON, cfg.dt, cfg.static_particles);
            Ok(match seq.mode {
                DogmaMode::Probabilistic => masses,
                DogmaMode::Dst => masses
                    .iter()
                    .map(|m| held_free_pignistic(m, &state.posterior))
                    .collect(),
            })
        }
    }
}

fn check_length(seq: &EvalSequence, index: usize) -> Result<(), PredictError> {
    if seq.occupancy.len() != SEQUENCE_LEN {
        return Err(PredictError::BadSequenceLength {
            index,
            len: seq.occupancy.len(),
            expected: SEQUENCE_LEN,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub seconds: f64,
    pub predictor: String,
    pub mean_mse: f64,
    pub stderr: f64,
    /// Sequences contributing to the row.
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    /// Mean MSE per step for one predictor.
    pub fn curve(&self, predictor: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.predictor == predictor)
            .map(|r| r.mean_mse)
            .collect()
    }

    pub fn predictors(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.predictor) {
                names.push(r.predictor.clone());
            }
        }
        names
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "seconds", "predictor", "mean_mse", "stderr"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                format!("{:.1}", r.seconds),
                r.predictor.clone(),
                format!("{:.9}", r.mean_mse),
                format!("{:.9}", r.stderr),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
    }

    /// Line plot of the MSE curves with shaded ±stderr bands.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const M: f64 = 50.0;
        const COLORS: [&str; 4] = ["#222222", "#1f77b4", "#d62728", "#2ca02c"];
        let steps = self.rows.iter().map(|r| r.step).max().unwrap_or(1).max(2) as f64;
        let y_max = self
            .rows
            .iter()
            .map(|r| r.mean_mse + r.stderr)
            .fold(0.0, f64::max)
            .max(1e-6)
            * 1.1;
        let px = |step: usize| M + (step as f64 - 1.0) / (steps - 1.0) * (W - 2.0 * M);
        let py = |v: f64| H - M - v / y_max * (H - 2.0 * M);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<path d="M{M} {M} V{b} H{r}" fill="none" stroke="black"/>"#,
            b = H - M,
            r = W - M
        );
        for k in 0..=4 {
            let v = y_max * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{y:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#,
                x = M - 4.0,
                y = py(v) + 3.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" font-size="12" text-anchor="middle">prediction time [s]</text>"#,
            x = W / 2.0,
            y = H - 12.0
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{y}" font-size="12" transform="rotate(-90 14 {y})" text-anchor="middle">MSE</text>"#,
            y = H / 2.0
        );
        for (k, name) in self.predictors().iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let rows: Vec<&MetricsRow> = self.rows.iter().filter(|r| &r.predictor == name).collect();
            let upper: Vec<String> = rows
                .iter()
                .map(|r| format!("{:.2},{:.2}", px(r.step), py(r.mean_mse + r.stderr)))
                .collect();
            let lower: Vec<String> = rows
                .iter()
                .rev()
                .map(|r| format!("{:.2},{:.2}", px(r.step), py((r.mean_mse - r.stderr).max(0.0))))
                .collect();
            let _ = writeln!(
                s,
                r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                upper.join(" "),
                lower.join(" ")
            );
            let line: Vec<String> = rows
                .iter()
                .map(|r| format!("{:.2},{:.2}", px(r.step), py(r.mean_mse)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{y}" font-size="12" fill="{color}">{name}</text>"#,
                x = W - M - 80.0,
                y = M + 16.0 * (k as f64 + 1.0)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Sample mean and standard error of the mean; summation runs over sorted
/// values so the result does not depend on input order.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    let var = dev.iter().sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Scores every predictor on every sequence: frames `1..=5` seed the
/// predictors, frames `6..=20` are the targets.
pub fn evaluate(
    sequences: &[EvalSequence],
    predictors: &[PredictorKind],
    cfg: &EvalConfig,
) -> Result<MetricsTable, PredictError> {
    for (i, s) in sequences.iter().enumerate() {
        check_length(s, i)?;
    }
    let mut table = MetricsTable::default();
    for &kind in predictors {
        let preds = sequences
            .iter()
            .enumerate()
            .map(|(i, seq)| predict(seq, i, kind, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        table.rows.extend(score_predictions(sequences, kind.name(), &preds, cfg.dt)?);
    }
    Ok(table)
}

/// Per-step rows for one predictor given its `HORIZON` predictions per
/// sequence, e.g. grids produced outside this crate.
pub fn score_predictions(
    sequences: &[EvalSequence],
    name: &str,
    predictions: &[Vec<Vec<f64>>],
    dt: f64,
) -> Result<Vec<MetricsRow>, PredictError> {
    if predictions.len() != sequences.len() {
        return Err(PredictError::Format(format!(
            "{name}: predictions for {} sequences, expected {}",
            predictions.len(),
            sequences.len()
        )));
    }
    let mut per_step = vec![Vec::with_capacity(sequences.len()); HORIZON];
    for (i, (seq, preds)) in sequences.iter().zip(predictions).enumerate() {
        check_length(seq, i)?;
        if preds.len() != HORIZON {
            return Err(PredictError::BadSequenceLength {
                index: i,
                len: preds.len(),
                expected: HORIZON,
            });
        }
        for (k, pred) in preds.iter().enumerate() {
            let target = &seq.occupancy[SEED_FRAMES + k];
            let err = match &seq.region {
                Some(masks) => masked_mse(pred, target, &masks[k])?,
                None => Some(mse(pred, target)?),
            };
            if let Some(e) = err {
                per_step[k].push(e);
            }
        }
    }
    Ok(per_step
        .iter()
        .enumerate()
        .map(|(k, vals)| {
            let (mean_mse, stderr) = mean_stderr(vals);
            MetricsRow {
                step: k + 1,
                seconds: (k + 1) as f64 * dt,
                predictor: name.to_string(),
                mean_mse,
                stderr,
                count: vals.len(),
            }
        })
        .collect())
}

/// Metadata line at the top of an exported sequence tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportHeader {
    pub count: usize,
    pub seq_len: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub dtype: String,
    pub seed: u64,
}

/// Writes `[sequence][time][channel][row][column]` little-endian `f32`
/// data after a one-line JSON header.
pub fn export_sequences(sequences: &[Vec<DogmaFrame>], seed: u64, path: &Path) -> Result<ExportHeader, PredictError> {
    let first = sequences
        .first()
        .and_then(|s| s.first())
        .ok_or_else(|| PredictError::Format("nothing to export".into()))?;
    let header = ExportHeader {
        count: sequences.len(),
        seq_len: sequences[0].len(),
        channels: first.channels.len(),
        height: first.spec.cells_per_side,
        width: first.spec.cells_per_side,
        dtype: "f32-le".into(),
        seed,
    };
    for (i, s) in sequences.iter().enumerate() {
        if s.len() != header.seq_len {
            return Err(PredictError::BadSequenceLength {
                index: i,
                len: s.len(),
                expected: header.seq_len,
            });
        }
        if s.iter().any(|f| f.channels.len() != header.channels || f.spec != first.spec) {
            return Err(PredictError::Format(format!("sequence {i} has a different channel count or grid")));
        }
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let line = serde_json::to_string(&header).expect("header serializes");
    writeln!(w, "{line}").map_err(io_err(path))?;
    for frame in sequences.iter().flatten() {
        for plane in &frame.channels {
            for &v in plane {
                w.write_all(&(v as f32).to_le_bytes()).map_err(io_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(header)
}

/// Reads an export back as its header and flat tensor.
pub fn import_sequences(path: &Path) -> Result<(ExportHeader, Vec<f32>), PredictError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line).map_err(io_err(path))?;
    let header: ExportHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| PredictError::Format(format!("{}: {e}", path.display())))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io_err(path))?;
    let expected = header.count * header.seq_len * header.channels * header.height * header.width * 4;
    if bytes.len() != expected {
        return Err(PredictError::Format(format!(
            "{}: payload is {} bytes, header implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, data))
}
