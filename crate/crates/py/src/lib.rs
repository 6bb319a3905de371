//! Python bindings: evidential cell algebra, EGRID loading and simulated
//! DOGMa runs.

use std::path::PathBuf;

use dogma::egrid::Egrid;
use dogma::evidential::{self, MassCell};
use dogma::pipeline::{run_pipeline, simulate_run, PipelineConfig};
use dogma::predict;
use dogma::sim::standard_scene;
use dogma::DogmaMode;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn cell(m_occ: f64, m_free: f64) -> PyResult<MassCell> {
    MassCell::new(m_occ, m_free)
        .ok_or_else(|| PyValueError::new_err(format!("invalid masses ({m_occ}, {m_free})")))
}

/// Dempster combination of two `(m_occ, m_free)` cells.
#[pyfunction]
fn combine(a: (f64, f64), b: (f64, f64)) -> PyResult<(f64, f64)> {
    let c = evidential::combine(cell(a.0, a.1)?, cell(b.0, b.1)?)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((c.m_occ, c.m_free))
}

#[pyfunction]
fn discount(m_occ: f64, m_free: f64, alpha: f64) -> PyResult<(f64, f64)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(PyValueError::new_err(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let c = evidential::discount(cell(m_occ, m_free)?, alpha);
    Ok((c.m_occ, c.m_free))
}

/// Pignistic probability of occupancy.
#[pyfunction]
fn pignistic(m_occ: f64, m_free: f64) -> PyResult<f64> {
    Ok(evidential::pignistic(cell(m_occ, m_free)?))
}

#[pyfunction]
fn mse(pred: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
    predict::mse(&pred, &target).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Loads an EGRID file as `(height, width, channels, data)`, data flat and
/// channel-major.
#[pyfunction]
fn load_egrid(path: PathBuf) -> PyResult<(usize, usize, usize, Vec<f32>)> {
    let g = Egrid::load(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok((g.height, g.width, g.channels, g.data))
}

/// Simulates a built-in scene and runs the filter. Returns one list of
/// channel planes per frame.
#[pyfunction]
#[pyo3(signature = (scene, frames, seed=0, mode="prob", particle_count=None))]
fn run_scene(
    scene: &str,
    frames: usize,
    seed: u64,
    mode: &str,
    particle_count: Option<usize>,
) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let mut sc = standard_scene(scene).ok_or_else(|| PyValueError::new_err(format!("unknown scene {scene:?}")))?;
    sc.seed = seed;
    let mut cfg = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    cfg.mode = match mode {
        "prob" => DogmaMode::Probabilistic,
        "dst" => DogmaMode::Dst,
        other => return Err(PyValueError::new_err(format!("mode must be 'prob' or 'dst', got {other:?}"))),
    };
    if let Some(n) = particle_count {
        cfg.filter.particle_count = n;
    }
    let err = |e: &dyn std::fmt::Display| PyValueError::new_err(e.to_string());
    let run = simulate_run(&sc, frames, &cfg).map_err(|e| err(&e))?;
    let steps = run_pipeline(&run.measurements, &run.velocities, &cfg, false).map_err(|e| err(&e))?;
    Ok(steps.into_iter().map(|s| s.dogma.channels).collect())
}

#[pymodule]
fn pydogma(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(discount, m)?)?;
    m.add_function(wrap_pyfunction!(pignistic, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(load_egrid, m)?)?;
    m.add_function(wrap_pyfunction!(run_scene, m)?)?;
    Ok(())
}
