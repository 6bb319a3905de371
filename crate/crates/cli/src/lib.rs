//! Subcommands of the `dogma` tool, callable as library functions.
//!
//! Every command writes only below its output directory and leaves a
//! `manifest.json` there recording the config hash, seed and tool version.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

mod eval;
mod pipeline;
mod simulate;

pub use eval::{cmd_eval, cmd_export, cmd_predict, load_run, EvalOptions, LoadedRun, OutputFormat, PredictOptions};
pub use pipeline::{cmd_pipeline, PipelineOptions};
pub use simulate::{cmd_simulate, SceneSource, SimulateOptions};

pub const TOOL_NAME: &str = "dogma";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for usage and config problems, 3 for bad or unreadable data.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => EXIT_USAGE,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
        }
    }

    pub(crate) fn config(path: &Path, message: impl ToString) -> Self {
        CliError::Config {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Run record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the resolved config JSON with input/output paths removed.
    pub config_sha256: String,
    pub seed: u64,
    pub frame_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells_per_side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side_length: Option<f64>,
}

impl Manifest {
    pub(crate) fn new(command: &str, config_json: &str, seed: u64, frame_count: usize) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            seed,
            frame_count,
            mode: None,
            dt: None,
            cells_per_side: None,
            side_length: None,
        }
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub(crate) fn save(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_file(&dir.join("manifest.json"), text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `DIR/NNNNNNNNNN.ext`, the frame naming used for every per-frame artifact.
pub fn frame_path(dir: &Path, frame: u64, ext: &str) -> PathBuf {
    dir.join(format!("{frame:010}.{ext}"))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(CliError::io(path))
}

/// Reads a config file; a missing or unreadable file is a config error.
pub(crate) fn read_config(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(path, e))
}

/// Files `NNNNNNNNNN.ext` in `dir`, sorted by frame index.
pub(crate) fn list_frames(dir: &Path, ext: &str) -> Result<Vec<(u64, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if stem.len() == 10 && stem.bytes().all(|b| b.is_ascii_digit()) {
            out.push((stem.parse().expect("ten digits"), path));
        }
    }
    out.sort();
    Ok(out)
}
