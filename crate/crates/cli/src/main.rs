use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dogma::predict::{PredictorKind, StaticParticles};
use dogma::DogmaMode;
use dogma_cli::{
    cmd_eval, cmd_export, cmd_pipeline, cmd_predict, cmd_simulate, CliError, EvalOptions, OutputFormat,
    PipelineOptions, PredictOptions, SceneSource, SimulateOptions, EXIT_OK,
};

#[derive(Parser)]
#[command(name = "dogma", version, about = "Dynamic occupancy grid maps from LiDAR scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Dst,
    Prob,
}

#[derive(Clone, Copy, ValueEnum)]
enum Predictor {
    Static,
    Pf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum StaticPolicy {
    Freeze,
    Drop,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene: point clouds, poses, labels and truth grids.
    Simulate {
        /// Scene config JSON.
        #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
        config: Option<PathBuf>,
        /// Built-in scene name (static_corridor, crossing_vehicle, ...).
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of frames, overriding the scene config.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Build DOGMa frames from a directory of point clouds and poses.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Write baseline predictions as EGRIDs.
    Predict {
        /// Pipeline output directory; repeat for several runs.
        #[arg(long, required = true)]
        frames: Vec<PathBuf>,
        #[arg(long, value_enum, required = true)]
        predictor: Vec<Predictor>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "freeze")]
        static_particles: StaticPolicy,
    },
    /// Score predictors against target grids.
    Eval {
        /// Pipeline output directory; repeat for several runs.
        #[arg(long, required = true)]
        frames: Vec<PathBuf>,
        /// Target grid directory per input (defaults to the DOGMa occupancy).
        #[arg(long)]
        targets: Vec<PathBuf>,
        /// Directory of externally produced predictions.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, value_enum)]
        predictor: Vec<Predictor>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Vec<Format>,
        #[arg(long, value_enum, default_value = "freeze")]
        static_particles: StaticPolicy,
    },
    /// Export 20-frame sequences as a raw f32 tensor for external models.
    Export {
        #[arg(long, required = true)]
        frames: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn kinds(ps: &[Predictor]) -> Vec<PredictorKind> {
    ps.iter()
        .map(|p| match p {
            Predictor::Static => PredictorKind::Static,
            Predictor::Pf => PredictorKind::Pf,
        })
        .collect()
}

fn policy(p: StaticPolicy) -> StaticParticles {
    match p {
        StaticPolicy::Freeze => StaticParticles::Freeze,
        StaticPolicy::Drop => StaticParticles::Drop,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            scene,
            out,
            seed,
            count,
        } => {
            let source = match (config, scene) {
                (Some(p), _) => SceneSource::Path(p),
                (None, Some(name)) => SceneSource::Standard(name),
                (None, None) => unreachable!("clap requires one of --config and --scene"),
            };
            let mut opts = SimulateOptions::new(source, out);
            opts.seed = seed;
            opts.frame_count = count;
            let n = cmd_simulate(&opts)?;
            println!("simulated {n} frames");
        }
        Command::Pipeline {
            config,
            frames,
            out,
            seed,
            mode,
        } => {
            let n = cmd_pipeline(&PipelineOptions {
                config,
                frames_dir: frames,
                out_dir: out,
                seed,
                mode: mode.map(|m| match m {
                    Mode::Dst => DogmaMode::Dst,
                    Mode::Prob => DogmaMode::Probabilistic,
                }),
            })?;
            println!("processed {n} frames");
        }
        Command::Predict {
            frames,
            predictor,
            out,
            static_particles,
        } => {
            let n = cmd_predict(&PredictOptions {
                runs: frames,
                predictors: kinds(&predictor),
                out_dir: out,
                static_particles: policy(static_particles),
            })?;
            println!("predicted {n} sequences");
        }
        Command::Eval {
            frames,
            targets,
            predictions,
            predictor,
            out,
            format,
            static_particles,
        } => {
            let mut opts = EvalOptions::new(frames, out);
            opts.targets = targets;
            opts.predictions = predictions;
            opts.predictors = kinds(&predictor);
            opts.static_particles = policy(static_particles);
            opts.formats = format
                .iter()
                .map(|f| match f {
                    Format::Csv => OutputFormat::Csv,
                    Format::Svg => OutputFormat::Svg,
                })
                .collect();
            let table = cmd_eval(&opts)?;
            print!("{}", table.to_csv());
        }
        Command::Export { frames, out, seed } => {
            let n = cmd_export(&frames, &out, seed)?;
            println!("exported {n} sequences");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
