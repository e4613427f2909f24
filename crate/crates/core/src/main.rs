use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use captrack::fitting::RansacParams;
use captrack::harness::{
    cmd_eval, cmd_fit, cmd_generate, cmd_robustness, cmd_track, expand_inputs, fit_output_json, parse_rotation,
    parse_vec3, Estimator, ExperimentConfig, FitRequest, ROBUSTNESS_SETTINGS,
};
use captrack::Error;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  configuration or invalid input
  3  I/O or file parse error
  4  degenerate estimation or fatal tracking failure

Set CAPTRACK_LOG (error|warn|info|debug|trace) to control logging.";

#[derive(Parser)]
#[command(name = "captrack", version, about = "Category-level 9DoF pose tracking toolkit", after_help = EXIT_CODES)]
struct Cli {
    /// Experiment configuration (JSON). Flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Umeyama,
    GivenRot,
    Symmetric,
    Ransac,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write JSON-lines files plus a manifest.
    Generate,
    /// Track trajectory files (or directories of them).
    Track {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score prediction files against trajectory files.
    Eval {
        #[arg(long, required = true, num_args = 1..)]
        pred: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        gt: Vec<PathBuf>,
    },
    /// Run the Orig / Init×m / All×m robustness sweep.
    Robustness,
    /// Fit a similarity transform to a correspondence file.
    Fit {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "umeyama")]
        estimator: EstimatorArg,
        /// Shorthand for --estimator ransac.
        #[arg(long)]
        ransac: bool,
        #[arg(long)]
        ransac_iters: Option<usize>,
        /// Inlier threshold, meters.
        #[arg(long)]
        ransac_thresh: Option<f64>,
        /// Known rotation, 9 comma-separated row-major entries.
        #[arg(long, allow_hyphen_values = true)]
        rotation: Option<String>,
        /// Symmetry axis in normalized coordinates.
        #[arg(long, default_value = "0,1,0", allow_hyphen_values = true)]
        axis: String,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::UnknownTemplate(_) => 2,
        Error::Io { .. } | Error::Parse { .. } => 3,
        Error::Degenerate(_)
        | Error::NonPositiveScale(_)
        | Error::NoConsensus { .. }
        | Error::LostTrack(_)
        | Error::OutOfLimits { .. } => 4,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Generate => {
            let m = cmd_generate(&cfg)?;
            println!("wrote {} trajectories to {}", m.trajectories.len(), cfg.out.display());
        }
        Command::Track { inputs } => {
            let files = expand_inputs(inputs, ".jsonl")?;
            for p in cmd_track(&cfg, &files)? {
                println!("{}", p.display());
            }
        }
        Command::Eval { pred, gt } => {
            let pred = expand_inputs(pred, ".pred.jsonl")?;
            let gt = expand_inputs(gt, ".jsonl")?;
            let row = cmd_eval(&cfg, &pred, &gt)?;
            println!("{}\n{}", captrack::eval::SummaryRow::CSV_HEADER, row.csv_line());
        }
        Command::Robustness => {
            let rows = cmd_robustness(&cfg)?;
            println!("{}", captrack::eval::SummaryRow::CSV_HEADER);
            for (row, _) in rows.iter().zip(ROBUSTNESS_SETTINGS) {
                println!("{}", row.csv_line());
            }
        }
        Command::Fit {
            file,
            estimator,
            ransac,
            ransac_iters,
            ransac_thresh,
            rotation,
            axis,
        } => {
            let estimator = match (ransac, estimator) {
                (true, _) | (_, EstimatorArg::Ransac) => Estimator::Ransac,
                (_, EstimatorArg::Umeyama) => Estimator::Umeyama,
                (_, EstimatorArg::GivenRot) => Estimator::GivenRot,
                (_, EstimatorArg::Symmetric) => Estimator::Symmetric,
            };
            let rotation = rotation.as_deref().map(parse_rotation).transpose()?;
            let base = match rotation {
                Some(_) => RansacParams::scale_translation(),
                None => RansacParams::full_sim3(),
            };
            let req = FitRequest {
                estimator,
                rotation,
                axis: parse_vec3(axis)?.normalize(),
                ransac: RansacParams {
                    iterations: ransac_iters.unwrap_or(base.iterations),
                    inlier_threshold: ransac_thresh.unwrap_or(base.inlier_threshold),
                    seed: cfg.seed,
                    ..base
                },
                scale_formula: cfg.tracker.scale_formula,
            };
            let out = cli.out.as_deref().map(Path::to_path_buf);
            let result = cmd_fit(file, &req, out.as_deref())?;
            print!("{}", fit_output_json(&result)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CAPTRACK_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
