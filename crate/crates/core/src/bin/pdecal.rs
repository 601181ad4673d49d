//! Campaign CLI: reference solves, calibration campaigns, residual-band
//! validation, and the resolution / model-quality studies.
//!
//! Exit codes: 0 success or accepted prediction, 1 internal error,
//! 2 usage or I/O error, 3 rejected prediction.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdecal::campaign::{
    build_ic, build_program, parse_config, rederive_coverage, run_campaign,
    run_discretisation_study, run_model_quality_study, validate_single, BandMode, CampaignConfig,
};
use pdecal::error::{Error, Result};

#[derive(Parser)]
#[command(name = "pdecal", version, about = "Calibrated physics-residual bounds for PDE surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the reference solver for one sampled initial condition.
    Solve {
        /// Campaign config file (sectioned key = value text).
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated IC parameters in testbed order.
        #[arg(long)]
        params: String,
        /// Output field dump path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full campaign: sample, predict, score, calibrate, report.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Artifact output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-derive the coverage CSV from a previous run's score dumps.
    CoverageCurve {
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory of a previous calibrate run.
        #[arg(long)]
        artifacts: PathBuf,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check one saved prediction against calibrated residual bands.
    Validate {
        /// Artifact directory of a previous calibrate run.
        #[arg(long)]
        artifacts: PathBuf,
        /// Field dump of the prediction rollout.
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Use the whole-domain joint band instead of per-cell bands.
        #[arg(long)]
        joint: bool,
    },
    /// Repeat the campaign across spatial resolutions.
    StudyDiscretisation {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated cell counts, e.g. 100,400.
        #[arg(long)]
        levels: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare campaigns for a good and a bad perturbed oracle.
    StudyModelQuality {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated noise amplitudes: good,bad.
        #[arg(long)]
        eps: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the residual program of the configured testbed.
    DescribeResidual {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<CampaignConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut config = parse_config(&text)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| Error::Parse(format!("bad {what} value '{t}'")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve { config, params, out } => {
            let cfg = load_config(&config, None)?;
            let params: Vec<f64> = parse_list(&params, "parameter")?;
            let ic = build_ic(&cfg.solver, &params)?;
            let rollout = cfg.solver.solve(&ic)?;
            pdecal::dump::save_field(&out, &rollout)?;
            println!("wrote rollout {} to {}", rollout.grid().shape().iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x"), out.display());
            Ok(0)
        }
        Command::Calibrate { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let outcome = run_campaign(&cfg, &out)?;
            for row in &outcome.report.rows {
                println!(
                    "alpha {:.3}: marginal {:.4} joint {:.4}",
                    row.alpha, row.marginal_coverage, row.joint_coverage
                );
            }
            println!("artifacts in {}", outcome.out_dir.display());
            Ok(0)
        }
        Command::CoverageCurve { config, artifacts, out } => {
            let cfg = load_config(&config, None)?;
            let report = rederive_coverage(&artifacts, &cfg.alphas)?;
            match out {
                Some(path) => report.save_csv(&path)?,
                None => report.write_csv(std::io::stdout().lock())?,
            }
            Ok(0)
        }
        Command::Validate { artifacts, prediction, alpha, joint } => {
            let mode = if joint { BandMode::Joint } else { BandMode::Marginal };
            let outcome = validate_single(&artifacts, &prediction, alpha, mode)?;
            println!(
                "{}: {} violating cells, worst residual at {:.3} of the band",
                if outcome.accepted { "accept" } else { "reject" },
                outcome.violations,
                outcome.worst_ratio
            );
            Ok(if outcome.accepted { 0 } else { 3 })
        }
        Command::StudyDiscretisation { config, levels, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let levels: Vec<usize> = parse_list(&levels, "level")?;
            let rows = run_discretisation_study(&cfg, &levels, &out)?;
            for r in &rows {
                println!(
                    "{}: mean width {:.6e}, marginal coverage {:.4}",
                    r.label, r.mean_width, r.marginal_coverage
                );
            }
            Ok(0)
        }
        Command::StudyModelQuality { config, eps, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let eps: Vec<f64> = parse_list(&eps, "epsilon")?;
            if eps.len() != 2 {
                return Err(Error::Config("--eps wants exactly two values: good,bad".into()));
            }
            let rows = run_model_quality_study(&cfg, eps[0], eps[1], &out)?;
            for r in &rows {
                println!(
                    "{}: mean width {:.6e}, marginal coverage {:.4}",
                    r.label, r.mean_width, r.marginal_coverage
                );
            }
            Ok(0)
        }
        Command::DescribeResidual { config } => {
            let cfg = load_config(&config, None)?;
            let program = build_program(&cfg.solver)?;
            print!("{}", program.describe());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Io(_) | Error::Parse(_) | Error::Config(_) | Error::MissingField(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
