use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use aoi_core::baselines::PolicyKind;
use aoi_core::harness::{
    evaluate_baseline, evaluate_checkpoint, plot, run_experiment, Checkpoint, ExperimentConfig, OUTPUT_ROOT_ENV,
};

/// UAV-assisted wireless-powered IoT: train, plot and evaluate AoI policies.
#[derive(Parser)]
#[command(name = "aoi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy kind, seed) cell of an experiment config.
    #[command(after_help = format!("Relative output directories are placed under ${OUTPUT_ROOT_ENV} when it is set."))]
    Run {
        /// TOML config, or a run's manifest.json to repeat that run.
        #[arg(long)]
        config: PathBuf,
        /// Replace a config value, e.g. `trainer.total_env_steps=20000`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Aggregate metrics files into a convergence plot.
    Plot {
        /// Glob of metrics.jsonl files.
        #[arg(long = "in", value_name = "GLOB")]
        input: String,
        /// SVG to write; the aggregated curves go next to it as CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = aoi_core::harness::config::DEFAULT_PLOT_WINDOW)]
        window: usize,
        /// Plot against environment steps instead of episodes.
        #[arg(long)]
        env_steps: bool,
    },
    /// Roll out a policy without exploration noise.
    Evaluate {
        /// Checkpoint directory written by `run`.
        #[arg(long, conflicts_with = "policy", required_unless_present = "policy")]
        checkpoint: Option<PathBuf>,
        /// A fixed baseline (`random`, `greedy_max_aoi`) instead of a checkpoint.
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Experiment config supplying the environment for `--policy`.
        #[arg(long, requires = "policy")]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: u64,
        #[arg(long)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let mut report = String::new();
    match Cli::parse().command {
        Command::Run { config, overrides } => {
            let cfg =
                ExperimentConfig::load(&config, &overrides).with_context(|| format!("loading {}", config.display()))?;
            let summary = run_experiment(&cfg, &mut |line| eprintln!("{line}"))?;
            writeln!(report, "results in {}", summary.output_dir.display())?;
            if let Some(p) = summary.plot {
                writeln!(report, "plot: {}", p.display())?;
            }
        }
        Command::Plot {
            input,
            out,
            window,
            env_steps,
        } => {
            let files = plot::expand_glob(&input)?;
            let csv = out.with_extension("csv");
            let axis = if env_steps {
                plot::XAxis::EnvSteps
            } else {
                plot::XAxis::Episodes
            };
            let curves = plot::plot_files(&files, &out, &csv, window, axis)?;
            for c in &curves {
                let last = c.mean.last().copied().unwrap_or(f64::NAN);
                writeln!(
                    report,
                    "{}: {} seeds, {} episodes, final mean AoI {last:.3}",
                    c.policy,
                    c.seeds,
                    c.mean.len()
                )?;
            }
            writeln!(report, "wrote {} and {}", out.display(), csv.display())?;
        }
        Command::Evaluate {
            checkpoint,
            policy,
            config,
            episodes,
            seed,
        } => {
            let summary = match (checkpoint, policy) {
                (Some(path), _) => {
                    let ck = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
                    evaluate_checkpoint(&ck, episodes, seed)?
                }
                (None, Some(kind)) => {
                    let env = match config {
                        Some(p) => ExperimentConfig::load(&p, &[])?.env,
                        None => Default::default(),
                    };
                    evaluate_baseline(kind, &env, episodes, seed)?
                }
                (None, None) => bail!("pass --checkpoint or --policy"),
            };
            writeln!(report, "{}", serde_json::to_string_pretty(&summary)?)?;
        }
    }
    // A closed stdout (e.g. piped into `head`) is not an error.
    let _ = std::io::stdout().write_all(report.as_bytes());
    Ok(())
}
