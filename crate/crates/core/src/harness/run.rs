//! Runs every (policy kind, seed) cell of an experiment.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::PolicyKind;
use crate::error::{Error, Result};
use crate::harness::checkpoint::Checkpoint;
use crate::harness::config::ExperimentConfig;
use crate::harness::evaluate::{policy_for, rollout_episode};
use crate::harness::plot;
use crate::metrics::{write_csv, EpisodeRecord, MetricsWriter};
use crate::rl::{train, TrainerConfig};
use crate::seeding::episode_seed;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLOT_SVG: &str = "aoi_convergence.svg";
pub const PLOT_CSV: &str = "aoi_convergence.csv";
pub const CODE_VERSION: &str = concat!("aoi-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub policy: PolicyKind,
    pub seed: u64,
    /// Relative to the output directory.
    pub metrics: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

/// Written before any cell runs; `config_toml` alone reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config: ExperimentConfig,
    pub config_toml: String,
    pub cells: Vec<CellEntry>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub policy: PolicyKind,
    pub seed: u64,
    pub episodes: usize,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub cells: Vec<CellResult>,
    pub plot: Option<PathBuf>,
}

pub fn cell_dir(kind: PolicyKind, seed: u64) -> PathBuf {
    PathBuf::from(kind.name()).join(format!("seed_{seed}"))
}

/// Runs all cells in order. Each finished episode is flushed to disk as it
/// completes, so a failing cell leaves every earlier record in place.
pub fn run_experiment(cfg: &ExperimentConfig, log: &mut dyn FnMut(&str)) -> Result<RunSummary> {
    cfg.validate()?;
    let root = cfg.resolved_output_dir();
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;

    let cells: Vec<CellEntry> = cfg
        .policy_kinds
        .iter()
        .flat_map(|&policy| {
            cfg.seeds.iter().map(move |&seed| {
                let dir = cell_dir(policy, seed);
                CellEntry {
                    policy,
                    seed,
                    metrics: dir.join("metrics.jsonl"),
                    checkpoint: policy.is_learned().then(|| dir.join("checkpoint")),
                }
            })
        })
        .collect();
    let manifest = RunManifest {
        code_version: CODE_VERSION.to_string(),
        config: cfg.clone(),
        config_toml: cfg.to_toml_string(),
        cells: cells.clone(),
    };
    let manifest_path = root.join(MANIFEST_FILE);
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&manifest_path, e))?;

    let mut results = Vec::new();
    for cell in &cells {
        let dir = root.join(cell_dir(cell.policy, cell.seed));
        log(&format!("{} seed {}: starting", cell.policy, cell.seed));
        let records = run_cell(cfg, cell, &root, log).map_err(|e| annotate(e, cell.policy, cell.seed))?;
        write_csv(&records, &dir.join("metrics.csv"))?;
        if let Some(last) = records.last() {
            log(&format!(
                "{} seed {}: {} episodes, last episode AoI {:.3}",
                cell.policy,
                cell.seed,
                records.len(),
                last.episode_avg_aoi
            ));
        }
        results.push(CellResult {
            policy: cell.policy,
            seed: cell.seed,
            episodes: records.len(),
            dir,
        });
    }

    let plot = if cfg.plot {
        let inputs: Vec<PathBuf> = cells.iter().map(|c| root.join(&c.metrics)).collect();
        let svg = root.join(PLOT_SVG);
        plot::plot_files(
            &inputs,
            &svg,
            &root.join(PLOT_CSV),
            cfg.plot_window,
            plot::XAxis::Episodes,
        )?;
        Some(svg)
    } else {
        None
    };
    Ok(RunSummary {
        output_dir: root,
        cells: results,
        plot,
    })
}

fn annotate(e: Error, policy: PolicyKind, seed: u64) -> Error {
    match e {
        Error::TrainingFault { step, reason } => Error::TrainingFault {
            step,
            reason: format!("{policy} seed {seed}: {reason}"),
        },
        other => other,
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    cell: &CellEntry,
    root: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<Vec<EpisodeRecord>> {
    let dir = root.join(cell_dir(cell.policy, cell.seed));
    let mut writer = MetricsWriter::create(&dir)?;
    let trainer = TrainerConfig {
        seed: cell.seed,
        ..cfg.trainer.clone()
    };
    let mut sink = |r: &EpisodeRecord| -> Result<()> {
        writer.append(r)?;
        if (r.episode + 1).is_multiple_of(100) {
            log(&format!(
                "{} seed {}: episode {} AoI {:.3}",
                r.policy,
                r.seed,
                r.episode + 1,
                r.episode_avg_aoi
            ));
        }
        Ok(())
    };
    if cell.policy.is_learned() {
        let out = train(&cfg.env, cell.policy, &trainer, &mut sink)?;
        let ck = cell.checkpoint.as_ref().expect("learned cells have a checkpoint path");
        Checkpoint::from_agent(cell.policy, &cfg.env, &out.agent).save(&root.join(ck))?;
        Ok(out.metrics)
    } else {
        run_fixed_policy(cfg, cell.policy, cell.seed, &mut sink)
    }
}

/// Rolls a baseline out over the same layouts a learned kind trains on, for
/// as many whole episodes as the training budget allows.
pub fn run_fixed_policy(
    cfg: &ExperimentConfig,
    kind: PolicyKind,
    seed: u64,
    sink: &mut dyn FnMut(&EpisodeRecord) -> Result<()>,
) -> Result<Vec<EpisodeRecord>> {
    let policy = policy_for(kind, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = cfg.env.episode_slots as u64;
    let episodes = cfg.trainer.total_env_steps / slots;
    let started = std::time::Instant::now();
    let mut records = Vec::with_capacity(episodes as usize);
    for e in 0..episodes {
        let stats = rollout_episode(&cfg.env, policy.as_ref(), episode_seed(cfg.env.seed, seed, e), &mut rng)?;
        let mut r = stats.finish(kind, seed, e, (e + 1) * slots);
        r.wall_clock_s = started.elapsed().as_secs_f64();
        sink(&r)?;
        records.push(r);
    }
    Ok(records)
}
