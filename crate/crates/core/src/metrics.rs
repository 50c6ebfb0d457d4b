//! Per-episode metrics, stored as one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::PolicyKind;
use crate::env::StepOutcome;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub policy: PolicyKind,
    pub seed: u64,
    pub episode: u64,
    /// Environment steps taken so far in the run, this episode included.
    pub env_steps: u64,
    /// Slot-average of the clipped mean AoI (what the reward sees).
    pub mean_aoi_per_slot: f64,
    /// Slot-average of the raw mean AoI.
    pub episode_avg_aoi: f64,
    #[serde(rename = "return")]
    pub episode_return: f64,
    /// Mean critic loss over this episode's updates (0 when none ran).
    pub critic_loss: f64,
    /// Mean actor loss over this episode's updates (0 when none ran).
    pub actor_loss: f64,
    pub uploads: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_avg_aoi: Option<f64>,
    /// Kept out of the metrics file so reruns stay byte-identical; written
    /// to the sibling timing file instead.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl EpisodeRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.mean_aoi_per_slot,
            self.episode_avg_aoi,
            self.episode_return,
            self.critic_loss,
            self.actor_loss,
        ]
        .iter()
        .all(|v| v.is_finite())
            && self.eval_avg_aoi.is_none_or(f64::is_finite)
    }
}

/// Running sums for one episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodeStats {
    slots: u64,
    clipped_aoi_sum: f64,
    aoi_sum: f64,
    return_sum: f64,
    uploads: u64,
    critic_loss_sum: f64,
    critic_updates: u64,
    actor_loss_sum: f64,
    actor_updates: u64,
}

impl EpisodeStats {
    pub fn record_step(&mut self, out: &StepOutcome) {
        self.slots += 1;
        self.clipped_aoi_sum += out.info.mean_clipped_aoi;
        self.aoi_sum += out.info.mean_aoi;
        self.return_sum += out.reward;
        self.uploads += out.info.upload_success as u64;
    }

    pub fn record_critic_loss(&mut self, loss: f64) {
        self.critic_loss_sum += loss;
        self.critic_updates += 1;
    }

    pub fn record_actor_loss(&mut self, loss: f64) {
        self.actor_loss_sum += loss;
        self.actor_updates += 1;
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn uploads(&self) -> u64 {
        self.uploads
    }

    pub fn episode_avg_aoi(&self) -> f64 {
        self.aoi_sum / self.slots.max(1) as f64
    }

    pub fn finish(&self, policy: PolicyKind, seed: u64, episode: u64, env_steps: u64) -> EpisodeRecord {
        let per = |s: f64, n: u64| if n == 0 { 0.0 } else { s / n as f64 };
        EpisodeRecord {
            policy,
            seed,
            episode,
            env_steps,
            mean_aoi_per_slot: per(self.clipped_aoi_sum, self.slots),
            episode_avg_aoi: per(self.aoi_sum, self.slots),
            episode_return: self.return_sum,
            critic_loss: per(self.critic_loss_sum, self.critic_updates),
            actor_loss: per(self.actor_loss_sum, self.actor_updates),
            uploads: self.uploads,
            eval_avg_aoi: None,
            wall_clock_s: 0.0,
        }
    }
}

#[derive(Serialize)]
struct TimingLine {
    episode: u64,
    wall_clock_s: f64,
}

/// Appends records to `metrics.jsonl` and wall-clock times to `timing.jsonl`,
/// flushing after every line.
pub struct MetricsWriter {
    path: PathBuf,
    metrics: BufWriter<File>,
    timing_path: PathBuf,
    timing: BufWriter<File>,
}

impl MetricsWriter {
    /// Truncates any previous files in `dir`.
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("metrics.jsonl");
        let timing_path = dir.join("timing.jsonl");
        let open = |p: &Path| {
            OpenOptions::new()
                .create(true)
                .write(true)
                .truncate(true)
                .open(p)
                .map_err(|e| Error::io(p, e))
        };
        Ok(Self {
            metrics: BufWriter::new(open(&path)?),
            timing: BufWriter::new(open(&timing_path)?),
            path,
            timing_path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &EpisodeRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(self.metrics, "{line}")
            .and_then(|_| self.metrics.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        let t = serde_json::to_string(&TimingLine {
            episode: record.episode,
            wall_clock_s: record.wall_clock_s,
        })
        .expect("timing serializes");
        writeln!(self.timing, "{t}")
            .and_then(|_| self.timing.flush())
            .map_err(|e| Error::io(&self.timing_path, e))
    }
}

/// Reads a metrics file. A trailing line without a newline that fails to
/// parse (an interrupted write) is dropped.
pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<EpisodeRecord>(text) {
            Ok(r) => out.push(r),
            Err(_) if !complete => break,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    reason: format!("line {lineno}: {e}"),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_csv(records: &[EpisodeRecord], path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = String::from(
        "policy,seed,episode,env_steps,mean_aoi_per_slot,episode_avg_aoi,return,critic_loss,actor_loss,uploads,eval_avg_aoi\n",
    );
    for r in records {
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.policy,
            r.seed,
            r.episode,
            r.env_steps,
            r.mean_aoi_per_slot,
            r.episode_avg_aoi,
            r.episode_return,
            r.critic_loss,
            r.actor_loss,
            r.uploads,
            r.eval_avg_aoi.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    f.write_all(body.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}
