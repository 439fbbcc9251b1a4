//! CSV and JSON writers. Every CSV starts with `#` comment lines holding
//! the resolved configuration and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use vlc_mvr::sim::RunOutput;
use vlc_mvr::ScenarioConfig;

use crate::config::{digest, to_toml};

/// Writes the comment header and returns a CSV writer positioned after it.
pub fn csv_with_header(path: &Path, cfg: Option<&ScenarioConfig>, extra: &[String]) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    if let Some(cfg) = cfg {
        writeln!(w, "# seed = {}", cfg.seed)?;
        writeln!(w, "# config_digest = {}", digest(cfg))?;
        for line in to_toml(cfg).lines() {
            writeln!(w, "# {line}")?;
        }
    }
    for line in extra {
        writeln!(w, "# {line}")?;
    }
    Ok(csv::Writer::from_writer(w))
}

pub fn write_rows<T: Serialize>(path: &Path, cfg: Option<&ScenarioConfig>, extra: &[String], rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv_with_header(path, cfg, extra)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    time_s: f64,
    user_id: usize,
    x_m: f64,
    y_m: f64,
}

pub fn write_trajectory(path: &Path, cfg: &ScenarioConfig, out: &RunOutput) -> anyhow::Result<()> {
    let rows: Vec<TrajectoryRow> = out
        .trajectory
        .iter()
        .enumerate()
        .flat_map(|(k, positions)| {
            positions.iter().enumerate().map(move |(u, p)| TrajectoryRow {
                time_s: k as f64 * cfg.service_time_s,
                user_id: u,
                x_m: p.x,
                y_m: p.y,
            })
        })
        .collect();
    write_rows(path, Some(cfg), &[], &rows)
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub total_objective: f64,
    pub mean_throughput_bps: f64,
    pub handovers: usize,
    pub steps: usize,
    pub config_digest: String,
    pub seed: u64,
    /// Resolved configuration, since JSON has no comments.
    pub config: ScenarioConfig,
}

impl Summary {
    pub fn new(cfg: &ScenarioConfig, out: &RunOutput) -> Self {
        Self {
            total_objective: out.total_objective(),
            mean_throughput_bps: out.mean_throughput(),
            handovers: out.handovers(),
            steps: out.records.len(),
            config_digest: digest(cfg),
            seed: cfg.seed,
            config: cfg.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// SHA-256 over the columns of a run that do not depend on timing.
pub fn metrics_checksum(out: &RunOutput) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for r in &out.records {
        h.update(format!("{},{:e},{:e},{:e},{},{}\n", r.step, r.time_s, r.throughput_bps, r.objective, r.handovers, r.iterations));
    }
    hex::encode(h.finalize())
}
