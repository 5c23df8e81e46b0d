//! Batch experiments over atom-number and cooperativity grids, with
//! deterministic seeding, streamed CSV/JSON output and power-law fits.

pub mod config;
pub mod experiments;
pub mod fit;
pub mod output;

use std::path::PathBuf;

use serde::Serialize;

use config::ExperimentConfig;
use experiments::Summary;
use output::RecordWriter;

/// Paths and summary of a finished run.
#[derive(Debug)]
pub struct RunOutcome {
    pub records_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Summary,
}

#[derive(Serialize)]
struct Metadata<'a> {
    experiment: config::ExperimentKind,
    config_hash: &'a str,
    started: String,
    finished: String,
    workers: usize,
    version: &'static str,
}

pub fn stem(kind: config::ExperimentKind) -> &'static str {
    use config::ExperimentKind::*;
    match kind {
        GroundScaling => "ground_scaling",
        TimeScaling => "time_scaling",
        NoiseRobustness => "noise_sweep",
        CooperativitySweep => "coop_sweep",
        SingleRun => "single_run",
    }
}

/// Runs `cfg` and writes `<stem>.csv|jsonl`, `summary.json` and
/// `metadata.json` into `cfg.output.dir`. Only the metadata file carries
/// wall-clock information, so reruns reproduce the other two byte for byte.
pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<RunOutcome> {
    let started = chrono::Utc::now();
    let workers = cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let dir = &cfg.output.dir;
    let (mut writer, records_path) = RecordWriter::create(dir, stem(cfg.experiment), cfg.output.format)?;
    log::info!("{:?}: writing {}", cfg.experiment, records_path.display());
    let summary = experiments::run_experiment(cfg, &pool, &mut |r| writer.write(r))?;
    drop(writer);
    let summary_path = dir.join("summary.json");
    output::write_json(&summary_path, &summary)?;
    let hash = cfg.hash();
    output::write_json(
        &dir.join("metadata.json"),
        &Metadata {
            experiment: cfg.experiment,
            config_hash: &hash,
            started: started.to_rfc3339(),
            finished: chrono::Utc::now().to_rfc3339(),
            workers,
            version: env!("CARGO_PKG_VERSION"),
        },
    )?;
    Ok(RunOutcome { records_path, summary_path, summary })
}
