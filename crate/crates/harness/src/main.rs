use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spinsqueeze_harness::config::{ExperimentConfig, ExperimentKind, OutputFormat, ProtocolChoice};
use spinsqueeze_harness::fit::fit_power_law;
use spinsqueeze_harness::output::read_columns;

#[derive(Parser)]
#[command(name = "spinsqueeze", version, about = "Spin-squeezing preparation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for optimizer restarts and noise realizations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Adiabatic,
    Crab,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-state squeezing against N.
    GroundScaling,
    /// Shortest protocol time reaching the target infidelity against N.
    TimeScaling {
        #[arg(long, value_enum, default_value = "adiabatic")]
        protocol: ProtocolArg,
        /// Extend the grid to N = 150 (the ramps grow as N^2).
        #[arg(long)]
        full_grid: bool,
    },
    /// Telegraph-noise ensembles for both protocols.
    NoiseSweep,
    /// Collective-decay sweep over the cooperativity grid.
    CoopSweep,
    /// One protocol run with observables and a noisy ensemble.
    SingleRun {
        #[arg(long, value_enum, default_value = "both")]
        protocol: ProtocolArg,
        /// Protocol duration; scanned or optimized for when absent.
        #[arg(long)]
        time: Option<f64>,
    },
    /// Power-law fit `y = A x^B` of two columns of a result CSV.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "n")]
        x: String,
        /// Defaults to `xi2`, or `total_time` when the file has no `xi2`.
        #[arg(long)]
        y: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut full_grid = false;
    let (kind, protocol, time) = match cli.command {
        Command::Fit { csv, x, y } => return fit(&csv, &x, y.as_deref()),
        Command::GroundScaling => (ExperimentKind::GroundScaling, None, None),
        Command::TimeScaling { protocol, full_grid: full } => {
            full_grid = full;
            (ExperimentKind::TimeScaling, Some(protocol), None)
        }
        Command::NoiseSweep => (ExperimentKind::NoiseRobustness, None, None),
        Command::CoopSweep => (ExperimentKind::CooperativitySweep, None, None),
        Command::SingleRun { protocol, time } => (ExperimentKind::SingleRun, Some(protocol), time),
    };
    let cfg = match resolve(kind, &cli.global, protocol, time).map(|mut cfg| {
        if full_grid {
            cfg.n_grid = vec![30, 50, 70, 100, 150];
        }
        cfg
    }) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match spinsqueeze_harness::run(&cfg) {
        Ok(outcome) => {
            let s = &outcome.summary;
            for (name, f) in &s.fits {
                println!("{name}: A = {:.4}, B = {:.4}, r2 = {:.5}", f.amplitude, f.exponent, f.r_squared);
            }
            println!("{} records -> {}", s.records, outcome.records_path.display());
            if s.complete {
                ExitCode::SUCCESS
            } else {
                for f in &s.failures {
                    eprintln!("failed {}: {}", f.point, f.message);
                }
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn resolve(
    kind: ExperimentKind,
    g: &Global,
    protocol: Option<ProtocolArg>,
    time: Option<f64>,
) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path, kind)?,
        None => ExperimentConfig::for_experiment(kind),
    };
    if let Some(seed) = g.seed {
        cfg.master_seed = seed;
    }
    if g.workers.is_some() {
        cfg.workers = g.workers;
    }
    if let Some(out) = &g.out {
        cfg.output.dir = out.clone();
    }
    if let Some(f) = g.format {
        cfg.output.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    if let Some(p) = protocol {
        cfg.protocol.kind = match p {
            ProtocolArg::Adiabatic => ProtocolChoice::Adiabatic,
            ProtocolArg::Crab => ProtocolChoice::Crab,
            ProtocolArg::Both => ProtocolChoice::Both,
        };
    }
    if time.is_some() {
        cfg.protocol.total_time = time;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fit(path: &PathBuf, x: &str, y: Option<&str>) -> ExitCode {
    let run = || -> anyhow::Result<()> {
        let y = match y {
            Some(y) => y.to_string(),
            None => {
                let headers = csv::Reader::from_path(path)?.headers()?.clone();
                if headers.iter().any(|h| h == "xi2") { "xi2" } else { "total_time" }.to_string()
            }
        };
        let f = fit_power_law(&read_columns(path, x, &y)?)?;
        println!("{y} = {:.6} * {x}^{:.6}  (r2 = {:.6}, {} points)", f.amplitude, f.exponent, f.r_squared, f.n_points);
        Ok(())
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
