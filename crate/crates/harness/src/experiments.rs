//! The experiment pipelines. Each one maps grid points to records, which are
//! handed to the sink in grid order as soon as every earlier point is done.

use serde::{Deserialize, Serialize};
use spinsqueeze::crab::{self, OptimizationReport};
use spinsqueeze::open_system::{self, SweepProtocol};
use spinsqueeze::propagator::{self, ProtocolFamily};
use spinsqueeze::telegraph;
use spinsqueeze::{ControlProtocol, PropagationConfig, SpinOperators, SqueezingTarget, StateVector};

use crate::config::{ExperimentConfig, ExperimentKind, ProtocolChoice};
use crate::fit::{fit_power_law, PowerLawFit};

/// Prefactor of the optimal-time fit `0.06 N^0.93` used to place the
/// minimal-time search bracket.
pub const OPTIMAL_TIME_PREFACTOR: f64 = 0.06;
pub const OPTIMAL_TIME_EXPONENT: f64 = 0.93;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundRecord {
    pub config_hash: String,
    pub n: usize,
    pub chi_final: f64,
    pub xi2: f64,
    pub mean_jz: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeRecord {
    pub config_hash: String,
    pub n: usize,
    pub protocol: String,
    pub total_time: f64,
    pub infidelity: f64,
    pub ramp_infidelity: f64,
    pub evaluations: usize,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub config_hash: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub protocol: String,
    pub total_time: f64,
    pub realization: usize,
    pub xi2: f64,
    pub infidelity: f64,
    pub noiseless_xi2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoopRecord {
    pub config_hash: String,
    pub eta: f64,
    pub protocol: String,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub xi2: f64,
    pub mean_jz: f64,
    pub trace_drift: f64,
    pub positivity_min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleRecord {
    pub config_hash: String,
    pub n: usize,
    pub protocol: String,
    pub total_time: f64,
    pub infidelity: f64,
    pub xi2: f64,
    pub mean_jz: f64,
    pub noisy_mean_xi2: f64,
    pub noisy_stderr_xi2: f64,
    pub noisy_mean_infidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Record {
    Ground(GroundRecord),
    Time(TimeRecord),
    Noise(NoiseRecord),
    Coop(CoopRecord),
    Single(SingleRecord),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub point: String,
    pub message: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub records: usize,
    pub complete: bool,
    pub failures: Vec<PointFailure>,
    /// Named fits, e.g. `xi2_vs_n`.
    pub fits: Vec<(String, PowerLawFit)>,
    /// Resolved configuration without output location and worker count.
    pub config: ExperimentConfig,
}

/// Runs the configured experiment on `pool`, passing records to `sink` in
/// grid order.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    pool: &rayon::ThreadPool,
    sink: &mut dyn FnMut(&Record) -> std::io::Result<()>,
) -> std::io::Result<Summary> {
    let hash = cfg.hash();
    let ctx = Ctx { cfg, hash: &hash };
    let mut records: Vec<Record> = Vec::new();
    let mut failures = Vec::new();
    let mut io_error = None;
    let points: Vec<usize> = match cfg.experiment {
        ExperimentKind::CooperativitySweep => vec![cfg.dissipation.n_atoms],
        _ => cfg.n_grid.clone(),
    };
    ordered_map(
        pool,
        &points,
        |&n| ctx.point(n),
        |n, result| match result {
            Ok(batch) => {
                for r in batch {
                    if io_error.is_none() {
                        if let Err(e) = sink(&r) {
                            io_error = Some(e);
                        }
                    }
                    records.push(r);
                }
            }
            Err(message) => {
                log::warn!("point N={} failed: {message}", points[n]);
                failures.push(PointFailure { point: format!("n={}", points[n]), message });
            }
        },
    );
    if let Some(e) = io_error {
        return Err(e);
    }
    let fits = fits_for(cfg.experiment, &records);
    Ok(Summary {
        experiment: cfg.experiment,
        config_hash: hash,
        records: records.len(),
        complete: failures.is_empty(),
        failures,
        fits,
        config: cfg.canonical(),
    })
}

/// Applies `f` to every item on `pool` and hands the results to `emit` in
/// item order, each as soon as it and all earlier items are finished.
pub fn ordered_map<I, R, F, E>(pool: &rayon::ThreadPool, items: &[I], f: F, mut emit: E)
where
    I: Sync,
    R: Send,
    F: Fn(&I) -> R + Sync,
    E: FnMut(usize, R),
{
    use rayon::prelude::*;
    use std::collections::BTreeMap;
    let (tx, rx) = std::sync::mpsc::channel::<(usize, R)>();
    std::thread::scope(|s| {
        let f = &f;
        s.spawn(move || {
            pool.install(|| {
                items.par_iter().enumerate().for_each_with(tx, |tx, (i, item)| {
                    let _ = tx.send((i, f(item)));
                })
            })
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&next) {
                emit(next, r);
                next += 1;
            }
        }
    });
}

fn fits_for(kind: ExperimentKind, records: &[Record]) -> Vec<(String, PowerLawFit)> {
    let mut fits = Vec::new();
    let mut push = |name: &str, pts: Vec<(f64, f64)>| {
        if pts.len() >= 3 {
            if let Ok(fit) = fit_power_law(&pts) {
                fits.push((name.to_string(), fit));
            }
        }
    };
    match kind {
        ExperimentKind::GroundScaling => push(
            "xi2_vs_n",
            records
                .iter()
                .filter_map(|r| match r {
                    Record::Ground(g) => Some((g.n as f64, g.xi2)),
                    _ => None,
                })
                .collect(),
        ),
        ExperimentKind::TimeScaling => {
            for label in ["adiabatic", "crab"] {
                push(
                    &format!("time_vs_n_{label}"),
                    records
                        .iter()
                        .filter_map(|r| match r {
                            Record::Time(t) if t.success && t.protocol == label => Some((t.n as f64, t.total_time)),
                            _ => None,
                        })
                        .collect(),
                );
            }
        }
        _ => {}
    }
    fits
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    hash: &'a str,
}

/// A protocol ready to run, with how it was obtained.
pub struct PreparedProtocol {
    pub label: &'static str,
    pub protocol: ControlProtocol,
    pub infidelity: f64,
    pub ramp_infidelity: f64,
    pub evaluations: usize,
    pub success: bool,
    pub report: Option<OptimizationReport>,
}

impl Ctx<'_> {
    fn point(&self, n: usize) -> Result<Vec<Record>, String> {
        let run = || -> anyhow::Result<Vec<Record>> {
            let ops = SpinOperators::new(n)?;
            let target = SqueezingTarget::new(&ops, self.cfg.protocol.signal_fraction)?;
            match self.cfg.experiment {
                ExperimentKind::GroundScaling => Ok(vec![Record::Ground(GroundRecord {
                    config_hash: self.hash.to_string(),
                    n,
                    chi_final: target.chi_final,
                    xi2: target.observables.xi_squared,
                    mean_jz: target.observables.mean_jz,
                    energy: target.energy,
                })]),
                ExperimentKind::TimeScaling => {
                    let mut out = Vec::new();
                    for choice in self.choices() {
                        let p = prepare(self.cfg, &ops, &target, choice)?;
                        out.push(Record::Time(TimeRecord {
                            config_hash: self.hash.to_string(),
                            n,
                            protocol: p.label.into(),
                            total_time: p.protocol.total_time,
                            infidelity: p.infidelity,
                            ramp_infidelity: p.ramp_infidelity,
                            evaluations: p.evaluations,
                            success: p.success,
                        }));
                    }
                    Ok(out)
                }
                ExperimentKind::NoiseRobustness => {
                    let mut out = Vec::new();
                    for choice in [ProtocolChoice::Adiabatic, ProtocolChoice::Crab] {
                        let p = prepare(self.cfg, &ops, &target, choice)?;
                        let (noiseless, ens) = self.noisy(&ops, &target, &p.protocol)?;
                        out.extend(ens.realizations.iter().map(|r| {
                            Record::Noise(NoiseRecord {
                                config_hash: self.hash.to_string(),
                                n,
                                protocol: p.label.into(),
                                total_time: p.protocol.total_time,
                                realization: r.index,
                                xi2: r.xi_squared,
                                infidelity: r.infidelity,
                                noiseless_xi2: noiseless,
                            })
                        }));
                    }
                    Ok(out)
                }
                ExperimentKind::CooperativitySweep => {
                    let mut protocols = Vec::new();
                    for choice in [ProtocolChoice::Adiabatic, ProtocolChoice::Crab] {
                        let p = prepare(self.cfg, &ops, &target, choice)?;
                        protocols.push(SweepProtocol { label: p.label.into(), protocol: p.protocol });
                    }
                    let d = &self.cfg.dissipation;
                    let points = open_system::cooperativity_sweep(&ops, &d.eta_grid, &protocols, &d.base(), d.method)?;
                    Ok(points
                        .into_iter()
                        .map(|p| {
                            Record::Coop(CoopRecord {
                                config_hash: self.hash.to_string(),
                                eta: p.eta,
                                protocol: p.protocol,
                                total_time: p.total_time,
                                xi2: p.xi2,
                                mean_jz: p.mean_jz,
                                trace_drift: p.trace_drift,
                                positivity_min_eigenvalue: p.positivity_min_eigenvalue,
                            })
                        })
                        .collect())
                }
                ExperimentKind::SingleRun => {
                    let mut out = Vec::new();
                    for choice in self.choices() {
                        let p = prepare(self.cfg, &ops, &target, choice)?;
                        let config = PropagationConfig::for_protocol(&ops, &p.protocol, self.cfg.protocol.method)
                            .with_record_stride(self.cfg.protocol.record_stride);
                        let clean = propagator::propagate(&ops, &p.protocol, &config, &StateVector::coherent(n))?;
                        if !clean.trajectory.is_empty() {
                            let path = self.cfg.output.dir.join(format!("trajectory_n{n}_{}.csv", p.label));
                            write_trajectory(&path, &clean.trajectory)
                                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
                        }
                        let obs = spinsqueeze::observables(&ops, &clean.state)?;
                        let (_, ens) = self.noisy(&ops, &target, &p.protocol)?;
                        out.push(Record::Single(SingleRecord {
                            config_hash: self.hash.to_string(),
                            n,
                            protocol: p.label.into(),
                            total_time: p.protocol.total_time,
                            infidelity: propagator::infidelity(&clean.state, &target.goal)?,
                            xi2: obs.xi_squared,
                            mean_jz: obs.mean_jz,
                            noisy_mean_xi2: ens.mean_xi2,
                            noisy_stderr_xi2: ens.stderr_xi2,
                            noisy_mean_infidelity: ens.mean_infidelity,
                        }));
                    }
                    Ok(out)
                }
            }
        };
        run().map_err(|e| format!("{e:#}"))
    }

    fn choices(&self) -> Vec<ProtocolChoice> {
        match self.cfg.protocol.kind {
            ProtocolChoice::Both => vec![ProtocolChoice::Adiabatic, ProtocolChoice::Crab],
            k => vec![k],
        }
    }

    fn noisy(
        &self,
        ops: &SpinOperators,
        target: &SqueezingTarget,
        protocol: &ControlProtocol,
    ) -> spinsqueeze::Result<(f64, telegraph::EnsembleResult)> {
        let config = PropagationConfig::for_protocol(ops, protocol, self.cfg.protocol.method);
        let clean = propagator::propagate(ops, protocol, &config, &StateVector::coherent(ops.n_atoms()))?;
        let noiseless = spinsqueeze::observables(ops, &clean.state)?.xi_squared;
        let noise = self.cfg.noise.telegraph(self.cfg.noise_seed());
        let ens = telegraph::ensemble_squeezing(ops, protocol, &config, &noise, &target.goal)?;
        Ok((noiseless, ens))
    }
}

fn write_trajectory(path: &std::path::Path, rows: &[propagator::TrajectoryPoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `0.06 N^0.93`.
pub fn optimal_time_estimate(n: usize) -> f64 {
    OPTIMAL_TIME_PREFACTOR * (n as f64).powf(OPTIMAL_TIME_EXPONENT)
}

/// Builds the adiabatic ramp (duration from the configuration or the
/// time-to-target scan) or the optimized CRAB field (at a configured fixed
/// time or the shortest successful one).
pub fn prepare(
    cfg: &ExperimentConfig,
    ops: &SpinOperators,
    target: &SqueezingTarget,
    choice: ProtocolChoice,
) -> spinsqueeze::Result<PreparedProtocol> {
    let n = ops.n_atoms();
    let pc = &cfg.protocol;
    match choice {
        ProtocolChoice::Adiabatic => {
            let single = cfg.experiment == ExperimentKind::SingleRun;
            let (t, infidelity, success) = match pc.total_time.filter(|_| single) {
                Some(t) => {
                    let i = propagator::ramp_infidelity(ops, target, t, pc.method, None)?;
                    (t, i, i <= pc.adiabatic_infidelity)
                }
                None => {
                    let r = propagator::time_to_reach(
                        ops,
                        target,
                        ProtocolFamily::LinearRamp,
                        pc.adiabatic_infidelity,
                        &pc.scan(),
                    )?;
                    (r.total_time, r.infidelity, true)
                }
            };
            Ok(PreparedProtocol {
                label: "adiabatic",
                protocol: ControlProtocol::linear_ramp(target.chi_final, t)?,
                infidelity,
                ramp_infidelity: infidelity,
                evaluations: 0,
                success,
            report: None,
            })
        }
        ProtocolChoice::Crab => {
            let settings = cfg.optimizer.settings(cfg.optimizer_seed(), pc.method);
            let fixed = cfg.optimizer.fixed_time(n).or(pc.total_time.filter(|_| cfg.experiment == ExperimentKind::SingleRun));
            let report = match fixed {
                Some(t) => {
                    let s = crab::OptimizerSettings { stop_at: Some(pc.optimal_infidelity), ..settings };
                    crab::optimize(ops, target, t, &s)?
                }
                None => {
                    let est = optimal_time_estimate(n);
                    crab::qsl_time(
                        ops,
                        target,
                        pc.optimal_infidelity,
                        &settings,
                        cfg.optimizer.qsl_lower_factor * est,
                        cfg.optimizer.qsl_upper_factor * est,
                        cfg.optimizer.qsl_rel_width,
                    )?
                    .report
                }
            };
            Ok(PreparedProtocol {
                label: "crab",
                protocol: report.protocol(target.chi_final, cfg.optimizer.clamp_factor)?,
                infidelity: report.best_infidelity,
                ramp_infidelity: report.ramp_infidelity,
                evaluations: report.evaluations,
                success: report.best_infidelity <= pc.optimal_infidelity,
                report: Some(report),
            })
        }
        ProtocolChoice::Both => Err(spinsqueeze::Error::InvalidParameter("prepare one protocol at a time".into())),
    }
}
