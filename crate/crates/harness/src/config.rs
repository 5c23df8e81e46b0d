//! Run configuration. Files are TOML: top-level keys plus `[protocol]`,
//! `[optimizer]`, `[noise]`, `[dissipation]` and `[output]` sections, each
//! of which may be omitted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinsqueeze::crab::{FrequencyRule, OptimizerSettings};
use spinsqueeze::open_system::{DensityMethod, DissipationConfig, RateMode};
use spinsqueeze::propagator::{Method, ScanSettings};
use spinsqueeze::telegraph::TelegraphConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GroundScaling,
    TimeScaling,
    #[serde(rename = "noise-sweep")]
    NoiseRobustness,
    #[serde(rename = "coop-sweep")]
    CooperativitySweep,
    SingleRun,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolChoice {
    Adiabatic,
    Crab,
    /// Both protocols, adiabatic first.
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    /// Which protocol `time-scaling` and `single-run` use.
    pub kind: ProtocolChoice,
    pub signal_fraction: f64,
    pub adiabatic_infidelity: f64,
    pub optimal_infidelity: f64,
    pub method: Method,
    pub scan_start: f64,
    pub scan_ratio: f64,
    pub scan_cap: f64,
    pub scan_rel_width: f64,
    /// Protocol duration for `single-run`; the adiabatic scan result when unset.
    pub total_time: Option<f64>,
    /// `single-run` writes a trajectory CSV with a row every this many
    /// steps; 0 disables it.
    pub record_stride: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        let scan = ScanSettings::default();
        Self {
            kind: ProtocolChoice::Adiabatic,
            signal_fraction: spinsqueeze::spin::DEFAULT_SIGNAL_FRACTION,
            adiabatic_infidelity: 7e-3,
            optimal_infidelity: 5e-4,
            method: scan.method,
            scan_start: scan.t_start,
            scan_ratio: scan.ratio,
            scan_cap: scan.t_cap,
            scan_rel_width: scan.rel_width,
            total_time: None,
            record_stride: 0,
        }
    }
}

impl ProtocolSection {
    pub fn scan(&self) -> ScanSettings {
        ScanSettings {
            t_start: self.scan_start,
            ratio: self.scan_ratio,
            t_cap: self.scan_cap,
            rel_width: self.scan_rel_width,
            method: self.method,
            step_size: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub n_frequencies: usize,
    pub budget: usize,
    pub restarts: usize,
    pub simplex_edge: f64,
    pub clamp_factor: f64,
    pub rule: FrequencyRule,
    /// Optimize at this fixed `T` per atom number instead of searching for
    /// the shortest successful one. Keys are atom numbers as strings.
    pub fixed_times: std::collections::BTreeMap<String, f64>,
    /// Bracket for the minimal-time search, as multiples of `0.06 N^0.93`.
    pub qsl_lower_factor: f64,
    pub qsl_upper_factor: f64,
    pub qsl_rel_width: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerSettings::default();
        Self {
            n_frequencies: d.n_frequencies,
            budget: d.budget,
            restarts: d.restarts,
            simplex_edge: d.simplex_edge,
            clamp_factor: d.clamp_factor,
            rule: d.rule,
            fixed_times: Default::default(),
            qsl_lower_factor: 0.5,
            qsl_upper_factor: 4.0,
            qsl_rel_width: 0.05,
        }
    }
}

impl OptimizerSection {
    pub fn settings(&self, seed: u64, method: Method) -> OptimizerSettings {
        OptimizerSettings {
            n_frequencies: self.n_frequencies,
            budget: self.budget,
            restarts: self.restarts,
            simplex_edge: self.simplex_edge,
            clamp_factor: self.clamp_factor,
            seed,
            rule: self.rule,
            stop_at: None,
            method,
            step_size: None,
        }
    }

    pub fn fixed_time(&self, n: usize) -> Option<f64> {
        self.fixed_times.get(&n.to_string()).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub k_alpha: f64,
    pub k_beta: f64,
    pub nu: f64,
    pub realizations: usize,
    /// Noise generator seed; derived from `master_seed` when unset.
    pub seed: Option<u64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let d = TelegraphConfig::default();
        Self { k_alpha: d.amplitude_alpha, k_beta: d.amplitude_beta, nu: d.switch_rate, realizations: d.n_realizations, seed: None }
    }
}

impl NoiseSection {
    pub fn telegraph(&self, seed: u64) -> TelegraphConfig {
        TelegraphConfig {
            amplitude_alpha: self.k_alpha,
            amplitude_beta: self.k_beta,
            switch_rate: self.nu,
            n_realizations: self.realizations,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DissipationSection {
    pub n_atoms: usize,
    pub kappa_over_delta: f64,
    pub eta_grid: Vec<f64>,
    pub include_omega: bool,
    pub method: DensityMethod,
}

impl Default for DissipationSection {
    fn default() -> Self {
        Self {
            n_atoms: 30,
            kappa_over_delta: 1e-3,
            eta_grid: (0..=12).map(|k| 10f64.powf(2.0 + 0.5 * k as f64)).collect(),
            include_omega: true,
            method: DensityMethod::Split,
        }
    }
}

impl DissipationSection {
    pub fn base(&self) -> DissipationConfig {
        DissipationConfig {
            cooperativity: self.eta_grid.first().copied().unwrap_or(1.0),
            kappa_over_delta_ratio: self.kappa_over_delta,
            rate_mode: RateMode::Cooperativity,
            include_omega_term: self.include_omega,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("results"), format: OutputFormat::Csv }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n_grid: Vec<usize>,
    pub master_seed: u64,
    pub workers: Option<usize>,
    pub protocol: ProtocolSection,
    pub optimizer: OptimizerSection,
    pub noise: NoiseSection,
    pub dissipation: DissipationSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_experiment(ExperimentKind::GroundScaling)
    }
}

impl ExperimentConfig {
    /// Default grid for each experiment; adiabatic time scaling stops at
    /// 100 atoms because the ramps grow as `N^2`.
    pub fn for_experiment(experiment: ExperimentKind) -> Self {
        let n_grid = match experiment {
            ExperimentKind::GroundScaling => (3..=15).map(|k| 10 * k).collect(),
            ExperimentKind::TimeScaling => vec![30, 50, 70, 100],
            ExperimentKind::NoiseRobustness => vec![30, 50, 100],
            ExperimentKind::CooperativitySweep => vec![30],
            ExperimentKind::SingleRun => vec![30],
        };
        Self {
            experiment,
            n_grid,
            master_seed: 0,
            workers: None,
            protocol: Default::default(),
            optimizer: Default::default(),
            noise: Default::default(),
            dissipation: Default::default(),
            output: Default::default(),
        }
    }

    /// Reads `path` on top of the defaults for `experiment`. The file may
    /// name a different experiment only if it agrees with the subcommand.
    pub fn load(path: &Path, experiment: ExperimentKind) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text, experiment).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse { path: path.into(), source },
            other => other,
        })
    }

    pub fn parse(text: &str, experiment: ExperimentKind) -> Result<Self, ConfigError> {
        let mut value: toml::Table =
            toml::from_str(text).map_err(|source| ConfigError::Parse { path: PathBuf::new(), source })?;
        let named = match value.remove("experiment") {
            Some(v) => Some(
                ExperimentKind::deserialize(v).map_err(|source| ConfigError::Parse { path: PathBuf::new(), source })?,
            ),
            None => None,
        };
        if let Some(named) = named {
            if named != experiment {
                return Err(ConfigError::Invalid(format!(
                    "config is for {named:?} but the {experiment:?} command was run"
                )));
            }
        }
        let defaults = toml::Table::try_from(Self::for_experiment(experiment)).expect("defaults serialize");
        let merged = merge(defaults, value);
        let cfg: Self = merged.try_into().map_err(|source| ConfigError::Parse { path: PathBuf::new(), source })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.n_grid.is_empty() {
            return bad("n_grid is empty".into());
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n == 0 || n > spinsqueeze::spin::DEFAULT_MAX_ATOMS) {
            return bad(format!("atom number {n} out of range"));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        let p = &self.protocol;
        if !(p.signal_fraction > 0.0 && p.signal_fraction < 1.0) {
            return bad(format!("signal_fraction {} must lie in (0, 1)", p.signal_fraction));
        }
        for (name, v) in [("adiabatic_infidelity", p.adiabatic_infidelity), ("optimal_infidelity", p.optimal_infidelity)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} {v} must lie in (0, 1)"));
            }
        }
        if !(p.scan_start > 0.0 && p.scan_ratio > 1.0 && p.scan_cap > p.scan_start && p.scan_rel_width > 0.0) {
            return bad("scan needs scan_start > 0, scan_ratio > 1, scan_cap > scan_start, scan_rel_width > 0".into());
        }
        if p.total_time.is_some_and(|t| !(t > 0.0)) {
            return bad("protocol.total_time must be positive".into());
        }
        let o = &self.optimizer;
        if o.n_frequencies == 0 || o.restarts == 0 || o.budget < 100 {
            return bad("optimizer needs n_frequencies >= 1, restarts >= 1 and budget >= 100".into());
        }
        if !(o.simplex_edge > 0.0) || !(o.clamp_factor >= 1.0) {
            return bad("optimizer needs simplex_edge > 0 and clamp_factor >= 1".into());
        }
        if !(o.qsl_lower_factor > 0.0 && o.qsl_upper_factor > o.qsl_lower_factor && o.qsl_rel_width > 0.0) {
            return bad("optimizer qsl bracket factors must satisfy 0 < lower < upper".into());
        }
        for (k, &t) in &o.fixed_times {
            if k.parse::<usize>().is_err() || !(t > 0.0) {
                return bad(format!("fixed_times entry {k} = {t} is invalid"));
            }
        }
        self.noise.telegraph(0).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let d = &self.dissipation;
        if d.n_atoms == 0 {
            return bad("dissipation.n_atoms must be positive".into());
        }
        if d.eta_grid.is_empty() || d.eta_grid.iter().any(|e| !(*e > 0.0)) || d.eta_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("dissipation.eta_grid must be non-empty, positive and ascending".into());
        }
        self.dissipation.base().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the resolved configuration, excluding the output location
    /// and worker count, which do not affect results.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.canonical()).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// The configuration with the output location and worker count reset.
    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.output = OutputSection::default();
        c.workers = None;
        c
    }

    pub fn optimizer_seed(&self) -> u64 {
        self.master_seed
    }

    /// Kept apart from the optimizer's generator streams.
    pub fn noise_seed(&self) -> u64 {
        self.noise.seed.unwrap_or(self.master_seed ^ 0x9e37_79b9_7f4a_7c15)
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let merged = merge(std::mem::take(b), o);
                *b = merged;
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}
