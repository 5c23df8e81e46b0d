//! Chopped random basis (CRAB) control fields, their optimization with
//! Nelder-Mead, and the search for the shortest successful time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::nelder_mead::{self, NelderMeadSettings};
use crate::propagator::{self, ControlProtocol, Method, PropagationConfig};
use crate::spin::{SpinOperators, SqueezingTarget, StateVector};

/// How the randomized frequencies are laid out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyRule {
    /// `omega_j = 2 pi / T (1 + r_j)` for every `j`.
    #[default]
    Principal,
    /// `omega_j = 2 pi j / T (1 + r_j)`, `j = 1..=n_f`.
    Harmonic,
}

/// Envelope `lambda(t)` multiplying the correction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryShape {
    /// `sin(pi t / T)`.
    #[default]
    Sine,
}

impl BoundaryShape {
    /// Envelope at reduced time `s = t / T`; exactly zero at both ends.
    pub fn value(self, s: f64) -> f64 {
        match self {
            // Folding onto [0, 1/2] makes s = 1 give sin(0) = 0 exactly.
            BoundaryShape::Sine => (PI * s.min(1.0 - s)).sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrabAnsatz {
    /// `r_j`, one per frequency.
    pub offsets: Vec<f64>,
    pub coeffs_a: Vec<f64>,
    pub coeffs_b: Vec<f64>,
    pub rule: FrequencyRule,
    pub boundary: BoundaryShape,
    pub seed: u64,
}

impl CrabAnsatz {
    /// Zero-correction ansatz with explicit offsets; every `r_j` must exceed
    /// -1 so that the frequencies stay positive.
    pub fn new(offsets: Vec<f64>, rule: FrequencyRule, seed: u64) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidParameter("CRAB ansatz needs at least one frequency".into()));
        }
        if let Some(r) = offsets.iter().find(|r| !(**r > -1.0) || !r.is_finite()) {
            return Err(Error::InvalidParameter(format!("frequency offset {r} must be finite and > -1")));
        }
        let n = offsets.len();
        Ok(Self {
            offsets,
            coeffs_a: vec![0.0; n],
            coeffs_b: vec![0.0; n],
            rule,
            boundary: BoundaryShape::Sine,
            seed,
        })
    }

    /// Draws `r_j ~ U[-0.5, 0.5]` from stream `stream` of the seeded generator.
    pub fn randomized(n_frequencies: usize, rule: FrequencyRule, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let offsets = (0..n_frequencies).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        Self::new(offsets, rule, seed)
    }

    pub fn n_frequencies(&self) -> usize {
        self.offsets.len()
    }

    pub fn frequencies(&self, total_time: f64) -> Vec<f64> {
        (0..self.offsets.len()).map(|j| self.frequency(j, total_time)).collect()
    }

    fn frequency(&self, j: usize, total_time: f64) -> f64 {
        let base = 2.0 * PI / total_time * (1.0 + self.offsets[j]);
        match self.rule {
            FrequencyRule::Principal => base,
            FrequencyRule::Harmonic => base * (j + 1) as f64,
        }
    }

    /// Sets `a` from the first half of `x` and `b` from the second.
    pub fn set_coefficients(&mut self, x: &[f64]) -> Result<()> {
        let n = self.offsets.len();
        if x.len() != 2 * n {
            return Err(Error::DimensionMismatch { expected: 2 * n, found: x.len() });
        }
        self.coeffs_a.copy_from_slice(&x[..n]);
        self.coeffs_b.copy_from_slice(&x[n..]);
        Ok(())
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.coeffs_a.iter().chain(&self.coeffs_b).copied().collect()
    }
}

/// `chi_M [1 + lambda(t) sum_j a_j sin(omega_j t) + b_j cos(omega_j t)] t / T`.
pub fn field_value(ansatz: &CrabAnsatz, chi_final: f64, total_time: f64, t: f64) -> Result<f64> {
    if !(total_time > 0.0) {
        return Err(Error::InvalidParameter(format!("total time must be positive, got {total_time}")));
    }
    if !(0.0..=total_time).contains(&t) {
        return Err(Error::TimeOutOfRange { t, total: total_time });
    }
    Ok(field_unchecked(ansatz, chi_final, total_time, t))
}

pub(crate) fn field_unchecked(ansatz: &CrabAnsatz, chi_final: f64, total_time: f64, t: f64) -> f64 {
    let s = t / total_time;
    let envelope = ansatz.boundary.value(s);
    let mut sum = 0.0;
    if envelope != 0.0 {
        for j in 0..ansatz.offsets.len() {
            let (sin, cos) = (ansatz.frequency(j, total_time) * t).sin_cos();
            sum += ansatz.coeffs_a[j] * sin + ansatz.coeffs_b[j] * cos;
        }
    }
    chi_final * (1.0 + envelope * sum) * s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub n_frequencies: usize,
    /// Total cost evaluations, split evenly across restarts.
    pub budget: usize,
    pub restarts: usize,
    pub simplex_edge: f64,
    pub clamp_factor: f64,
    pub seed: u64,
    pub rule: FrequencyRule,
    /// A restart stops as soon as it reaches this infidelity.
    pub stop_at: Option<f64>,
    pub method: Method,
    /// Overrides the method's default step when set.
    pub step_size: Option<f64>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            n_frequencies: 10,
            budget: 20_000,
            restarts: 4,
            simplex_edge: 0.1,
            clamp_factor: 5.0,
            seed: 0,
            rule: FrequencyRule::Principal,
            stop_at: None,
            method: Method::Magnus4,
            step_size: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub offsets: Vec<f64>,
    pub best_infidelity: f64,
    pub evaluations: usize,
    pub reached_target: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub n_atoms: usize,
    pub total_time: f64,
    pub seed: u64,
    pub best_ansatz: CrabAnsatz,
    pub best_infidelity: f64,
    /// Infidelity of the plain ramp, which is the first point evaluated.
    pub ramp_infidelity: f64,
    pub evaluations: usize,
    /// `(evaluation, best so far)` across restarts run back to back.
    pub history: Vec<(usize, f64)>,
    pub restarts: Vec<RestartSummary>,
    /// Clamped field samples over all evaluations.
    pub clamp_events: usize,
}

impl OptimizationReport {
    pub fn protocol(&self, chi_final: f64, clamp_factor: f64) -> Result<ControlProtocol> {
        ControlProtocol::crab(chi_final, self.total_time, self.best_ansatz.clone(), clamp_factor)
    }
}

struct RestartOutcome {
    ansatz: CrabAnsatz,
    value: f64,
    ramp: f64,
    history: Vec<f64>,
    clamp_events: usize,
    reached_target: bool,
}

/// Cost of a CRAB field: the final-state infidelity, or `+inf` when the
/// propagation fails.
pub fn crab_cost(
    ops: &SpinOperators,
    target: &SqueezingTarget,
    total_time: f64,
    ansatz: &CrabAnsatz,
    settings: &OptimizerSettings,
) -> (f64, usize) {
    let run = || -> Result<(f64, usize)> {
        let protocol = ControlProtocol::crab(target.chi_final, total_time, ansatz.clone(), settings.clamp_factor)?;
        let mut config = PropagationConfig::for_protocol(ops, &protocol, settings.method);
        if let Some(dt) = settings.step_size {
            config.step_size = dt.min(total_time);
        }
        let out = propagator::propagate(ops, &protocol, &config, &StateVector::coherent(ops.n_atoms()))?;
        Ok((propagator::infidelity(&out.state, &target.goal)?, out.clamp_events))
    };
    run().unwrap_or((f64::INFINITY, 0))
}

/// Minimizes the infidelity over the `2 n_f` CRAB coefficients at fixed
/// `total_time`. Every restart starts from the zero correction (the plain
/// ramp) with its own offsets drawn from stream `index` of `seed`.
pub fn optimize(
    ops: &SpinOperators,
    target: &SqueezingTarget,
    total_time: f64,
    settings: &OptimizerSettings,
) -> Result<OptimizationReport> {
    if !(total_time > 0.0) || !total_time.is_finite() {
        return Err(Error::InvalidParameter(format!("total time must be positive, got {total_time}")));
    }
    if settings.budget < 100 {
        return Err(Error::InvalidParameter(format!("budget {} is below 100 evaluations", settings.budget)));
    }
    if settings.restarts == 0 || settings.n_frequencies == 0 {
        return Err(Error::InvalidParameter("need at least one restart and one frequency".into()));
    }
    if target.n_atoms != ops.n_atoms() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), found: target.goal.dim() });
    }

    let share = settings.budget / settings.restarts;
    let extra = settings.budget % settings.restarts;
    let nm = NelderMeadSettings { initial_edge: settings.simplex_edge, ..Default::default() };

    let outcomes: Vec<Result<RestartOutcome>> = (0..settings.restarts)
        .into_par_iter()
        .map(|index| {
            let mut ansatz =
                CrabAnsatz::randomized(settings.n_frequencies, settings.rule, settings.seed, index as u64)?;
            let mut clamp_events = 0usize;
            let mut ramp = f64::NAN;
            let x0 = vec![0.0; 2 * settings.n_frequencies];
            let outcome = {
                let mut trial = ansatz.clone();
                let cost = |x: &[f64]| {
                    trial.set_coefficients(x).expect("coefficient length fixed by x0");
                    let (value, clamps) = crab_cost(ops, target, total_time, &trial, settings);
                    clamp_events += clamps;
                    if ramp.is_nan() {
                        ramp = value;
                    }
                    value
                };
                let budget = share + usize::from(index < extra);
                nelder_mead::minimize(cost, &x0, &nm, budget, settings.stop_at)
            };
            ansatz.set_coefficients(&outcome.x)?;
            log::debug!(
                "restart {index} N={} T={total_time:.4}: I={:.3e} after {} evaluations",
                ops.n_atoms(),
                outcome.value,
                outcome.evaluations
            );
            Ok(RestartOutcome {
                ansatz,
                value: outcome.value,
                ramp,
                history: outcome.history,
                clamp_events,
                reached_target: outcome.reached_target,
            })
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.value < outcomes[best].value {
            best = i;
        }
    }

    let mut history = Vec::new();
    let mut running = f64::INFINITY;
    for o in &outcomes {
        for &v in &o.history {
            running = running.min(v);
            history.push((history.len() + 1, running));
        }
    }

    Ok(OptimizationReport {
        n_atoms: ops.n_atoms(),
        total_time,
        seed: settings.seed,
        best_ansatz: outcomes[best].ansatz.clone(),
        best_infidelity: outcomes[best].value,
        ramp_infidelity: outcomes[0].ramp,
        evaluations: history.len(),
        history,
        restarts: outcomes
            .iter()
            .enumerate()
            .map(|(index, o)| RestartSummary {
                index,
                offsets: o.ansatz.offsets.clone(),
                best_infidelity: o.value,
                evaluations: o.history.len(),
                reached_target: o.reached_target,
            })
            .collect(),
        clamp_events: outcomes.iter().map(|o| o.clamp_events).sum(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QslResult {
    pub total_time: f64,
    pub report: OptimizationReport,
    /// `(T, best infidelity)` for every probe, in order.
    pub probes: Vec<(f64, f64)>,
}

/// Shortest `T` in `[lower, upper]` at which [`optimize`] reaches
/// `target_infidelity`, found by geometric bisection down to `rel_width`
/// relative bracket width.
pub fn qsl_time(
    ops: &SpinOperators,
    target: &SqueezingTarget,
    target_infidelity: f64,
    settings: &OptimizerSettings,
    lower: f64,
    upper: f64,
    rel_width: f64,
) -> Result<QslResult> {
    if !(target_infidelity > 0.0 && target_infidelity < 1.0) {
        return Err(Error::InvalidParameter(format!("target infidelity {target_infidelity} must lie in (0, 1)")));
    }
    if !(lower > 0.0 && upper > lower) || !(rel_width > 0.0) {
        return Err(Error::InvalidParameter(format!("bad bracket [{lower}, {upper}] or width {rel_width}")));
    }
    let settings = OptimizerSettings { stop_at: Some(target_infidelity), ..*settings };
    let mut probes = Vec::new();
    let mut probe = |t: f64| -> Result<OptimizationReport> {
        let report = optimize(ops, target, t, &settings)?;
        log::info!("qsl probe N={} T={t:.4}: I={:.3e}", ops.n_atoms(), report.best_infidelity);
        probes.push((t, report.best_infidelity));
        Ok(report)
    };

    let mut hi_report = probe(upper)?;
    if hi_report.best_infidelity > target_infidelity {
        return Err(Error::NoSuccess {
            upper,
            target: target_infidelity,
            best_infidelity: hi_report.best_infidelity,
        });
    }
    let (mut lo, mut hi) = (lower, upper);
    let lo_report = probe(lower)?;
    if lo_report.best_infidelity <= target_infidelity {
        hi = lower;
        hi_report = lo_report;
    } else {
        while hi / lo > 1.0 + rel_width {
            let mid = (lo * hi).sqrt();
            let report = probe(mid)?;
            if report.best_infidelity <= target_infidelity {
                hi = mid;
                hi_report = report;
            } else {
                lo = mid;
            }
        }
    }
    Ok(QslResult { total_time: hi, report: hi_report, probes })
}
