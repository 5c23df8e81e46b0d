//! Classical random-telegraph noise on both Hamiltonian terms:
//! `H = chi(t) [1 + K_a a(t)] Jx^2 + omega [1 + K_b b(t)] Jz`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::{ControlProtocol, Evolver, PropagationConfig};
use crate::spin::{self, SpinOperators, StateVector, OMEGA};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelegraphConfig {
    /// `K_alpha`, relative noise on the interaction term.
    pub amplitude_alpha: f64,
    /// `K_beta`, relative noise on the field term.
    pub amplitude_beta: f64,
    /// Mean number of switches per unit time.
    pub switch_rate: f64,
    pub n_realizations: usize,
    pub seed: u64,
}

impl Default for TelegraphConfig {
    fn default() -> Self {
        Self { amplitude_alpha: 0.05, amplitude_beta: 0.05, switch_rate: 500.0, n_realizations: 24, seed: 0 }
    }
}

impl TelegraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude_alpha >= 0.0 && self.amplitude_beta >= 0.0) {
            return Err(Error::InvalidParameter("noise amplitudes must be >= 0".into()));
        }
        if !(self.switch_rate > 0.0) || !self.switch_rate.is_finite() {
            return Err(Error::InvalidParameter(format!("switch rate must be positive, got {}", self.switch_rate)));
        }
        if self.n_realizations == 0 {
            return Err(Error::InvalidParameter("need at least one realization".into()));
        }
        Ok(())
    }
}

/// Piecewise-constant noise on `[0, T]`: segment `k` spans
/// `[switch_times[k-1], switch_times[k])` with `switch_times[-1] = 0` and
/// a final segment ending at `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelegraphTrajectory {
    pub switch_times: Vec<f64>,
    pub values: Vec<f64>,
    pub total_time: f64,
}

impl TelegraphTrajectory {
    /// Segment boundaries `0 = t_0 < t_1 < ... < t_m = T`.
    pub fn boundaries(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(0.0).chain(self.switch_times.iter().copied()).chain(std::iter::once(self.total_time))
    }

    /// Value in force at time `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.switch_times.partition_point(|&s| s <= t);
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn switch_count(&self) -> usize {
        self.switch_times.len()
    }
}

/// Poisson switching with rate `nu`; every segment value is uniform on
/// `[-1, 1]`.
pub fn sample_trajectory<R: Rng + ?Sized>(nu: f64, total_time: f64, rng: &mut R) -> Result<TelegraphTrajectory> {
    if !(nu > 0.0) || !(total_time > 0.0) {
        return Err(Error::InvalidParameter(format!("need nu > 0 and T > 0, got nu={nu}, T={total_time}")));
    }
    let waits = Exp::new(nu).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut switch_times = Vec::with_capacity((1.2 * nu * total_time) as usize + 8);
    let mut values = vec![rng.gen_range(-1.0..=1.0)];
    let mut t = waits.sample(rng);
    while t < total_time {
        switch_times.push(t);
        values.push(rng.gen_range(-1.0..=1.0));
        t += waits.sample(rng);
    }
    Ok(TelegraphTrajectory { switch_times, values, total_time })
}

/// Generators for realization `index`: streams `2 index` (alpha) and
/// `2 index + 1` (beta) of the master seed.
pub fn realization_rngs(seed: u64, index: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut a = ChaCha8Rng::seed_from_u64(seed);
    a.set_stream(2 * index as u64);
    let mut b = ChaCha8Rng::seed_from_u64(seed);
    b.set_stream(2 * index as u64 + 1);
    (a, b)
}

/// Integrates the noisy dynamics on the protocol's uniform step grid,
/// additionally splitting every step at the switch times of the processes
/// whose amplitude is non-zero. With both amplitudes zero this performs
/// exactly the steps of [`crate::propagator::propagate`].
pub fn propagate_noisy(
    ops: &SpinOperators,
    protocol: &ControlProtocol,
    step: &PropagationConfig,
    config: &TelegraphConfig,
    alpha: &TelegraphTrajectory,
    beta: &TelegraphTrajectory,
    initial: &StateVector,
) -> Result<StateVector> {
    let total = protocol.total_time;
    for traj in [alpha, beta] {
        if (traj.total_time - total).abs() > 1e-12 * total.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "trajectory covers [0, {}] but the protocol runs to {total}",
                traj.total_time
            )));
        }
    }
    let steps = (total / step.step_size).ceil().max(1.0) as usize;
    let h = total / steps as f64;

    let (ka, kb) = (config.amplitude_alpha, config.amplitude_beta);
    let mut cuts: Vec<f64> = Vec::new();
    if ka != 0.0 {
        cuts.extend_from_slice(&alpha.switch_times);
    }
    if kb != 0.0 {
        cuts.extend_from_slice(&beta.switch_times);
    }
    cuts.sort_by(f64::total_cmp);

    let mut evolver = Evolver::new(ops, step.method, initial)?;
    let (mut ia, mut ib, mut ic) = (0usize, 0usize, 0usize);
    let mut substeps = 0usize;
    for k in 0..steps {
        let start = k as f64 * h;
        let t_end = start + h;
        let mut t0 = start;
        while t0 < t_end {
            while ic < cuts.len() && cuts[ic] <= t0 {
                ic += 1;
            }
            // Unsplit steps keep exactly the noiseless grid.
            let (t1, dt) = if ic < cuts.len() && cuts[ic] < t_end {
                (cuts[ic], cuts[ic] - t0)
            } else {
                (t_end, if t0 == start { h } else { t_end - t0 })
            };
            while ia < alpha.switch_times.len() && alpha.switch_times[ia] <= t0 {
                ia += 1;
            }
            while ib < beta.switch_times.len() && beta.switch_times[ib] <= t0 {
                ib += 1;
            }
            let scale_chi = 1.0 + ka * alpha.values[ia];
            let scale_omega = 1.0 + kb * beta.values[ib];
            evolver.step(t0, dt, |t| {
                let (chi, _) = protocol.sample(t.min(total));
                (OMEGA * scale_omega, chi * scale_chi)
            })?;
            substeps += 1;
            t0 = t1;
        }
    }
    let (state, _) = evolver.finish(substeps, h)?;
    Ok(state)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: usize,
    pub xi_squared: f64,
    pub infidelity: f64,
    pub switches: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub mean_xi2: f64,
    pub stderr_xi2: f64,
    pub mean_infidelity: f64,
    pub realizations: Vec<RealizationRecord>,
}

/// Runs every realization with independent `(alpha, beta)` trajectories and
/// averages the per-realization squeezing of the final states.
pub fn ensemble_squeezing(
    ops: &SpinOperators,
    protocol: &ControlProtocol,
    step: &PropagationConfig,
    config: &TelegraphConfig,
    goal: &StateVector,
) -> Result<EnsembleResult> {
    config.validate()?;
    let initial = StateVector::coherent(ops.n_atoms());
    let runs: Vec<std::result::Result<RealizationRecord, String>> = (0..config.n_realizations)
        .into_par_iter()
        .map(|index| {
            let run = || -> Result<RealizationRecord> {
                let (mut ra, mut rb) = realization_rngs(config.seed, index);
                let alpha = sample_trajectory(config.switch_rate, protocol.total_time, &mut ra)?;
                let beta = sample_trajectory(config.switch_rate, protocol.total_time, &mut rb)?;
                let state = propagate_noisy(ops, protocol, step, config, &alpha, &beta, &initial)?;
                let obs = spin::observables(ops, &state)?;
                let infidelity = crate::propagator::infidelity(&state, goal)?;
                log::debug!("realization {index}: xi2={:.4} I={infidelity:.3e}", obs.xi_squared);
                Ok(RealizationRecord {
                    index,
                    xi_squared: obs.xi_squared,
                    infidelity,
                    switches: alpha.switch_count() + beta.switch_count(),
                })
            };
            run().map_err(|e| e.to_string())
        })
        .collect();

    let mut records = Vec::with_capacity(runs.len());
    let mut failures = Vec::new();
    for (index, run) in runs.into_iter().enumerate() {
        match run {
            Ok(r) => records.push(r),
            Err(e) => failures.push((index, e)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::EnsembleFailure { total: config.n_realizations, failures });
    }

    let n = records.len() as f64;
    let mean_xi2 = records.iter().map(|r| r.xi_squared).sum::<f64>() / n;
    let stderr_xi2 = if records.len() > 1 {
        let var = records.iter().map(|r| (r.xi_squared - mean_xi2).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let mean_infidelity = records.iter().map(|r| r.infidelity).sum::<f64>() / n;
    Ok(EnsembleResult { mean_xi2, stderr_xi2, mean_infidelity, realizations: records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::{self, Method};

    #[test]
    fn trajectory_tiles_the_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let traj = sample_trajectory(50.0, 2.0, &mut rng).unwrap();
        assert_eq!(traj.values.len(), traj.switch_times.len() + 1);
        assert!(traj.switch_times.windows(2).all(|w| w[0] < w[1]));
        assert!(traj.switch_times.iter().all(|&t| t > 0.0 && t < 2.0));
        assert!(traj.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        let b: Vec<f64> = traj.boundaries().collect();
        assert_eq!(b[0], 0.0);
        assert_eq!(*b.last().unwrap(), 2.0);
        assert_eq!(traj.value_at(0.0), traj.values[0]);
        assert_eq!(traj.value_at(2.0), *traj.values.last().unwrap());
    }

    #[test]
    fn tiny_window_has_one_segment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = sample_trajectory(1.0, 1e-9, &mut rng).unwrap();
        assert_eq!(traj.switch_count(), 0);
        assert_eq!(traj.values.len(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_trajectory(0.0, 1.0, &mut rng).is_err());
        assert!(sample_trajectory(1.0, 0.0, &mut rng).is_err());
        let cfg = TelegraphConfig { n_realizations: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_amplitude_is_noiseless() {
        let ops = SpinOperators::new(8).unwrap();
        let protocol = ControlProtocol::linear_ramp(3.0, 2.0).unwrap();
        let step = PropagationConfig::for_protocol(&ops, &protocol, Method::Magnus4);
        let cfg = TelegraphConfig { amplitude_alpha: 0.0, amplitude_beta: 0.0, n_realizations: 3, ..Default::default() };
        let init = StateVector::coherent(8);
        let clean = propagator::propagate(&ops, &protocol, &step, &init).unwrap();
        let (mut ra, mut rb) = realization_rngs(0, 0);
        let a = sample_trajectory(cfg.switch_rate, 2.0, &mut ra).unwrap();
        let b = sample_trajectory(cfg.switch_rate, 2.0, &mut rb).unwrap();
        let noisy = propagate_noisy(&ops, &protocol, &step, &cfg, &a, &b, &init).unwrap();
        assert_eq!(noisy.amplitudes(), clean.state.amplitudes());

        let ens = ensemble_squeezing(&ops, &protocol, &step, &cfg, &clean.state).unwrap();
        assert_eq!(ens.stderr_xi2, 0.0);
        let xi = spin::observables(&ops, &clean.state).unwrap().xi_squared;
        assert!((ens.mean_xi2 - xi).abs() < 1e-12);
    }

    #[test]
    fn ensemble_is_seed_deterministic() {
        let ops = SpinOperators::new(6).unwrap();
        let protocol = ControlProtocol::linear_ramp(2.0, 1.0).unwrap();
        let step = PropagationConfig::for_protocol(&ops, &protocol, Method::Magnus4);
        let cfg = TelegraphConfig { switch_rate: 40.0, n_realizations: 4, seed: 11, ..Default::default() };
        let goal = StateVector::coherent(6);
        let a = ensemble_squeezing(&ops, &protocol, &step, &cfg, &goal).unwrap();
        let b = ensemble_squeezing(&ops, &protocol, &step, &cfg, &goal).unwrap();
        assert_eq!(a.mean_xi2, b.mean_xi2);
        assert!(a.stderr_xi2 > 0.0);
        let other = TelegraphConfig { seed: 12, ..cfg };
        let c = ensemble_squeezing(&ops, &protocol, &step, &other, &goal).unwrap();
        assert_ne!(a.mean_xi2, c.mean_xi2);
    }
}
