//! Schrödinger evolution under `H(t) = omega Jz + chi(t) Jx^2`, infidelity
//! against the target state and the adiabatic time-to-target scan.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::crab::{self, CrabAnsatz};
use crate::error::{Error, Result};
use crate::linalg::{self, ChebyshevWork, TridiagonalEigen};
use crate::spin::{self, SpinOperators, SqueezingTarget, StateVector, OMEGA};

/// Shape of the control field `chi(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProtocolKind {
    /// `chi(t) = chi_M t / T`.
    LinearRamp,
    /// Ramp dressed with a CRAB correction; the evaluated field is clamped
    /// to `[-clamp_factor chi_M, clamp_factor chi_M]`.
    Crab { ansatz: CrabAnsatz, clamp_factor: f64 },
}

/// A control schedule with `chi(0) = 0` and `chi(T) = chi_M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlProtocol {
    pub kind: ProtocolKind,
    pub total_time: f64,
    pub chi_final: f64,
}

impl ControlProtocol {
    pub fn linear_ramp(chi_final: f64, total_time: f64) -> Result<Self> {
        validate_window(chi_final, total_time)?;
        Ok(Self { kind: ProtocolKind::LinearRamp, total_time, chi_final })
    }

    pub fn crab(chi_final: f64, total_time: f64, ansatz: CrabAnsatz, clamp_factor: f64) -> Result<Self> {
        validate_window(chi_final, total_time)?;
        if !(clamp_factor >= 1.0) {
            return Err(Error::InvalidParameter(format!("clamp factor must be >= 1, got {clamp_factor}")));
        }
        Ok(Self { kind: ProtocolKind::Crab { ansatz, clamp_factor }, total_time, chi_final })
    }

    pub fn is_ramp(&self) -> bool {
        matches!(self.kind, ProtocolKind::LinearRamp)
    }

    /// Field value applied at time `t` (after clamping, for CRAB fields).
    pub fn control_value(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.total_time).contains(&t) {
            return Err(Error::TimeOutOfRange { t, total: self.total_time });
        }
        Ok(self.sample(t).0)
    }

    /// Largest `|chi|` the protocol can apply.
    pub fn chi_bound(&self) -> f64 {
        match &self.kind {
            ProtocolKind::LinearRamp => self.chi_final,
            ProtocolKind::Crab { clamp_factor, .. } => clamp_factor * self.chi_final,
        }
    }

    /// Unchecked evaluation, returning the value and whether it was clamped.
    pub(crate) fn sample(&self, t: f64) -> (f64, bool) {
        match &self.kind {
            ProtocolKind::LinearRamp => (self.chi_final * (t / self.total_time), false),
            ProtocolKind::Crab { ansatz, clamp_factor } => {
                let raw = crab::field_unchecked(ansatz, self.chi_final, self.total_time, t);
                let bound = clamp_factor * self.chi_final;
                if raw > bound {
                    (bound, true)
                } else if raw < -bound {
                    (-bound, true)
                } else {
                    (raw, false)
                }
            }
        }
    }
}

fn validate_window(chi_final: f64, total_time: f64) -> Result<()> {
    if !(total_time > 0.0) || !total_time.is_finite() {
        return Err(Error::InvalidParameter(format!("total time must be positive, got {total_time}")));
    }
    if !(chi_final >= 0.0) || !chi_final.is_finite() {
        return Err(Error::InvalidParameter(format!("final chi must be finite and >= 0, got {chi_final}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Classic fourth-order Runge-Kutta on banded `H psi` products.
    Rk4,
    /// Exact exponential of `H` frozen at each step midpoint.
    PiecewiseExponential,
    /// Fourth-order commutator-free Magnus: two exact exponentials per
    /// step, of `H` combinations sampled at the Gauss points.
    Magnus4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub step_size: f64,
    pub method: Method,
    /// Record a trajectory point every this many steps; 0 disables recording.
    pub record_stride: usize,
}

/// Step-size ceiling for the piecewise-exponential method.
const PE_MAX_STEP: f64 = 0.05;
/// Minimum number of piecewise-exponential steps across a protocol.
const PE_MIN_STEPS: f64 = 400.0;
/// Minimum number of Magnus steps across a protocol.
const MAGNUS_MIN_STEPS: f64 = 50.0;

impl PropagationConfig {
    pub fn new(step_size: f64, method: Method) -> Result<Self> {
        if !(step_size > 0.0) || !step_size.is_finite() {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {step_size}")));
        }
        Ok(Self { step_size, method, record_stride: 0 })
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    /// Default step for `method` on this protocol.
    ///
    /// RK4 must resolve the spectral radius of `H`, which is dominated by
    /// `chi J^2`. The piecewise exponential is exact for frozen `H`, so its
    /// step only has to follow the low-lying dynamics (energy scale ~`N`)
    /// and the field's own variation.
    pub fn for_protocol(ops: &SpinOperators, protocol: &ControlProtocol, method: Method) -> Self {
        let j = ops.j();
        let step = match method {
            Method::Rk4 => default_rk4_step(j, protocol.chi_bound()),
            Method::Magnus4 => (2.0 / (OMEGA.abs() * ops.n_atoms() as f64)).min(protocol.total_time / MAGNUS_MIN_STEPS),
            Method::PiecewiseExponential => {
                PE_MAX_STEP.min(2.0 / (OMEGA.abs() * ops.n_atoms() as f64)).min(protocol.total_time / PE_MIN_STEPS)
            }
        };
        Self { step_size: step.min(protocol.total_time), method, record_stride: 0 }
    }
}

/// `min(1e-2, 0.1 / (|omega| J + chi J^2))`.
pub fn default_rk4_step(j: f64, chi_bound: f64) -> f64 {
    1e-2_f64.min(0.1 / (OMEGA.abs() * j + chi_bound.abs() * j * j))
}

/// One row of an optional trajectory dump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub chi: f64,
    pub mean_jz: f64,
    pub var_jx: f64,
    pub xi_squared: f64,
    pub norm_drift: f64,
}

#[derive(Clone, Debug)]
pub struct Propagation {
    pub state: StateVector,
    /// `| ||psi(T)|| - 1 |` before the final renormalization.
    pub norm_drift: f64,
    pub steps: usize,
    pub clamp_events: usize,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Drift beyond which a propagation is abandoned.
pub const MAX_NORM_DRIFT: f64 = 1e-6;

/// Time-stepping engine shared by noiseless and noisy propagation. The
/// Hamiltonian never couples the two parity blocks, and a block that starts
/// exactly empty stays empty, so only occupied blocks are evolved.
pub(crate) struct Evolver<'a> {
    ops: &'a SpinOperators,
    method: Method,
    pub(crate) psi: Vec<C64>,
    active: [bool; 2],
    block: Vec<C64>,
    coeffs: Vec<C64>,
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
    chebyshev: ChebyshevWork,
}

/// Below this many Chebyshev terms per block dimension the series is
/// cheaper than a fresh eigendecomposition.
const CHEBYSHEV_TERMS_PER_DIM: usize = 25;

impl<'a> Evolver<'a> {
    pub(crate) fn new(ops: &'a SpinOperators, method: Method, initial: &StateVector) -> Result<Self> {
        if initial.dim() != ops.dim() {
            return Err(Error::DimensionMismatch { expected: ops.dim(), found: initial.dim() });
        }
        let norm = initial.norm();
        if (norm - 1.0).abs() > spin::NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm });
        }
        let psi = initial.amplitudes().to_vec();
        let mut active = [false; 2];
        for (p, flag) in active.iter_mut().enumerate() {
            *flag = ops.block_indices(p).any(|i| psi[i] != C64::new(0.0, 0.0));
        }
        let n = ops.dim();
        let zeros = vec![C64::new(0.0, 0.0); n];
        Ok(Self {
            ops,
            method,
            psi,
            active,
            block: Vec::with_capacity(n),
            coeffs: Vec::with_capacity(n),
            k: [zeros.clone(), zeros.clone(), zeros.clone(), zeros.clone()],
            tmp: zeros,
            chebyshev: ChebyshevWork::default(),
        })
    }

    /// Advance by `h` from `t0`. `coeffs(t)` returns `(omega, chi)`; the
    /// piecewise exponential evaluates it once at `t0 + h/2`.
    pub(crate) fn step(&mut self, t0: f64, h: f64, mut coeffs: impl FnMut(f64) -> (f64, f64)) -> Result<()> {
        match self.method {
            Method::PiecewiseExponential => {
                let (omega, chi) = coeffs(t0 + 0.5 * h);
                self.exponential_step(omega, chi, h)
            }
            Method::Magnus4 => {
                let d = 3f64.sqrt() / 6.0;
                let (w1, c1) = coeffs(t0 + (0.5 - d) * h);
                let (w2, c2) = coeffs(t0 + (0.5 + d) * h);
                let (a1, a2) = (0.25 + d, 0.25 - d);
                // exp(h (a2 A1 + a1 A2)) exp(h (a1 A1 + a2 A2)), rightmost first;
                // each exponent is (h/2) H with combined coefficients.
                self.exponential_step(2.0 * (a1 * w1 + a2 * w2), 2.0 * (a1 * c1 + a2 * c2), 0.5 * h)?;
                self.exponential_step(2.0 * (a2 * w1 + a1 * w2), 2.0 * (a2 * c1 + a1 * c2), 0.5 * h)
            }
            Method::Rk4 => {
                let c0 = coeffs(t0);
                let c1 = coeffs(t0 + 0.5 * h);
                let c2 = coeffs(t0 + h);
                self.rk4_step(h, [c0, c1, c1, c2]);
                Ok(())
            }
        }
    }

    fn exponential_step(&mut self, omega: f64, chi: f64, h: f64) -> Result<()> {
        for parity in 0..2 {
            if !self.active[parity] {
                continue;
            }
            let block = self.ops.parity_block(parity, omega, chi);
            self.block.clear();
            self.block.extend(self.ops.block_indices(parity).map(|i| self.psi[i]));
            let (lo, hi) = block.spectral_bounds();
            let terms = linalg::chebyshev_terms(0.5 * h * (hi - lo));
            if terms <= CHEBYSHEV_TERMS_PER_DIM * block.dim() {
                linalg::chebyshev_exp(&block, h, &mut self.block, &mut self.chebyshev);
            } else {
                let eig: TridiagonalEigen = block.eigh_fast()?;
                eig.apply_exp(h, &mut self.block, &mut self.coeffs);
            }
            for (k, i) in self.ops.block_indices(parity).enumerate() {
                self.psi[i] = self.block[k];
            }
        }
        Ok(())
    }

    fn rk4_step(&mut self, h: f64, c: [(f64, f64); 4]) {
        let minus_i = C64::new(0.0, -1.0);
        let n = self.psi.len();
        let weights = [0.0, 0.5, 0.5, 1.0];
        for stage in 0..4 {
            if stage == 0 {
                self.tmp.copy_from_slice(&self.psi);
            } else {
                let prev = &self.k[stage - 1];
                for i in 0..n {
                    self.tmp[i] = self.psi[i] + prev[i] * (weights[stage] * h);
                }
            }
            let (omega, chi) = c[stage];
            let (k_stage, tmp) = (&mut self.k[stage], &self.tmp);
            self.ops.apply_hamiltonian(omega, chi, tmp, k_stage);
            k_stage.iter_mut().for_each(|v| *v *= minus_i);
        }
        let sixth = h / 6.0;
        for i in 0..n {
            self.psi[i] += (self.k[0][i] + self.k[1][i] * 2.0 + self.k[2][i] * 2.0 + self.k[3][i]) * sixth;
        }
    }

    pub(crate) fn norm(&self) -> f64 {
        spin::norm(&self.psi)
    }

    /// Renormalize and return the final state with its drift, failing if the
    /// drift exceeds [`MAX_NORM_DRIFT`].
    pub(crate) fn finish(mut self, steps: usize, step_size: f64) -> Result<(StateVector, f64)> {
        let norm = self.norm();
        let drift = (norm - 1.0).abs();
        if !(drift <= MAX_NORM_DRIFT) {
            return Err(Error::NormDrift { drift, step: steps, step_size });
        }
        self.psi.iter_mut().for_each(|a| *a /= norm);
        Ok((StateVector::from_raw(self.ops.n_atoms(), self.psi), drift))
    }
}

/// Integrates `i d|psi>/dt = H(chi(t)) |psi>` over `[0, T]` on a uniform
/// grid of `ceil(T / dt)` steps.
pub fn propagate(
    ops: &SpinOperators,
    protocol: &ControlProtocol,
    config: &PropagationConfig,
    initial: &StateVector,
) -> Result<Propagation> {
    if !(config.step_size > 0.0) || config.step_size > protocol.total_time * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "step size {} must lie in (0, T = {}]",
            config.step_size, protocol.total_time
        )));
    }
    let total = protocol.total_time;
    let steps = (total / config.step_size).ceil().max(1.0) as usize;
    let h = total / steps as f64;

    let mut evolver = Evolver::new(ops, config.method, initial)?;
    let mut clamp_events = 0usize;
    let mut trajectory = Vec::new();
    let record = |evolver: &Evolver, t: f64, trajectory: &mut Vec<TrajectoryPoint>| {
        let obs = spin::observables_raw(ops, &evolver.psi);
        trajectory.push(TrajectoryPoint {
            t,
            chi: protocol.sample(t).0,
            mean_jz: obs.mean_jz,
            var_jx: obs.var_jx,
            xi_squared: obs.xi_squared,
            norm_drift: (evolver.norm() - 1.0).abs(),
        });
    };
    if config.record_stride > 0 {
        record(&evolver, 0.0, &mut trajectory);
    }

    for step in 0..steps {
        let t0 = step as f64 * h;
        evolver.step(t0, h, |t| {
            let (chi, clamped) = protocol.sample(t.min(total));
            clamp_events += clamped as usize;
            (OMEGA, chi)
        })?;
        if config.method == Method::Rk4 {
            let drift = (evolver.norm() - 1.0).abs();
            if !(drift <= MAX_NORM_DRIFT) {
                return Err(Error::NormDrift { drift, step: step + 1, step_size: h });
            }
        }
        if config.record_stride > 0 && ((step + 1) % config.record_stride == 0 || step + 1 == steps) {
            record(&evolver, (step + 1) as f64 * h, &mut trajectory);
        }
    }

    let (state, norm_drift) = evolver.finish(steps, h)?;
    Ok(Propagation { state, norm_drift, steps, clamp_events, trajectory })
}

/// `1 - |<goal|final>|^2`, clamped to `[0, 1]`.
pub fn infidelity(final_state: &StateVector, goal: &StateVector) -> Result<f64> {
    let overlap = goal.inner(final_state)?;
    Ok((1.0 - overlap.norm_sqr()).clamp(0.0, 1.0))
}

/// Protocol families accepted by [`time_to_reach`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolFamily {
    LinearRamp,
}

/// Grid and refinement parameters of the time-to-target scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub t_start: f64,
    pub ratio: f64,
    pub t_cap: f64,
    /// Bisection stops once `(hi - lo) / hi` drops below this.
    pub rel_width: f64,
    pub method: Method,
    /// Overrides the method's default step when set.
    pub step_size: Option<f64>,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            t_start: 0.1,
            ratio: 1.1,
            t_cap: 1e6,
            rel_width: 2e-3,
            method: Method::Magnus4,
            step_size: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeToReach {
    pub total_time: f64,
    pub infidelity: f64,
    /// Every `(T, infidelity)` evaluated, in order.
    pub probes: Vec<(f64, f64)>,
}

/// Infidelity of a linear ramp of duration `total_time` from the coherent
/// state towards `target`.
pub fn ramp_infidelity(
    ops: &SpinOperators,
    target: &SqueezingTarget,
    total_time: f64,
    method: Method,
    step_size: Option<f64>,
) -> Result<f64> {
    let protocol = ControlProtocol::linear_ramp(target.chi_final, total_time)?;
    let mut config = PropagationConfig::for_protocol(ops, &protocol, method);
    if let Some(dt) = step_size {
        config.step_size = dt.min(total_time);
    }
    let out = propagate(ops, &protocol, &config, &StateVector::coherent(ops.n_atoms()))?;
    infidelity(&out.state, &target.goal)
}

/// Smallest `T` on the geometric grid `t_start * ratio^k` whose ramp
/// reaches `target_infidelity`, refined by bisection between the last
/// failing and the first passing grid point. The ramp infidelity
/// oscillates in `T`, so this is the first crossing, not the envelope's.
pub fn time_to_reach(
    ops: &SpinOperators,
    target: &SqueezingTarget,
    family: ProtocolFamily,
    target_infidelity: f64,
    settings: &ScanSettings,
) -> Result<TimeToReach> {
    let ProtocolFamily::LinearRamp = family;
    if !(target_infidelity > 0.0 && target_infidelity < 1.0) {
        return Err(Error::InvalidParameter(format!("target infidelity {target_infidelity} must lie in (0, 1)")));
    }
    if !(settings.ratio > 1.0) || !(settings.t_start > 0.0) {
        return Err(Error::InvalidParameter("scan needs t_start > 0 and ratio > 1".into()));
    }
    let eval = |t: f64| ramp_infidelity(ops, target, t, settings.method, settings.step_size);
    let mut probes = Vec::new();
    let mut best = f64::INFINITY;

    let mut last_fail: Option<f64> = None;
    let mut t = settings.t_start;
    let (mut hi, mut hi_value) = loop {
        if t > settings.t_cap {
            return Err(Error::CapReached { cap: settings.t_cap, target: target_infidelity, best_infidelity: best });
        }
        let value = eval(t)?;
        probes.push((t, value));
        best = best.min(value);
        log::debug!("ramp scan N={} T={t:.4} I={value:.3e}", ops.n_atoms());
        if value <= target_infidelity {
            break (t, value);
        }
        last_fail = Some(t);
        t *= settings.ratio;
    };

    if let Some(mut lo) = last_fail {
        while (hi - lo) / hi > settings.rel_width {
            let mid = 0.5 * (lo + hi);
            let value = eval(mid)?;
            probes.push((mid, value));
            if value <= target_infidelity {
                hi = mid;
                hi_value = value;
            } else {
                lo = mid;
            }
        }
    }
    Ok(TimeToReach { total_time: hi, infidelity: hi_value, probes })
}
