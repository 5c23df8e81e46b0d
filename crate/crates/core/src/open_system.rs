//! Lindblad evolution with collective raising-operator decay whose rate
//! follows the control field, and the squeezing-versus-cooperativity sweep.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::{self, ControlProtocol};
use crate::spin::{self, Observables, SpinOperators, StateVector, OMEGA};

const HERMITIAN_TOLERANCE: f64 = 1e-10;
const TRACE_TOLERANCE: f64 = 1e-9;
/// Eigenvalues below this abort a propagation.
pub const POSITIVITY_FLOOR: f64 = -1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    elements: DMatrix<C64>,
    n_atoms: usize,
}

impl DensityMatrix {
    /// Checks Hermiticity (1e-10) and unit trace (1e-9).
    pub fn new(n_atoms: usize, elements: DMatrix<C64>) -> Result<Self> {
        let dim = n_atoms + 1;
        if elements.nrows() != dim || elements.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: elements.nrows() });
        }
        let rho = Self { elements, n_atoms };
        let deviation = rho.hermiticity_deviation();
        if deviation > HERMITIAN_TOLERANCE {
            return Err(Error::NonHermitian { deviation });
        }
        let trace = rho.trace();
        if (trace - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::BadTrace { trace });
        }
        Ok(rho)
    }

    pub fn pure(state: &StateVector) -> Self {
        let psi = state.amplitudes();
        let dim = psi.len();
        let elements = DMatrix::from_fn(dim, dim, |i, k| psi[i] * psi[k].conj());
        Self { elements, n_atoms: state.n_atoms() }
    }

    pub fn maximally_mixed(n_atoms: usize) -> Self {
        let dim = n_atoms + 1;
        let elements = DMatrix::from_diagonal_element(dim, dim, C64::new(1.0 / dim as f64, 0.0));
        Self { elements, n_atoms }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.n_atoms + 1
    }

    pub fn elements(&self) -> &DMatrix<C64> {
        &self.elements
    }

    pub fn into_elements(self) -> DMatrix<C64> {
        self.elements
    }

    pub fn trace(&self) -> f64 {
        self.elements.diagonal().iter().map(|z| z.re).sum()
    }

    /// `max |rho - rho^dagger|` over elements.
    pub fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(&self.elements)
    }

    pub fn purity(&self) -> f64 {
        self.elements.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.elements)
    }

    /// `<psi| rho |psi>`.
    pub fn overlap_with(&self, state: &StateVector) -> Result<f64> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: state.dim() });
        }
        let psi = state.amplitudes();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..psi.len() {
            for k in 0..psi.len() {
                acc += psi[i].conj() * self.elements[(i, k)] * psi[k];
            }
        }
        Ok(acc.re)
    }
}

fn hermiticity_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for k in i..n {
            dev = dev.max((m[(i, k)] - m[(k, i)].conj()).norm());
        }
    }
    dev
}

fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// How the decay rate follows the control field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RateMode {
    /// `gamma~ = |chi| delta / (2 kappa eta)`, parametrized by `eta` and
    /// `2 kappa / delta`.
    Cooperativity,
    /// `gamma~ = |chi| gamma delta / g^2` from bare cavity-QED parameters.
    Microscopic { gamma: f64, delta: f64, g: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationConfig {
    pub cooperativity: f64,
    /// `2 kappa / delta`.
    pub kappa_over_delta_ratio: f64,
    pub rate_mode: RateMode,
    /// Keep `omega Jz` in the unitary part. Without it the coherent part is
    /// `chi Jx^2` alone.
    pub include_omega_term: bool,
}

impl DissipationConfig {
    pub fn new(cooperativity: f64) -> Result<Self> {
        let cfg = Self {
            cooperativity,
            kappa_over_delta_ratio: 1e-3,
            rate_mode: RateMode::Cooperativity,
            include_omega_term: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Bare parameters of the cavity experiment (in units of `2 pi Hz`):
    /// `delta = 3 GHz`, `gamma = 5 MHz`, `g = 0.4 MHz`, `kappa = 1 MHz`.
    pub fn cavity_experiment() -> Self {
        let (delta, gamma, g, kappa) = (3e9, 5e6, 4e5, 1e6);
        Self {
            cooperativity: g * g / (gamma * kappa),
            kappa_over_delta_ratio: 2.0 * kappa / delta,
            rate_mode: RateMode::Microscopic { gamma, delta, g },
            include_omega_term: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cooperativity > 0.0) {
            return Err(Error::InvalidParameter(format!("cooperativity must be positive, got {}", self.cooperativity)));
        }
        if !(self.kappa_over_delta_ratio > 0.0) {
            return Err(Error::InvalidParameter("2 kappa / delta must be positive".into()));
        }
        if let RateMode::Microscopic { gamma, delta, g } = self.rate_mode {
            if !(gamma >= 0.0 && delta > 0.0 && g != 0.0) {
                return Err(Error::InvalidParameter("microscopic rates need gamma >= 0, delta > 0, g != 0".into()));
            }
        }
        Ok(())
    }

    /// Decay rate at interaction strength `chi`.
    pub fn gamma_tilde(&self, chi: f64) -> f64 {
        match self.rate_mode {
            RateMode::Cooperativity => chi.abs() / (self.kappa_over_delta_ratio * self.cooperativity),
            RateMode::Microscopic { gamma, delta, g } => chi.abs() * gamma * delta / (g * g),
        }
    }

    fn omega(&self) -> f64 {
        if self.include_omega_term {
            OMEGA
        } else {
            0.0
        }
    }
}

/// `-i [H, rho] + g (2 J+ rho J- - J- J+ rho - rho J- J+)` with
/// `H = chi Jx^2 (+ omega Jz)`.
pub fn lindblad_rhs(
    ops: &SpinOperators,
    chi: f64,
    gamma_tilde: f64,
    rho: &DensityMatrix,
    include_omega_term: bool,
) -> Result<DMatrix<C64>> {
    if rho.dim() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), found: rho.dim() });
    }
    let deviation = rho.hermiticity_deviation();
    if deviation > HERMITIAN_TOLERANCE {
        return Err(Error::NonHermitian { deviation });
    }
    let omega = if include_omega_term { OMEGA } else { 0.0 };
    let mut out = DMatrix::zeros(ops.dim(), ops.dim());
    let lind = LindbladOps::new(ops);
    lind.commutator_into(omega, chi, &rho.elements, &mut out, false);
    lind.dissipator_into(gamma_tilde, &rho.elements, &mut out, true);
    Ok(out)
}

/// Banded pieces of `H` and the jump operator in the Dicke basis.
struct LindbladOps {
    jz: Vec<f64>,
    jx2_diag: Vec<f64>,
    jx2_band: Vec<f64>,
    /// `a_i = <i| J+ |i + 1>`.
    a: Vec<f64>,
    /// `(J- J+)_ii = a_{i-1}^2`.
    d: Vec<f64>,
}

impl LindbladOps {
    fn new(ops: &SpinOperators) -> Self {
        let a = ops.jplus_amplitudes().to_vec();
        let dim = ops.dim();
        let d = (0..dim).map(|i| if i == 0 { 0.0 } else { a[i - 1] * a[i - 1] }).collect();
        let jx2 = ops.jx2();
        Self {
            jz: ops.jz().to_vec(),
            jx2_diag: jx2.diag().to_vec(),
            jx2_band: jx2.band(1).to_vec(),
            a,
            d,
        }
    }

    fn h_entry(&self, omega: f64, chi: f64, i: usize) -> f64 {
        omega * self.jz[i] + chi * self.jx2_diag[i]
    }

    /// `out (+)= -i [H, rho]`.
    fn commutator_into(&self, omega: f64, chi: f64, rho: &DMatrix<C64>, out: &mut DMatrix<C64>, add: bool) {
        let n = rho.nrows();
        let minus_i = C64::new(0.0, -1.0);
        for k in 0..n {
            for i in 0..n {
                // (H rho)_ik - (rho H)_ik with H real symmetric and band offsets 0, 2.
                let mut v = rho[(i, k)] * (self.h_entry(omega, chi, i) - self.h_entry(omega, chi, k));
                if i >= 2 {
                    v += rho[(i - 2, k)] * (chi * self.jx2_band[i - 2]);
                }
                if i + 2 < n {
                    v += rho[(i + 2, k)] * (chi * self.jx2_band[i]);
                }
                if k >= 2 {
                    v -= rho[(i, k - 2)] * (chi * self.jx2_band[k - 2]);
                }
                if k + 2 < n {
                    v -= rho[(i, k + 2)] * (chi * self.jx2_band[k]);
                }
                let v = v * minus_i;
                if add {
                    out[(i, k)] += v;
                } else {
                    out[(i, k)] = v;
                }
            }
        }
    }

    /// `out (+)= g (2 J+ rho J- - {J- J+, rho})`.
    fn dissipator_into(&self, g: f64, rho: &DMatrix<C64>, out: &mut DMatrix<C64>, add: bool) {
        let n = rho.nrows();
        for k in 0..n {
            for i in 0..n {
                let mut v = -rho[(i, k)] * (self.d[i] + self.d[k]);
                if i + 1 < n && k + 1 < n {
                    v += rho[(i + 1, k + 1)] * (2.0 * self.a[i] * self.a[k]);
                }
                let v = v * g;
                if add {
                    out[(i, k)] += v;
                } else {
                    out[(i, k)] = v;
                }
            }
        }
    }

    fn dissipator_norm_bound(&self) -> f64 {
        2.0 * self.d.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityMethod {
    /// Fixed-step RK4 on the full master equation.
    Rk4,
    /// Strang splitting: exact unitary step `U rho U^dagger` between two
    /// exact half steps of the dissipator.
    Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub method: DensityMethod,
    pub step_size: f64,
    /// Check positivity every this many steps (and at the end).
    pub positivity_stride: usize,
}

/// Largest `dt * rate` accepted for an RK4 dissipator sub-step.
const DISSIPATOR_STEP_LIMIT: f64 = 0.1;

impl DensityConfig {
    /// Default step: half the pure-state RK4 step for [`DensityMethod::Rk4`],
    /// further limited so that `dt * rate` stays small for the strongest
    /// decay the protocol can reach; the pure-state exponential step for
    /// [`DensityMethod::Split`], whose dissipator steps are exact.
    pub fn for_protocol(
        ops: &SpinOperators,
        protocol: &ControlProtocol,
        dissipation: &DissipationConfig,
        method: DensityMethod,
    ) -> Self {
        let step = match method {
            DensityMethod::Rk4 => {
                let rate = dissipation.gamma_tilde(protocol.chi_bound()) * LindbladOps::new(ops).dissipator_norm_bound();
                let pure = 0.5 * propagator::default_rk4_step(ops.j(), protocol.chi_bound());
                if rate > 0.0 {
                    pure.min(DISSIPATOR_STEP_LIMIT / rate)
                } else {
                    pure
                }
            }
            DensityMethod::Split => {
                let pure = propagator::PropagationConfig::for_protocol(
                    ops,
                    protocol,
                    propagator::Method::PiecewiseExponential,
                );
                pure.step_size
            }
        };
        Self { method, step_size: step.min(protocol.total_time), positivity_stride: 1000 }
    }
}

#[derive(Clone, Debug)]
pub struct DensityEvolution {
    pub rho: DensityMatrix,
    /// `|tr rho(T) - 1|`.
    pub trace_drift: f64,
    /// Sum of the per-step Hermiticity corrections removed by symmetrization.
    pub hermiticity_correction: f64,
    /// Smallest eigenvalue seen at the positivity checkpoints.
    pub min_eigenvalue: f64,
    pub steps: usize,
}

/// Evolves `rho0` under the protocol with `gamma~(t)` tied to `chi(t)`.
pub fn propagate_density(
    ops: &SpinOperators,
    protocol: &ControlProtocol,
    dissipation: &DissipationConfig,
    config: &DensityConfig,
    rho0: &DensityMatrix,
) -> Result<DensityEvolution> {
    dissipation.validate()?;
    if rho0.dim() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), found: rho0.dim() });
    }
    if !(config.step_size > 0.0) || config.step_size > protocol.total_time * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!("bad density step size {}", config.step_size)));
    }
    let total = protocol.total_time;
    let steps = (total / config.step_size).ceil().max(1.0) as usize;
    let h = total / steps as f64;
    let omega = dissipation.omega();
    let lind = LindbladOps::new(ops);
    let dim = ops.dim();

    let mut rho = rho0.elements.clone();
    let mut work = RkWork::new(dim);
    let mut decay = (config.method == DensityMethod::Split).then(|| DecayLines::new(&lind));
    let mut unitary = DMatrix::<C64>::zeros(dim, dim);
    let mut tmp = DMatrix::<C64>::zeros(dim, dim);
    let mut herm_correction: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let chi_at = |t: f64| protocol.sample(t.min(total)).0;

    for step in 0..steps {
        let t0 = step as f64 * h;
        match config.method {
            DensityMethod::Rk4 => {
                let rhs = |t: f64, r: &DMatrix<C64>, out: &mut DMatrix<C64>| {
                    let chi = chi_at(t);
                    lind.commutator_into(omega, chi, r, out, false);
                    lind.dissipator_into(dissipation.gamma_tilde(chi), r, out, true);
                };
                work.rk4(&mut rho, t0, h, rhs);
            }
            DensityMethod::Split => {
                let half = 0.5 * h;
                let decay = decay.as_mut().expect("decay lines exist for the split method");
                decay.apply(&mut rho, rate_integral(dissipation, &chi_at, t0, half));
                build_unitary(ops, omega, chi_at(t0 + half), h, &mut unitary)?;
                unitary.mul_to(&rho, &mut tmp);
                tmp.mul_to(&unitary.adjoint(), &mut rho);
                decay.apply(&mut rho, rate_integral(dissipation, &chi_at, t0 + half, half));
            }
        }

        let dev = symmetrize(&mut rho);
        herm_correction += dev;
        let last = step + 1 == steps;
        if last || (config.positivity_stride > 0 && (step + 1) % config.positivity_stride == 0) {
            let lam = min_eigenvalue(&rho);
            min_eig = min_eig.min(lam);
            if !(lam >= POSITIVITY_FLOOR) {
                return Err(Error::PositivityViolation {
                    eigenvalue: lam,
                    step: step + 1,
                    time: t0 + h,
                    step_size: h,
                });
            }
        }
    }

    let trace: f64 = rho.diagonal().iter().map(|z| z.re).sum();
    Ok(DensityEvolution {
        rho: DensityMatrix { elements: rho, n_atoms: ops.n_atoms() },
        trace_drift: (trace - 1.0).abs(),
        hermiticity_correction: herm_correction,
        min_eigenvalue: min_eig,
        steps,
    })
}

/// Replaces `m` by its Hermitian part and returns the removed deviation.
fn symmetrize(m: &mut DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        let d = m[(i, i)];
        dev = dev.max(d.im.abs());
        m[(i, i)] = C64::new(d.re, 0.0);
        for k in i + 1..n {
            let (a, b) = (m[(i, k)], m[(k, i)]);
            dev = dev.max((a - b.conj()).norm());
            let avg = (a + b.conj()) * 0.5;
            m[(i, k)] = avg;
            m[(k, i)] = avg.conj();
        }
    }
    dev
}

/// Dense `exp(-i h H)` assembled from the two parity-block eigensystems.
fn build_unitary(ops: &SpinOperators, omega: f64, chi: f64, h: f64, out: &mut DMatrix<C64>) -> Result<()> {
    out.fill(C64::new(0.0, 0.0));
    for parity in 0..2 {
        let idx: Vec<usize> = ops.block_indices(parity).collect();
        if idx.is_empty() {
            continue;
        }
        let eig = ops.parity_block(parity, omega, chi).eigh_fast()?;
        let phases: Vec<C64> = eig.values.iter().map(|e| C64::from_polar(1.0, -e * h)).collect();
        for (a, &i) in idx.iter().enumerate() {
            for (b, &k) in idx.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (q, p) in phases.iter().enumerate() {
                    let v = eig.vector(q);
                    acc += p * (v[a] * v[b]);
                }
                out[(i, k)] = acc;
            }
        }
    }
    Ok(())
}

/// Exact action of the dissipator with a time-dependent rate. The decay
/// maps each diagonal line `rho_{i, i+k}` into itself through a fixed
/// upper-bidiagonal generator `G_k`, and a rate `g(t)` only rescales time,
/// so the evolution over an interval is `exp(G_k * integral of g)`.
///
/// The lines are defective (repeated diagonal entries), so instead of an
/// eigendecomposition the exponential is built from cached binary powers of
/// `exp(unit G_k)` plus a Taylor step for the remainder below `unit`.
struct DecayLines {
    unit: f64,
    generators: Vec<Generator>,
    /// `powers[k][p] = exp(unit 2^p G_k)`.
    powers: Vec<Vec<DMatrix<f64>>>,
    x: Vec<C64>,
    y: Vec<C64>,
}

/// Upper-bidiagonal `G_k`: `diag[m] = -(d_m + d_{m+k})`,
/// `upper[m] = 2 a_m a_{m+k}`.
struct Generator {
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Generator {
    fn apply(&self, x: &[C64], out: &mut [C64]) {
        let n = self.diag.len();
        for m in 0..n {
            let mut v = x[m] * self.diag[m];
            if m + 1 < n {
                v += x[m + 1] * self.upper[m];
            }
            out[m] = v;
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                self.diag[r]
            } else if c == r + 1 {
                self.upper[r]
            } else {
                0.0
            }
        })
    }
}

/// `unit * |G|` for the cached base power; the Taylor remainder is then
/// accurate to rounding.
const DECAY_UNIT_SCALE: f64 = 1e-3;
const DECAY_TAYLOR_TERMS: usize = 6;

impl DecayLines {
    fn new(lind: &LindbladOps) -> Self {
        let dim = lind.d.len();
        let generators: Vec<Generator> = (0..dim)
            .map(|k| {
                let len = dim - k;
                Generator {
                    diag: (0..len).map(|m| -(lind.d[m] + lind.d[m + k])).collect(),
                    upper: (0..len.saturating_sub(1)).map(|m| 2.0 * lind.a[m] * lind.a[m + k]).collect(),
                }
            })
            .collect();
        // |G_k| <= |diag| + |upper| <= 2 max d + 2 max a^2 = 2 * norm bound.
        let unit = DECAY_UNIT_SCALE / (2.0 * lind.dissipator_norm_bound()).max(f64::MIN_POSITIVE);
        let powers = generators
            .iter()
            .map(|g| {
                let a = g.dense() * unit;
                let mut term = DMatrix::<f64>::identity(a.nrows(), a.nrows());
                let mut sum = term.clone();
                for j in 1..=DECAY_TAYLOR_TERMS + 2 {
                    term = &term * &a / j as f64;
                    sum += &term;
                }
                vec![sum]
            })
            .collect();
        Self { unit, generators, powers, x: Vec::with_capacity(dim), y: vec![C64::new(0.0, 0.0); dim] }
    }

    /// `rho <- exp(big_gamma D) rho`, where `D` is the unit-rate dissipator.
    fn apply(&mut self, rho: &mut DMatrix<C64>, big_gamma: f64) {
        if !(big_gamma > 0.0) {
            return;
        }
        let quanta = (big_gamma / self.unit).floor();
        let rest = big_gamma - quanta * self.unit;
        let quanta = quanta as u64;
        let bits = (u64::BITS - quanta.leading_zeros()) as usize;
        let dim = rho.nrows();
        for k in 0..dim {
            while self.powers[k].len() < bits {
                let last = self.powers[k].last().unwrap();
                let sq = last * last;
                self.powers[k].push(sq);
            }
            let len = dim - k;
            self.x.clear();
            self.x.extend((0..len).map(|m| rho[(m, m + k)]));
            for p in 0..bits {
                if quanta >> p & 1 == 1 {
                    let e = &self.powers[k][p];
                    for r in 0..len {
                        let mut acc = C64::new(0.0, 0.0);
                        for c in r..len {
                            acc += self.x[c] * e[(r, c)];
                        }
                        self.y[r] = acc;
                    }
                    self.x.copy_from_slice(&self.y[..len]);
                }
            }
            if rest > 0.0 {
                // x <- sum_j (rest G)^j / j! x
                let g = &self.generators[k];
                let mut term = self.x.clone();
                for j in 1..=DECAY_TAYLOR_TERMS {
                    g.apply(&term, &mut self.y[..len]);
                    let f = rest / j as f64;
                    for m in 0..len {
                        term[m] = self.y[m] * f;
                        self.x[m] += term[m];
                    }
                }
            }
            for m in 0..len {
                rho[(m, m + k)] = self.x[m];
                rho[(m + k, m)] = self.x[m].conj();
            }
        }
    }
}

/// `integral of gamma~(chi(t)) dt` over `[t0, t0 + span]` by Simpson's rule.
fn rate_integral(dissipation: &DissipationConfig, chi_at: &impl Fn(f64) -> f64, t0: f64, span: f64) -> f64 {
    let g = |t: f64| dissipation.gamma_tilde(chi_at(t));
    span / 6.0 * (g(t0) + 4.0 * g(t0 + 0.5 * span) + g(t0 + span))
}

struct RkWork {
    k: [DMatrix<C64>; 4],
    stage: DMatrix<C64>,
}

impl RkWork {
    fn new(dim: usize) -> Self {
        let z = DMatrix::<C64>::zeros(dim, dim);
        Self { k: [z.clone(), z.clone(), z.clone(), z.clone()], stage: z }
    }

    fn rk4(
        &mut self,
        y: &mut DMatrix<C64>,
        t0: f64,
        h: f64,
        f: impl Fn(f64, &DMatrix<C64>, &mut DMatrix<C64>),
    ) {
        let c = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            if s == 0 {
                self.stage.copy_from(y);
            } else {
                self.stage.copy_from(y);
                axpy(&mut self.stage, c[s] * h, &self.k[s - 1]);
            }
            let (k, stage) = (&mut self.k[s], &self.stage);
            f(t0 + c[s] * h, stage, k);
        }
        let w = h / 6.0;
        axpy(y, w, &self.k[0]);
        axpy(y, 2.0 * w, &self.k[1]);
        axpy(y, 2.0 * w, &self.k[2]);
        axpy(y, w, &self.k[3]);
    }
}

/// `y += a x`.
fn axpy(y: &mut DMatrix<C64>, a: f64, x: &DMatrix<C64>) {
    for (yv, xv) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yv += xv * a;
    }
}

/// Observables `tr(A rho)`; the discarded imaginary parts must stay below 1e-9.
pub fn squeezing_from_density(ops: &SpinOperators, rho: &DensityMatrix) -> Result<Observables> {
    if rho.dim() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), found: rho.dim() });
    }
    let m = &rho.elements;
    let n = ops.dim();
    let jz = ops.jz();
    let jx = ops.jx();
    let jx2 = ops.jx2();
    let mut mean_jz = C64::new(0.0, 0.0);
    let mut mean_jx = C64::new(0.0, 0.0);
    let mut mean_jx2 = C64::new(0.0, 0.0);
    for i in 0..n {
        mean_jz += m[(i, i)] * jz[i];
        mean_jx2 += m[(i, i)] * jx2.diag()[i];
        if i + 1 < n {
            mean_jx += (m[(i + 1, i)] + m[(i, i + 1)]) * jx.band(0)[i];
        }
        if i + 2 < n {
            mean_jx2 += (m[(i + 2, i)] + m[(i, i + 2)]) * jx2.band(1)[i];
        }
    }
    let residue = mean_jz.im.abs().max(mean_jx.im.abs()).max(mean_jx2.im.abs());
    if residue > 1e-9 {
        return Err(Error::NonHermitian { deviation: residue });
    }
    let var_jx = (mean_jx2.re - mean_jx.re * mean_jx.re).max(0.0);
    Ok(Observables {
        mean_jz: mean_jz.re,
        mean_jx: mean_jx.re,
        var_jx,
        xi_squared: spin::squeezing_parameter(ops.j(), var_jx, mean_jz.re),
    })
}

/// One protocol entering a cooperativity sweep.
#[derive(Clone, Debug)]
pub struct SweepProtocol {
    pub label: String,
    pub protocol: ControlProtocol,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eta: f64,
    pub protocol: String,
    pub total_time: f64,
    pub xi2: f64,
    pub mean_jz: f64,
    pub trace_drift: f64,
    pub positivity_min_eigenvalue: f64,
    pub hermiticity_correction: f64,
}

/// Final squeezing for every `(eta, protocol)` pair, starting from the
/// coherent state. Points run concurrently; any failure fails the sweep
/// after all points have been attempted.
pub fn cooperativity_sweep(
    ops: &SpinOperators,
    eta_grid: &[f64],
    protocols: &[SweepProtocol],
    base: &DissipationConfig,
    method: DensityMethod,
) -> Result<Vec<SweepPoint>> {
    if eta_grid.is_empty() || eta_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter("cooperativity grid must be non-empty and positive".into()));
    }
    if eta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("cooperativity grid must be ascending".into()));
    }
    let rho0 = DensityMatrix::pure(&StateVector::coherent(ops.n_atoms()));
    let jobs: Vec<(f64, &SweepProtocol)> =
        protocols.iter().flat_map(|p| eta_grid.iter().map(move |&eta| (eta, p))).collect();
    let results: Vec<std::result::Result<SweepPoint, String>> = jobs
        .par_iter()
        .map(|&(eta, p)| {
            let run = || -> Result<SweepPoint> {
                let dissipation = DissipationConfig { cooperativity: eta, ..*base };
                let config = DensityConfig::for_protocol(ops, &p.protocol, &dissipation, method);
                let out = propagate_density(ops, &p.protocol, &dissipation, &config, &rho0)?;
                let obs = squeezing_from_density(ops, &out.rho)?;
                log::debug!("eta={eta:e} {}: xi2={:.4}", p.label, obs.xi_squared);
                Ok(SweepPoint {
                    eta,
                    protocol: p.label.clone(),
                    total_time: p.protocol.total_time,
                    xi2: obs.xi_squared,
                    mean_jz: obs.mean_jz,
                    trace_drift: out.trace_drift,
                    positivity_min_eigenvalue: out.min_eigenvalue,
                    hermiticity_correction: out.hermiticity_correction,
                })
            };
            run().map_err(|e| format!("eta={eta:e} {}: {e}", p.label))
        })
        .collect();

    let mut points = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => points.push(p),
            Err(e) => failures.push((i, e)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::EnsembleFailure { total: jobs.len(), failures });
    }
    Ok(points)
}
