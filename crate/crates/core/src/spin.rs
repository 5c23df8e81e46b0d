//! Collective spin operators in the Dicke basis, the one-axis-twisting
//! Hamiltonian `H = omega Jz + chi Jx^2`, observables and ground states.
//!
//! The basis is ordered by descending magnetic quantum number: index `i`
//! holds `m = J - i`, so the fully polarized state `|J, m = J>` is index 0.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{SymBanded, SymTridiagonal};

/// Default upper bound on the number of atoms accepted by [`SpinOperators::new`].
pub const DEFAULT_MAX_ATOMS: usize = 10_000;

/// Precession frequency; time is measured in units of `1/|omega|`.
pub const OMEGA: f64 = -1.0;

/// `<Jz>` below this magnitude makes the squeezing parameter undefined.
pub const SIGNAL_FLOOR: f64 = 1e-12;

/// Banded representations of `Jz`, `J+`, `Jx` and `Jx^2` for `N` atoms in
/// the symmetric (`J = N/2`) sector. Immutable after construction.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    n_atoms: usize,
    j: f64,
    jz: Vec<f64>,
    jplus_amp: Vec<f64>,
    jx: SymBanded,
    jx2: SymBanded,
}

impl SpinOperators {
    pub fn new(n_atoms: usize) -> Result<Self> {
        Self::with_max_atoms(n_atoms, DEFAULT_MAX_ATOMS)
    }

    pub fn with_max_atoms(n_atoms: usize, max_atoms: usize) -> Result<Self> {
        if n_atoms == 0 || n_atoms > max_atoms {
            return Err(Error::InvalidAtomCount { n: n_atoms, max: max_atoms });
        }
        let dim = n_atoms + 1;
        let j = n_atoms as f64 / 2.0;
        let jz: Vec<f64> = (0..dim).map(|i| j - i as f64).collect();
        // <m+1|J+|m> = sqrt((J - m)(J + m + 1)); with m = J - i - 1 this is (i + 1)(N - i)
        let jplus_amp: Vec<f64> =
            (0..dim - 1).map(|i| (((i + 1) * (n_atoms - i)) as f64).sqrt()).collect();

        let half: Vec<f64> = jplus_amp.iter().map(|a| 0.5 * a).collect();
        let jx = SymBanded::new(vec![0.0; dim], vec![half])?;

        let jx2_diag: Vec<f64> = (0..dim)
            .map(|i| {
                let below = if i > 0 { jplus_amp[i - 1].powi(2) } else { 0.0 };
                let above = if i + 1 < dim { jplus_amp[i].powi(2) } else { 0.0 };
                0.25 * (below + above)
            })
            .collect();
        let jx2_band2: Vec<f64> =
            (0..dim.saturating_sub(2)).map(|i| 0.25 * jplus_amp[i] * jplus_amp[i + 1]).collect();
        let jx2 = SymBanded::new(jx2_diag, vec![vec![0.0; dim - 1], jx2_band2])?;

        Ok(Self { n_atoms, j, jz, jplus_amp, jx, jx2 })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn j(&self) -> f64 {
        self.j
    }

    pub fn dim(&self) -> usize {
        self.n_atoms + 1
    }

    /// `J` is an integer (even `N`).
    pub fn is_integer_spin(&self) -> bool {
        self.n_atoms % 2 == 0
    }

    /// Diagonal of `Jz` (the `m` values, descending).
    pub fn jz(&self) -> &[f64] {
        &self.jz
    }

    /// Ladder amplitudes: `jplus_amplitudes()[i] = <i| J+ |i+1>`.
    pub fn jplus_amplitudes(&self) -> &[f64] {
        &self.jplus_amp
    }

    pub fn jx(&self) -> &SymBanded {
        &self.jx
    }

    pub fn jx2(&self) -> &SymBanded {
        &self.jx2
    }

    /// `omega Jz + chi Jx^2` as a banded matrix.
    pub fn hamiltonian(&self, omega: f64, chi: f64) -> SymBanded {
        let diag = self.jz.iter().zip(self.jx2.diag()).map(|(m, d)| omega * m + chi * d).collect();
        let bands = (0..self.jx2.bandwidth()).map(|k| self.jx2.band(k).iter().map(|b| chi * b).collect()).collect();
        SymBanded::new(diag, bands).expect("band lengths follow from jx2")
    }

    /// `out = (omega Jz + chi Jx^2) x` without allocating.
    pub fn apply_hamiltonian(&self, omega: f64, chi: f64, x: &[C64], out: &mut [C64]) {
        let n = self.dim();
        let diag = self.jx2.diag();
        for i in 0..n {
            out[i] = x[i] * (omega * self.jz[i] + chi * diag[i]);
        }
        for (i, &b) in self.jx2.band(1).iter().enumerate() {
            let c = chi * b;
            out[i] += x[i + 2] * c;
            out[i + 2] += x[i] * c;
        }
    }

    /// Basis indices of one parity block (`parity` 0 holds `m = J, J-2, ...`).
    pub fn block_indices(&self, parity: usize) -> impl Iterator<Item = usize> {
        (parity..self.dim()).step_by(2)
    }

    /// `omega Jz + chi Jx^2` restricted to one parity block. `Jx^2` only
    /// couples `m` to `m` and `m +- 2`, so each block is tridiagonal.
    pub fn parity_block(&self, parity: usize, omega: f64, chi: f64) -> SymTridiagonal {
        let jx2_diag = self.jx2.diag();
        let band2 = self.jx2.band(1);
        let diag = self.block_indices(parity).map(|i| omega * self.jz[i] + chi * jx2_diag[i]).collect::<Vec<_>>();
        let off = self
            .block_indices(parity)
            .take(diag.len().saturating_sub(1))
            .map(|i| chi * band2[i])
            .collect();
        SymTridiagonal { diag, off }
    }
}

/// Parameters of the static Hamiltonian `omega Jz + chi Jx^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianParams {
    pub omega: f64,
    pub chi: f64,
}

impl HamiltonianParams {
    /// `omega = -1` (the time unit) with interaction strength `chi >= 0`.
    pub fn new(chi: f64) -> Result<Self> {
        Self::with_omega(OMEGA, chi)
    }

    pub fn with_omega(omega: f64, chi: f64) -> Result<Self> {
        if !(omega < 0.0) || !omega.is_finite() {
            return Err(Error::InvalidParameter(format!("omega must be strictly negative, got {omega}")));
        }
        if !(chi >= 0.0) || !chi.is_finite() {
            return Err(Error::InvalidParameter(format!("chi must be finite and non-negative, got {chi}")));
        }
        Ok(Self { omega, chi })
    }
}

/// Pure state over the Dicke basis, unit norm.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    n_atoms: usize,
}

pub(crate) const NORM_TOLERANCE: f64 = 1e-9;

impl StateVector {
    pub fn new(n_atoms: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != n_atoms + 1 {
            return Err(Error::DimensionMismatch { expected: n_atoms + 1, found: amplitudes.len() });
        }
        let norm = norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amplitudes, n_atoms })
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(n_atoms: usize, mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm = norm(&amplitudes);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Self::new(n_atoms, amplitudes)
    }

    /// Dicke state with basis index `index` (`m = J - index`).
    pub fn basis(n_atoms: usize, index: usize) -> Result<Self> {
        if index > n_atoms {
            return Err(Error::DimensionMismatch { expected: n_atoms + 1, found: index + 1 });
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); n_atoms + 1];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes, n_atoms })
    }

    /// The coherent state `|Jz = J>`, ground state at `chi = 0`.
    pub fn coherent(n_atoms: usize) -> Self {
        Self::basis(n_atoms, 0).expect("index 0 always exists")
    }

    pub(crate) fn from_raw(n_atoms: usize, amplitudes: Vec<C64>) -> Self {
        Self { amplitudes, n_atoms }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn scaled(&self, factor: C64) -> StateVector {
        Self { amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(), n_atoms: self.n_atoms }
    }
}

pub(crate) fn norm(amplitudes: &[C64]) -> f64 {
    amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// `(omega Jz + chi Jx^2) v`.
pub fn hamiltonian_apply(ops: &SpinOperators, params: &HamiltonianParams, v: &StateVector) -> Result<Vec<C64>> {
    if v.dim() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), found: v.dim() });
    }
    let mut out = vec![C64::new(0.0, 0.0); ops.dim()];
    ops.apply_hamiltonian(params.omega, params.chi, v.amplitudes(), &mut out);
    Ok(out)
}

/// Squeezing-relevant expectation values of a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub mean_jz: f64,
    pub mean_jx: f64,
    pub var_jx: f64,
    /// `2J Var(Jx) / <Jz>^2`; `+inf` when `|<Jz>| < 1e-12`.
    pub xi_squared: f64,
}

impl Observables {
    pub fn squeezing_defined(&self) -> bool {
        self.xi_squared.is_finite()
    }
}

/// `xi^2 = 2J Var(Jx) / <Jz>^2`, or `+inf` when the signal vanishes.
pub fn squeezing_parameter(j: f64, var_jx: f64, mean_jz: f64) -> f64 {
    if mean_jz.abs() < SIGNAL_FLOOR {
        f64::INFINITY
    } else {
        2.0 * j * var_jx / (mean_jz * mean_jz)
    }
}

pub fn observables(ops: &SpinOperators, state: &StateVector) -> Result<Observables> {
    if state.dim() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), found: state.dim() });
    }
    Ok(observables_raw(ops, state.amplitudes()))
}

pub(crate) fn observables_raw(ops: &SpinOperators, psi: &[C64]) -> Observables {
    let n = ops.dim();
    let weight: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
    let mean_jz = psi.iter().zip(ops.jz()).map(|(a, m)| a.norm_sqr() * m).sum::<f64>() / weight;

    let mut jx_psi = vec![C64::new(0.0, 0.0); n];
    ops.jx().apply(psi, &mut jx_psi);
    let mean_jx_c: C64 = psi.iter().zip(&jx_psi).map(|(a, b)| a.conj() * b).sum::<C64>() / weight;
    // <Jx^2> = || Jx psi ||^2
    let mean_jx2 = jx_psi.iter().map(|b| b.norm_sqr()).sum::<f64>() / weight;
    debug_assert!(mean_jx_c.im.abs() < 1e-10 * (1.0 + ops.j()));

    let mean_jx = mean_jx_c.re;
    let var_jx = (mean_jx2 - mean_jx * mean_jx).max(0.0);
    Observables { mean_jz, mean_jx, var_jx, xi_squared: squeezing_parameter(ops.j(), var_jx, mean_jz) }
}

/// Lowest eigenpair of the static Hamiltonian.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: StateVector,
    pub energy: f64,
    /// Distance to the next eigenvalue (either parity).
    pub gap: f64,
    /// `|| H v - E v ||`.
    pub residual: f64,
}

/// Ground state of `omega Jz + chi Jx^2`, found by diagonalizing both
/// tridiagonal parity blocks. The phase is fixed so that the
/// largest-magnitude amplitude is real and positive.
pub fn ground_state(ops: &SpinOperators, params: &HamiltonianParams) -> Result<GroundState> {
    let dim = ops.dim();
    let mut candidates: Vec<(f64, usize, Vec<f64>)> = Vec::new();
    let mut second: Vec<f64> = Vec::new();
    let mut scale: f64 = 0.0;
    for parity in 0..2.min(dim) {
        let block = ops.parity_block(parity, params.omega, params.chi);
        scale = scale.max(block.norm_bound());
        let eig = block.eigh()?;
        candidates.push((eig.values[0], parity, eig.vector(0).to_vec()));
        second.extend(eig.values.iter().take(2).copied());
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (energy, parity, block_vec) = candidates.swap_remove(0);
    second.sort_by(|a, b| a.total_cmp(b));
    let gap = second.get(1).map(|e| e - energy).unwrap_or(f64::INFINITY);
    if gap < 1e-10 * scale.max(1.0) {
        return Err(Error::NearDegenerate { gap, scale });
    }

    let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
    let pivot = block_vec.iter().copied().fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
    for (k, i) in ops.block_indices(parity).enumerate() {
        amplitudes[i] = C64::new(sign * block_vec[k], 0.0);
    }
    let state = StateVector::normalized(ops.n_atoms(), amplitudes)?;

    let hv = hamiltonian_apply(ops, params, &state)?;
    let residual = hv.iter().zip(state.amplitudes()).map(|(h, v)| (h - v * energy).norm_sqr()).sum::<f64>().sqrt();
    Ok(GroundState { state, energy, gap, residual })
}

/// `<Jz>` of the ground state at interaction strength `chi`.
pub fn ground_signal(ops: &SpinOperators, chi: f64) -> Result<f64> {
    let gs = ground_state(ops, &HamiltonianParams::new(chi)?)?;
    Ok(observables(ops, &gs.state)?.mean_jz)
}

const CHI_BRACKET_START: f64 = 10.0;
const CHI_BRACKET_CAP: f64 = 1024.0;

/// Interaction strength whose ground state has `<Jz> = target_signal`,
/// by bracketing (start at 10, doubling up to 2^10) and bisection on the
/// monotone map `chi -> <Jz>`.
pub fn find_chi_for_signal(ops: &SpinOperators, target_signal: f64) -> Result<f64> {
    let j = ops.j();
    if !(target_signal > 0.0) || target_signal > j {
        return Err(Error::InvalidParameter(format!("target signal {target_signal} must lie in (0, J = {j}]")));
    }
    if target_signal >= j {
        return Ok(0.0);
    }
    let tolerance = 1e-8 * j;

    let mut lo = 0.0;
    let mut hi = CHI_BRACKET_START;
    let mut signal_hi = ground_signal(ops, hi)?;
    while signal_hi > target_signal {
        if hi >= CHI_BRACKET_CAP {
            return Err(Error::BracketFailure { target: target_signal, chi_max: hi, signal_at_max: signal_hi });
        }
        lo = hi;
        hi *= 2.0;
        signal_hi = ground_signal(ops, hi)?;
    }

    let mut best = (hi, signal_hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let signal = ground_signal(ops, mid)?;
        if (signal - target_signal).abs() < (best.1 - target_signal).abs() {
            best = (mid, signal);
        }
        if signal > target_signal {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    if (best.1 - target_signal).abs() > tolerance {
        return Err(Error::BracketFailure { target: target_signal, chi_max: hi, signal_at_max: best.1 });
    }
    Ok(best.0)
}

/// The goal of every protocol: the ground state at `chi_M`, the interaction
/// strength whose ground state carries the signal `<Jz> = fraction * J`.
#[derive(Clone, Debug)]
pub struct SqueezingTarget {
    pub n_atoms: usize,
    pub signal_fraction: f64,
    pub chi_final: f64,
    pub goal: StateVector,
    pub energy: f64,
    pub observables: Observables,
}

/// `M / J = 1/sqrt(2)`.
pub const DEFAULT_SIGNAL_FRACTION: f64 = std::f64::consts::FRAC_1_SQRT_2;

impl SqueezingTarget {
    pub fn new(ops: &SpinOperators, signal_fraction: f64) -> Result<Self> {
        if !ops.is_integer_spin() {
            log::warn!(
                "N = {} gives half-integer J; the ground-state target is only meaningful above an unspecified signal threshold",
                ops.n_atoms()
            );
        }
        let chi_final = find_chi_for_signal(ops, signal_fraction * ops.j())?;
        let gs = ground_state(ops, &HamiltonianParams::new(chi_final)?)?;
        let observables = observables(ops, &gs.state)?;
        Ok(Self {
            n_atoms: ops.n_atoms(),
            signal_fraction,
            chi_final,
            goal: gs.state,
            energy: gs.energy,
            observables,
        })
    }

    pub fn standard(ops: &SpinOperators) -> Result<Self> {
        Self::new(ops, DEFAULT_SIGNAL_FRACTION)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_bad_atom_counts() {
        assert!(matches!(SpinOperators::new(0), Err(Error::InvalidAtomCount { .. })));
        assert!(matches!(SpinOperators::new(10_001), Err(Error::InvalidAtomCount { .. })));
        assert!(SpinOperators::with_max_atoms(20, 10).is_err());
        assert!(SpinOperators::new(10_000).is_ok());
    }

    #[test]
    fn single_atom_jx_is_half_pauli_x() {
        let ops = SpinOperators::new(1).unwrap();
        assert_eq!(ops.jx().to_dense(), vec![0.0, 0.5, 0.5, 0.0]);
        assert_eq!(ops.jz(), &[0.5, -0.5]);
    }

    #[test]
    fn two_atoms_jx_and_jx2() {
        let ops = SpinOperators::new(2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let jx = ops.jx().to_dense();
        assert_abs_diff_eq!(jx[1], s, epsilon = 1e-15);
        assert_abs_diff_eq!(jx[5], s, epsilon = 1e-15);
        assert_eq!(jx[2], 0.0);
        // squaring [[0,s,0],[s,0,s],[0,s,0]] by hand
        assert_abs_diff_eq!(ops.jx2().get(0, 2), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ops.jx2().get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ops.jx2().get(1, 1), 1.0, epsilon = 1e-15);
        assert_eq!(ops.jx2().get(0, 1), 0.0);
    }

    #[test]
    fn rejects_non_negative_omega() {
        assert!(HamiltonianParams::with_omega(0.0, 1.0).is_err());
        assert!(HamiltonianParams::with_omega(1.0, 1.0).is_err());
        assert!(HamiltonianParams::new(-0.1).is_err());
    }

    #[test]
    fn hamiltonian_on_basis_state_without_interaction() {
        let ops = SpinOperators::new(6).unwrap();
        let params = HamiltonianParams::new(0.0).unwrap();
        for idx in 0..ops.dim() {
            let v = StateVector::basis(6, idx).unwrap();
            let hv = hamiltonian_apply(&ops, &params, &v).unwrap();
            let m = ops.jz()[idx];
            for (k, h) in hv.iter().enumerate() {
                let expect = if k == idx { -m } else { 0.0 };
                assert_abs_diff_eq!(h.re, expect, epsilon = 1e-15);
                assert_eq!(h.im, 0.0);
            }
        }
    }

    #[test]
    fn hamiltonian_two_atoms_top_state() {
        let ops = SpinOperators::new(2).unwrap();
        let params = HamiltonianParams::new(1.0).unwrap();
        let hv = hamiltonian_apply(&ops, &params, &StateVector::coherent(2)).unwrap();
        assert_abs_diff_eq!(hv[0].re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hv[1].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hv[2].re, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn hamiltonian_rejects_dimension_mismatch() {
        let ops = SpinOperators::new(4).unwrap();
        let params = HamiltonianParams::new(1.0).unwrap();
        assert!(matches!(
            hamiltonian_apply(&ops, &params, &StateVector::coherent(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn coherent_state_is_unsqueezed() {
        for n in [1, 2, 7, 30] {
            let ops = SpinOperators::new(n).unwrap();
            let obs = observables(&ops, &StateVector::coherent(n)).unwrap();
            assert_abs_diff_eq!(obs.mean_jz, ops.j(), epsilon = 1e-12);
            assert_abs_diff_eq!(obs.xi_squared, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(obs.mean_jx, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_signal_flags_infinite_squeezing() {
        let ops = SpinOperators::new(4).unwrap();
        let obs = observables(&ops, &StateVector::basis(4, 2).unwrap()).unwrap();
        assert_eq!(obs.mean_jz, 0.0);
        assert!(obs.xi_squared.is_infinite());
        assert!(!obs.squeezing_defined());
    }

    #[test]
    fn ground_state_without_interaction_is_top_state() {
        let ops = SpinOperators::new(10).unwrap();
        let gs = ground_state(&ops, &HamiltonianParams::new(0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(gs.energy, -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gs.state.amplitudes()[0].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_atom_ground_state_analytic() {
        // parity block {|+1>, |-1>}: [[chi/2 - 1, chi/2], [chi/2, chi/2 + 1]]
        let ops = SpinOperators::new(2).unwrap();
        let gs = ground_state(&ops, &HamiltonianParams::new(1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(gs.energy, 0.5 - 5f64.sqrt() / 2.0, epsilon = 1e-12);
        assert_eq!(gs.state.amplitudes()[1], C64::new(0.0, 0.0));

        let gs = ground_state(&ops, &HamiltonianParams::new(2.0).unwrap()).unwrap();
        assert_abs_diff_eq!(gs.energy, 1.0 - 2f64.sqrt(), epsilon = 1e-12);
        let obs = observables(&ops, &gs.state).unwrap();
        assert_abs_diff_eq!(obs.mean_jz, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(obs.xi_squared, 2.0 - 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn chi_for_full_signal_is_zero() {
        let ops = SpinOperators::new(8).unwrap();
        assert_eq!(find_chi_for_signal(&ops, 4.0).unwrap(), 0.0);
        assert!(find_chi_for_signal(&ops, 0.0).is_err());
        assert!(find_chi_for_signal(&ops, 4.5).is_err());
    }

    #[test]
    fn chi_for_two_atoms() {
        let ops = SpinOperators::new(2).unwrap();
        let chi = find_chi_for_signal(&ops, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert_abs_diff_eq!(chi, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn unreachable_signal_reports_bracket() {
        // <Jz> of the ground state saturates above a small target for N = 1
        let ops = SpinOperators::new(1).unwrap();
        match find_chi_for_signal(&ops, 0.01) {
            Err(Error::BracketFailure { chi_max, .. }) => assert!(chi_max >= 1024.0),
            other => panic!("expected bracket failure, got {other:?}"),
        }
    }
}
