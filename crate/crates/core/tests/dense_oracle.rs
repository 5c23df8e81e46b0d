//! Banded operators and ground states checked against dense matrices built
//! directly from the angular-momentum ladder formula.

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use spinsqueeze::spin::{find_chi_for_signal, hamiltonian_apply};
use spinsqueeze::*;

/// Dense `Jz`, `J+` in the descending-`m` basis.
fn dense_ops(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let j = n as f64 / 2.0;
    let dim = n + 1;
    let m = |i: usize| j - i as f64;
    let jz = DMatrix::from_fn(dim, dim, |r, c| if r == c { m(r) } else { 0.0 });
    // <m+1| J+ |m> = sqrt(J(J+1) - m(m+1)); row r = m+1 sits one above column c = m.
    let jp = DMatrix::from_fn(dim, dim, |r, c| if c == r + 1 { (j * (j + 1.0) - m(c) * (m(c) + 1.0)).sqrt() } else { 0.0 });
    (jz, jp)
}

fn dense_from_banded(b: &spinsqueeze::linalg::SymBanded) -> DMatrix<f64> {
    DMatrix::from_row_slice(b.dim(), b.dim(), &b.to_dense())
}

#[test]
fn operators_match_dense_ladder_algebra() {
    for n in 1..=6 {
        let ops = SpinOperators::new(n).unwrap();
        let (jz, jp) = dense_ops(n);
        let jx = (&jp + jp.transpose()) * 0.5;
        let jx_banded = dense_from_banded(ops.jx());
        assert!((&jx_banded - &jx).amax() < 1e-12, "Jx at N={n}");
        let jx2_banded = dense_from_banded(ops.jx2());
        assert!((&jx2_banded - &jx * &jx).amax() < 1e-12, "Jx^2 at N={n}");
        for i in 0..=n {
            assert_eq!(ops.jz()[i], jz[(i, i)]);
        }
        let h = dense_from_banded(&ops.hamiltonian(-1.0, 0.8));
        assert!((&h - (&jz * -1.0 + &jx * &jx * 0.8)).amax() < 1e-12);
    }
}

#[test]
fn spin_one_half_and_spin_one() {
    let ops = SpinOperators::new(1).unwrap();
    assert_abs_diff_eq!(ops.jx().get(0, 1), 0.5, epsilon = 1e-15);
    let ops = SpinOperators::new(2).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert_abs_diff_eq!(ops.jx().get(0, 1), s, epsilon = 1e-15);
    assert_abs_diff_eq!(ops.jx().get(1, 2), s, epsilon = 1e-15);
    assert_abs_diff_eq!(ops.jx2().get(0, 2), 0.5, epsilon = 1e-15);
}

#[test]
fn hamiltonian_apply_on_top_state_of_spin_one() {
    let ops = SpinOperators::new(2).unwrap();
    let params = HamiltonianParams::new(1.0).unwrap();
    let v = StateVector::coherent(2);
    let out = hamiltonian_apply(&ops, &params, &v).unwrap();
    let expected = [-0.5, 0.0, 0.5];
    for (o, e) in out.iter().zip(expected) {
        assert_abs_diff_eq!(o.re, e, epsilon = 1e-14);
        assert_abs_diff_eq!(o.im, 0.0, epsilon = 1e-14);
    }
}

#[test]
fn ground_states_match_dense_diagonalization() {
    for n in 1..=6 {
        let ops = SpinOperators::new(n).unwrap();
        let (jz, jp) = dense_ops(n);
        let jx = (&jp + jp.transpose()) * 0.5;
        for chi in [0.3, 1.0, 2.5] {
            let h = &jz * -1.0 + &jx * &jx * chi;
            let eig = h.symmetric_eigen();
            let (k, e0) = eig.eigenvalues.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            let v: DVector<f64> = eig.eigenvectors.column(k).into();
            let gs = ground_state(&ops, &HamiltonianParams::new(chi).unwrap()).unwrap();
            assert_abs_diff_eq!(gs.energy, e0, epsilon = 1e-10);
            let overlap: C64 = gs.state.amplitudes().iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            assert!((overlap.norm() - 1.0).abs() < 1e-8, "N={n} chi={chi}");
        }
    }
}

#[test]
fn two_atom_analytic_values() {
    let ops = SpinOperators::new(2).unwrap();
    let chi = find_chi_for_signal(&ops, std::f64::consts::FRAC_1_SQRT_2).unwrap();
    assert_abs_diff_eq!(chi, 2.0, epsilon = 1e-6);
    let gs = ground_state(&ops, &HamiltonianParams::new(2.0).unwrap()).unwrap();
    assert_abs_diff_eq!(gs.energy, 1.0 - 2f64.sqrt(), epsilon = 1e-10);
    let obs = observables(&ops, &gs.state).unwrap();
    assert_abs_diff_eq!(obs.mean_jz, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-10);
    assert_abs_diff_eq!(obs.xi_squared, 2.0 - 2f64.sqrt(), epsilon = 1e-10);

    let gs1 = ground_state(&ops, &HamiltonianParams::new(1.0).unwrap()).unwrap();
    assert_abs_diff_eq!(gs1.energy, 0.5 - 5f64.sqrt() / 2.0, epsilon = 1e-12);
    assert!(gs1.state.amplitudes()[1].norm() < 1e-12);
}

#[test]
fn trivial_ground_states_and_signals() {
    let ops = SpinOperators::new(6).unwrap();
    let gs = ground_state(&ops, &HamiltonianParams::new(0.0).unwrap()).unwrap();
    assert_abs_diff_eq!(gs.energy, -3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(gs.state.amplitudes()[0].re, 1.0, epsilon = 1e-12);
    assert_eq!(find_chi_for_signal(&ops, 3.0).unwrap(), 0.0);
    let coherent = observables(&ops, &StateVector::coherent(6)).unwrap();
    assert_abs_diff_eq!(coherent.xi_squared, 1.0, epsilon = 1e-14);
    let dicke0 = observables(&ops, &StateVector::basis(6, 3).unwrap()).unwrap();
    assert!(dicke0.xi_squared.is_infinite());
}

#[test]
fn target_ground_states_beat_standard_quantum_limit_and_keep_parity() {
    for n in [2usize, 4, 10, 20, 40] {
        let ops = SpinOperators::new(n).unwrap();
        let target = SqueezingTarget::standard(&ops).unwrap();
        assert!(target.observables.xi_squared < 1.0, "N={n}");
        assert!((target.observables.mean_jz - ops.j() / 2f64.sqrt()).abs() <= 1e-8 * ops.j());
        let odd: f64 = target.goal.amplitudes().iter().skip(1).step_by(2).map(|a| a.norm()).fold(0.0, f64::max);
        assert!(odd < 1e-10);
    }
}

#[test]
fn ground_signal_is_monotone_in_chi() {
    let ops = SpinOperators::new(30).unwrap();
    let mut last = f64::INFINITY;
    for k in 0..40 {
        let s = spinsqueeze::spin::ground_signal(&ops, 0.005 * k as f64).unwrap();
        assert!(s <= last + 1e-12);
        last = s;
    }
}
