use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use spinsqueeze::propagator::infidelity;
use spinsqueeze::spin::hamiltonian_apply;
use spinsqueeze::*;

fn dense(b: &spinsqueeze::linalg::SymBanded) -> DMatrix<C64> {
    DMatrix::from_row_slice(b.dim(), b.dim(), &b.to_dense()).map(|x| C64::new(x, 0.0))
}

/// `J+` rebuilt from the stored ladder amplitudes.
fn jplus(ops: &SpinOperators) -> DMatrix<C64> {
    let a = ops.jplus_amplitudes();
    DMatrix::from_fn(ops.dim(), ops.dim(), |r, c| if c == r + 1 { C64::new(a[r], 0.0) } else { C64::new(0.0, 0.0) })
}

fn random_state(n: usize, parts: &[(f64, f64)]) -> StateVector {
    let amps: Vec<C64> = parts.iter().take(n + 1).map(|&(re, im)| C64::new(re, im)).collect();
    StateVector::normalized(n, amps).unwrap()
}

fn state_parts() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 41).prop_filter("non-zero", |v| {
        v.iter().take(2).any(|(a, b)| a.abs() + b.abs() > 1e-3)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn su2_commutator_and_casimir(n in 1usize..40) {
        let ops = SpinOperators::new(n).unwrap();
        let jp = jplus(&ops);
        let jm = jp.adjoint();
        let jx = (&jp + &jm) * C64::new(0.5, 0.0);
        let jy = (&jp - &jm) * C64::new(0.0, -0.5);
        let jz = DMatrix::from_fn(ops.dim(), ops.dim(), |r, c| if r == c { C64::new(ops.jz()[r], 0.0) } else { C64::new(0.0, 0.0) });
        let comm = &jx * &jy - &jy * &jx - &jz * C64::new(0.0, 1.0);
        prop_assert!(comm.iter().all(|z| z.norm() < 1e-12 * (1.0 + ops.j() * ops.j())));
        let j = ops.j();
        let cas = &jx * &jx + &jy * &jy + &jz * &jz - DMatrix::identity(ops.dim(), ops.dim()) * C64::new(j * (j + 1.0), 0.0);
        prop_assert!(cas.iter().all(|z| z.norm() < 1e-12 * (1.0 + j * j)));
        let jx2 = dense(ops.jx2());
        let diff = &jx2 - &jx * &jx;
        prop_assert!(diff.iter().all(|z| z.norm() < 1e-12 * (1.0 + j * j)));
        prop_assert!((dense(ops.jx()) - &jx).iter().all(|z| z.norm() < 1e-14 * (1.0 + j)));
    }

    #[test]
    fn hamiltonian_is_linear(n in 1usize..40, chi in 0.0..3.0f64, pv in state_parts(), pw in state_parts(),
                             a in (-2.0..2.0f64, -2.0..2.0f64), b in (-2.0..2.0f64, -2.0..2.0f64)) {
        let ops = SpinOperators::new(n).unwrap();
        let params = HamiltonianParams::new(chi).unwrap();
        let (v, w) = (random_state(n, &pv), random_state(n, &pw));
        let (a, b) = (C64::new(a.0, a.1), C64::new(b.0, b.1));
        let combo: Vec<C64> = v.amplitudes().iter().zip(w.amplitudes()).map(|(x, y)| a * x + b * y).collect();
        let norm = combo.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-6);
        let u = StateVector::normalized(n, combo).unwrap();
        let hu = hamiltonian_apply(&ops, &params, &u).unwrap();
        let hv = hamiltonian_apply(&ops, &params, &v).unwrap();
        let hw = hamiltonian_apply(&ops, &params, &w).unwrap();
        for i in 0..=n {
            let expected = (a * hv[i] + b * hw[i]) / norm;
            prop_assert!((hu[i] - expected).norm() < 1e-12 * (1.0 + chi * ops.j() * ops.j()));
        }
    }

    #[test]
    fn infidelity_ignores_global_phase(n in 1usize..40, parts in state_parts(), phi in 0.0..6.3f64) {
        let v = random_state(n, &parts);
        let w = v.scaled(C64::from_polar(1.0, phi));
        let i = infidelity(&w, &v).unwrap();
        prop_assert!((0.0..1e-14).contains(&i));
    }

    #[test]
    fn observables_are_real_and_consistent(n in 2usize..40, parts in state_parts()) {
        let ops = SpinOperators::new(n).unwrap();
        let v = random_state(n, &parts);
        let obs = observables(&ops, &v).unwrap();
        prop_assert!(obs.var_jx >= -1e-12);
        prop_assert!(obs.mean_jz.abs() <= ops.j() + 1e-12);
        if obs.mean_jz.abs() >= 1e-12 {
            let xi2 = 2.0 * ops.j() * obs.var_jx / (obs.mean_jz * obs.mean_jz);
            prop_assert!((obs.xi_squared - xi2).abs() <= 1e-12 * xi2.max(1.0));
        }
    }
}
