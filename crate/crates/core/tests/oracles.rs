//! Library results against the independent implementations in `common`.

mod common;

use num_complex::Complex64;
use tomo_core::fock::{fidelity, wavefunctions, CMatrix};
use tomo_core::povm::{center_povm_for_bin, default_quadrature_order, integrated_povm, point_povm};
use tomo_core::sampler::predicted_density;
use tomo_core::states::{apply_loss, make_cat, make_fock, make_squeezed_vacuum, StateKind, StateSpec};
use tomo_core::DensityMatrix;

#[test]
fn wavefunctions_match_hermite_polynomials() {
    for &x in &[-7.5, -2.0, -0.3, 0.0, 0.8, 3.3, 9.0] {
        let lib = wavefunctions(x, 15).unwrap();
        let oracle = common::hermite_functions(x, 15);
        for n in 0..=15 {
            assert!((lib.get(n) - oracle[n]).abs() < 1e-12, "n={n} x={x}");
        }
    }
}

#[test]
fn loss_matches_explicit_kraus_sum() {
    let rho = make_cat(1.5, 12).unwrap();
    for tau in [0.95, 0.6, 1.0] {
        let lib = apply_loss(&rho, tau).unwrap();
        let oracle = common::apply_kraus(rho.matrix(), tau);
        assert!(common::max_abs_diff(lib.matrix(), &oracle) < 1e-13);
    }
}

#[test]
fn point_operator_matches_oracle() {
    for (x, theta, eta) in [(0.4, 0.0, 0.9), (-1.7, 1.1, 0.9), (2.2, 2.9, 0.75), (0.0, 0.5, 1.0)] {
        let lib = point_povm(x, theta, 8, eta).unwrap();
        let oracle = common::dual_kraus(&common::ideal_point(x, theta, 8), eta);
        assert!(common::max_abs_diff(lib.matrix(), &oracle) < 1e-13);
    }
}

#[test]
fn integrated_operator_matches_adaptive_quadrature() {
    for (a, b, theta) in [(-0.5, 0.5, 0.3), (0.2, 1.25, 1.9), (-3.1, -2.05, 2.7), (1.0, 1.34, 0.0)] {
        for t in [6, 10] {
            let lib = integrated_povm(a, b, theta, t, 0.9, default_quadrature_order(t)).unwrap();
            let oracle = common::integrated_operator(a, b, theta, t, 0.9, 1e-12);
            let err = common::max_abs_diff(lib.matrix(), &oracle);
            assert!(err < 1e-7, "[{a}, {b}) t={t}: {err:e}");
        }
    }
}

#[test]
fn center_and_integral_agree_for_narrow_bins() {
    let rho = apply_loss(&make_cat(1.0, 10).unwrap(), 0.95).unwrap();
    let (mut center, mut integral) = (0.0, 0.0);
    let h = 0.05;
    let mut lo = -6.0;
    while lo < 6.0 {
        center += center_povm_for_bin(lo, lo + h, 0.7, 10, 0.9).unwrap().trace_with(rho.matrix());
        integral += integrated_povm(lo, lo + h, 0.7, 10, 0.9, 20).unwrap().trace_with(rho.matrix());
        lo += h;
    }
    assert!((integral - 1.0).abs() < 1e-6);
    assert!((center - integral).abs() / integral < 0.02);
}

#[test]
fn sampling_density_matches_oracle() {
    let rho = apply_loss(&make_squeezed_vacuum(0.75, 10).unwrap(), 0.95).unwrap();
    for theta in [0.0, 0.4, 1.6] {
        let lib = predicted_density(&rho, theta, 0.9).unwrap();
        let oracle = common::DensityOracle::new(rho.matrix(), theta, 0.9);
        for i in -40..=40 {
            let x = i as f64 * 0.15;
            assert!((lib.density(x) - oracle.eval(x)).abs() < 1e-13);
        }
    }
}

#[test]
fn fidelity_of_commuting_states_is_classical_overlap() {
    let p = [0.5f64, 0.3, 0.2, 0.0];
    let q = [0.25, 0.25, 0.25, 0.25];
    let diag = |v: &[f64]| DensityMatrix::new(CMatrix::from_fn(4, 4, |i, j| Complex64::new(if i == j { v[i] } else { 0.0 }, 0.0))).unwrap();
    let expected: f64 = p.iter().zip(&q).map(|(a, b)| (a * b).sqrt()).sum();
    let f = fidelity(&diag(&p), &diag(&q)).unwrap();
    assert!((f - expected).abs() < 1e-12);
    let pure = make_fock(2, 3).unwrap();
    assert!((fidelity(&pure, &diag(&q)).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn lossy_fock_populations_are_binomial() {
    let spec = StateSpec { kind: StateKind::Fock { n: 5 }, truncation: 7, loss_transmissivity: 0.8 };
    let rho = spec.prepare().unwrap().rho_true;
    for k in 0..=5u32 {
        let binom = (0..k).fold(1.0, |acc, i| acc * (5 - i) as f64 / (i + 1) as f64);
        let expected = binom * 0.8f64.powi(k as i32) * 0.2f64.powi(5 - k as i32);
        assert!((rho.population(k as usize) - expected).abs() < 1e-14);
    }
}
