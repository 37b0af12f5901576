mod common;

use common::{dense_weighted_operator, period2, pi_vector, site};
use condlab_core::corrector::{
    chi_eps, chi_eps_periodic, corrector_1d, drift_field, eps_chi_norm, harmonic_defect, padding, theta,
};
use condlab_core::solver::Window;
use condlab_core::{Distribution, Environment};
use nalgebra::DVector;
use proptest::prelude::*;

fn uniform_iid(dim: usize, seed: u64) -> Environment {
    Environment::hashed_iid(dim, Distribution::Uniform { lo: 0.5, hi: 2.0 }, seed).unwrap()
}

#[test]
fn one_dimensional_corrector_examples() {
    let flat = corrector_1d(&Environment::constant(1, 1.0).unwrap(), 64, 64).unwrap();
    assert_eq!(flat.a, 1.0);
    assert!((-64..=64).all(|x| flat.psi(x) == Some(x as f64)));
    assert!(flat.profile.iter().all(|&(_, v)| v == 0.0));

    let env = period2();
    let c = corrector_1d(&env, 1000, 500).unwrap();
    assert!((c.a - 4.0 / 3.0).abs() < 1e-15);
    assert_eq!(c.psi(0), Some(0.0));
    for k in -500i64..=500 {
        assert_eq!(c.psi(2 * k), Some(2.0 * k as f64));
    }
    let dev = (-1000..=1000).map(|x| (c.psi(x).unwrap() - x as f64).abs()).fold(0.0, f64::max);
    assert!((dev - 1.0 / 3.0).abs() < 1e-12);
    assert!(c.harmonic_defect(&env) <= 1e-12);
    assert_eq!(c.psi(1001), None);
}

#[test]
fn corrector_increments_follow_conductances() {
    let env = uniform_iid(1, 77);
    let c = corrector_1d(&env, 500, 500).unwrap();
    for x in -500i64..500 {
        let inc = c.psi(x + 1).unwrap() - c.psi(x).unwrap();
        let expected = c.a / env.c_plus(site(&[x]), 0);
        assert!(inc > 0.0 && (inc - expected).abs() <= 1e-12 * expected);
    }
    assert!(c.harmonic_defect(&env) <= 1e-12);
}

#[test]
fn sublinearity_decreases_over_doublings() {
    for env in [period2(), uniform_iid(1, 5)] {
        let c = corrector_1d(&env, 1 << 14, 1 << 14).unwrap();
        let s: Vec<f64> = [8, 10, 12, 14].iter().map(|&k| c.sublinearity(1 << k)).collect();
        assert!(s.windows(2).all(|w| w[1] < w[0]), "{s:?}");
    }
}

#[test]
fn chi_matches_dense_periodized_solve() {
    let env = period2();
    let eps = 0.01;
    let torus = Window::torus(&[2]).unwrap();
    let a = dense_weighted_operator(&env, &torus, eps);
    let pi = pi_vector(&env, &torus);
    let v = DVector::from_vec(drift_field(&env, &torus).component(0));
    let exact = a.lu().solve(&pi.component_mul(&v)).unwrap();
    let chi = chi_eps(&env, 8, eps, 1e-10).unwrap();
    assert!(chi.residual <= 1e-10);
    for x in -8i64..=8 {
        let got = chi.at(&site(&[x]))[0];
        let want = exact[x.rem_euclid(2) as usize];
        assert!((got - want).abs() <= 1e-6, "x={x}: {got} vs {want}");
    }
    let (per, _) = chi_eps_periodic(&env, &[2], eps, 1e-12).unwrap();
    assert!((per.get(0, 0) - exact[0]).abs() < 1e-10 && (per.get(1, 0) - exact[1]).abs() < 1e-10);
}

#[test]
fn chi_vanishes_for_constant_environments() {
    let env = Environment::constant(2, 3.0).unwrap();
    let chi = chi_eps(&env, 4, 0.1, 1e-8).unwrap();
    assert_eq!(chi.field.max_abs(), 0.0);
    assert_eq!(chi.eps_norm(&env), 0.0);
    let th = theta(&env, 4, 0.1, &chi, 1e-8).unwrap();
    assert_eq!(th.field.max_abs(), 0.0);
}

#[test]
fn chi_residual_and_padding() {
    let env = uniform_iid(2, 9);
    let tol = 1e-8;
    let chi = chi_eps(&env, 6, 0.1, tol).unwrap();
    assert_eq!(chi.pad, padding(0.1, tol));
    assert_eq!(chi.padded.window().radius(), Some(6 + chi.pad));
    assert!(chi.residual <= tol);
    assert!(chi_eps(&env, 6, 0.0, tol).is_err() && chi_eps(&env, 6, 1.5, tol).is_err());
}

#[test]
fn theta_is_linear_and_harmonic_combination_holds() {
    let env = uniform_iid(2, 13);
    let (r, eps, tol) = (6, 0.2, 1e-10);
    let chi = chi_eps(&env, r, eps, tol).unwrap();
    let th = theta(&env, r, eps, &chi, tol).unwrap();
    let th2 = theta(&env, r, eps, &chi.scaled(2.0), tol).unwrap();
    let diff = th2.field.lin_comb(1.0, &th.field, -2.0).unwrap().max_abs();
    assert!(diff <= 1e-8 * th.field.max_abs().max(1.0), "linearity {diff}");
    let defect = harmonic_defect(&env, &chi, &th);
    assert!(defect <= 1e-7, "defect {defect}");
    assert!(theta(&env, r + 1, eps, &chi, tol).is_err());
}

#[test]
fn eps_norm_decreases_with_epsilon() {
    let env = period2();
    let norms: Vec<f64> = [0.001, 0.01, 0.1].iter().map(|&e| eps_chi_norm(&env, 512, e, 1e-8).unwrap()).collect();
    assert!(norms[0] < norms[1] && norms[1] < norms[2], "{norms:?}");
}

#[test]
fn cocycle_of_approximate_harmonic_coordinate() {
    let env = uniform_iid(2, 3);
    let (eps, tol) = (0.1, 1e-8);
    let z = site(&[3, -2]);
    let chi = chi_eps(&env, 10, eps, tol).unwrap();
    let shifted = chi_eps(&env.shift(z).unwrap(), 10, eps, tol).unwrap();
    let psi = |y| chi.at(&y)[0] - chi.at(&site(&[0, 0]))[0];
    let mut worst: f64 = 0.0;
    for a in -5i64..=5 {
        for b in -5i64..=5 {
            let y = site(&[a, b]);
            let lhs = psi(z + y) - psi(z);
            let rhs = shifted.at(&y)[0] - shifted.at(&site(&[0, 0]))[0];
            worst = worst.max((lhs - rhs).abs());
        }
    }
    assert!(worst <= 10.0 * tol, "cocycle mismatch {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn eps_norm_is_scale_invariant(seed in any::<u64>(), lambda in 0.1f64..10.0) {
        let env = uniform_iid(2, seed);
        let a = eps_chi_norm(&env, 4, 0.3, 1e-10).unwrap();
        let b = eps_chi_norm(&env.scaled(lambda).unwrap(), 4, 0.3, 1e-10).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a);
    }

    #[test]
    fn psi_strictly_increasing(seed in any::<u64>()) {
        let env = Environment::hashed_iid(1, Distribution::Pareto { tail: 1.5, floor: 0.1 }, seed).unwrap();
        let c = corrector_1d(&env, 200, 200).unwrap();
        prop_assert!(c.values().windows(2).all(|w| w[1] > w[0]));
        prop_assert!(c.harmonic_defect(&env) <= 1e-10 * c.a.max(1.0));
    }
}
