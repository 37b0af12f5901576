mod common;

use std::sync::Arc;

use common::{dense_weighted_operator, period2, pi_vector, test_values};
use condlab_core::homogenize::{
    dirichlet_energy, dirichlet_energy_restricted, effective_sigma, energy_scan, lemma35_check, normal_equations,
    periodic_cell_energy, sigma_1d_exact, trial_energy, weighted_divergence, StationaryEdgeField,
};
use condlab_core::solver::{Boundary, LatticeField, Window};
use condlab_core::{Distribution, Environment, LocalObservable, PeriodicCell, Site};
use nalgebra::DVector;
use proptest::prelude::*;

fn uniform_iid(dim: usize, seed: u64) -> Environment {
    Environment::hashed_iid(dim, Distribution::Uniform { lo: 0.5, hi: 2.0 }, seed).unwrap()
}

fn zero_field(dim: usize) -> StationaryEdgeField {
    StationaryEdgeField::Constant(vec![0.0; dim])
}

/// The gradient of a bump supported in `Lambda_3`, as a field of position.
fn bump_gradient() -> (StationaryEdgeField, Arc<dyn Fn(Site) -> f64 + Send + Sync>) {
    let h0: Arc<dyn Fn(Site) -> f64 + Send + Sync> = Arc::new(|x: Site| {
        let (a, b) = (x.get(0), x.get(1));
        if a.abs() <= 3 && b.abs() <= 3 {
            ((4 - a.abs()) * (4 - b.abs())) as f64 + 0.5 * a as f64
        } else {
            0.0
        }
    });
    let comp = |axis: usize| {
        let h = h0.clone();
        LocalObservable::custom(0, move |v| {
            let x = v.origin();
            h(x.offset(axis, 1)) - h(x)
        })
    };
    (StationaryEdgeField::Local(vec![comp(0), comp(1)]), h0)
}

#[test]
fn zero_field_has_zero_energy() {
    let env = uniform_iid(2, 1);
    let e = dirichlet_energy(&env, 6, &zero_field(2), 1e-10).unwrap();
    assert_eq!((e.value, e.minimizer.max_abs()), (0.0, 0.0));
    let l = lemma35_check(&env, 6, &zero_field(2), 1e-10).unwrap();
    assert_eq!((l.lhs, l.rhs), (0.0, 0.0));
    assert!(energy_scan(&env, &[2, 4, 8], &zero_field(2), 1e-10).unwrap().iter().all(|r| r.per_site == 0.0));
}

#[test]
fn gradient_fields_are_fully_absorbed() {
    let env = uniform_iid(2, 4);
    let (v, h0) = bump_gradient();
    let e = dirichlet_energy(&env, 6, &v, 1e-12).unwrap();
    assert!(e.value <= 1e-16 * e.unminimized.max(1.0) + 1e-18, "energy {}", e.value);
    for (i, x) in e.minimizer.window().sites().enumerate() {
        assert!((e.minimizer.get(i, 0) - h0(x)).abs() <= 1e-8, "at {x:?}");
    }
}

#[test]
fn constant_field_energy_per_site() {
    let env = Environment::constant(2, 1.0).unwrap();
    let e = dirichlet_energy(&env, 32, &StationaryEdgeField::unit(2, 0), 1e-10).unwrap();
    assert!((e.per_site - 1.0).abs() <= 0.05, "{}", e.per_site);
    assert!((e.per_site - 66.0 / 65.0).abs() <= 1e-8);
    let rows = energy_scan(&env, &[4, 8, 16, 32], &StationaryEdgeField::unit(2, 0), 1e-10).unwrap();
    assert!(rows.windows(2).skip(1).all(|w| w[1].gap_to_previous < w[0].gap_to_previous));
    let cell = Environment::periodic(PeriodicCell::new(vec![1, 1], vec![1.0, 1.0]).unwrap()).unwrap();
    let exact = periodic_cell_energy(&cell, &StationaryEdgeField::unit(2, 0), 1e-12).unwrap();
    assert_eq!(exact.per_site, 1.0);
}

#[test]
fn periodic_scan_approaches_cell_value() {
    let v = StationaryEdgeField::unit(1, 0);
    let env = period2();
    let cell = periodic_cell_energy(&env, &v, 1e-12).unwrap().per_site;
    assert!((cell - 4.0 / 3.0).abs() < 1e-12);
    let row = energy_scan(&env, &[4, 16], &v, 1e-12).unwrap();
    assert!((row[1].per_site - cell).abs() <= 0.05 * cell);

    let vals: Vec<f64> = (0..8).map(|k| 0.5 + 0.25 * k as f64).collect();
    let env2 = Environment::periodic(PeriodicCell::new(vec![2, 2], vals).unwrap()).unwrap();
    let v2 = StationaryEdgeField::Constant(vec![1.0, 0.5]);
    let cell2 = periodic_cell_energy(&env2, &v2, 1e-12).unwrap().per_site;
    let scan = energy_scan(&env2, &[16], &v2, 1e-10).unwrap();
    assert!((scan[0].per_site - cell2).abs() <= 0.05 * cell2, "{} vs {cell2}", scan[0].per_site);
}

#[test]
fn energy_identity_seed_seven() {
    let env = uniform_iid(2, 7);
    let v = StationaryEdgeField::unit(2, 0);
    let l = lemma35_check(&env, 8, &v, 1e-10).unwrap();
    assert!(l.gap <= 1e-8, "gap {}", l.gap);
    let s = lemma35_check(&env.scaled(3.0).unwrap(), 8, &v, 1e-10).unwrap();
    assert!((s.lhs - 3.0 * l.lhs).abs() <= 1e-10 * s.lhs);
    assert!((s.rhs - 3.0 * l.rhs).abs() <= 1e-10 * s.rhs);
}

#[test]
fn energy_identity_for_local_fields() {
    let env = uniform_iid(2, 19);
    let v = StationaryEdgeField::Local(vec![
        LocalObservable::Conductance { axis: 1 },
        LocalObservable::Drift { axis: 0 }.times(LocalObservable::Constant(3.0)),
    ]);
    let tol = 1e-10;
    let l = lemma35_check(&env, 7, &v, tol).unwrap();
    assert!(l.gap <= 100.0 * tol * l.lhs.max(1.0), "gap {}", l.gap);
    let far = StationaryEdgeField::Local(vec![LocalObservable::custom(9, |v| v.c(Site::new(&[9, 0]).unwrap(), 0)); 2]);
    assert!(dirichlet_energy(&env, 8, &far, tol).is_err());
}

#[test]
fn minimizer_matches_dense_normal_equations() {
    let env = uniform_iid(2, 21);
    let w = Window::centered(2, 7).unwrap();
    assert!(w.len() <= 300);
    let v = StationaryEdgeField::Constant(vec![0.3, -1.1]);
    let a = dense_weighted_operator(&env, &w, 0.0);
    let f = DVector::from_vec(weighted_divergence(&env, &w, &v).values().to_vec());
    let b = -pi_vector(&env, &w).component_mul(&f);
    let exact = a.clone().lu().solve(&b).unwrap();
    let (csr, rhs) = normal_equations(&env, &w, &v).unwrap();
    let dense = csr.to_dense();
    for i in 0..w.len() {
        assert!((rhs[i] - b[i]).abs() <= 1e-13);
        for j in 0..w.len() {
            assert!((dense[i * w.len() + j] - a[(i, j)]).abs() <= 1e-13);
        }
    }
    let e = dirichlet_energy(&env, 7, &v, 1e-12).unwrap();
    let err = e.minimizer.values().iter().zip(exact.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn restricting_support_cannot_lower_energy() {
    let env = uniform_iid(2, 2);
    let v = StationaryEdgeField::Constant(vec![1.0, 2.0]);
    let full = dirichlet_energy(&env, 8, &v, 1e-11).unwrap();
    let half = dirichlet_energy_restricted(&env, 8, 4, &v, 1e-11).unwrap();
    assert!(half.value >= full.value - 1e-9);
    assert!(half.value <= half.unminimized);
    assert!(dirichlet_energy_restricted(&env, 4, 8, &v, 1e-11).is_err());
}

#[test]
fn sigma_closed_forms() {
    let s = effective_sigma(&Environment::constant(2, 1.0).unwrap(), 8, 1e-10, Boundary::Periodic).unwrap();
    assert_eq!(s.entries, [0.5, 0.0, 0.0, 0.5]);
    let env = period2();
    let per = effective_sigma(&env, 4, 1e-12, Boundary::Periodic).unwrap();
    assert!((per.get(0, 0) - 8.0 / 9.0).abs() <= 1e-10);
    assert!((sigma_1d_exact(&env, 64).unwrap() - per.get(0, 0)).abs() <= 1e-10);
    assert_eq!(sigma_1d_exact(&Environment::constant(1, 1.0).unwrap(), 10).unwrap(), 1.0);
    assert!(effective_sigma(&env, 3, 1e-10, Boundary::Periodic).is_err());
    assert!(effective_sigma(&uniform_iid(1, 1), 4, 1e-10, Boundary::Periodic).is_err());
}

#[test]
fn sigma_permutes_with_axes() {
    let vals: Vec<f64> = (0..18).map(|k| 0.5 + ((k * 7) % 11) as f64 / 4.0).collect();
    let mut swapped = vec![0.0; 18];
    for x0 in 0..3 {
        for x1 in 0..3 {
            for axis in 0..2 {
                swapped[(x1 * 3 + x0) * 2 + (1 - axis)] = vals[(x0 * 3 + x1) * 2 + axis];
            }
        }
    }
    let a = Environment::periodic(PeriodicCell::new(vec![3, 3], vals).unwrap()).unwrap();
    let b = Environment::periodic(PeriodicCell::new(vec![3, 3], swapped).unwrap()).unwrap();
    let sa = effective_sigma(&a, 6, 1e-12, Boundary::Periodic).unwrap();
    let sb = effective_sigma(&b, 6, 1e-12, Boundary::Periodic).unwrap();
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        assert!((sa.get(i, j) - sb.get(1 - i, 1 - j)).abs() <= 1e-10);
    }
    assert!(sa.get(0, 1) != 0.0);
}

#[test]
fn sigma_psd_and_below_unminimized() {
    for seed in [1, 2, 3] {
        let env = uniform_iid(2, seed);
        let s = effective_sigma(&env, 8, 1e-10, Boundary::Dirichlet).unwrap();
        assert!(s.is_psd());
        assert!((s.get(0, 1) - s.get(1, 0)).abs() <= 1e-12);
        let w = Window::centered(2, 8).unwrap();
        let edges = w.edges();
        let total: f64 = edges.iter().map(|e| env.conductance_unchecked(e)).sum();
        for axis in 0..2 {
            let along: f64 = edges.iter().filter(|e| e.axis == axis).map(|e| env.conductance_unchecked(e)).sum();
            assert!(s.get(axis, axis) <= along / total + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn infimum_below_random_trials(seed in any::<u64>(), salt in any::<u64>(), a in -2.0f64..2.0) {
        let env = uniform_iid(2, seed);
        let v = StationaryEdgeField::Constant(vec![a, 1.0]);
        let e = dirichlet_energy(&env, 5, &v, 1e-10).unwrap();
        let w = Window::centered(2, 5).unwrap();
        let trial = LatticeField::scalar(w.clone(), test_values(w.len(), salt)).unwrap();
        prop_assert!(e.value <= trial_energy(&env, &v, &trial).unwrap() + 1e-9);
        prop_assert!(e.value <= e.unminimized);
        let mine = trial_energy(&env, &v, &e.minimizer).unwrap();
        prop_assert!((mine - e.value).abs() <= 1e-10 * e.value.max(1.0));
    }

    #[test]
    fn energy_identity_gap_small(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let env = uniform_iid(2, seed);
        let tol = 1e-10;
        let l = lemma35_check(&env, 5, &StationaryEdgeField::Constant(vec![a, b]), tol).unwrap();
        prop_assert!(l.gap <= 100.0 * tol * l.lhs.max(1.0));
    }

    #[test]
    fn edge_field_antisymmetric(seed in any::<u64>(), x in -20i64..20, y in -20i64..20, axis in 0usize..2) {
        let env = uniform_iid(2, seed);
        let v = StationaryEdgeField::Local(vec![LocalObservable::Pi, LocalObservable::InverseConductance { axis: 0 }]);
        let p = Site::new(&[x, y]).unwrap();
        let q = p.offset(axis, 1);
        prop_assert_eq!(v.directed(&env, p, q).unwrap(), -v.directed(&env, q, p).unwrap());
    }
}
