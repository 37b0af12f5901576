#![allow(dead_code)]

use condlab_core::solver::Window;
use condlab_core::{Edge, Environment, PeriodicCell, Site};
use nalgebra::{DMatrix, DVector};

pub fn period2() -> Environment {
    Environment::periodic(PeriodicCell::line(&[1.0, 2.0]).unwrap()).unwrap()
}

pub fn site(c: &[i64]) -> Site {
    Site::new(c).unwrap()
}

/// Dense `pi (eps - L)` on a window, built site by site straight from the
/// environment (exterior neighbors dropped, torus neighbors wrapped).
pub fn dense_weighted_operator(env: &Environment, w: &Window, eps: f64) -> DMatrix<f64> {
    let n = w.len();
    let d = env.dim();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let x = w.site(i);
        for axis in 0..d {
            for delta in [1i64, -1] {
                let y = x.offset(axis, delta);
                let c = env.conductance(&Edge::between(x, y).unwrap()).unwrap();
                a[(i, i)] += c * (1.0 + eps);
                if let Some(j) = w.index(&y) {
                    a[(i, j)] -= c;
                }
            }
        }
    }
    a
}

pub fn pi_vector(env: &Environment, w: &Window) -> DVector<f64> {
    DVector::from_iterator(w.len(), w.sites().map(|x| env.pi(x)))
}

/// Deterministic pseudo-random values in [-1, 1] for test fields.
pub fn test_values(n: usize, salt: u64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let h = condlab_core::rng::mix64(salt.wrapping_mul(0x1000_0001).wrapping_add(i as u64));
            2.0 * condlab_core::rng::unit_f64(h) - 1.0
        })
        .collect()
}
