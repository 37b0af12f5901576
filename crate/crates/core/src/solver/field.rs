use alloc::vec;
use alloc::vec::Vec;

use super::Window;
use crate::lattice::Site;
use crate::{Error, Result};

/// Real- or vector-valued data on the sites of a [`Window`]; zero outside.
///
/// `values[site_index * arity + component]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    window: Window,
    arity: usize,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn new(window: Window, arity: usize, values: Vec<f64>) -> Result<Self> {
        if arity == 0 {
            return Err(Error::invalid("field arity must be positive"));
        }
        if values.len() != window.len() * arity {
            return Err(Error::invalid(alloc::format!(
                "field has {} values, window needs {} x {}",
                values.len(),
                window.len(),
                arity
            )));
        }
        Ok(LatticeField { window, arity, values })
    }

    pub fn zeros(window: Window, arity: usize) -> Self {
        let n = window.len() * arity.max(1);
        LatticeField { window, arity: arity.max(1), values: vec![0.0; n] }
    }

    pub fn scalar(window: Window, values: Vec<f64>) -> Result<Self> {
        LatticeField::new(window, 1, values)
    }

    pub fn from_fn(window: Window, arity: usize, mut f: impl FnMut(Site, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(window.len() * arity);
        for i in 0..window.len() {
            let x = window.site(i);
            for k in 0..arity {
                values.push(f(x, k));
            }
        }
        LatticeField { window, arity, values }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, index: usize, component: usize) -> f64 {
        self.values[index * self.arity + component]
    }

    /// Value at a lattice site, zero outside a Dirichlet window.
    pub fn at(&self, x: &Site, component: usize) -> f64 {
        self.window.index(x).map_or(0.0, |i| self.get(i, component))
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.values.iter().skip(k).step_by(self.arity).copied().collect()
    }

    pub fn set_component(&mut self, k: usize, data: &[f64]) {
        for (i, v) in data.iter().enumerate() {
            self.values[i * self.arity + k] = *v;
        }
    }

    /// `a * self + b * other` on the same window.
    pub fn lin_comb(&self, a: f64, other: &LatticeField, b: f64) -> Result<LatticeField> {
        if self.window != other.window || self.arity != other.arity {
            return Err(Error::invalid("fields live on different windows"));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(LatticeField { window: self.window.clone(), arity: self.arity, values })
    }

    pub fn scaled(&self, a: f64) -> LatticeField {
        LatticeField { window: self.window.clone(), arity: self.arity, values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copy onto a (smaller or larger) window; sites missing from `self` read zero.
    pub fn restrict(&self, target: &Window) -> LatticeField {
        LatticeField::from_fn(target.clone(), self.arity, |x, k| self.at(&x, k))
    }
}
