//! Local observables `f: Omega -> R` and their translates `f o tau_x`.

use alloc::boxed::Box;
use alloc::sync::Arc;
use core::fmt;

use crate::environment::Environment;
use crate::lattice::{Edge, Site};

/// The environment seen from `origin`, i.e. `tau_origin(omega)` without
/// allocating a shifted copy.
#[derive(Clone, Copy)]
pub struct EnvView<'a> {
    env: &'a Environment,
    origin: Site,
}

impl<'a> EnvView<'a> {
    pub fn new(env: &'a Environment, origin: Site) -> Self {
        EnvView { env, origin }
    }

    pub fn dim(&self) -> usize {
        self.env.dim()
    }

    pub fn origin(&self) -> Site {
        self.origin
    }

    /// Conductance of the edge `(rel, rel + e_axis)` relative to the view origin.
    #[inline]
    pub fn c(&self, rel: Site, axis: usize) -> f64 {
        self.env.conductance_unchecked(&Edge { base: self.origin + rel, axis })
    }

    /// `c(0, e_axis)` in the viewed environment.
    #[inline]
    pub fn c0(&self, axis: usize) -> f64 {
        self.env.c_plus(self.origin, axis)
    }

    #[inline]
    pub fn pi0(&self) -> f64 {
        self.env.pi(self.origin)
    }
}

pub type CustomFn = dyn Fn(&EnvView<'_>) -> f64 + Send + Sync;

/// A function of the environment that reads only conductances within `radius`
/// of the origin.
#[derive(Clone)]
pub enum LocalObservable {
    Constant(f64),
    /// `c(0, e_axis)`.
    Conductance { axis: usize },
    /// `1 / c(0, e_axis)`.
    InverseConductance { axis: usize },
    /// `c(0, e_axis)^power`.
    ConductancePower { axis: usize, power: f64 },
    /// `pi(0)`.
    Pi,
    /// Component `axis` of the local drift `V = E^0(X_1)`.
    Drift { axis: usize },
    /// Indicator of `c(0, e_axis)` in the closed interval `[lo, hi]`.
    Band { axis: usize, lo: f64, hi: f64 },
    /// `min(inner, cap)`.
    Capped { inner: Box<LocalObservable>, cap: f64 },
    Product(Box<LocalObservable>, Box<LocalObservable>),
    Custom { radius: usize, f: Arc<CustomFn> },
}

impl LocalObservable {
    pub fn custom(radius: usize, f: impl Fn(&EnvView<'_>) -> f64 + Send + Sync + 'static) -> Self {
        LocalObservable::Custom { radius, f: Arc::new(f) }
    }

    pub fn capped(self, cap: f64) -> Self {
        LocalObservable::Capped { inner: Box::new(self), cap }
    }

    pub fn times(self, other: LocalObservable) -> Self {
        LocalObservable::Product(Box::new(self), Box::new(other))
    }

    /// Dependence radius in the supremum norm.
    pub fn radius(&self) -> usize {
        match self {
            LocalObservable::Constant(_) => 0,
            LocalObservable::Conductance { .. }
            | LocalObservable::InverseConductance { .. }
            | LocalObservable::ConductancePower { .. }
            | LocalObservable::Band { .. } => 1,
            LocalObservable::Pi | LocalObservable::Drift { .. } => 1,
            LocalObservable::Capped { inner, .. } => inner.radius(),
            LocalObservable::Product(a, b) => a.radius().max(b.radius()),
            LocalObservable::Custom { radius, .. } => *radius,
        }
    }

    /// Largest axis index the observable reads, for dimension checks.
    pub fn max_axis(&self) -> Option<usize> {
        match self {
            LocalObservable::Conductance { axis }
            | LocalObservable::InverseConductance { axis }
            | LocalObservable::ConductancePower { axis, .. }
            | LocalObservable::Drift { axis }
            | LocalObservable::Band { axis, .. } => Some(*axis),
            LocalObservable::Capped { inner, .. } => inner.max_axis(),
            LocalObservable::Product(a, b) => match (a.max_axis(), b.max_axis()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, view: &EnvView<'_>) -> f64 {
        match self {
            LocalObservable::Constant(v) => *v,
            LocalObservable::Conductance { axis } => view.c0(*axis),
            LocalObservable::InverseConductance { axis } => 1.0 / view.c0(*axis),
            LocalObservable::ConductancePower { axis, power } => crate::math::powf(view.c0(*axis), *power),
            LocalObservable::Pi => view.pi0(),
            LocalObservable::Drift { axis } => {
                let x = view.origin();
                let up = view.env.c_plus(x, *axis);
                let down = view.env.c_minus(x, *axis);
                (up - down) / view.pi0()
            }
            LocalObservable::Band { axis, lo, hi } => {
                let c = view.c0(*axis);
                if *lo <= c && c <= *hi {
                    1.0
                } else {
                    0.0
                }
            }
            LocalObservable::Capped { inner, cap } => inner.eval(view).min(*cap),
            LocalObservable::Product(a, b) => a.eval(view) * b.eval(view),
            LocalObservable::Custom { f, .. } => f(view),
        }
    }

    /// `f o tau_x (omega)`.
    #[inline]
    pub fn at(&self, env: &Environment, x: Site) -> f64 {
        self.eval(&EnvView::new(env, x))
    }
}

impl fmt::Debug for LocalObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalObservable::Constant(v) => write!(f, "Constant({v})"),
            LocalObservable::Conductance { axis } => write!(f, "c(0,e{axis})"),
            LocalObservable::InverseConductance { axis } => write!(f, "1/c(0,e{axis})"),
            LocalObservable::ConductancePower { axis, power } => write!(f, "c(0,e{axis})^{power}"),
            LocalObservable::Pi => write!(f, "pi(0)"),
            LocalObservable::Drift { axis } => write!(f, "V_{axis}"),
            LocalObservable::Band { axis, lo, hi } => write!(f, "1[c(0,e{axis}) in [{lo},{hi}]]"),
            LocalObservable::Capped { inner, cap } => write!(f, "min({inner:?}, {cap})"),
            LocalObservable::Product(a, b) => write!(f, "({a:?})*({b:?})"),
            LocalObservable::Custom { radius, .. } => write!(f, "custom(radius={radius})"),
        }
    }
}
