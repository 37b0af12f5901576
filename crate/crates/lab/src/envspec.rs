//! Environment and observable specs as read from config tables.
//!
//! ```toml
//! [env]
//! kind = "shifted"
//! offset = [3, 0]
//! [env.base]
//! kind = "hashed-iid"
//! dim = 2
//! seed = 7
//! distribution = "uniform"
//! lo = 0.5
//! hi = 2.0
//! ```

use std::collections::BTreeMap;

use condlab_core::{Distribution, Edge, Environment, LocalObservable, PeriodicCell, PerturbRule, Site};

use crate::config::Reader;

pub const ENV_KINDS: &[&str] =
    &["constant", "periodic", "quasi-periodic", "golden", "hashed-iid", "power-blocks", "scaled", "perturbed", "shifted"];

fn site(r: &mut Reader<'_>, key: &str, coords: &[i64]) -> Option<Site> {
    match Site::new(coords) {
        Ok(s) => Some(s),
        Err(e) => {
            r.bad(key, &e.to_string());
            None
        }
    }
}

fn built(r: &mut Reader<'_>, res: condlab_core::Result<Environment>) -> Option<Environment> {
    match res {
        Ok(env) => Some(env),
        Err(e) => {
            r.bad("kind", &e.to_string());
            None
        }
    }
}

fn base(r: &mut Reader<'_>) -> Option<Environment> {
    let mut sub = r.sub("base", true)?;
    let env = read_env(&mut sub);
    sub.finish();
    env
}

fn distribution(r: &mut Reader<'_>) -> Distribution {
    match r.choice("distribution", &["uniform", "two-point", "pareto"]).as_str() {
        "uniform" => Distribution::Uniform { lo: r.f64("lo"), hi: r.f64("hi") },
        "two-point" => Distribution::TwoPoint { v1: r.f64("v1"), v2: r.f64("v2"), p: r.f64("p") },
        _ => Distribution::Pareto { tail: r.f64("tail"), floor: r.f64("floor") },
    }
}

/// Builds the environment described by the table behind `r`. Problems are
/// recorded in the reader's diagnostics; `None` means at least one was found.
pub fn read_env(r: &mut Reader<'_>) -> Option<Environment> {
    let kind = r.str("kind");
    match kind.as_str() {
        "constant" => {
            let (dim, value) = (r.usize("dim"), r.f64("value"));
            built(r, Environment::constant(dim, value))
        }
        "periodic" => {
            let periods = r.usize_list("periods");
            let values = r.f64_list("values");
            match PeriodicCell::new(periods, values) {
                Ok(cell) => built(r, Environment::periodic(cell)),
                Err(e) => {
                    r.bad("values", &e.to_string());
                    None
                }
            }
        }
        "quasi-periodic" => {
            let alphas = r.f64_list("alphas");
            let (low, high) = (r.f64("low"), r.f64("high"));
            built(r, Environment::quasi_periodic(alphas, low, high))
        }
        "golden" => {
            let dim = r.usize("dim");
            built(r, Environment::golden(dim))
        }
        "hashed-iid" => {
            let dim = r.usize("dim");
            let seed = r.u64("seed");
            let dist = distribution(r);
            built(r, Environment::hashed_iid(dim, dist, seed))
        }
        "power-blocks" => {
            let dim = r.usize("dim");
            let exponent = r.f64_or("exponent", 1.5);
            let (even, odd) = (r.f64_or("even", 1.0), r.f64_or("odd", 2.0));
            built(r, Environment::power_blocks(dim, exponent, even, odd))
        }
        "scaled" => {
            let factor = r.f64("factor");
            let b = base(r)?;
            built(r, b.scaled(factor))
        }
        "perturbed" => {
            let rule = match r.choice("rule", &["hyperplane", "edges"]).as_str() {
                "hyperplane" => Some(PerturbRule::Hyperplane { axis: r.usize("axis"), offset: r.i64("offset"), value: r.f64("value") }),
                _ => {
                    let mut map = BTreeMap::new();
                    for (k, t) in r.tables("edges").into_iter().enumerate() {
                        let path = format!("{}.edges[{k}]", r.path());
                        let mut er = Reader::new(path, Some(t), r.diag());
                        let coords = er.i64_list("base");
                        let (axis, value) = (er.usize("axis"), er.f64("value"));
                        let edge = site(&mut er, "base", &coords).and_then(|b| Edge::new(b, axis).ok());
                        if edge.is_none() {
                            er.bad("axis", "not a valid edge");
                        }
                        er.finish();
                        if let Some(e) = edge {
                            map.insert(e, value);
                        }
                    }
                    Some(PerturbRule::Edges(map))
                }
            };
            let b = base(r)?;
            built(r, b.perturb(rule?))
        }
        "shifted" => {
            let coords = r.i64_list("offset");
            let b = base(r)?;
            let z = site(r, "offset", &coords)?;
            built(r, b.shift(z))
        }
        "" => None,
        other => {
            r.bad("kind", &format!("unknown environment kind {other:?} (known: {})", ENV_KINDS.join(", ")));
            None
        }
    }
}

pub const OBSERVABLE_KINDS: &[&str] =
    &["conductance", "inverse-conductance", "conductance-power", "pi", "drift", "band", "constant"];

/// `[<command>.observable]` with `kind`, the kind's own keys and an optional `cap`.
pub fn read_observable(r: &mut Reader<'_>) -> LocalObservable {
    let kind = r.str("kind");
    let obs = match kind.as_str() {
        "conductance" => LocalObservable::Conductance { axis: r.usize_or("axis", 0) },
        "inverse-conductance" => LocalObservable::InverseConductance { axis: r.usize_or("axis", 0) },
        "conductance-power" => LocalObservable::ConductancePower { axis: r.usize_or("axis", 0), power: r.f64("power") },
        "pi" => LocalObservable::Pi,
        "drift" => LocalObservable::Drift { axis: r.usize_or("axis", 0) },
        "band" => LocalObservable::Band { axis: r.usize_or("axis", 0), lo: r.f64("lo"), hi: r.f64("hi") },
        "constant" => LocalObservable::Constant(r.f64("value")),
        "" => LocalObservable::Constant(0.0),
        other => {
            r.bad("kind", &format!("unknown observable kind {other:?} (known: {})", OBSERVABLE_KINDS.join(", ")));
            LocalObservable::Constant(0.0)
        }
    };
    if r.has("cap") {
        let cap = r.f64("cap");
        obs.capped(cap)
    } else {
        obs
    }
}
