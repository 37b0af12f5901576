//! The conductance walk `P(x, y) = c(x, y) / pi(x)` and statistics of its paths.
//!
//! Neighbors are always enumerated as `+e_1, -e_1, ..., +e_d, -e_d`. Step `k`
//! of a walk with seed `s` consumes draw `k` of the step stream of `s`; the
//! continuous-time clock uses a separate stream, so the jump chain of
//! [`simulate_ct`] coincides with [`simulate`] for the same seed.

use alloc::vec;
use alloc::vec::Vec;

use crate::averaging::block_average;
use crate::environment::Environment;
use crate::lattice::{Site, MAX_DIM};
use crate::observable::{EnvView, LocalObservable};
use crate::rng::{CounterStream, STREAM_CLOCK, STREAM_STEPS};
use crate::stats::CompensatedSum;
use crate::{math, Error, Result};

/// Default hard budget for exit-time simulations.
pub const DEFAULT_EXIT_CAP: u64 = 100_000_000;

fn check_site(env: &Environment, x: &Site) -> Result<()> {
    if x.dim() != env.dim() {
        return Err(Error::DimensionMismatch { expected: env.dim(), got: x.dim() });
    }
    Ok(())
}

#[inline]
fn neighbor_weights(env: &Environment, x: Site, out: &mut [f64; 2 * MAX_DIM]) -> f64 {
    let mut pi = 0.0;
    for axis in 0..env.dim() {
        let up = env.c_plus(x, axis);
        let down = env.c_minus(x, axis);
        out[2 * axis] = up;
        out[2 * axis + 1] = down;
        pi += up + down;
    }
    pi
}

#[inline]
fn slot_to_site(x: Site, slot: usize) -> Site {
    x.offset(slot / 2, if slot % 2 == 0 { 1 } else { -1 })
}

/// `(y, P(x, y))` for the `2d` neighbors of `x`.
pub fn step_distribution(env: &Environment, x: Site) -> Result<Vec<(Site, f64)>> {
    check_site(env, &x)?;
    let mut w = [0.0; 2 * MAX_DIM];
    let pi = neighbor_weights(env, x, &mut w);
    Ok((0..2 * env.dim()).map(|k| (slot_to_site(x, k), w[k] / pi)).collect())
}

/// `V o tau_x = sum_y P(x, y) (y - x)`.
pub fn local_drift(env: &Environment, x: Site) -> Result<Vec<f64>> {
    check_site(env, &x)?;
    let pi = env.pi(x);
    Ok((0..env.dim()).map(|i| (env.c_plus(x, i) - env.c_minus(x, i)) / pi).collect())
}

/// Streaming walk: yields `X_1, X_2, ...` without storing the path.
#[derive(Clone, Debug)]
pub struct Walker<'a> {
    env: &'a Environment,
    pos: Site,
    rng: CounterStream,
}

impl<'a> Walker<'a> {
    pub fn new(env: &'a Environment, x0: Site, seed: u64) -> Result<Self> {
        check_site(env, &x0)?;
        Ok(Walker { env, pos: x0, rng: CounterStream::new(seed, STREAM_STEPS) })
    }

    /// A walker at `x` about to take step number `k` of the walk with `seed`.
    pub fn resume(env: &'a Environment, x: Site, seed: u64, k: u64) -> Result<Self> {
        let mut w = Walker::new(env, x, seed)?;
        w.rng.seek(k);
        Ok(w)
    }

    pub fn position(&self) -> Site {
        self.pos
    }

    pub fn steps_taken(&self) -> u64 {
        self.rng.index()
    }

    /// Advances one step and returns the new position.
    #[inline]
    pub fn step(&mut self) -> Site {
        let mut w = [0.0; 2 * MAX_DIM];
        let pi = neighbor_weights(self.env, self.pos, &mut w);
        let target = self.rng.next_unit() * pi;
        let m = 2 * self.env.dim();
        let mut acc = 0.0;
        let mut slot = m - 1;
        for (k, wk) in w.iter().enumerate().take(m) {
            acc += wk;
            if target < acc {
                slot = k;
                break;
            }
        }
        self.pos = slot_to_site(self.pos, slot);
        self.pos
    }
}

impl Iterator for Walker<'_> {
    type Item = Site;

    fn next(&mut self) -> Option<Site> {
        Some(self.step())
    }
}

/// A stored trajectory `X_0, ..., X_n`, with jump times for the continuous-time walk.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    pub start: Site,
    pub positions: Vec<Site>,
    pub seed: u64,
    /// Jump times of the rate-one clock; `event_times[k]` is the time of the jump to `positions[k + 1]`.
    pub event_times: Option<Vec<f64>>,
    /// Time horizon of a continuous-time path.
    pub t_max: Option<f64>,
}

impl WalkPath {
    /// Number of steps `n`.
    pub fn steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn end(&self) -> Site {
        *self.positions.last().expect("paths hold at least the start")
    }

    /// `N(t)`, the number of jumps up to time `t` (continuous-time paths only).
    pub fn jumps_by(&self, t: f64) -> Option<usize> {
        self.event_times.as_ref().map(|ts| ts.partition_point(|&s| s <= t))
    }

    /// `Y_t = X_{N(t)}` (continuous-time paths only).
    pub fn position_at_time(&self, t: f64) -> Option<Site> {
        self.jumps_by(t).map(|k| self.positions[k])
    }
}

/// `n` steps of the discrete-time walk from `x0`.
pub fn simulate(env: &Environment, x0: Site, n: usize, seed: u64) -> Result<WalkPath> {
    let walker = Walker::new(env, x0, seed)?;
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(x0);
    positions.extend(walker.take(n));
    Ok(WalkPath { start: x0, positions, seed, event_times: None, t_max: None })
}

/// Constant-speed continuous-time walk `Y_t = X_{N(t)}` on `[0, t_max]`.
pub fn simulate_ct(env: &Environment, x0: Site, t_max: f64, seed: u64) -> Result<WalkPath> {
    if !(t_max > 0.0) {
        return Err(Error::invalid("t_max must be positive"));
    }
    let mut walker = Walker::new(env, x0, seed)?;
    let mut clock = CounterStream::new(seed, STREAM_CLOCK);
    let mut positions = vec![x0];
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += clock.next_exp();
        if t > t_max {
            break;
        }
        times.push(t);
        positions.push(walker.step());
    }
    Ok(WalkPath { start: x0, positions, seed, event_times: Some(times), t_max: Some(t_max) })
}

/// Position of the continuous-time walk at `t`, streamed.
pub fn ct_position(env: &Environment, x0: Site, t: f64, seed: u64) -> Result<(Site, usize)> {
    let mut walker = Walker::new(env, x0, seed)?;
    let mut clock = CounterStream::new(seed, STREAM_CLOCK);
    let mut s = 0.0;
    let mut jumps = 0;
    loop {
        s += clock.next_exp();
        if s > t {
            return Ok((walker.position(), jumps));
        }
        walker.step();
        jumps += 1;
    }
}

/// `B^{(n)}_t = n^{-1/2} (X_{floor(tn)} + (tn - floor(tn)) (X_{floor(tn)+1} - X_{floor(tn)}))`,
/// stored by its breakpoints at `t = k / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RescaledPath {
    pub n: usize,
    dim: usize,
    /// `n^{-1/2} X_k`, row-major `(k, axis)`.
    samples: Vec<f64>,
}

pub fn rescale(path: &WalkPath, n: usize) -> Result<RescaledPath> {
    if n == 0 {
        return Err(Error::invalid("scale n must be at least 1"));
    }
    if path.steps() < n {
        return Err(Error::invalid(alloc::format!("path has {} steps, scale {} needs at least n", path.steps(), n)));
    }
    let s = 1.0 / math::sqrt(n as f64);
    let dim = path.start.dim();
    let samples = path.positions.iter().flat_map(|x| x.coords().iter().map(move |&c| c as f64 * s)).collect();
    Ok(RescaledPath { n, dim, samples })
}

impl RescaledPath {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Last time covered by the breakpoints.
    pub fn horizon(&self) -> f64 {
        (self.breakpoints() - 1) as f64 / self.n as f64
    }

    pub fn breakpoints(&self) -> usize {
        self.samples.len() / self.dim
    }

    /// `B_{k/n}`.
    pub fn at_breakpoint(&self, k: usize) -> &[f64] {
        &self.samples[k * self.dim..(k + 1) * self.dim]
    }

    fn coord(&self, t: f64, axis: usize) -> f64 {
        let tn = t * self.n as f64;
        let k = (math::floor(tn) as usize).min(self.breakpoints() - 1);
        let frac = tn - k as f64;
        let a = self.samples[k * self.dim + axis];
        if frac == 0.0 {
            return a;
        }
        let b = self.samples[(k + 1) * self.dim + axis];
        a + frac * (b - a)
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let max = self.horizon();
        if !(t >= 0.0 && t <= max) {
            return Err(Error::OutOfRange { t, max });
        }
        Ok((0..self.dim).map(|i| self.coord(t, i)).collect())
    }

    /// `sup { |B_s - B_t|_inf : s, t in [0, T], |s - t| <= delta }`, exact for
    /// the piecewise-linear path.
    ///
    /// The supremum is attained on a window of length `delta` that starts or
    /// ends at a breakpoint, so it suffices to scan those windows.
    pub fn oscillation(&self, t_end: f64, delta: f64) -> Result<f64> {
        let max = self.horizon();
        if !(t_end >= 0.0 && t_end <= max) {
            return Err(Error::OutOfRange { t: t_end, max });
        }
        if !(delta > 0.0) {
            return Err(Error::invalid("delta must be positive"));
        }
        let nf = self.n as f64;
        let kmax = math::floor(t_end * nf) as usize;
        let mut best: f64 = 0.0;
        for axis in 0..self.dim {
            let vals: Vec<f64> = (0..=kmax).map(|k| self.samples[k * self.dim + axis]).collect();
            let table = SparseMinMax::new(&vals);
            let end_val = self.coord(t_end, axis);
            let window = |lo_t: f64, hi_t: f64| -> f64 {
                // breakpoints strictly inside plus the two window ends
                let a = self.coord(lo_t, axis);
                let b = if hi_t >= t_end { end_val } else { self.coord(hi_t, axis) };
                let (mut mn, mut mx) = (a.min(b), a.max(b));
                let k0 = math::ceil(lo_t * nf) as usize;
                let k1 = (math::floor(hi_t * nf) as usize).min(kmax);
                if k0 <= k1 {
                    let (m0, m1) = table.query(k0, k1);
                    mn = mn.min(m0);
                    mx = mx.max(m1);
                }
                mx - mn
            };
            for k in 0..=kmax {
                let t = k as f64 / nf;
                best = best.max(window(t, (t + delta).min(t_end)));
                best = best.max(window((t - delta).max(0.0), t));
            }
            if t_end * nf > kmax as f64 {
                best = best.max(window((t_end - delta).max(0.0), t_end));
            }
        }
        Ok(best)
    }
}

/// Range minimum/maximum queries in O(1) after O(n log n) preprocessing.
struct SparseMinMax {
    mins: Vec<Vec<f64>>,
    maxs: Vec<Vec<f64>>,
}

impl SparseMinMax {
    fn new(v: &[f64]) -> Self {
        let mut mins = vec![v.to_vec()];
        let mut maxs = vec![v.to_vec()];
        let mut len = 1;
        while 2 * len <= v.len() {
            let pm = mins.last().unwrap();
            let px = maxs.last().unwrap();
            let m: Vec<f64> = (0..=v.len() - 2 * len).map(|i| pm[i].min(pm[i + len])).collect();
            let x: Vec<f64> = (0..=v.len() - 2 * len).map(|i| px[i].max(px[i + len])).collect();
            mins.push(m);
            maxs.push(x);
            len *= 2;
        }
        SparseMinMax { mins, maxs }
    }

    /// `(min, max)` over the inclusive index range `[lo, hi]`.
    fn query(&self, lo: usize, hi: usize) -> (f64, f64) {
        let span = hi - lo + 1;
        let level = (usize::BITS - 1 - span.leading_zeros()) as usize;
        let w = 1 << level;
        (
            self.mins[level][lo].min(self.mins[level][hi + 1 - w]),
            self.maxs[level][lo].max(self.maxs[level][hi + 1 - w]),
        )
    }
}

/// The box `{x : |x - center|_inf <= radius}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxRegion {
    pub center: Site,
    pub radius: u64,
}

impl BoxRegion {
    pub fn new(center: Site, radius: u64) -> Self {
        BoxRegion { center, radius }
    }

    #[inline]
    pub fn contains(&self, x: &Site) -> bool {
        (*x - self.center).norm_inf() as u64 <= self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitOutcome {
    /// First `k` with `X_k` outside the box, and `X_k`.
    Exited { steps: u64, position: Site },
    /// Still inside after `cap` steps.
    Censored { cap: u64 },
}

impl ExitOutcome {
    pub fn steps(&self) -> Option<u64> {
        match self {
            ExitOutcome::Exited { steps, .. } => Some(*steps),
            ExitOutcome::Censored { .. } => None,
        }
    }
}

/// `H = inf { k >= 0 : X_k not in region }`, censored at `cap` steps.
pub fn exit_time(env: &Environment, x0: Site, region: &BoxRegion, seed: u64, cap: u64) -> Result<ExitOutcome> {
    if cap == 0 {
        return Err(Error::invalid("exit cap must be at least 1"));
    }
    if region.center.dim() != env.dim() {
        return Err(Error::DimensionMismatch { expected: env.dim(), got: region.center.dim() });
    }
    if !region.contains(&x0) {
        return Ok(ExitOutcome::Exited { steps: 0, position: x0 });
    }
    let mut w = Walker::new(env, x0, seed)?;
    for k in 1..=cap {
        let x = w.step();
        if !region.contains(&x) {
            return Ok(ExitOutcome::Exited { steps: k, position: x });
        }
    }
    Ok(ExitOutcome::Censored { cap })
}

/// Exit position of the continuous-time walk (same jump chain as the discrete walk).
pub fn exit_time_ct(env: &Environment, x0: Site, region: &BoxRegion, seed: u64, cap: u64) -> Result<(ExitOutcome, f64)> {
    let out = exit_time(env, x0, region, seed, cap)?;
    let mut clock = CounterStream::new(seed, STREAM_CLOCK);
    let jumps = match out {
        ExitOutcome::Exited { steps, .. } => steps,
        ExitOutcome::Censored { cap } => cap,
    };
    let t: f64 = (0..jumps).map(|_| clock.next_exp()).sum();
    Ok((out, t))
}

/// `(1/n) sum_{k < n} f(tau_{X_k} omega)` along a stored path.
pub fn time_average_env(env: &Environment, path: &WalkPath, f: &LocalObservable) -> Result<f64> {
    check_site(env, &path.start)?;
    let n = path.steps();
    if n == 0 {
        return Err(Error::invalid("time average needs at least one step"));
    }
    let s: CompensatedSum = path.positions[..n].iter().map(|x| f.eval(&EnvView::new(env, *x))).collect();
    Ok(s.value() / n as f64)
}

/// The same time average, streamed over `n` steps of the walk with `seed`.
pub fn walk_time_average(env: &Environment, x0: Site, n: usize, seed: u64, f: &LocalObservable) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("time average needs at least one step"));
    }
    let mut w = Walker::new(env, x0, seed)?;
    let mut s = CompensatedSum::new();
    let mut x = x0;
    for _ in 0..n {
        s.add(f.eval(&EnvView::new(env, x)));
        x = w.step();
    }
    Ok(s.value() / n as f64)
}

/// `block_average(pi f, r) / block_average(pi, r)`, the spatial estimate of the
/// mean of `f` under the environment-chain invariant law.
pub fn predicted_time_average(env: &Environment, f: &LocalObservable, r: usize) -> Result<f64> {
    let num = block_average(env, &LocalObservable::Pi.times(f.clone()), r)?;
    let den = block_average(env, &LocalObservable::Pi, r)?;
    Ok(num / den)
}
