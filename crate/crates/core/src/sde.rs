//! Path simulation: left-endpoint Euler, the dyadic freezing scheme coupled to
//! a reference path, and Monte Carlo path functionals.

use crate::error::{Error, Result};
use crate::field::DiagonalSde;
use crate::grid::fmt_f64;
use crate::rng::RngHandle;
use crate::stable::draw_standard;
use crate::stats::{wilson_interval, MeanVar};
use crate::testfn::TestFunction;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// State magnitude beyond which a path is marked escaped.
pub const ESCAPE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeTag {
    Euler,
    Dyadic { level: u32 },
    Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major, one d-vector per time.
    pub states: Vec<f64>,
    /// Row-major, one d-vector per step.
    pub driver_increments: Vec<f64>,
    pub scheme_tag: SchemeTag,
    pub escaped: bool,
    /// Set when the horizon exceeds the freezing level, so the coefficients
    /// are held at the state at time n for part of the path.
    pub frozen_clause_active: bool,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.driver_increments[k * self.dim..(k + 1) * self.dim]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Index of the last grid time ≤ t.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t * (1.0 + 1e-12)).saturating_sub(1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let cols: Vec<String> = (1..=self.dim).map(|j| format!("x_{j}")).collect();
        writeln!(out, "t,{}", cols.join(","))?;
        for k in 0..self.len() {
            let row: Vec<String> = self.state(k).iter().map(|&v| fmt_f64(v)).collect();
            writeln!(out, "{},{}", fmt_f64(self.times[k]), row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        Ok(())
    }
}

fn escaped(x: &[f64]) -> bool {
    x.iter().any(|v| !(v.abs() <= ESCAPE_THRESHOLD))
}

fn time_grid(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_end >= dt) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!("need dt > 0 and T >= dt, got dt = {dt}, T = {t_end}")));
    }
    let n = ((t_end / dt) * (1.0 - 1e-12)).ceil() as usize;
    let mut times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    times.push(t_end);
    Ok(times)
}

/// Left-endpoint Euler scheme X_{k+1} = X_k + diag(A(X_k)) ΔZ_k with exact
/// driver increments. The driver increments are recorded for coupling.
pub fn simulate_euler(sys: &DiagonalSde, x0: &[f64], t_end: f64, dt: f64, rng: RngHandle) -> Result<SamplePath> {
    let d = sys.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    let times = time_grid(t_end, dt)?;
    let steps = times.len() - 1;
    let alphas = sys.alphas.values();
    let mut g = rng.generator();
    let mut incs = vec![0.0; steps * d];
    for k in 0..steps {
        let h = times[k + 1] - times[k];
        for j in 0..d {
            incs[k * d + j] = h.powf(1.0 / alphas[j]) * draw_standard(alphas[j], &mut g);
        }
    }
    Ok(euler_from_increments(sys, x0, times, incs, SchemeTag::Euler))
}

/// Euler recursion along given driver increments.
pub fn euler_from_increments(sys: &DiagonalSde, x0: &[f64], times: Vec<f64>, incs: Vec<f64>, tag: SchemeTag) -> SamplePath {
    let d = sys.dim();
    let steps = times.len() - 1;
    let mut states = Vec::with_capacity((steps + 1) * d);
    states.extend_from_slice(x0);
    let mut a = vec![0.0; d];
    let mut esc = escaped(x0);
    for k in 0..steps {
        let x = &states[k * d..(k + 1) * d];
        sys.field.eval(x, &mut a);
        let next: Vec<f64> = (0..d).map(|j| step(x[j], a[j], incs[k * d + j])).collect();
        esc |= escaped(&next);
        states.extend_from_slice(&next);
    }
    SamplePath { dim: d, times, states, driver_increments: incs, scheme_tag: tag, escaped: esc, frozen_clause_active: false }
}

#[inline]
fn step(x: f64, a: f64, dz: f64) -> f64 {
    x + a * dz
}

/// Same driver, aggregated over blocks of `factor` steps. Requires a uniform
/// grid whose step count is divisible by `factor`.
pub fn coarsen(sys: &DiagonalSde, path: &SamplePath, factor: usize) -> Result<SamplePath> {
    let d = path.dim;
    let steps = path.steps();
    if factor == 0 || steps % factor != 0 {
        return Err(Error::InvalidArgument(format!("{steps} steps are not divisible by {factor}")));
    }
    let times: Vec<f64> = path.times.iter().step_by(factor).copied().collect();
    let mut incs = vec![0.0; (steps / factor) * d];
    for k in 0..steps {
        for j in 0..d {
            incs[(k / factor) * d + j] += path.increment(k)[j];
        }
    }
    Ok(euler_from_increments(sys, path.state(0), times, incs, SchemeTag::Euler))
}

/// Exponent m with dt = 2^{−m} exactly.
fn dyadic_exponent(dt: f64) -> Result<u32> {
    let m = -dt.log2().round();
    if !(0.0..=60.0).contains(&m) || 2f64.powi(-(m as i32)) != dt {
        return Err(Error::NonDyadicDriver(dt));
    }
    Ok(m as u32)
}

/// The dyadic freezing scheme U^n driven by the reference path's increments,
/// with coefficients evaluated at the reference states at times ⌊t 2^n⌋/2^n,
/// and at the state at time n once t ≥ n.
pub fn simulate_dyadic_freezing(sys: &DiagonalSde, x0: &[f64], t_end: f64, n: u32, reference: &SamplePath) -> Result<SamplePath> {
    let d = sys.dim();
    if x0.len() != d || reference.dim != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len().min(reference.dim) });
    }
    if reference.steps() == 0 {
        return Err(Error::InvalidArgument("reference path has no steps".into()));
    }
    let dt = reference.times[1] - reference.times[0];
    let m = dyadic_exponent(dt)?;
    if m < n {
        return Err(Error::DriverTooCoarse { driver_dt: dt, level: n });
    }
    if t_end > reference.horizon() * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("horizon {t_end} exceeds the reference horizon {}", reference.horizon())));
    }
    let steps = reference.times.partition_point(|&s| s < t_end * (1.0 - 1e-12)).clamp(1, reference.steps());
    let shift = m - n;
    let cap = (n as usize) << n;
    let mut states = Vec::with_capacity((steps + 1) * d);
    states.extend_from_slice(x0);
    let mut a = vec![0.0; d];
    let mut esc = escaped(x0);
    let mut last_frozen = usize::MAX;
    for i in 0..steps {
        let k = (i >> shift).min(cap);
        if k != last_frozen {
            sys.field.eval(reference.state(k << shift), &mut a);
            last_frozen = k;
        }
        let next: Vec<f64> = (0..d).map(|j| step(states[i * d + j], a[j], reference.increment(i)[j])).collect();
        esc |= escaped(&next);
        states.extend_from_slice(&next);
    }
    Ok(SamplePath {
        dim: d,
        times: reference.times[..=steps].to_vec(),
        states,
        driver_increments: reference.driver_increments[..steps * d].to_vec(),
        scheme_tag: SchemeTag::Dyadic { level: n },
        escaped: esc,
        frozen_clause_active: reference.times[steps] > n as f64,
    })
}

/// Largest Euclidean distance between two paths over their shared grid.
pub fn max_discrepancy(a: &SamplePath, b: &SamplePath) -> f64 {
    let n = a.len().min(b.len());
    (0..n)
        .map(|k| a.state(k).iter().zip(b.state(k)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    Euler { dt: f64 },
    /// Freezing at level n coupled to an Euler reference with step driver_dt.
    Dyadic { level: u32, driver_dt: f64 },
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub system: DiagonalSde,
    pub x0: Vec<f64>,
    pub npaths: usize,
    pub scheme: Scheme,
    pub horizon: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    /// Path i uses stream i of the ensemble seed.
    pub fn path(&self, i: usize) -> Result<SamplePath> {
        let rng = RngHandle::new(self.seed, i as u64);
        match self.scheme {
            Scheme::Euler { dt } => simulate_euler(&self.system, &self.x0, self.horizon, dt, rng),
            Scheme::Dyadic { level, driver_dt } => {
                let mut reference = simulate_euler(&self.system, &self.x0, self.horizon, driver_dt, rng)?;
                reference.scheme_tag = SchemeTag::Reference;
                simulate_dyadic_freezing(&self.system, &self.x0, self.horizon, level, &reference)
            }
        }
    }

    /// Applies `f` to every path in parallel; results are in path order.
    pub fn map_paths<T: Send>(&self, f: impl Fn(usize, &SamplePath) -> T + Sync) -> Result<Vec<T>> {
        (0..self.npaths).into_par_iter().map(|i| self.path(i).map(|p| f(i, &p))).collect()
    }

    pub fn simulate(&self) -> Result<PathEnsemble> {
        let paths = self.map_paths(|_, p| p.clone())?;
        Ok(PathEnsemble {
            paths,
            seeds: (0..self.npaths as u64).map(|i| RngHandle::new(self.seed, i)).collect(),
            field_description: self.system.field.description.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub paths: Vec<SamplePath>,
    pub seeds: Vec<RngHandle>,
    pub field_description: String,
}

/// ∫_0^T e^{−λt} f(X_t) dt for the piecewise-constant path; None if escaped.
pub fn laplace_functional(path: &SamplePath, f: &TestFunction, lambda: f64) -> Option<f64> {
    if path.escaped {
        return None;
    }
    let mut acc = 0.0;
    for k in 0..path.steps() {
        let w = ((-lambda * path.times[k]).exp() - (-lambda * path.times[k + 1]).exp()) / lambda;
        acc += w * f.value(path.state(k));
    }
    Some(acc)
}

/// Analytic truncation bound e^{−λT} sup|f| / λ.
pub fn laplace_tail(lambda: f64, horizon: f64, sup: f64) -> f64 {
    (-lambda * horizon).exp() * sup / lambda
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub tail_bound: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub npaths_used: usize,
    pub escaped_fraction: f64,
}

impl ResolventEstimate {
    pub fn from_samples(samples: &[Option<f64>], lambda: f64, horizon: f64, sup: f64) -> Self {
        let used: Vec<f64> = samples.iter().flatten().copied().collect();
        let mv = MeanVar::from_slice(&used);
        Self {
            estimate: mv.mean,
            stderr: mv.stderr(),
            tail_bound: laplace_tail(lambda, horizon, sup),
            lambda,
            horizon,
            npaths_used: used.len(),
            escaped_fraction: 1.0 - used.len() as f64 / samples.len().max(1) as f64,
        }
    }
}

/// Monte Carlo S_λ f(x0) = E ∫_0^∞ e^{−λt} f(X_t) dt truncated at the
/// ensemble horizon. Fails when the truncation bound exceeds `tolerance`.
pub fn resolvent_mc(spec: &EnsembleSpec, f: &TestFunction, lambda: f64, tolerance: f64) -> Result<ResolventEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
    }
    let tail = laplace_tail(lambda, spec.horizon, f.sup_norm);
    if tail > tolerance {
        return Err(Error::HorizonTooShort { tail, tolerance });
    }
    let samples = spec.map_paths(|_, p| laplace_functional(p, f, lambda))?;
    Ok(ResolventEstimate::from_samples(&samples, lambda, spec.horizon, f.sup_norm))
}

#[derive(Debug, Clone, Serialize)]
pub struct MaximalRow {
    pub t: f64,
    pub delta: f64,
    pub exceedances: u64,
    pub npaths: u64,
    pub empirical_prob: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Running supremum of |X_s − X_0| over grid times s ≤ t; escaped paths give ∞.
pub fn running_sup(path: &SamplePath, t: f64) -> f64 {
    if path.escaped {
        return f64::INFINITY;
    }
    let x0 = path.state(0);
    let last = path.index_at(t);
    (0..=last)
        .map(|k| path.state(k).iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Empirical P(sup_{s≤t} |X_s − X_0| > δ) with 3σ Wilson intervals.
pub fn maximal_inequality_probe(ensemble: &PathEnsemble, t: f64, deltas: &[f64]) -> Result<Vec<MaximalRow>> {
    if let Some(p) = ensemble.paths.iter().find(|p| p.horizon() < t * (1.0 - 1e-12)) {
        return Err(Error::InvalidArgument(format!("path horizon {} is shorter than t = {t}", p.horizon())));
    }
    let sups: Vec<f64> = ensemble.paths.iter().map(|p| running_sup(p, t)).collect();
    Ok(exceedance_table(&sups, t, deltas))
}

pub fn exceedance_table(sups: &[f64], t: f64, deltas: &[f64]) -> Vec<MaximalRow> {
    let n = sups.len() as u64;
    deltas
        .iter()
        .map(|&delta| {
            let k = sups.iter().filter(|&&s| s > delta).count() as u64;
            let (lo, hi) = wilson_interval(k, n, 3.0);
            MaximalRow {
                t,
                delta,
                exceedances: k,
                npaths: n,
                empirical_prob: k as f64 / n.max(1) as f64,
                ci_low: lo,
                ci_high: hi,
            }
        })
        .collect()
}
