//! Martingale residuals E[(M_t − M_s) g(X_s)] for
//! M_t = f(X_t) − f(X_0) − ∫_0^t 𝓛f(X_r) dr along simulated paths.

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{Recorder, Report, Table};
use crate::error::{Error, Result};
use crate::nonlocal::apply_generator;
use crate::sde::{EnsembleSpec, Scheme};
use crate::stats::MeanVar;
use crate::testfn::{constant, gaussian_bump, poly_bump, TestFunction};
use std::path::Path;

/// Runs a `martingale` config into `out_dir`.
pub fn run_martingale_test(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Report> {
    if cfg.experiment != ExperimentKind::Martingale {
        return Err(Error::Config(format!("`experiment`: expected martingale, got {}", cfg.experiment.subcommand())));
    }
    super::run_experiment(cfg, out_dir)
}

/// Per path and test function: M, ∫𝓛f and the accumulated quadrature error at
/// each probe time, and the state at each probe time.
struct PathTrace {
    escaped: bool,
    m: Vec<Vec<f64>>,
    integral: Vec<Vec<f64>>,
    error: Vec<Vec<f64>>,
    states: Vec<Vec<f64>>,
}

fn g_value(which: usize, x: &[f64]) -> f64 {
    match which {
        0 => 1.0,
        _ => x.iter().sum::<f64>().cos(),
    }
}

const G_NAMES: [&str; 2] = ["one", "cos_sum"];

pub(super) fn run(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let n = &cfg.numerics;
    let sys = cfg.system()?;
    let x0 = cfg.x0();
    let d = sys.dim();
    let quad = cfg.quadrature()?;
    let pairs = n.time_pairs.clone().unwrap_or(vec![[0.0, 0.5], [0.5, 1.0], [0.0, 1.0]]);
    let mut probes: Vec<f64> = pairs.iter().flatten().copied().collect();
    probes.sort_by(f64::total_cmp);
    probes.dedup();
    let horizon = probes.last().copied().unwrap_or(1.0);
    let radius = n.radius.unwrap_or(2.0);
    let fs: Vec<TestFunction> = vec![gaussian_bump(x0.clone(), 1.0), poly_bump(x0.clone(), radius), constant(d, 1.0)];
    let spec = EnsembleSpec {
        system: sys.clone(),
        x0: x0.clone(),
        npaths: n.npaths.unwrap_or(10_000),
        scheme: Scheme::Euler { dt: n.dt.unwrap_or(1.0 / 256.0) },
        horizon,
        seed: cfg.seed,
    };
    let traces = spec.map_paths(|_, p| -> Result<PathTrace> {
        let idx: Vec<usize> = probes.iter().map(|&t| p.index_at(t)).collect();
        let last = *idx.last().unwrap_or(&0);
        let mut tr = PathTrace {
            escaped: p.escaped,
            m: vec![Vec::new(); fs.len()],
            integral: vec![Vec::new(); fs.len()],
            error: vec![Vec::new(); fs.len()],
            states: idx.iter().map(|&k| p.state(k).to_vec()).collect(),
        };
        if p.escaped {
            return Ok(tr);
        }
        for (i, f) in fs.iter().enumerate() {
            let f0 = f.value(p.state(0));
            let (mut acc, mut err) = (0.0, 0.0);
            let mut next = 0;
            for k in 0..=last {
                while next < idx.len() && idx[next] == k {
                    tr.m[i].push(f.value(p.state(k)) - f0 - acc);
                    tr.integral[i].push(acc);
                    tr.error[i].push(err);
                    next += 1;
                }
                if k == last {
                    break;
                }
                let h = p.times[k + 1] - p.times[k];
                let lf = apply_generator(&sys, f, p.state(k), &quad)?;
                acc += h * lf.value;
                err += h * lf.error_bound;
            }
        }
        Ok(tr)
    })?;
    let traces: Vec<PathTrace> = traces.into_iter().collect::<Result<_>>()?;
    let kept: Vec<&PathTrace> = traces.iter().filter(|t| !t.escaped).collect();
    let pos = |t: f64| probes.iter().position(|&s| s == t).expect("probe time");

    let mut table = Table::new("residuals", &["f", "g", "s", "t", "mean", "stderr", "z", "deterministic_error", "control_mean", "control_z"]);
    let mut control_z: f64 = 0.0;
    let mut constant_exact = true;
    for (i, f) in fs.iter().enumerate() {
        for [s, t] in &pairs {
            let (is, it) = (pos(*s), pos(*t));
            for (gi, gname) in G_NAMES.iter().enumerate() {
                // X_0 = x₀ is deterministic, so g(X_0) only rescales the g ≡ 1 residual
                if gi > 0 && *s == 0.0 {
                    continue;
                }
                let samples: Vec<f64> = kept.iter().map(|tr| (tr.m[i][it] - tr.m[i][is]) * g_value(gi, &tr.states[is])).collect();
                let control: Vec<f64> = kept
                    .iter()
                    .map(|tr| (tr.m[i][it] - tr.m[i][is] - (tr.integral[i][it] - tr.integral[i][is])) * g_value(gi, &tr.states[is]))
                    .collect();
                let det = kept.iter().map(|tr| tr.error[i][it] - tr.error[i][is]).sum::<f64>() / kept.len().max(1) as f64;
                let mv = MeanVar::from_slice(&samples);
                let cv = MeanVar::from_slice(&control);
                let se = mv.stderr();
                let z = if se > 0.0 { mv.mean / se } else { 0.0 };
                let cz = if cv.stderr() > 0.0 { cv.mean / cv.stderr() } else { 0.0 };
                table.push(vec![
                    f.name.clone().into(),
                    (*gname).into(),
                    (*s).into(),
                    (*t).into(),
                    mv.mean.into(),
                    se.into(),
                    z.into(),
                    det.into(),
                    cv.mean.into(),
                    cz.into(),
                ]);
                if f.name == "constant" {
                    constant_exact &= samples.iter().all(|&v| v == 0.0);
                    continue;
                }
                control_z = control_z.max(cz.abs());
                rec.statistical(
                    format!("residual.{}.{gname}.s={s}.t={t}", f.name),
                    mv.mean,
                    3.0 * se,
                    det,
                    se,
                    "run_martingale_test",
                    "|E[(M_t − M_s) g(X_s)]| ≤ 3σ, M_t = f(X_t) − f(X_0) − ∫_0^t 𝓛f(X_r) dr",
                );
            }
        }
    }
    rec.table(&table)?;
    rec.holds("constant_f.exact_zero", constant_exact, "run_martingale_test", "f ≡ c ⇒ M ≡ 0");
    rec.above("negative_control.max_z", control_z, 3.0, "run_martingale_test", "with 2𝓛f in place of 𝓛f some |residual| > 3σ");
    rec.at_most(
        "escaped_fraction",
        1.0 - kept.len() as f64 / traces.len().max(1) as f64,
        0.0,
        "SamplePath",
        "no path leaves the escape ball",
    );
    Ok(())
}
