//! Resolvent fingerprints λ S_λ f(x₀) under several discretizations of the
//! same system, coupled through one fine driver path.

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{Recorder, Report, Table};
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::sde::{coarsen, laplace_functional, max_discrepancy, simulate_dyadic_freezing, EnsembleSpec, ResolventEstimate, Scheme};
use crate::spectral::{frozen_generator_spectral, resolvent_apply, GridFunction, PeriodicGrid};
use crate::stats::median;
use crate::testfn::{constant, gaussian_bump, poly_bump, TestFunction};
use std::path::Path;

/// Runs a `uniqueness` config into `out_dir`.
pub fn run_uniqueness_fingerprint(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Report> {
    if cfg.experiment != ExperimentKind::Uniqueness {
        return Err(Error::Config(format!("`experiment`: expected uniqueness, got {}", cfg.experiment.subcommand())));
    }
    super::run_experiment(cfg, out_dir)
}

struct PathSample {
    /// [scheme][lambda][f], None when the scheme's path escaped.
    values: Vec<Vec<Vec<Option<f64>>>>,
    /// Max discrepancy of each dyadic level against the fine path.
    discrepancy: Vec<f64>,
    frozen_clause: Vec<bool>,
}

fn combined(a: &ResolventEstimate, b: &ResolventEstimate) -> f64 {
    (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}

pub(super) fn run(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let n = &cfg.numerics;
    let sys = cfg.system()?;
    let x0 = cfg.x0();
    let d = sys.dim();
    let dt = n.dt.unwrap_or(1.0 / 256.0);
    let horizon = n.horizon.unwrap_or(6.0);
    let lambdas = n.lambdas.clone().unwrap_or(vec![2.0, 4.0]);
    let factor = n.coarsen.unwrap_or(4);
    let levels = n.levels.clone().unwrap_or(vec![2, 3, 4, 5, 6]);
    if levels.is_empty() {
        return Err(Error::Config("`numerics.levels`: needs at least one level".into()));
    }
    let top = *levels.iter().max().expect("non-empty");
    let fs: Vec<TestFunction> = vec![gaussian_bump(x0.clone(), 1.0), poly_bump(x0.clone(), n.radius.unwrap_or(2.0)), constant(d, 1.0)];
    let mut schemes = vec!["euler_fine".to_string(), format!("euler_coarse_x{factor}")];
    schemes.extend(levels.iter().map(|l| format!("dyadic_{l}")));
    let spec = EnsembleSpec { system: sys.clone(), x0: x0.clone(), npaths: n.npaths.unwrap_or(4000), scheme: Scheme::Euler { dt }, horizon, seed: cfg.seed };

    let samples = spec.map_paths(|_, fine| -> Result<PathSample> {
        let mut paths = vec![fine.clone(), coarsen(&sys, fine, factor)?];
        for &l in &levels {
            paths.push(simulate_dyadic_freezing(&sys, &x0, horizon, l, fine)?);
        }
        let values = paths
            .iter()
            .map(|p| lambdas.iter().map(|&lam| fs.iter().map(|f| laplace_functional(p, f, lam)).collect()).collect())
            .collect();
        let discrepancy = paths[2..].iter().map(|p| max_discrepancy(p, fine)).collect();
        let frozen_clause = paths[2..].iter().map(|p| p.frozen_clause_active).collect();
        Ok(PathSample { values, discrepancy, frozen_clause })
    })?;
    let samples: Vec<PathSample> = samples.into_iter().collect::<Result<_>>()?;

    // est[scheme][lambda][f]
    let est: Vec<Vec<Vec<ResolventEstimate>>> = (0..schemes.len())
        .map(|s| {
            lambdas
                .iter()
                .enumerate()
                .map(|(li, &lam)| {
                    fs.iter()
                        .enumerate()
                        .map(|(fi, f)| {
                            let col: Vec<Option<f64>> = samples.iter().map(|p| p.values[s][li][fi]).collect();
                            ResolventEstimate::from_samples(&col, lam, horizon, f.sup_norm)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut ft = Table::new("fingerprints", &["scheme", "lambda", "f", "lambda_s", "stderr", "tail_bound", "escaped_fraction"]);
    for (s, name) in schemes.iter().enumerate() {
        for (li, &lam) in lambdas.iter().enumerate() {
            for (fi, f) in fs.iter().enumerate() {
                let e = &est[s][li][fi];
                ft.push(vec![
                    name.clone().into(),
                    lam.into(),
                    f.name.clone().into(),
                    (lam * e.estimate).into(),
                    (lam * e.stderr).into(),
                    e.tail_bound.into(),
                    e.escaped_fraction.into(),
                ]);
            }
        }
    }
    rec.table(&ft)?;

    let const_idx = fs.len() - 1;
    let mut mt = Table::new("discrepancy_matrix", &["lambda", "f", "scheme_a", "scheme_b", "difference", "combined_stderr", "z"]);
    for (li, &lam) in lambdas.iter().enumerate() {
        for s in 0..schemes.len() {
            let e = &est[s][li][const_idx];
            rec.at_most(
                format!("constant.{}.lambda={lam}", schemes[s]),
                (lam * e.estimate - 1.0).abs(),
                lam * e.tail_bound * (1.0 + 1e-9) + 1e-12,
                "run_uniqueness_fingerprint",
                "λ S_λ 1 = 1 − e^{−λT}",
            );
        }
        for (fi, f) in fs.iter().enumerate().take(const_idx) {
            for a in 0..schemes.len() {
                for b in a + 1..schemes.len() {
                    let (ea, eb) = (&est[a][li][fi], &est[b][li][fi]);
                    let diff = ea.estimate - eb.estimate;
                    let c = combined(ea, eb);
                    mt.push(vec![lam.into(), f.name.clone().into(), schemes[a].clone().into(), schemes[b].clone().into(), diff.into(), c.into(), (diff / c).into()]);
                }
            }
            let fine = &est[0][li][fi];
            let check = |rec: &mut Recorder, s: usize, hard: bool| {
                let e = &est[s][li][fi];
                let c = combined(e, fine);
                let name = format!("agree.{}.{}.lambda={lam}", schemes[s], f.name);
                let statement = "|S_λf(scheme) − S_λf(fine Euler)| ≤ 3 (σ₁² + σ₂²)^{1/2}";
                if hard {
                    rec.at_most(name, (e.estimate - fine.estimate).abs(), 3.0 * c, "run_uniqueness_fingerprint", statement);
                } else {
                    rec.flag_above(name, (e.estimate - fine.estimate).abs(), 3.0 * c, "run_uniqueness_fingerprint", statement, "intermediate level");
                }
            };
            check(rec, 1, true);
            for (k, &l) in levels.iter().enumerate() {
                check(rec, 2 + k, l == top);
            }
            let gaps: Vec<f64> = (0..levels.len()).map(|k| (est[2 + k][li][fi].estimate - fine.estimate).abs()).collect();
            let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
            rec.flag_above(
                format!("trend.{}.lambda={lam}", f.name),
                if monotone { 0.0 } else { 1.0 },
                0.0,
                "run_uniqueness_fingerprint",
                "n ↦ |V_λ^n f − S_λ f| non-increasing",
                "non-monotone convergence in n",
            );
        }
    }
    rec.table(&mt)?;

    let mut ct = Table::new("convergence", &["level", "median_max_discrepancy", "frozen_clause_fraction"]);
    let medians: Vec<f64> = (0..levels.len())
        .map(|k| {
            let v: Vec<f64> = samples.iter().map(|p| p.discrepancy[k]).filter(|x| x.is_finite()).collect();
            median(&v)
        })
        .collect();
    for (k, &l) in levels.iter().enumerate() {
        let frac = samples.iter().filter(|p| p.frozen_clause[k]).count() as f64 / samples.len().max(1) as f64;
        ct.push(vec![l.into(), medians[k].into(), frac.into()]);
        rec.flag_above(
            format!("frozen_clause.dyadic_{l}"),
            frac,
            0.0,
            "simulate_dyadic_freezing",
            "coefficients held at X_n once t ≥ n",
            "horizon exceeds the level",
        );
    }
    rec.table(&ct)?;
    let constant_field = matches!(cfg.field_spec(), FieldSpec::Constant { .. });
    if constant_field {
        let worst = samples.iter().flat_map(|p| p.discrepancy.iter().copied()).fold(0.0, f64::max);
        rec.at_most("discrepancy.exact", worst, 0.0, "simulate_dyadic_freezing", "A constant ⇒ U^n_t = X_t at grid times");
    } else {
        rec.holds(
            "discrepancy.strictly_decreasing",
            medians.windows(2).all(|w| w[1] < w[0]),
            "simulate_dyadic_freezing",
            "n ↦ median sup_t |U^n_t − X_t| strictly decreasing",
        );
    }

    if constant_field {
        let frozen = sys.frozen_at(&x0)?;
        let grid = PeriodicGrid::cube(d, n.grid_n.unwrap_or(256), n.grid_h.unwrap_or(0.125))?.centered_at(&x0);
        let node = grid.flat_index(&vec![grid.shape[0] / 2; d]);
        let mut ot = Table::new("oracle", &["lambda", "f", "scheme", "mc", "spectral", "tolerance"]);
        for (fi, f) in fs.iter().enumerate().take(const_idx) {
            let fg = GridFunction::from_test_function(&grid, f)?;
            let lf_sup = frozen_generator_spectral(&frozen, &fg)?.sup();
            for (li, &lam) in lambdas.iter().enumerate() {
                let r = resolvent_apply(&frozen, lam, &fg)?;
                let exact = r.function.values[node];
                for (s, name) in schemes.iter().enumerate() {
                    let e = &est[s][li][fi];
                    let step = if s == 1 { dt * factor as f64 } else { dt };
                    let tol = 3.0 * e.stderr + step * lf_sup / lam + e.tail_bound + r.errors.total();
                    ot.push(vec![lam.into(), f.name.clone().into(), name.clone().into(), e.estimate.into(), exact.into(), tol.into()]);
                    rec.at_most(
                        format!("oracle.{name}.{}.lambda={lam}", f.name),
                        (e.estimate - exact).abs(),
                        tol,
                        "run_uniqueness_fingerprint",
                        "|S_λf(x₀) − R_λf(x₀)| ≤ 3σ + Δt sup|𝓛₀f|/λ + tail + grid error",
                    );
                }
            }
        }
        rec.table(&ot)?;
    }
    Ok(())
}
