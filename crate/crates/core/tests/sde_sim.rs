use anisostable::error::Error;
use anisostable::field::{DiagonalCoefficientField, DiagonalSde, FieldSpec};
use anisostable::grid::AxisSpec;
use anisostable::levy::{frozen_char_exponent, frozen_density, AlphaSpec, FrozenSpec};
use anisostable::rng::RngHandle;
use anisostable::sde::*;
use anisostable::spectral::{frozen_generator_spectral, resolvent_apply, GridFunction, PeriodicGrid};
use anisostable::stable::draw_increment;
use anisostable::stats::{chi_square, chi_square_critical_1pct, median, MeanVar};
use anisostable::testfn::{constant, gaussian_bump};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn alphas(a: &[f64]) -> AlphaSpec {
    AlphaSpec::new(a).unwrap()
}

fn constant_sys(a: &[f64], diag: Vec<f64>) -> DiagonalSde {
    DiagonalSde::new(alphas(a), DiagonalCoefficientField::constant(diag).unwrap()).unwrap()
}

fn sinusoidal(a: &[f64]) -> DiagonalSde {
    let spec = FieldSpec::Sinusoidal { base: vec![1.0; a.len()], amplitude: 0.4, wavenumber: 1.3 };
    DiagonalSde::from_spec(alphas(a), &spec).unwrap()
}

fn ensemble(system: DiagonalSde, x0: Vec<f64>, npaths: usize, scheme: Scheme, horizon: f64, seed: u64) -> EnsembleSpec {
    EnsembleSpec { system, x0, npaths, scheme, horizon, seed }
}

#[test]
fn zero_field_keeps_state_constant() {
    let sys = DiagonalSde::new(alphas(&[0.7, 1.4]), DiagonalCoefficientField::zero_unchecked(2)).unwrap();
    let p = simulate_euler(&sys, &[1.5, -2.0], 1.0, 0.01, RngHandle::new(1, 0)).unwrap();
    assert_eq!(p.len(), 101);
    for k in 0..p.len() {
        assert_eq!(p.state(k), &[1.5, -2.0]);
    }
    assert!(p.driver_increments.iter().any(|&z| z != 0.0));
}

#[test]
fn path_invariants() {
    let sys = sinusoidal(&[0.9, 1.6]);
    let p = simulate_euler(&sys, &[0.3, 0.1], 1.3, 0.1, RngHandle::new(2, 7)).unwrap();
    assert_eq!(p.times[0], 0.0);
    assert!(p.times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(p.horizon(), 1.3);
    assert_eq!(p.state(0), &[0.3, 0.1]);
    assert_eq!(p.states.len(), p.len() * 2);
    assert_eq!(p.driver_increments.len(), p.steps() * 2);
    assert_eq!(p.scheme_tag, SchemeTag::Euler);
}

#[test]
fn identity_field_characteristic_function() {
    let t = 1.0;
    let spec = ensemble(constant_sys(&[0.7, 1.5], vec![1.0, 1.0]), vec![0.5, -0.5], 20_000, Scheme::Euler { dt: 0.0625 }, t, 31);
    let ends = spec.map_paths(|_, p| vec![p.state(p.steps())[0] - 0.5, p.state(p.steps())[1] + 0.5]).unwrap();
    let frozen = FrozenSpec::standard(alphas(&[0.7, 1.5]));
    let mut r = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let xi: Vec<f64> = (0..2).map(|_| r.random_range(-2.0..2.0)).collect();
        let c: Vec<f64> = ends.iter().map(|x| (xi[0] * x[0] + xi[1] * x[1]).cos()).collect();
        let m = MeanVar::from_slice(&c);
        let expect = (-t * frozen_char_exponent(&frozen, &xi)).exp();
        assert!((m.mean - expect).abs() <= 3.0 * m.stderr(), "xi={xi:?}: {} vs {expect}", m.mean);
    }
}

#[test]
fn constant_field_marginals_match_frozen_density() {
    let a = [1.1, 1.6];
    let diag = vec![2.0, 0.5];
    let x0 = vec![1.0, -1.0];
    let t = 1.0;
    let spec = ensemble(constant_sys(&a, diag.clone()), x0.clone(), 40_000, Scheme::Euler { dt: 0.25 }, t, 32);
    let ends = spec.map_paths(|_, p| p.state(p.steps()).to_vec()).unwrap();
    for j in 0..2 {
        let c = diag[j];
        let frozen = FrozenSpec::new(alphas(&[a[j]]), vec![c], vec![x0[j]]).unwrap();
        let h = c / 200.0;
        let dens = frozen_density(&frozen, t, &[AxisSpec::new(4.0 * c, h)]).unwrap();
        let axis = &dens.axes[0];
        let bins = 32usize;
        let per_bin = 50usize;
        let start = axis.core.start;
        assert_eq!(axis.core.len(), bins * per_bin + 1);
        let mut probs = vec![0.0; bins + 2];
        for b in 0..bins {
            // Simpson on the uniform core nodes of the bin
            let i0 = start + b * per_bin;
            let mut s = dens.values[i0] + dens.values[i0 + per_bin];
            for k in 1..per_bin {
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * dens.values[i0 + k];
            }
            probs[b + 1] = s * h / 3.0;
        }
        let inner: f64 = probs.iter().sum();
        probs[0] = 0.5 * (1.0 - inner);
        probs[bins + 1] = probs[0];
        let (lo, w) = (axis.nodes[start], per_bin as f64 * h);
        let mut counts = vec![0u64; bins + 2];
        for x in &ends {
            let u = (x[j] - lo) / w;
            let b = if u < 0.0 { 0 } else if u >= bins as f64 { bins + 1 } else { 1 + (u as usize).min(bins - 1) };
            counts[b] += 1;
        }
        let chi = chi_square(&counts, &probs);
        assert!(chi < chi_square_critical_1pct(bins + 1), "axis {j}: chi^2 = {chi}");
    }
}

#[test]
fn dyadic_scheme_equals_reference_for_constant_field() {
    let sys = constant_sys(&[0.8, 1.5], vec![1.3, 0.7]);
    let x0 = [0.2, 0.4];
    let reference = simulate_euler(&sys, &x0, 1.0, 1.0 / 64.0, RngHandle::new(3, 1)).unwrap();
    for n in 0..=6 {
        let u = simulate_dyadic_freezing(&sys, &x0, 1.0, n, &reference).unwrap();
        assert_eq!(u.times, reference.times);
        assert_eq!(u.states, reference.states, "n={n}");
        assert_eq!(u.scheme_tag, SchemeTag::Dyadic { level: n });
    }
}

#[test]
fn dyadic_scheme_at_driver_level_is_the_reference() {
    let sys = sinusoidal(&[0.8, 1.5]);
    let x0 = [0.2, 0.4];
    let reference = simulate_euler(&sys, &x0, 1.0, 1.0 / 32.0, RngHandle::new(3, 2)).unwrap();
    let u = simulate_dyadic_freezing(&sys, &x0, 1.0, 5, &reference).unwrap();
    assert_eq!(u.states, reference.states);
    let coarse = simulate_dyadic_freezing(&sys, &x0, 1.0, 2, &reference).unwrap();
    assert_ne!(coarse.states, reference.states);
    assert!(!u.frozen_clause_active && !coarse.frozen_clause_active);
}

#[test]
fn dyadic_scheme_rejects_bad_driver_grids() {
    let sys = sinusoidal(&[1.2]);
    let coarse = simulate_euler(&sys, &[0.0], 1.0, 0.125, RngHandle::new(4, 0)).unwrap();
    assert!(matches!(simulate_dyadic_freezing(&sys, &[0.0], 1.0, 5, &coarse), Err(Error::DriverTooCoarse { level: 5, .. })));
    let odd = simulate_euler(&sys, &[0.0], 1.0, 0.1, RngHandle::new(4, 0)).unwrap();
    assert!(matches!(simulate_dyadic_freezing(&sys, &[0.0], 1.0, 2, &odd), Err(Error::NonDyadicDriver(_))));
}

#[test]
fn frozen_clause_flag_is_recorded() {
    let sys = sinusoidal(&[1.2]);
    let reference = simulate_euler(&sys, &[0.0], 3.0, 0.25, RngHandle::new(5, 0)).unwrap();
    let u = simulate_dyadic_freezing(&sys, &[0.0], 3.0, 2, &reference).unwrap();
    assert!(u.frozen_clause_active);
    let v = simulate_dyadic_freezing(&sys, &[0.0], 2.0, 2, &reference).unwrap();
    assert!(!v.frozen_clause_active);
    assert_eq!(v.horizon(), 2.0);
}

#[test]
fn coupled_discrepancy_median_decreases_with_level() {
    let sys = sinusoidal(&[0.9, 1.5]);
    let x0 = vec![0.1, -0.3];
    let m = 8;
    let medians: Vec<f64> = (2..=6)
        .map(|n| {
            let spec = ensemble(sys.clone(), x0.clone(), 500, Scheme::Euler { dt: 2f64.powi(-m) }, 1.0, 40);
            let d = spec
                .map_paths(|_, p| max_discrepancy(&simulate_dyadic_freezing(&sys, &x0, 1.0, n, p).unwrap(), p))
                .unwrap();
            median(&d)
        })
        .collect();
    for w in medians.windows(2) {
        assert!(w[1] < w[0], "{medians:?}");
    }
}

#[test]
fn resolvent_of_one_is_one_over_lambda() {
    let f = constant(2, 1.0);
    for lambda in [0.5, 2.0] {
        let spec = ensemble(sinusoidal(&[0.7, 1.3]), vec![0.0, 0.0], 50, Scheme::Euler { dt: 0.1 }, 40.0, 6);
        let est = resolvent_mc(&spec, &f, lambda, 1e-6).unwrap();
        assert_eq!(est.stderr, 0.0);
        assert!((est.estimate - 1.0 / lambda).abs() <= est.tail_bound + 1e-12);
    }
}

#[test]
fn short_horizon_is_reported() {
    let spec = ensemble(sinusoidal(&[1.1]), vec![0.0], 10, Scheme::Euler { dt: 0.1 }, 1.0, 6);
    let r = resolvent_mc(&spec, &gaussian_bump(vec![0.0], 1.0), 0.1, 1e-3);
    assert!(matches!(r, Err(Error::HorizonTooShort { .. })));
}

#[test]
fn constant_field_resolvent_matches_spectral() {
    let a = [1.3, 1.7];
    let diag = vec![1.2, 0.8];
    let x0 = vec![0.25, -0.125];
    let lambda = 2.0;
    let dt = 2f64.powi(-10);
    let f = gaussian_bump(vec![0.0, 0.0], 1.0);
    let spec = ensemble(constant_sys(&a, diag.clone()), x0.clone(), 4000, Scheme::Euler { dt }, 8.0, 77);
    let est = resolvent_mc(&spec, &f, lambda, 1e-6).unwrap();

    let frozen = FrozenSpec::new(alphas(&a), diag, x0.clone()).unwrap();
    let grid = PeriodicGrid::cube(2, 256, 0.125).unwrap();
    let fg = GridFunction::from_test_function(&grid, &f).unwrap();
    let r = resolvent_apply(&frozen, lambda, &fg).unwrap();
    let node = grid.flat_index(&[130, 127]);
    assert_eq!(grid.point(node), x0);
    // |P_{t_k} f − P_t f| ≤ (t − t_k) sup|𝓛₀f| bounds the rectangle bias
    let bias = dt * frozen_generator_spectral(&frozen, &fg).unwrap().sup() / lambda;
    let diff = (est.estimate - r.function.values[node]).abs();
    let tol = 3.0 * est.stderr + bias + est.tail_bound + r.errors.total();
    assert!(diff <= tol, "mc {} ± {} vs grid {}: diff {diff}, tol {tol}", est.estimate, est.stderr, r.function.values[node]);
}

#[test]
fn resolvent_bounded_by_lp_norm_under_rescaling() {
    // p = 2 > β = 4/3; the ratio |S_λ f| / ‖f‖_2 vanishes at both ends of the
    // width family, so a constant fit on central widths covers all of them
    let a = [1.5, 1.5];
    let spec = ensemble(sinusoidal(&a), vec![0.0, 0.0], 2000, Scheme::Euler { dt: 1.0 / 32.0 }, 24.0, 12);
    let ratios: Vec<(f64, f64)> = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&w| {
            let f = gaussian_bump(vec![0.0, 0.0], w);
            let est = resolvent_mc(&spec, &f, 1.0, 1e-6).unwrap();
            let norm = (std::f64::consts::PI * w * w).sqrt();
            (w, (est.estimate.abs() + 3.0 * est.stderr) / norm)
        })
        .collect();
    let c = ratios.iter().filter(|(w, _)| (0.5..=2.0).contains(w)).map(|r| r.1).fold(0.0, f64::max);
    for (w, r) in &ratios {
        assert!(*r <= 1.25 * c, "width {w}: {r} vs c = {c}");
    }
}

#[test]
fn maximal_probe_is_monotone_with_heavy_tail_slope() {
    let a = [0.8, 1.5];
    let spec = ensemble(sinusoidal(&a), vec![0.0, 0.0], 8000, Scheme::Euler { dt: 1.0 / 64.0 }, 1.0, 21);
    let ens = spec.simulate().unwrap();
    let deltas: Vec<f64> = (0..=8).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
    let rows = maximal_inequality_probe(&ens, 1.0, &deltas).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].empirical_prob <= w[0].empirical_prob);
        assert!(w[1].ci_low <= w[0].ci_high);
    }
    for r in &rows {
        assert!(r.ci_low <= r.empirical_prob && r.empirical_prob <= r.ci_high);
    }
    let (p10, p100) = (rows[4].empirical_prob, rows[8].empirical_prob);
    let slope = (p100 / p10).log10();
    assert!((-1.8..=-0.5).contains(&slope), "slope {slope}");
}

#[test]
fn one_dimensional_sup_matches_driver_oracle() {
    let a = 1.2;
    let dt = 1.0 / 64.0;
    let n = 6000;
    let spec = ensemble(constant_sys(&[a], vec![1.0]), vec![0.0], n, Scheme::Euler { dt }, 1.0, 50);
    let ens = spec.simulate().unwrap();
    let deltas = [0.5, 1.0, 2.0, 4.0];
    let rows = maximal_inequality_probe(&ens, 1.0, &deltas).unwrap();
    let mut g = ChaCha8Rng::seed_from_u64(0xabc);
    let sups: Vec<f64> = (0..n)
        .map(|_| {
            let (mut z, mut s) = (0.0f64, 0.0f64);
            for _ in 0..64 {
                z += draw_increment(a, dt, &mut g);
                s = s.max(z.abs());
            }
            s
        })
        .collect();
    let oracle = exceedance_table(&sups, 1.0, &deltas);
    for (r, o) in rows.iter().zip(&oracle) {
        let (p, q) = (r.empirical_prob, o.empirical_prob);
        let sd = ((p * (1.0 - p) + q * (1.0 - q)) / n as f64).sqrt();
        assert!((p - q).abs() <= 3.0 * sd, "delta {}: {p} vs {q}", r.delta);
    }
}

#[test]
fn escaped_paths_count_as_exceedances() {
    let mut p = simulate_euler(&sinusoidal(&[1.0]), &[0.0], 1.0, 0.5, RngHandle::new(1, 1)).unwrap();
    p.escaped = true;
    assert_eq!(running_sup(&p, 1.0), f64::INFINITY);
    assert!(laplace_functional(&p, &constant(1, 1.0), 1.0).is_none());
    let est = ResolventEstimate::from_samples(&[Some(1.0), None, Some(3.0), None], 1.0, 10.0, 1.0);
    assert_eq!(est.npaths_used, 2);
    assert_eq!(est.escaped_fraction, 0.5);
    assert_eq!(est.estimate, 2.0);
}

#[test]
fn ensembles_are_reproducible() {
    let spec = ensemble(sinusoidal(&[0.6, 1.9]), vec![0.0, 1.0], 16, Scheme::Dyadic { level: 3, driver_dt: 1.0 / 16.0 }, 1.0, 99);
    let a = spec.simulate().unwrap();
    let b = spec.simulate().unwrap();
    assert_eq!(a.paths, b.paths);
    let csv = |p: &SamplePath| {
        let mut v = Vec::new();
        p.write_csv(&mut v).unwrap();
        v
    };
    assert_eq!(csv(&a.paths[5]), csv(&b.paths[5]));
    assert_eq!(a.paths[5], spec.path(5).unwrap());
    assert_ne!(a.paths[5], a.paths[6]);
    let text = String::from_utf8(csv(&a.paths[0])).unwrap();
    assert!(text.starts_with("t,x_1,x_2\n"));
    assert_eq!(text.lines().count(), a.paths[0].len() + 1);
}

#[test]
fn coarsened_driver_gives_coarse_euler() {
    let sys = sinusoidal(&[0.9, 1.4]);
    let fine = simulate_euler(&sys, &[0.0, 0.0], 1.0, 1.0 / 64.0, RngHandle::new(8, 3)).unwrap();
    let coarse = coarsen(&sys, &fine, 4).unwrap();
    assert_eq!(coarse.steps(), 16);
    for k in 0..16 {
        for j in 0..2 {
            let s: f64 = (0..4).map(|i| fine.increment(4 * k + i)[j]).sum();
            assert_eq!(coarse.increment(k)[j], s);
        }
    }
    assert!(coarsen(&sys, &fine, 5).is_err());
    let c1 = coarsen(&sys, &fine, 1).unwrap();
    assert_eq!(c1.states, fine.states);
}
