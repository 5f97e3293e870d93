use anisostable::error::Error;
use anisostable::field::{DiagonalCoefficientField, DiagonalSde, FieldSpec};
use anisostable::grid::AxisSpec;
use anisostable::levy::{frozen_density, AlphaSpec, FrozenSpec};
use anisostable::sde::{coarsen, laplace_functional, laplace_tail, EnsembleSpec, SamplePath, Scheme};
use anisostable::spectral::*;
use anisostable::stats::{median, MeanVar};
use anisostable::testfn::{bump_battery, bundled_battery, gaussian_bump, poly_bump, Decay, TestFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

fn alphas(a: &[f64]) -> AlphaSpec {
    AlphaSpec::new(a).unwrap()
}

fn frozen(a: &[f64], c: &[f64]) -> FrozenSpec {
    FrozenSpec::new(alphas(a), c.to_vec(), vec![0.0; a.len()]).unwrap()
}

fn sup_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.sub(b).sup()
}

#[test]
fn semigroup_is_an_approximate_identity_at_small_time() {
    let fz = frozen(&[0.7, 1.6], &[1.0, 1.5]);
    let grid = PeriodicGrid::cube(2, 128, 0.1).unwrap();
    for f in [poly_bump(vec![0.0, 0.0], 2.0), gaussian_bump(vec![0.3, 0.0], 0.7)] {
        let fg = GridFunction::from_test_function(&grid, &f).unwrap();
        let p = semigroup_apply(&fz, 1e-6, &fg).unwrap();
        assert!(sup_diff(&p.function, &fg) < 1e-3, "{}", f.name);
    }
}

#[test]
fn semigroup_law_two_steps_versus_one() {
    let fz = frozen(&[0.9, 1.4], &[0.8, 1.2]);
    let grid = PeriodicGrid::cube(2, 128, 0.125).unwrap();
    let fg = GridFunction::from_test_function(&grid, &gaussian_bump(vec![0.0, 0.0], 1.0)).unwrap();
    for (s, t) in [(0.1, 0.3), (0.5, 1.5), (2.0, 0.25)] {
        let two = semigroup_apply(&fz, s, &semigroup_apply(&fz, t, &fg).unwrap().function).unwrap();
        let one = semigroup_apply(&fz, s + t, &fg).unwrap();
        assert!(sup_diff(&two.function, &one.function) < 1e-4);
    }
}

#[test]
fn semigroup_decays_under_the_density_bound() {
    let a = [1.2, 1.7];
    let fz = frozen(&a, &[1.0, 0.7]);
    let beta = fz.alpha_spec.anisotropy().beta;
    let p1 = frozen_density(&fz, 1.0, &[AxisSpec::new(20.0, 0.05), AxisSpec::new(20.0, 0.05)]).unwrap();
    let p1_norm = p1.lp_norm(2.0);
    let grid = PeriodicGrid::cube(2, 256, 0.25).unwrap();
    let fg = GridFunction::from_test_function(&grid, &gaussian_bump(vec![0.0, 0.0], 1.0)).unwrap();
    let f2 = fg.lp_norm(2.0);
    let mut prev = fg.sup();
    for t in [1.0, 2.0, 4.0, 8.0, 16.0] {
        let p = semigroup_apply(&fz, t, &fg).unwrap();
        let s = p.function.sup();
        assert!(s < prev, "t={t}");
        let bound = t.powf(-beta / 2.0) * p1_norm * f2;
        assert!(s <= bound + p.errors.wrap, "t={t}: {s} > {bound}");
        prev = s;
    }
}

#[test]
fn resolvent_of_constant_is_one_over_lambda() {
    let fz = frozen(&[0.6, 1.5], &[1.0, 2.0]);
    let grid = PeriodicGrid::cube(2, 32, 0.25).unwrap();
    let one = GridFunction::constant(&grid, 1.0);
    for lambda in [0.5, 1.0, 4.0] {
        let r = resolvent_apply(&fz, lambda, &one).unwrap();
        // a periodic input has no images to wrap, so only the time terms apply
        let tol = r.errors.head + r.errors.quadrature + r.errors.tail;
        for (i, v) in r.function.values.iter().enumerate() {
            if grid.is_interior(i, 1.0) {
                assert!((v - 1.0 / lambda).abs() <= tol + 1e-14, "{v} vs {}", 1.0 / lambda);
            }
        }
    }
}

#[test]
fn resolvent_contracts_in_lp() {
    let fz = frozen(&[0.8, 1.6], &[1.3, 0.7]);
    let grid = PeriodicGrid::cube(2, 128, 0.125).unwrap();
    for f in bundled_battery(&[0.0, 0.0], 4.0) {
        let fg = GridFunction::from_test_function(&grid, &f).unwrap();
        for lambda in [0.5, 1.0, 4.0] {
            let r = resolvent_apply(&fz, lambda, &fg).unwrap();
            for p in [1.0, 2.0, f64::INFINITY] {
                let slack = r.function.lp_norm(p) * lambda / fg.lp_norm(p) - 1.0;
                assert!(slack <= 1e-3, "{} lambda={lambda} p={p}: slack {slack}", f.name);
            }
        }
    }
}

#[test]
fn resolvent_identity() {
    let fz = frozen(&[0.8, 1.6], &[1.3, 0.7]);
    let grid = PeriodicGrid::cube(2, 128, 0.125).unwrap();
    let fg = GridFunction::from_test_function(&grid, &gaussian_bump(vec![0.0, 0.0], 1.0)).unwrap();
    let (lambda, mu) = (0.5, 3.0);
    let rl = resolvent_apply(&fz, lambda, &fg).unwrap();
    let rm = resolvent_apply(&fz, mu, &fg).unwrap();
    let rlrm = resolvent_apply(&fz, lambda, &rm.function).unwrap();
    let lhs = rl.function.sub(&rm.function);
    let rhs = rlrm.function.scaled(mu - lambda);
    let defect = sup_diff(&lhs, &rhs);
    assert!(defect <= 1e-3, "{defect}");
    let time_terms = |e: &ErrorReport| e.head + e.quadrature + e.tail;
    let combined = time_terms(&rl.errors) + time_terms(&rm.errors) * (1.0 + (mu - lambda) / lambda) + (mu - lambda) * time_terms(&rlrm.errors);
    assert!(defect <= combined + 1e-13, "{defect} > {combined}");
}

#[test]
fn time_quadrature_matches_exact_multiplier() {
    let fz = frozen(&[0.5, 1.9], &[0.6, 1.1]);
    let grid = PeriodicGrid::cube(2, 64, 0.25).unwrap();
    let fg = GridFunction::from_test_function(&grid, &poly_bump(vec![0.5, 0.0], 2.0)).unwrap();
    for lambda in [0.25, 1.0, 8.0] {
        let r = resolvent_apply(&fz, lambda, &fg).unwrap();
        let exact = resolvent_exact(&fz, lambda, &fg).unwrap();
        let d = sup_diff(&r.function, &exact);
        let e = &r.errors;
        assert!(d <= e.head + e.quadrature + e.tail + 1e-13, "lambda={lambda}: {d} vs {e:?}");
    }
}

#[test]
fn resolvent_error_report_names_dominant_term() {
    let fz = frozen(&[1.0, 1.0], &[1.0, 1.0]);
    let grid = PeriodicGrid::cube(2, 32, 0.25).unwrap();
    let fg = GridFunction::from_test_function(&grid, &gaussian_bump(vec![0.0, 0.0], 2.0)).unwrap();
    let r = resolvent_apply(&fz, 0.05, &fg).unwrap();
    assert_eq!(r.errors.dominant(), "wrap");
    assert!(r.errors.check(1e-12).is_err());
    assert!(r.errors.check(1e6).is_ok());
}

fn potential_setup() -> (FrozenSpec, GridFunction) {
    let fz = frozen(&[0.8, 1.2, 1.5], &[1.0, 0.8, 1.3]);
    let grid = PeriodicGrid::cube(3, 64, 0.25).unwrap();
    let fg = GridFunction::from_test_function(&grid, &gaussian_bump(vec![0.0; 3], 1.0)).unwrap();
    (fz, fg)
}

#[test]
fn potential_is_positive_and_decays_radially() {
    let (fz, fg) = potential_setup();
    let r0 = potential_apply(&fz, &fg).unwrap();
    let tol = r0.errors.total();
    assert!(r0.function.values.iter().all(|&v| v >= -tol));
    let g = &fg.grid;
    let h = g.spacing[0];
    let shells = 24;
    let mut by_shell = vec![Vec::new(); shells];
    for (i, v) in r0.function.values.iter().enumerate() {
        let r = g.point(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        let s = (r / (2.0 * h)) as usize;
        if s < shells {
            by_shell[s].push(*v);
        }
    }
    let medians: Vec<f64> = by_shell.iter().map(|v| median(v)).collect();
    for w in medians.windows(2) {
        assert!(w[1] < w[0], "{medians:?}");
    }
}

#[test]
fn potential_and_resolvent_identity() {
    let (fz, fg) = potential_setup();
    let lambda = 0.5;
    let r0 = potential_apply(&fz, &fg).unwrap();
    let rl = resolvent_apply(&fz, lambda, &fg).unwrap();
    let rlr0 = resolvent_apply(&fz, lambda, &r0.function).unwrap();
    let defect = sup_diff(&rl.function.sub(&r0.function), &rlr0.function.scaled(-lambda));
    let combined = rl.errors.total() + 2.0 * r0.errors.total() + lambda * rlr0.errors.total();
    assert!(defect <= combined, "{defect} > {combined}");
    assert!(defect <= 0.05 * r0.function.sup(), "{defect}");
}

#[test]
fn potential_quadrature_matches_exact_multiplier() {
    let (fz, fg) = potential_setup();
    let t = potential_horizon(&fz, &fg.grid);
    let r0 = potential_apply_with(&fz, &fg, &TimeQuadrature::default(), Some(t)).unwrap();
    let exact = potential_exact(&fz, &fg, t).unwrap();
    let e = &r0.errors;
    assert!(sup_diff(&r0.function, &exact) <= e.head + e.quadrature + 1e-12);
}

#[test]
fn potential_needs_three_dimensions() {
    let fz = frozen(&[0.5, 0.5], &[1.0, 1.0]);
    let grid = PeriodicGrid::cube(2, 16, 0.5).unwrap();
    let fg = GridFunction::from_test_function(&grid, &gaussian_bump(vec![0.0, 0.0], 1.0)).unwrap();
    assert!(matches!(potential_apply(&fz, &fg), Err(Error::NotTransient(2))));
}

fn random_frozen(r: &mut ChaCha8Rng) -> FrozenSpec {
    let d = r.random_range(2..=4);
    let a: Vec<f64> = (0..d).map(|_| r.random_range(0.3..1.9)).collect();
    let c: Vec<f64> = (0..d).map(|_| r.random_range(0.3..3.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    frozen(&a, &c)
}

fn random_xi(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let xi: Vec<f64> = (0..d)
            .map(|_| if r.random_bool(0.2) { 0.0 } else { r.random_range(-1.0..1.0) * 10f64.powf(r.random_range(-3.0..3.0)) })
            .collect();
        if xi.iter().any(|&x| x != 0.0) {
            return xi;
        }
    }
}

#[test]
fn multiplier_symbol_bounded_by_two_a() {
    let mut r = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let fz = random_frozen(&mut r);
        let spec = MultiplierSpec::from_frozen(&fz);
        let two_a = 2.0 * spec.a();
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let xi = random_xi(&mut r, spec.dim());
            for j in 0..spec.dim() {
                let s = multiplier_symbol(&spec, j, &xi).unwrap();
                assert!(s <= 0.0);
                worst = worst.max(s.abs());
            }
        }
        assert!(worst <= two_a * (1.0 + 1e-14), "{worst} > {two_a}");
        // concentrating ξ on the axis with the largest φ approaches 2a
        let jmax = (0..spec.dim()).max_by(|&i, &k| spec.phi_values[i].total_cmp(&spec.phi_values[k])).unwrap();
        let mut xi = vec![1e-9; spec.dim()];
        xi[jmax] = 1.0;
        let s = multiplier_symbol(&spec, jmax, &xi).unwrap();
        assert!((s.abs() - two_a).abs() < 1e-3 * two_a);
    }
}

#[test]
fn multiplier_symbol_one_dimensional_is_constant() {
    let spec = MultiplierSpec::from_frozen(&frozen(&[0.45], &[2.5]));
    for xi in [1e-4, 0.3, 7.0, -250.0] {
        assert!((multiplier_symbol(&spec, 0, &[xi]).unwrap() + 2.0 * 2.5f64.powf(-0.45)).abs() < 1e-14);
    }
    assert!(matches!(multiplier_symbol(&spec, 0, &[0.0]), Err(Error::ZeroFrequency)));
}

#[test]
fn multiplier_quadrature_cross_check() {
    let mut r = ChaCha8Rng::seed_from_u64(23);
    let fz = random_frozen(&mut r);
    let spec = MultiplierSpec::from_frozen(&fz);
    for _ in 0..20 {
        let xi: Vec<f64> = (0..spec.dim()).map(|_| r.random_range(-5.0..5.0)).collect();
        let j = r.random_range(0..spec.dim());
        let closed = multiplier_symbol(&spec, j, &xi).unwrap();
        let q = multiplier_symbol_quadrature(&spec, j, &xi).unwrap();
        assert!((closed - q.value).abs() < 1e-6, "xi={xi:?}: {closed} vs {}", q.value);
        assert!(q.error < 1e-6);
    }
}

fn lattice(d: usize, half: f64, n: usize) -> Vec<Vec<f64>> {
    let step = 2.0 * half / (n - 1) as f64;
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let i = k % n;
                    k /= n;
                    -half + i as f64 * step
                })
                .collect()
        })
        .collect()
}

fn oscillating(a: &[f64], eta: f64) -> DiagonalSde {
    let d = a.len();
    let spec = FieldSpec::WeightOscillation { weights: vec![1.0; d], eta, wavenumber: FRAC_PI_2, anchor: vec![0.0; d] };
    DiagonalSde::from_spec(alphas(a), &spec).unwrap()
}

#[test]
fn locality_constants_for_constant_field() {
    let sys = DiagonalSde::new(alphas(&[0.7, 1.1, 1.6]), DiagonalCoefficientField::constant(vec![2.0, 0.5, 1.0]).unwrap()).unwrap();
    let fz = sys.frozen_at(&[0.0; 3]).unwrap();
    for p in [1.1, 2.0, 6.0] {
        let loc = locality_gate(&sys, &fz, p, &lattice(3, 4.0, 5)).unwrap();
        assert_eq!(loc.eta, 0.0);
        assert!(loc.passes_loc);
        assert_eq!(loc.a, 0.5f64.powf(-1.1));
    }
}

#[test]
fn locality_threshold_hand_value_and_flip() {
    let a = [1.0, 1.0, 1.0];
    let samples = lattice(3, 3.0, 7);
    let base = oscillating(&a, 0.0);
    let fz = base.frozen_at(&[0.0; 3]).unwrap();
    let loc = locality_gate(&base, &fz, 2.0, &samples).unwrap();
    assert!((loc.eta0 - 1.0 / 12.0).abs() < 1e-16);
    assert_eq!(loc.p_star_minus_1, 1.0);
    for (eta, pass) in [(1.0 / 12.0, true), (0.999 / 12.0, true), (1.001 / 12.0, false)] {
        let sys = oscillating(&a, eta);
        let loc = locality_gate(&sys, &sys.frozen_at(&[0.0; 3]).unwrap(), 2.0, &samples).unwrap();
        assert!((loc.eta - eta).abs() < 1e-15);
        assert_eq!(loc.passes_loc, pass, "eta={eta}");
    }
    let small = FieldSpec::Sinusoidal { base: vec![1.0; 3], amplitude: 0.01, wavenumber: 1.0 };
    let large = FieldSpec::Sinusoidal { base: vec![1.0; 3], amplitude: 0.2, wavenumber: 1.0 };
    for (spec, pass) in [(small, true), (large, false)] {
        let sys = DiagonalSde::from_spec(alphas(&a), &spec).unwrap();
        let loc = locality_gate(&sys, &sys.frozen_at(&[0.0; 3]).unwrap(), 2.0, &samples).unwrap();
        assert_eq!(loc.passes_loc, pass);
    }
}

#[test]
fn locality_p_star_is_symmetric() {
    let (e3, s3) = locality_threshold(2, 1.5, 3.0).unwrap();
    let (e15, s15) = locality_threshold(2, 1.5, 1.5).unwrap();
    assert_eq!(s3, 2.0);
    assert_eq!(s15, 2.0);
    assert_eq!(e3, e15);
    assert!(locality_threshold(2, 1.0, 1.0).is_err());
}

#[test]
fn perturbation_check_at_locality_boundary() {
    let a = [0.8, 1.2, 1.5];
    let eta0 = 1.0 / 12.0;
    let sys = oscillating(&a, eta0);
    let fz = sys.frozen_at(&[0.0; 3]).unwrap();
    let grid = PeriodicGrid::cube(3, 64, 0.375).unwrap();
    let battery = vec![gaussian_bump(vec![0.0; 3], 1.0), poly_bump(vec![0.0; 3], 2.0)];
    let rep = perturbation_bound_check(&sys, &fz, 2.0, &battery, &grid, &lattice(3, 3.0, 7)).unwrap();
    assert!((rep.locality.eta - eta0).abs() < 1e-15);
    for row in &rep.rows {
        assert!(row.ratio <= row.chain_ratio * (1.0 + 1e-12), "{row:?}");
        assert!(row.chain_ratio <= 0.25 + row.discretization_slack + 1e-12, "{row:?}");
        assert!(row.ratio <= 0.25 + 0.02, "{row:?}");
        assert!(row.parseval_defect < 1e-4, "{row:?}");
        assert!(row.quadrature_defect <= row.quadrature_bound + 1e-6 * row.hessian_fine.max(1.0), "{row:?}");
        assert!(row.hessian_bounded, "{row:?}");
    }
    assert!(matches!(perturbation_bound_check(&sys, &fz, 3.0, &battery, &grid, &[]), Err(Error::InvalidArgument(_))));
    let over = oscillating(&a, 0.1);
    let r = perturbation_bound_check(&over, &over.frozen_at(&[0.0; 3]).unwrap(), 2.0, &battery, &grid, &lattice(3, 3.0, 7));
    assert!(matches!(r, Err(Error::LocalityViolated { .. })));
}

#[test]
fn perturbation_ratio_is_linear_in_eta() {
    let a = [0.9, 1.3, 1.7];
    let grid = PeriodicGrid::cube(3, 32, 0.5).unwrap();
    let f = GridFunction::from_test_function(&grid, &gaussian_bump(vec![0.0; 3], 1.5)).unwrap();
    let fz = oscillating(&a, 0.0).frozen_at(&[0.0; 3]).unwrap();
    let pa = potential_axes(&fz, &f, "gaussian", &[]).unwrap();
    let samples = lattice(3, 3.0, 7);
    let pts: Vec<(f64, f64)> = (1..=5)
        .map(|k| {
            let eta = k as f64 / 60.0;
            let sys = oscillating(&a, eta);
            let loc = locality_gate(&sys, &fz, 2.0, &samples).unwrap();
            (eta, perturbation_row(&sys, &fz, &pa, &loc).ratio)
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    assert!(slope > 0.0);
    assert!(intercept.abs() < 1e-10 * my, "{intercept}");
    let constant = DiagonalSde::new(alphas(&a), DiagonalCoefficientField::constant(vec![1.0; 3]).unwrap()).unwrap();
    let loc = locality_gate(&constant, &fz, 2.0, &samples).unwrap();
    assert_eq!(perturbation_row(&constant, &fz, &pa, &loc).ratio, 0.0);
}

#[test]
fn bump_battery_is_the_gaussian_and_poly_part() {
    let b = bump_battery(&[0.0, 0.0]);
    assert_eq!(b.len(), 4);
    assert!(b.iter().all(|f| !matches!(f.decay, Decay::Periodic { .. } | Decay::Oscillatory { .. })));
}

/// Bilinear interpolant of a two-dimensional periodic grid function.
fn bilinear(g: GridFunction) -> TestFunction {
    let sup = g.sup();
    let grid = g.grid.clone();
    let eval = move |x: &[f64]| {
        let mut idx = [0usize; 2];
        let mut frac = [0.0; 2];
        for j in 0..2 {
            let n = grid.shape[j] as f64;
            let u = (x[j] - grid.coord(j, 0)) / grid.spacing[j];
            let fl = u.floor();
            frac[j] = u - fl;
            idx[j] = fl.rem_euclid(n) as usize;
        }
        let at = |di: usize, dj: usize| {
            let i = (idx[0] + di) % grid.shape[0];
            let k = (idx[1] + dj) % grid.shape[1];
            g.values[grid.flat_index(&[i, k])]
        };
        let (s, t) = (frac[0], frac[1]);
        (1.0 - s) * (1.0 - t) * at(0, 0) + s * (1.0 - t) * at(1, 0) + (1.0 - s) * t * at(0, 1) + s * t * at(1, 1)
    };
    TestFunction::custom("bilinear", 2, eval, |_, o| o.fill(0.0), 0.0, 0.0, sup, Decay::None)
}

#[test]
fn resolvent_representation_for_near_constant_field() {
    // S_λ f = R_λ f(x₀) + S_λ 𝓑R_λ f on Euler paths; the time-step bias is
    // estimated from the same drivers coarsened by two
    let a = [1.3, 1.7];
    let spec = FieldSpec::Sinusoidal { base: vec![1.0, 1.0], amplitude: 0.25, wavenumber: 0.9 };
    let sys = DiagonalSde::from_spec(alphas(&a), &spec).unwrap();
    let x0 = vec![0.0, 0.0];
    let fz = sys.frozen_at(&x0).unwrap();
    let lambda = 2.0;
    let grid = PeriodicGrid::cube(2, 512, 0.125).unwrap();
    let f = gaussian_bump(vec![0.0, 0.0], 1.0);
    let fg = GridFunction::from_test_function(&grid, &f).unwrap();
    let u = resolvent_apply(&fz, lambda, &fg).unwrap();
    let spec_u = u.function.spectrum();
    let axes: Vec<GridFunction> = (0..2)
        .map(|j| {
            let freqs = grid.frequencies(j);
            spec_u.apply_indexed(|idx| -2.0 * freqs[idx[j]].abs().powf(a[j]))
        })
        .collect();
    let b = perturbation_on_grid(&sys, &fz, &axes);
    let u0 = u.function.values[grid.flat_index(&[256, 256])];
    let g = bilinear(b);
    let ens = EnsembleSpec { system: sys.clone(), x0, npaths: 8000, scheme: Scheme::Euler { dt: 1.0 / 512.0 }, horizon: 12.0, seed: 5 };
    let frozen_sys = DiagonalSde::new(alphas(&a), DiagonalCoefficientField::constant(fz.diag_coeffs.clone()).unwrap()).unwrap();
    // per path: Y = ∫e^{−λt}(f − 𝓑u)(X), the same for the frozen path X⁰ on the
    // same driver with g = 0, and the coarse-minus-fine change of each
    let rows = ens
        .map_paths(|_, p| {
            let c = coarsen(&sys, p, 2).unwrap();
            let (p0, c0) = (coarsen(&frozen_sys, p, 1).unwrap(), coarsen(&frozen_sys, p, 2).unwrap());
            let lf = |q: &SamplePath, h: &TestFunction| laplace_functional(q, h, lambda).unwrap();
            let (y, yc) = (lf(p, &f) - lf(p, &g), lf(&c, &f) - lf(&c, &g));
            let (y0, y0c) = (lf(&p0, &f), lf(&c0, &f));
            [y, yc - y, lf(p, &g), y - y0, (yc - y0c) - (y - y0)]
        })
        .unwrap();
    let col = |k: usize| MeanVar::from_slice(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
    let (y, bias, corr, paired, paired_bias) = (col(0), col(1), col(2), col(3), col(4));
    let tail = laplace_tail(lambda, 12.0, 1.0 + g.sup_norm);
    let tol = 3.0 * y.stderr() + 2.0 * (bias.mean.abs() + 3.0 * bias.stderr()) + tail + u.errors.total();
    assert!((y.mean - u0).abs() <= tol, "{} vs {u0}: tol {tol}", y.mean);
    assert!(corr.mean.abs() > 5.0 * corr.stderr(), "{} ± {}", corr.mean, corr.stderr());
    // coupled to the frozen process the comparison resolves the correction term
    let ptol = 3.0 * paired.stderr() + 2.0 * (paired_bias.mean.abs() + 3.0 * paired_bias.stderr()) + 2.0 * tail;
    assert!(paired.mean.abs() <= ptol, "{} ± {}: tol {ptol}", paired.mean, paired.stderr());
    assert!((paired.mean + corr.mean).abs() > ptol, "correction not resolved");
}
