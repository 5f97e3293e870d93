//! One-dimensional symmetric α-stable laws: the normalization constant c_α,
//! exact sampling, and transition densities.

use crate::error::{Error, Result};
use crate::grid::{auto_axis, AxisSpec, GridDensity};
use crate::quad::{adaptive, one_minus_cos_integral, Integral};
use crate::rng::{uniform_open, RngHandle};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Stability index α ∈ (0, 2).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct StableIndex(f64);

impl StableIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 2.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidAlpha(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Indices near the excluded endpoints where quadrature degrades.
    pub fn is_delicate(self) -> bool {
        self.0 >= 1.95 || self.0 <= 0.05
    }
}

impl TryFrom<f64> for StableIndex {
    type Error = Error;
    fn try_from(a: f64) -> Result<Self> {
        Self::new(a)
    }
}

impl From<StableIndex> for f64 {
    fn from(a: StableIndex) -> f64 {
        a.0
    }
}

/// c_α = α 2^{α−1} Γ((1+α)/2) / (√π Γ(1−α/2)), the constant with
/// ∫(1 − cos w) c_α |w|^{−1−α} dw = 1.
pub fn normalization_constant(alpha: StableIndex) -> f64 {
    let a = alpha.0;
    a * 2f64.powf(a - 1.0) * gamma((1.0 + a) / 2.0) / (PI.sqrt() * gamma(1.0 - a / 2.0))
}

/// c_α from adaptive quadrature of the defining integral.
pub fn normalization_constant_quadrature(alpha: StableIndex) -> Integral<f64> {
    let half = one_minus_cos_integral(alpha.0, 1.0);
    let total = 2.0 * half.value;
    Integral { value: 1.0 / total, error: 2.0 * half.error / (total * total) }
}

/// One standard symmetric α-stable draw (characteristic function e^{−|ξ|^α})
/// by the Chambers–Mallows–Stuck transform.
pub fn draw_standard<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * (uniform_open(rng) - 0.5);
    let w = -uniform_open(rng).ln();
    if alpha == 1.0 {
        return u.tan();
    }
    let a = alpha;
    (a * u).sin() / u.cos().powf(1.0 / a) * (((1.0 - a) * u).cos() / w).powf((1.0 - a) / a)
}

/// Increment of the stable process over a step `dt`.
pub fn draw_increment<R: Rng + ?Sized>(alpha: f64, dt: f64, rng: &mut R) -> f64 {
    dt.powf(1.0 / alpha) * draw_standard(alpha, rng)
}

pub fn sample_standard(alpha: StableIndex, n: usize, rng: RngHandle) -> Vec<f64> {
    let mut g = rng.generator();
    (0..n).map(|_| draw_standard(alpha.0, &mut g)).collect()
}

pub fn sample_increment(alpha: StableIndex, dt: f64, rng: RngHandle) -> Result<f64> {
    if dt <= 0.0 || dt.is_nan() {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
    }
    Ok(draw_increment(alpha.0, dt, &mut rng.generator()))
}

/// Asymptotic two-sided tail mass P(|Z_t| > x) ≈ 2 c_α t / (α x^α).
pub fn tail_mass(alpha: StableIndex, t: f64, x: f64) -> f64 {
    2.0 * normalization_constant(alpha) * t / (alpha.0 * x.powf(alpha.0))
}

/// Complex e^z − 1 without cancellation for small |z|.
fn cexpm1(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let em1 = z.re.exp_m1();
    let half = (0.5 * z.im).sin();
    Complex64::new(em1 * c - 2.0 * half * half, (em1 + 1.0) * s)
}

/// Pointwise density q_t(x) of Z_t, Z a standard symmetric α-stable process.
///
/// The inversion integral is taken along the ray ξ = r e^{iθ},
/// θ = min(π/2, π/(4α)), where both factors decay exponentially. For large
/// |x| the oscillatory unit term is removed analytically.
pub fn stable_pdf(alpha: f64, t: f64, x: f64) -> f64 {
    let x = x.abs();
    let theta = (PI / 2.0).min(PI / (4.0 * alpha));
    let e = Complex64::from_polar(1.0, theta);
    let omega = Complex64::from_polar(1.0, alpha * theta);
    let damp_rate = (alpha * theta).cos() * t;
    let xi0 = damp_rate.recip().powf(1.0 / alpha);
    let (sin_t, cos_t) = theta.sin_cos();
    let ix_e = Complex64::new(0.0, x) * e;
    let subtract = x * sin_t * xi0 >= 1.0;

    let scale = if subtract { xi0.min(1.0 / (x * sin_t)) } else { xi0 };
    let mut r_max = xi0 * 46f64.powf(1.0 / alpha);
    if subtract {
        r_max = 46.0 / (x * sin_t);
    } else if x * sin_t > 0.0 {
        r_max = r_max.min(46.0 / (x * sin_t));
    }
    let r_lo = scale * 2f64.powi(-42);
    let mut bps = vec![r_lo];
    let mut r = r_lo;
    while r * 8.0 < scale / 8.0 {
        r *= 8.0;
        bps.push(r);
    }
    let osc = x * cos_t;
    loop {
        let next = (2.0 * r).min(r_max);
        let pieces = ((osc * (next - r)) / PI).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            bps.push(r + (next - r) * k as f64 / pieces as f64);
        }
        r = next;
        if r >= r_max {
            break;
        }
    }

    let value = if subtract {
        let head = -omega * e * t * r_lo.powf(1.0 + alpha) / (1.0 + alpha);
        let body = adaptive(
            |r: f64| (ix_e * r).exp() * cexpm1(-omega * (t * r.powf(alpha))) * e,
            &bps,
            0.0,
            1e-12,
            20 * bps.len(),
        );
        head + body.value
    } else {
        let head = e * r_lo + ix_e * e * (0.5 * r_lo * r_lo);
        let body = adaptive(
            |r: f64| (ix_e * r - omega * (t * r.powf(alpha))).exp() * e,
            &bps,
            0.0,
            1e-12,
            20 * bps.len(),
        );
        head + body.value
    };
    (value.re / PI).max(0.0)
}

/// Evaluates `q` at the nonnegative half of a symmetric axis and mirrors it,
/// so the result is even bit for bit.
pub(crate) fn mirrored_values(nodes: &[f64], q: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
    let n = nodes.len();
    let half: Vec<f64> = nodes[n / 2..].par_iter().map(|&x| q(x)).collect();
    let mut out = vec![0.0; n];
    for (i, v) in half.iter().enumerate() {
        out[n / 2 + i] = *v;
        out[n - 1 - (n / 2 + i)] = *v;
    }
    out
}

/// q_t on a symmetric grid that extends until the truncated mass is below
/// `spec.mass_target`.
pub fn density_1d(alpha: StableIndex, t: f64, spec: &AxisSpec) -> Result<GridDensity> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t = {t} must be positive")));
    }
    let axis = auto_axis(spec, |x| tail_mass(alpha, t, x), alpha.0, t)?;
    let values = mirrored_values(&axis.nodes, |x| stable_pdf(alpha.0, t, x));
    let g = GridDensity::new(vec![axis], values)?;
    let defect = (g.mass() - 1.0).abs();
    if defect > MASS_TOLERANCE {
        return Err(Error::TruncationTarget {
            alpha: alpha.0,
            t,
            target: spec.mass_target,
            detail: format!("grid quadrature mass is off by {defect:e}; the core spacing does not resolve the peak"),
        });
    }
    Ok(g)
}

/// One-sided tail P(Z_t > x) for x ≥ 0, by quadrature of the density.
pub fn tail_probability(alpha: StableIndex, t: f64, x: f64) -> Integral<f64> {
    let x = x.abs();
    if x == 0.0 {
        return Integral { value: 0.5, error: 0.0 };
    }
    let scale = t.powf(1.0 / alpha.0);
    let mut bps = vec![0.0];
    let mut r = scale / 16.0;
    while r < x {
        bps.push(r);
        r *= 2.0;
    }
    bps.push(x);
    let body = adaptive(|u: f64| stable_pdf(alpha.0, t, u), &bps, 1e-15, 1e-11, 40 * bps.len());
    Integral { value: (0.5 - body.value).max(0.0), error: body.error + 1e-14 }
}

/// Largest accepted deviation of a grid density's quadrature mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Peak value q_t(0) = Γ(1 + 1/α) / (π t^{1/α}).
pub fn density_at_zero(alpha: StableIndex, t: f64) -> f64 {
    gamma(1.0 + 1.0 / alpha.0) / (PI * t.powf(1.0 / alpha.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(a: f64) -> StableIndex {
        StableIndex::new(a).unwrap()
    }

    #[test]
    fn rejects_boundary_indices() {
        for a in [0.0, 2.0, -1.0, f64::NAN, 3.0] {
            assert!(StableIndex::new(a).is_err());
        }
    }

    #[test]
    fn cauchy_normalization() {
        assert!((normalization_constant(idx(1.0)) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for a in [0.05, 0.3, 0.5, 1.0, 1.37, 1.8, 1.95] {
            let c = normalization_constant(idx(a));
            let q = normalization_constant_quadrature(idx(a)).value;
            assert!(((c - q) / q).abs() < 1e-10, "alpha={a}: {c} vs {q}");
        }
    }

    #[test]
    fn cauchy_density_values() {
        for x in [0.0, 0.5, 1.0, 3.0, 20.0, 1e4] {
            let v = stable_pdf(1.0, 1.0, x);
            let exact = 1.0 / (PI * (1.0 + x * x));
            assert!(((v - exact) / exact).abs() < 1e-9, "x={x}: {v} vs {exact}");
        }
    }

    #[test]
    fn peak_value_matches_gamma_formula() {
        for a in [0.3, 0.7, 1.2, 1.6, 1.9] {
            for t in [0.5, 2.0] {
                let v = stable_pdf(a, t, 0.0);
                let e = density_at_zero(idx(a), t);
                assert!(((v - e) / e).abs() < 1e-10, "alpha={a} t={t}");
            }
        }
    }

    #[test]
    fn far_tail_matches_asymptotic() {
        // q_1(x) ~ c_α x^{−1−α}
        for a in [0.5, 1.5] {
            let x = 1e6;
            let v = stable_pdf(a, 1.0, x);
            let e = normalization_constant(idx(a)) * x.powf(-1.0 - a);
            assert!(((v - e) / e).abs() < 1e-3, "alpha={a}: {v} vs {e}");
        }
    }

    #[test]
    fn cauchy_tail_probability() {
        for x in [0.5, 3.0, 40.0] {
            let p = tail_probability(idx(1.0), 1.0, x);
            let exact = 0.5 - x.atan() / PI;
            assert!((p.value - exact).abs() < 1e-10 + p.error, "x={x}: {} vs {exact}", p.value);
        }
    }

    #[test]
    fn complex_expm1_is_accurate() {
        let z = Complex64::new(-1e-9, 2e-9);
        let w = cexpm1(z);
        assert!((w - z).norm() < 1e-17);
        let z = Complex64::new(-0.7, 1.3);
        assert!((cexpm1(z) - (z.exp() - 1.0)).norm() < 1e-15);
    }
}
