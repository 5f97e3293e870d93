//! Quadrature for the generator 𝓛, the frozen generator 𝓛₀ and the
//! perturbation 𝓑 = 𝓛 − 𝓛₀ in second-difference form.
//!
//! For one axis the building block is
//! M_j f(x; s) = ∫_ℝ (f(x + s h e_j) − 2 f(x) + f(x − s h e_j)) c_α |h|^{−1−α} dh,
//! and 𝓛f(x) = ½ Σ_j M_j f(x; A_jj(x)).

use crate::error::{Error, Result};
use crate::field::DiagonalSde;
use crate::grid::fmt_f64;
use crate::levy::FrozenSpec;
use crate::quad::gl_cached;
use crate::stable::{normalization_constant, StableIndex};
use crate::testfn::{Decay, TestFunction};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingularQuadrature {
    /// eps: below it a fourth-order Taylor expansion is integrated exactly.
    pub inner_cutoff: f64,
    /// H: beyond it only analytic terms and bounds are used.
    pub outer_cutoff: f64,
    pub nodes_per_shell: usize,
    /// Relative acceptance threshold for one shell.
    pub shell_tolerance: f64,
    pub max_bisections: u32,
}

impl Default for SingularQuadrature {
    fn default() -> Self {
        Self { inner_cutoff: 1e-4, outer_cutoff: 1e4, nodes_per_shell: 16, shell_tolerance: 1e-10, max_bisections: 14 }
    }
}

impl SingularQuadrature {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_cutoff > 0.0 && self.inner_cutoff < 1.0 && self.outer_cutoff > 1.0 && self.outer_cutoff.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < eps < 1 < H, got eps = {}, H = {}",
                self.inner_cutoff, self.outer_cutoff
            )));
        }
        if !(2..=64).contains(&self.nodes_per_shell) {
            return Err(Error::InvalidArgument(format!("nodes_per_shell = {} not in 2..=64", self.nodes_per_shell)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorValue {
    pub value: f64,
    pub error_bound: f64,
}

impl OperatorValue {
    pub fn exceeds(&self, tolerance: f64) -> bool {
        self.error_bound > tolerance
    }
}

/// One row of the shell-by-shell breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellContribution {
    pub lower: f64,
    pub upper: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisIntegral {
    pub value: f64,
    pub inner_value: f64,
    pub inner_error: f64,
    pub shells: Vec<ShellContribution>,
    pub tail_value: f64,
    pub tail_error: f64,
}

impl AxisIntegral {
    pub fn total(&self) -> OperatorValue {
        let shell_err: f64 = self.shells.iter().map(|s| s.error).sum();
        OperatorValue { value: self.value, error_bound: self.inner_error + shell_err + self.tail_error }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lower,upper,value,error")?;
        writeln!(out, "0,{},{},{}", "inner", fmt_f64(self.inner_value), fmt_f64(self.inner_error))?;
        for s in &self.shells {
            writeln!(out, "{},{},{},{}", fmt_f64(s.lower), fmt_f64(s.upper), fmt_f64(s.value), fmt_f64(s.error))?;
        }
        writeln!(out, "{},inf,{},{}", "outer", fmt_f64(self.tail_value), fmt_f64(self.tail_error))
    }
}

struct Shell<'a> {
    f: &'a TestFunction,
    x: &'a [f64],
    j: usize,
    scale: f64,
    alpha: f64,
    c: f64,
    fx: f64,
    buf: Vec<f64>,
    rule: &'static (Vec<f64>, Vec<f64>),
}

impl Shell<'_> {
    /// 2 (f(x + s h e_j) + f(x − s h e_j) − 2 f(x)) c h^{−1−α}, h > 0.
    fn integrand(&mut self, h: f64) -> f64 {
        let xj = self.x[self.j];
        self.buf[self.j] = xj + self.scale * h;
        let p = self.f.value(&self.buf);
        self.buf[self.j] = xj - self.scale * h;
        let m = self.f.value(&self.buf);
        self.buf[self.j] = xj;
        2.0 * ((p + m) - 2.0 * self.fx) * self.c * h.powf(-1.0 - self.alpha)
    }

    fn gauss(&mut self, a: f64, b: f64) -> f64 {
        let (nodes, weights) = self.rule;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (t, w) in nodes.iter().zip(weights) {
            s += w * self.integrand(mid + half * t);
        }
        s * half
    }

    /// Gauss rule on [a, b] checked against its two halves, recursing until
    /// the difference is below `tol`. Returns (value, error).
    fn adapt(&mut self, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let left = self.gauss(a, m);
        let right = self.gauss(m, b);
        let fine = left + right;
        let diff = (fine - whole).abs();
        if diff <= tol || depth == 0 {
            return (fine, diff);
        }
        let (l, el) = self.adapt(a, m, left, 0.5 * tol, depth - 1);
        let (r, er) = self.adapt(m, b, right, 0.5 * tol, depth - 1);
        (l + r, el + er)
    }
}

/// Bound on |∫_H^∞ (f(x + s h e_j) + f(x − s h e_j)) 2 c h^{−1−α} dh| and
/// whether the exact −2f(x) part may be separated.
fn tail_pair_bound(f: &TestFunction, x: &[f64], j: usize, scale: f64, alpha: f64, c: f64, h: f64) -> Option<f64> {
    match &f.decay {
        Decay::Compact { .. } | Decay::Gaussian { .. } => {
            let b = f.axis_tail_sup(x, j, scale, h);
            Some(4.0 * b * c * h.powf(-alpha) / alpha)
        }
        Decay::Oscillatory { wavevector, amplitude } => {
            // |∫_H^∞ cos(ω h + φ) g(h) dh| ≤ 2 g(H)/ω for g decreasing to 0.
            let omega = (wavevector[j] * scale).abs();
            if omega == 0.0 {
                None
            } else {
                Some(4.0 * amplitude * c * 2.0 * h.powf(-1.0 - alpha) / omega)
            }
        }
        Decay::Periodic { .. } | Decay::None => None,
    }
}

/// M_j f(x; scale) with a three-part error bound.
pub fn second_difference_integral(
    f: &TestFunction,
    x: &[f64],
    j: usize,
    scale: f64,
    alpha: StableIndex,
    quad: &SingularQuadrature,
) -> AxisIntegral {
    let a = alpha.value();
    let c = normalization_constant(alpha);
    let s = scale.abs();
    let fx = f.value(x);
    if s == 0.0 {
        return AxisIntegral { value: 0.0, inner_value: 0.0, inner_error: 0.0, shells: vec![], tail_value: 0.0, tail_error: 0.0 };
    }
    let eps = quad.inner_cutoff;
    let big_h = quad.outer_cutoff;

    // f(x+sh)+f(x−sh)−2f(x) = s²h² f_jj + s⁴h⁴ R/12 with |R| ≤ quartic_sup.
    let (fjj, fjj_err) = f.axis_second(x, j);
    let inner_weight = 2.0 * s * s * c * eps.powf(2.0 - a) / (2.0 - a);
    let inner_value = inner_weight * fjj;
    let inner_error = inner_weight * fjj_err + 2.0 * s.powi(4) * f.quartic_sup / 12.0 * c * eps.powf(4.0 - a) / (4.0 - a);

    let mut sh = Shell { f, x, j, scale: s, alpha: a, c, fx, buf: x.to_vec(), rule: gl_cached(quad.nodes_per_shell) };
    let mut shells = Vec::new();
    let mut lo = eps;
    let mut total = inner_value;
    let magnitude = f.sup_norm.max(fx.abs()).max(f64::MIN_POSITIVE);
    while lo < big_h {
        let hi = (2.0 * lo).min(big_h);
        let mass = 4.0 * magnitude * c * (lo.powf(-a) - hi.powf(-a)) / a;
        let tol = quad.shell_tolerance * mass;
        let whole = sh.gauss(lo, hi);
        let (value, error) = sh.adapt(lo, hi, whole, tol, quad.max_bisections);
        // rounding in the second difference: |fl(D) − D| ≤ 12 ε sup|f|
        let error = error + 6.0 * f64::EPSILON * mass;
        total += value;
        shells.push(ShellContribution { lower: lo, upper: hi, value, error });
        lo = hi;
    }

    let (tail_value, tail_error) = match (&f.decay, tail_pair_bound(f, x, j, s, a, c, big_h)) {
        // constant along axis j: the second difference vanishes identically
        (Decay::Oscillatory { .. }, None) => (0.0, 0.0),
        (Decay::Periodic { period, mean, oscillation }, None) => {
            let omega = 2.0 * std::f64::consts::PI / period[j] * s;
            (4.0 * (mean - fx) * c * big_h.powf(-a) / a, 8.0 * oscillation * c * big_h.powf(-1.0 - a) / omega)
        }
        (_, Some(bound)) => (-4.0 * fx * c * big_h.powf(-a) / a, bound),
        (_, None) => (0.0, 4.0 * (f.sup_norm + fx.abs()) * c * big_h.powf(-a) / a),
    };
    total += tail_value;
    AxisIntegral { value: total, inner_value, inner_error, shells, tail_value, tail_error }
}

fn check_point(d: usize, f: &TestFunction, x: &[f64]) -> Result<()> {
    if f.dim != d {
        return Err(Error::DimensionMismatch { expected: d, got: f.dim });
    }
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    Ok(())
}

/// Per-axis unweighted integrals M_j f(x; 1).
pub fn axis_integrals(alphas: &crate::levy::AlphaSpec, f: &TestFunction, x: &[f64], quad: &SingularQuadrature) -> Result<Vec<OperatorValue>> {
    quad.validate()?;
    check_point(alphas.dim(), f, x)?;
    Ok((0..alphas.dim()).map(|j| second_difference_integral(f, x, j, 1.0, alphas.index(j), quad).total()).collect())
}

fn half_sum(parts: impl Iterator<Item = (f64, OperatorValue)>) -> OperatorValue {
    let mut v = 0.0;
    let mut e = 0.0;
    for (w, p) in parts {
        v += 0.5 * w * p.value;
        e += 0.5 * w.abs() * p.error_bound;
    }
    OperatorValue { value: v, error_bound: e }
}

/// 𝓛f(x) = ½ Σ_j M_j f(x; A_jj(x)).
pub fn apply_generator(sys: &DiagonalSde, f: &TestFunction, x: &[f64], quad: &SingularQuadrature) -> Result<OperatorValue> {
    quad.validate()?;
    check_point(sys.dim(), f, x)?;
    let a = sys.field.diag_at(x);
    Ok(half_sum((0..sys.dim()).map(|j| (1.0, second_difference_integral(f, x, j, a[j], sys.alphas.index(j), quad).total()))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualFormValue {
    pub value: f64,
    pub error_bound: f64,
    /// The equivalent form used as a consistency check.
    pub alternate_value: f64,
    pub alternate_error_bound: f64,
    pub forms_agree: bool,
}

impl DualFormValue {
    fn new(primary: OperatorValue, alternate: OperatorValue) -> Self {
        let slack = 1e-13 * (primary.value.abs() + alternate.value.abs()) + 1e-15;
        Self {
            value: primary.value,
            error_bound: primary.error_bound,
            alternate_value: alternate.value,
            alternate_error_bound: alternate.error_bound,
            forms_agree: (primary.value - alternate.value).abs() <= primary.error_bound + alternate.error_bound + slack,
        }
    }

    pub fn operator_value(&self) -> OperatorValue {
        OperatorValue { value: self.value, error_bound: self.error_bound }
    }
}

/// 𝓛₀f(x) with coefficients frozen at x₀: the substituted form
/// ½ Σ M_j f(x; A_jj(x₀)) checked against the weighted form
/// ½ Σ |A_jj(x₀)|^{α_j} M_j f(x; 1).
pub fn apply_frozen_generator(frozen: &FrozenSpec, f: &TestFunction, x: &[f64], quad: &SingularQuadrature) -> Result<DualFormValue> {
    quad.validate()?;
    let spec = &frozen.alpha_spec;
    check_point(spec.dim(), f, x)?;
    let substituted =
        half_sum((0..spec.dim()).map(|j| (1.0, second_difference_integral(f, x, j, frozen.diag_coeffs[j], spec.index(j), quad).total())));
    let weights = frozen.weights();
    let unit = axis_integrals(spec, f, x, quad)?;
    let weighted = half_sum(weights.iter().copied().zip(unit));
    Ok(DualFormValue::new(substituted, weighted))
}

/// 𝓑f(x) = ½ Σ_j (|A_jj(x)|^{α_j} − |A_jj(x₀)|^{α_j}) M_j f(x; 1), checked
/// against the difference 𝓛f(x) − 𝓛₀f(x).
pub fn apply_perturbation(sys: &DiagonalSde, frozen: &FrozenSpec, f: &TestFunction, x: &[f64], quad: &SingularQuadrature) -> Result<DualFormValue> {
    let unit = axis_integrals(&sys.alphas, f, x, quad)?;
    let direct = perturbation_from_axes(sys, frozen, x, &unit);
    let full = apply_generator(sys, f, x, quad)?;
    let frozen_val = apply_frozen_generator(frozen, f, x, quad)?;
    let diff = OperatorValue { value: full.value - frozen_val.value, error_bound: full.error_bound + frozen_val.error_bound };
    Ok(DualFormValue::new(direct, diff))
}

/// The direct perturbation form from precomputed unit-scale axis integrals.
pub fn perturbation_from_axes(sys: &DiagonalSde, frozen: &FrozenSpec, x: &[f64], unit: &[OperatorValue]) -> OperatorValue {
    let wx = sys.weights_at(x);
    let w0 = frozen.weights();
    half_sum(wx.iter().zip(&w0).map(|(a, b)| a - b).zip(unit.iter().copied()))
}
