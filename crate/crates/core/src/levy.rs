//! The anisotropic driver Z and the frozen process U_t = U_0 + A(x₀)Z_t.

use crate::error::{Error, Result};
use crate::grid::{tensor_product, Axis, AxisSpec, GridDensity, MAX_DENSE_CELLS};
use crate::quad::{gl16, gl_cached};
use crate::rng::RngHandle;
use crate::stable::{density_1d, density_at_zero, draw_increment, StableIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Stability indices α_1, …, α_d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AlphaSpec {
    alphas: Vec<StableIndex>,
}

impl AlphaSpec {
    pub fn new(alphas: &[f64]) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidArgument("alpha spec needs d >= 1".into()));
        }
        let alphas = alphas.iter().map(|&a| StableIndex::new(a)).collect::<Result<Vec<_>>>()?;
        Ok(Self { alphas })
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    pub fn index(&self, j: usize) -> StableIndex {
        self.alphas[j]
    }

    pub fn alpha(&self, j: usize) -> f64 {
        self.alphas[j].value()
    }

    pub fn values(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| a.value()).collect()
    }

    pub fn alpha_max(&self) -> f64 {
        self.values().into_iter().fold(0.0, f64::max)
    }

    pub fn alpha_min(&self) -> f64 {
        self.values().into_iter().fold(2.0, f64::min)
    }

    pub fn anisotropy(&self) -> AnisotropyExponent {
        AnisotropyExponent { beta: self.alphas.iter().map(|a| 1.0 / a.value()).sum() }
    }

    /// Whether any index is close to an excluded endpoint.
    pub fn delicate(&self) -> bool {
        self.alphas.iter().any(|a| a.is_delicate())
    }
}

impl TryFrom<Vec<f64>> for AlphaSpec {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(&v)
    }
}

impl From<AlphaSpec> for Vec<f64> {
    fn from(a: AlphaSpec) -> Vec<f64> {
        a.values()
    }
}

/// β = Σ_j 1/α_j.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnisotropyExponent {
    pub beta: f64,
}

/// Ξ(t) = diag(t^{−1/α_1}, …, t^{−1/α_d}).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    pub t: f64,
    pub diag: Vec<f64>,
}

impl ScalingMatrix {
    pub fn new(spec: &AlphaSpec, t: f64) -> Self {
        Self { t, diag: spec.values().iter().map(|a| t.powf(-1.0 / a)).collect() }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.diag).map(|(x, s)| x * s).collect()
    }

    pub fn det(&self) -> f64 {
        self.diag.iter().product()
    }
}

/// Coefficients frozen at an anchor point together with the process origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenSpec {
    pub alpha_spec: AlphaSpec,
    pub diag_coeffs: Vec<f64>,
    pub origin: Vec<f64>,
}

impl FrozenSpec {
    pub fn new(alpha_spec: AlphaSpec, diag_coeffs: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        let d = alpha_spec.dim();
        for v in [&diag_coeffs, &origin] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
        }
        if let Some(c) = diag_coeffs.iter().find(|c| !(c.abs() > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("frozen coefficient {c} violates non-degeneracy")));
        }
        Ok(Self { alpha_spec, diag_coeffs, origin })
    }

    /// Unit coefficients at the origin.
    pub fn standard(alpha_spec: AlphaSpec) -> Self {
        let d = alpha_spec.dim();
        Self { alpha_spec, diag_coeffs: vec![1.0; d], origin: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.alpha_spec.dim()
    }

    /// Weights |A_jj|^{α_j}.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.diag_coeffs[j].abs().powf(self.alpha_spec.alpha(j))).collect()
    }

    pub fn abs_det(&self) -> f64 {
        self.diag_coeffs.iter().map(|c| c.abs()).product()
    }

    /// sup_x p_t(x) = p_t(U_0).
    pub fn peak_density(&self, t: f64) -> f64 {
        (0..self.dim())
            .map(|j| density_at_zero(self.alpha_spec.index(j), t) / self.diag_coeffs[j].abs())
            .product()
    }
}

/// Fills `out` with one increment of Z over `dt`.
pub fn draw_driver_increment<R: Rng + ?Sized>(spec: &AlphaSpec, dt: f64, rng: &mut R, out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = draw_increment(spec.alpha(j), dt, rng);
    }
}

pub fn sample_driver_increment(spec: &AlphaSpec, dt: f64, rng: RngHandle) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
    }
    let mut out = vec![0.0; spec.dim()];
    draw_driver_increment(spec, dt, &mut rng.generator(), &mut out);
    Ok(out)
}

fn check_axes(d: usize, axes: &[AxisSpec]) -> Result<()> {
    if axes.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: axes.len() });
    }
    Ok(())
}

/// q_t(x) = Π_j q^j_t(x_j) on a tensor grid.
pub fn product_density(spec: &AlphaSpec, t: f64, axes: &[AxisSpec]) -> Result<GridDensity> {
    frozen_density(&FrozenSpec::standard(spec.clone()), t, axes)
}

/// p_t(x) = q_t(A^{−1}(x − U_0)) / |det A| on a tensor grid centred at U_0.
/// Axis specs are given in x units.
pub fn frozen_density(frozen: &FrozenSpec, t: f64, axes: &[AxisSpec]) -> Result<GridDensity> {
    check_axes(frozen.dim(), axes)?;
    let mut built: Vec<Axis> = Vec::with_capacity(axes.len());
    let mut factors = Vec::with_capacity(axes.len());
    for (j, spec) in axes.iter().enumerate() {
        let a = frozen.diag_coeffs[j].abs();
        let mut z_spec = *spec;
        z_spec.half_width /= a;
        z_spec.spacing /= a;
        z_spec.mass_target = spec.mass_target / frozen.dim() as f64;
        let g = density_1d(frozen.alpha_spec.index(j), t, &z_spec)?;
        let axis = g.axes[0].mapped(frozen.origin[j], a);
        factors.push(g.values.iter().map(|v| v / a).collect::<Vec<_>>());
        built.push(axis);
    }
    let cells = built.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len())).unwrap_or(usize::MAX);
    if frozen.dim() > 3 || cells > MAX_DENSE_CELLS {
        return Err(Error::MemoryGuard { cells, limit: MAX_DENSE_CELLS });
    }
    tensor_product(built, &factors, MAX_DENSE_CELLS)
}

/// Ψ(ξ) = Σ_j |A_jj ξ_j|^{α_j}.
pub fn frozen_char_exponent(frozen: &FrozenSpec, xi: &[f64]) -> f64 {
    xi.iter()
        .enumerate()
        .map(|(j, x)| (frozen.diag_coeffs[j] * x).abs().powf(frozen.alpha_spec.alpha(j)))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransienceLevel {
    #[serde(rename = "L")]
    pub level: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransienceReport {
    pub levels: Vec<TransienceLevel>,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Directions and weights of a product rule on the unit sphere, restricted to
/// the positive orthant and multiplied by 2^d (Ψ depends on |ξ_j| only).
fn sphere_rule(d: usize, n_angle: usize) -> Vec<(Vec<f64>, f64)> {
    if d == 1 {
        return vec![(vec![1.0], 2.0)];
    }
    let (x, w) = gl_cached(n_angle);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let phis: Vec<(f64, f64)> = x.iter().zip(w).map(|(x, w)| (half_pi * 0.5 * (x + 1.0), half_pi * 0.5 * w)).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d - 1];
    loop {
        let mut dir = vec![0.0; d];
        let mut weight = 2f64.powi(d as i32);
        let mut sin_prod = 1.0;
        for (i, &k) in idx.iter().enumerate() {
            let (phi, wphi) = phis[k];
            dir[i] = sin_prod * phi.cos();
            weight *= wphi * phi.sin().powi((d - 2 - i) as i32);
            sin_prod *= phi.sin();
        }
        dir[d - 1] = sin_prod;
        out.push((dir, weight));
        let mut pos = 0;
        loop {
            if pos == d - 1 {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] < phis.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// ∫_{B_r \ B_{r 2^{−L}}} 1/Ψ(ξ) dξ for L = 1..=levels, with a convergence
/// verdict (last two levels within 1%) or a divergence diagnostic.
pub fn transience_certificate(frozen: &FrozenSpec, r: f64, levels: u32) -> Result<TransienceReport> {
    if !(r > 0.0) || levels < 2 {
        return Err(Error::InvalidArgument("transience needs r > 0 and at least two levels".into()));
    }
    let d = frozen.dim();
    let dirs = sphere_rule(d, 24);
    let (gx, gw) = gl16();
    let mut shells = Vec::with_capacity(levels as usize);
    for l in 1..=levels {
        let outer = r * 2f64.powi(-(l as i32) + 1);
        let inner = 0.5 * outer;
        let (c, h) = (0.5 * (outer + inner), 0.5 * (outer - inner));
        let mut s = 0.0;
        for (dir, w) in &dirs {
            let mut radial = 0.0;
            for (x, wx) in gx.iter().zip(gw) {
                let rho = c + h * x;
                let xi: Vec<f64> = dir.iter().map(|u| u * rho).collect();
                radial += wx * h * rho.powi(d as i32 - 1) / frozen_char_exponent(frozen, &xi);
            }
            s += w * radial;
        }
        shells.push(s);
    }
    let mut total = 0.0;
    let levels_out: Vec<TransienceLevel> = shells
        .iter()
        .enumerate()
        .map(|(i, s)| {
            total += s;
            TransienceLevel { level: i as u32 + 1, value: total }
        })
        .collect();
    let n = shells.len();
    let last = levels_out[n - 1].value;
    let converged = shells[n - 1].abs() < 0.01 * last.abs();
    let ratio = shells[n - 1] / shells[n - 2];
    let diagnostic = if converged {
        None
    } else if ratio >= 1.0 {
        Some(format!(
            "shell increments grow by a factor {ratio:.4} per level; the integral of 1/Psi diverges at the origin (recurrent regime)"
        ))
    } else {
        Some(format!("increments shrink by {ratio:.4} per level but have not reached 1%; add levels"))
    };
    Ok(TransienceReport { levels: levels_out, converged, diagnostic })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_rule_integrates_constant() {
        for d in 2..=4 {
            let area: f64 = sphere_rule(d, 12).iter().map(|(_, w)| w).sum();
            let exact = match d {
                2 => 2.0 * std::f64::consts::PI,
                3 => 4.0 * std::f64::consts::PI,
                _ => 2.0 * std::f64::consts::PI.powi(2),
            };
            assert!((area - exact).abs() < 1e-12, "d={d}: {area}");
        }
    }

    #[test]
    fn char_exponent_hand_value() {
        let f = FrozenSpec::new(AlphaSpec::new(&[0.5, 1.0, 1.5]).unwrap(), vec![1.0, 2.0, 3.0], vec![0.0; 3]).unwrap();
        let v = frozen_char_exponent(&f, &[1.0, 1.0, 1.0]);
        assert!((v - (3.0 + 3f64.powf(1.5))).abs() < 1e-14);
        assert_eq!(frozen_char_exponent(&f, &[0.0; 3]), 0.0);
    }

    #[test]
    fn scaling_matrix_identity_and_det() {
        let s = AlphaSpec::new(&[0.7, 1.6]).unwrap();
        assert_eq!(ScalingMatrix::new(&s, 1.0).diag, vec![1.0, 1.0]);
        let m = ScalingMatrix::new(&s, 3.0);
        assert!((m.det() - 3f64.powf(-s.anisotropy().beta)).abs() < 1e-14);
    }

    #[test]
    fn frozen_spec_rejects_degenerate_coefficients() {
        let s = AlphaSpec::new(&[1.0, 1.0]).unwrap();
        assert!(FrozenSpec::new(s.clone(), vec![1.0, 0.0], vec![0.0; 2]).is_err());
        assert!(FrozenSpec::new(s, vec![1.0], vec![0.0; 2]).is_err());
    }
}
