//! Diagonal coefficient fields x ↦ diag(A_11(x), …, A_dd(x)).

use crate::error::{Error, Result};
use crate::levy::{AlphaSpec, FrozenSpec};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

type EvalFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Number of deterministic probe points used to check declared bounds.
const PROBE_POINTS: usize = 512;
const PROBE_BOX: f64 = 8.0;

#[derive(Clone)]
pub struct DiagonalCoefficientField {
    dim: usize,
    eval: EvalFn,
    pub sup_bound: f64,
    pub nondeg_bound: f64,
    pub description: String,
}

impl fmt::Debug for DiagonalCoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiagonalCoefficientField")
            .field("dim", &self.dim)
            .field("sup_bound", &self.sup_bound)
            .field("nondeg_bound", &self.nondeg_bound)
            .field("description", &self.description)
            .finish()
    }
}

impl DiagonalCoefficientField {
    /// Builds a field and checks nondeg_bound ≤ |A_jj(x)| ≤ sup_bound on a
    /// deterministic probe set in [−8, 8]^d.
    pub fn new(
        dim: usize,
        sup_bound: f64,
        nondeg_bound: f64,
        description: impl Into<String>,
        eval: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("field dimension must be positive".into()));
        }
        if !(nondeg_bound > 0.0) || !(sup_bound >= nondeg_bound) || !sup_bound.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need 0 < nondeg_bound <= sup_bound < inf, got {nondeg_bound} and {sup_bound}"
            )));
        }
        let field = Self { dim, eval: Arc::new(eval), sup_bound, nondeg_bound, description: description.into() };
        field.check_bounds()?;
        Ok(field)
    }

    /// The degenerate field A ≡ 0. It bypasses the nondegeneracy check and is
    /// meant for trivial path tests only.
    pub fn zero_unchecked(dim: usize) -> Self {
        Self { dim, eval: Arc::new(|_, o: &mut [f64]| o.fill(0.0)), sup_bound: 0.0, nondeg_bound: 0.0, description: "zero".into() }
    }

    pub fn constant(diag: Vec<f64>) -> Result<Self> {
        let lo = diag.iter().fold(f64::INFINITY, |m, a| m.min(a.abs()));
        let hi = diag.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let desc = format!("constant {diag:?}");
        let d = diag.clone();
        Self::new(diag.len(), hi, lo, desc, move |_, o| o.copy_from_slice(&d))
    }

    fn check_bounds(&self) -> Result<()> {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_f1e1d);
        let mut x = vec![0.0; self.dim];
        let mut a = vec![0.0; self.dim];
        for k in 0..=PROBE_POINTS {
            if k > 0 {
                for v in x.iter_mut() {
                    *v = r.random_range(-PROBE_BOX..PROBE_BOX);
                }
            }
            self.eval(&x, &mut a);
            for (j, v) in a.iter().enumerate() {
                let m = v.abs();
                let slack = 1e-12 * self.sup_bound;
                if !(m + slack >= self.nondeg_bound && m <= self.sup_bound + slack) {
                    return Err(Error::FieldBounds {
                        point: x.clone(),
                        detail: format!("|A_{j}{j}| = {m} outside [{}, {}]", self.nondeg_bound, self.sup_bound),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    pub fn diag_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval(x, &mut out);
        out
    }
}

/// Serializable description of the bundled field families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// A ≡ diag(diag).
    Constant { diag: Vec<f64> },
    /// A_jj(x) = base_j (1 + amplitude sin(wavenumber Σ_i x_i + j)), amplitude < 1.
    Sinusoidal { base: Vec<f64>, amplitude: f64, wavenumber: f64 },
    /// |A_jj(x)|^{α_j} = weights_j + eta sin(wavenumber (x_j − anchor_j)), so the
    /// weight oscillation about the anchor is exactly eta.
    WeightOscillation { weights: Vec<f64>, eta: f64, wavenumber: f64, anchor: Vec<f64> },
}

impl FieldSpec {
    pub fn dim(&self) -> usize {
        match self {
            FieldSpec::Constant { diag } => diag.len(),
            FieldSpec::Sinusoidal { base, .. } => base.len(),
            FieldSpec::WeightOscillation { weights, .. } => weights.len(),
        }
    }

    pub fn build(&self, alphas: &AlphaSpec) -> Result<DiagonalCoefficientField> {
        let d = alphas.dim();
        if self.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.dim() });
        }
        match self.clone() {
            FieldSpec::Constant { diag } => DiagonalCoefficientField::constant(diag),
            FieldSpec::Sinusoidal { base, amplitude, wavenumber } => {
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(Error::InvalidArgument(format!("amplitude {amplitude} must lie in [0, 1)")));
                }
                let lo = base.iter().fold(f64::INFINITY, |m, b| m.min(b.abs())) * (1.0 - amplitude);
                let hi = base.iter().fold(0.0f64, |m, b| m.max(b.abs())) * (1.0 + amplitude);
                let desc = format!("sinusoidal base={base:?} amplitude={amplitude} k={wavenumber}");
                DiagonalCoefficientField::new(d, hi, lo, desc, move |x, o| {
                    let s: f64 = x.iter().sum();
                    for (j, v) in o.iter_mut().enumerate() {
                        *v = base[j] * (1.0 + amplitude * (wavenumber * s + j as f64).sin());
                    }
                })
            }
            FieldSpec::WeightOscillation { weights, eta, wavenumber, anchor } => {
                if anchor.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: anchor.len() });
                }
                if !(eta >= 0.0) || weights.iter().any(|&w| !(w > eta)) {
                    return Err(Error::InvalidArgument(format!("need 0 <= eta < weights, got eta={eta}, weights={weights:?}")));
                }
                let inv: Vec<f64> = alphas.values().iter().map(|a| 1.0 / a).collect();
                let lo = (0..d).map(|j| (weights[j] - eta).powf(inv[j])).fold(f64::INFINITY, f64::min);
                let hi = (0..d).map(|j| (weights[j] + eta).powf(inv[j])).fold(0.0, f64::max);
                let desc = format!("weight oscillation weights={weights:?} eta={eta} k={wavenumber}");
                DiagonalCoefficientField::new(d, hi, lo, desc, move |x, o| {
                    for (j, v) in o.iter_mut().enumerate() {
                        *v = (weights[j] + eta * (wavenumber * (x[j] - anchor[j])).sin()).powf(inv[j]);
                    }
                })
            }
        }
    }
}

/// A diagonal system dX^j = A_jj(X_{t−}) dZ^j with Z the anisotropic driver.
#[derive(Debug, Clone)]
pub struct DiagonalSde {
    pub alphas: AlphaSpec,
    pub field: DiagonalCoefficientField,
}

impl DiagonalSde {
    pub fn new(alphas: AlphaSpec, field: DiagonalCoefficientField) -> Result<Self> {
        if alphas.dim() != field.dim() {
            return Err(Error::DimensionMismatch { expected: alphas.dim(), got: field.dim() });
        }
        Ok(Self { alphas, field })
    }

    pub fn from_spec(alphas: AlphaSpec, spec: &FieldSpec) -> Result<Self> {
        let field = spec.build(&alphas)?;
        Self::new(alphas, field)
    }

    pub fn dim(&self) -> usize {
        self.alphas.dim()
    }

    /// |A_jj(x)|^{α_j}.
    pub fn weights_at(&self, x: &[f64]) -> Vec<f64> {
        self.field.diag_at(x).iter().enumerate().map(|(j, a)| a.abs().powf(self.alphas.alpha(j))).collect()
    }

    /// Coefficients frozen at x0.
    pub fn frozen_at(&self, x0: &[f64]) -> Result<FrozenSpec> {
        FrozenSpec::new(self.alphas.clone(), self.field.diag_at(x0), x0.to_vec())
    }
}
