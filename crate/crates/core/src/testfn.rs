//! Smooth bounded test functions with the derivative bounds needed by the
//! singular quadrature, and the canonical battery used by experiments.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestTag {
    GaussianBump,
    PolyBump,
    CosineWave,
    Custom,
}

/// Decay information used to bound f far from the evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub enum Decay {
    /// Support inside the ball of `radius` around `center`.
    Compact { center: Vec<f64>, radius: f64 },
    /// |f(y)| ≤ amplitude · exp(−|y − center|²/(2 width²)).
    Gaussian { center: Vec<f64>, width: f64, amplitude: f64 },
    /// f(y) = amplitude · cos(k·y + φ).
    Oscillatory { wavevector: Vec<f64>, amplitude: f64 },
    /// f = mean + a zero-mean trigonometric polynomial of total amplitude
    /// `oscillation` whose lowest frequency along axis j is 2π/period_j.
    Periodic { period: Vec<f64>, mean: f64, oscillation: f64 },
    /// No information beyond the sup norm.
    None,
}

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type AxisSecondFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub tag: TestTag,
    pub dim: usize,
    value: ValueFn,
    gradient: GradFn,
    axis_second: Option<AxisSecondFn>,
    /// Bound on |∂_jj f|.
    pub hessian_sup: f64,
    /// Bound on |∂_j^4 f|.
    pub quartic_sup: f64,
    pub sup_norm: f64,
    pub support_radius: Option<f64>,
    pub decay: Decay,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("tag", &self.tag)
            .field("dim", &self.dim)
            .field("hessian_sup", &self.hessian_sup)
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

impl TestFunction {
    /// A user-supplied function with declared bounds.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        hessian_sup: f64,
        quartic_sup: f64,
        sup_norm: f64,
        decay: Decay,
    ) -> Self {
        let support_radius = match &decay {
            Decay::Compact { radius, .. } => Some(*radius),
            _ => None,
        };
        Self {
            name: name.into(),
            tag: TestTag::Custom,
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            axis_second: None,
            hessian_sup,
            quartic_sup,
            sup_norm,
            support_radius,
            decay,
        }
    }

    pub fn with_axis_second(mut self, f: impl Fn(&[f64], usize) -> f64 + Send + Sync + 'static) -> Self {
        self.axis_second = Some(Arc::new(f));
        self
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    /// ∂_jj f(x) with an error bound: exact when a closed form is attached,
    /// otherwise a central difference of the gradient.
    pub fn axis_second(&self, x: &[f64], j: usize) -> (f64, f64) {
        if let Some(g) = &self.axis_second {
            return (g(x, j), 0.0);
        }
        let delta = 1e-3;
        let mut y = x.to_vec();
        let mut g = vec![0.0; self.dim];
        y[j] = x[j] + delta;
        self.gradient(&y, &mut g);
        let plus = g[j];
        y[j] = x[j] - delta;
        self.gradient(&y, &mut g);
        let minus = g[j];
        let grad_scale = (self.hessian_sup * self.sup_norm).sqrt().max(self.hessian_sup);
        let err = self.quartic_sup * delta * delta / 6.0 + 4.0 * f64::EPSILON * grad_scale / delta;
        ((plus - minus) / (2.0 * delta), err)
    }

    /// Bound on |f(x + s·h·e_j)| over |h| ≥ h_min, with |s| = `scale`.
    pub fn axis_tail_sup(&self, x: &[f64], j: usize, scale: f64, h_min: f64) -> f64 {
        let reach = scale.abs() * h_min;
        match &self.decay {
            Decay::Compact { center, radius } => {
                if reach > (x[j] - center[j]).abs() + radius {
                    0.0
                } else {
                    self.sup_norm
                }
            }
            Decay::Gaussian { center, width, amplitude } => {
                let gap = (reach - (x[j] - center[j]).abs()).max(0.0);
                amplitude * (-gap * gap / (2.0 * width * width)).exp()
            }
            Decay::Oscillatory { .. } | Decay::Periodic { .. } | Decay::None => self.sup_norm,
        }
    }

    /// Maximum |central difference − gradient| over the given points.
    pub fn gradient_consistency(&self, points: &[Vec<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        let mut g = vec![0.0; self.dim];
        for p in points {
            self.gradient(p, &mut g);
            for j in 0..self.dim {
                let h = 1e-5;
                let mut a = p.clone();
                let mut b = p.clone();
                a[j] += h;
                b[j] -= h;
                let fd = (self.value(&a) - self.value(&b)) / (2.0 * h);
                worst = worst.max((fd - g[j]).abs());
            }
        }
        worst
    }

    /// x ↦ f(x − y).
    pub fn translated(&self, y: &[f64]) -> Self {
        let shift = y.to_vec();
        let v = self.value.clone();
        let g = self.gradient.clone();
        let s1 = shift.clone();
        let s2 = shift.clone();
        let s3 = shift.clone();
        let mut out = self.clone();
        out.name = format!("{}_shifted", self.name);
        out.value = Arc::new(move |x: &[f64]| {
            let z: Vec<f64> = x.iter().zip(&s1).map(|(a, b)| a - b).collect();
            v(&z)
        });
        out.gradient = Arc::new(move |x: &[f64], o: &mut [f64]| {
            let z: Vec<f64> = x.iter().zip(&s2).map(|(a, b)| a - b).collect();
            g(&z, o)
        });
        out.axis_second = self.axis_second.clone().map(|h| {
            Arc::new(move |x: &[f64], j: usize| {
                let z: Vec<f64> = x.iter().zip(&s3).map(|(a, b)| a - b).collect();
                h(&z, j)
            }) as AxisSecondFn
        });
        out.decay = match &self.decay {
            Decay::Compact { center, radius } => {
                Decay::Compact { center: center.iter().zip(&shift).map(|(c, s)| c + s).collect(), radius: *radius }
            }
            Decay::Gaussian { center, width, amplitude } => Decay::Gaussian {
                center: center.iter().zip(&shift).map(|(c, s)| c + s).collect(),
                width: *width,
                amplitude: *amplitude,
            },
            other => other.clone(),
        };
        out
    }

    /// Pointwise sum f + g with summed bounds.
    pub fn sum(&self, other: &TestFunction) -> Self {
        let (v1, v2) = (self.value.clone(), other.value.clone());
        let (g1, g2) = (self.gradient.clone(), other.gradient.clone());
        let d = self.dim;
        let mut out = Self::custom(
            format!("{}+{}", self.name, other.name),
            d,
            move |x| v1(x) + v2(x),
            move |x, o| {
                let mut tmp = vec![0.0; d];
                g1(x, o);
                g2(x, &mut tmp);
                for (a, b) in o.iter_mut().zip(&tmp) {
                    *a += b;
                }
            },
            self.hessian_sup + other.hessian_sup,
            self.quartic_sup + other.quartic_sup,
            self.sup_norm + other.sup_norm,
            Decay::None,
        );
        if let (Some(a), Some(b)) = (self.axis_second.clone(), other.axis_second.clone()) {
            out.axis_second = Some(Arc::new(move |x, j| a(x, j) + b(x, j)));
        }
        out
    }
}

/// exp(−|x − c|²/(2w²)).
pub fn gaussian_bump(center: Vec<f64>, width: f64) -> TestFunction {
    let d = center.len();
    let w2 = width * width;
    let (c1, c2, c3) = (center.clone(), center.clone(), center.clone());
    let value = move |x: &[f64]| {
        let r2: f64 = x.iter().zip(&c1).map(|(a, b)| (a - b).powi(2)).sum();
        (-r2 / (2.0 * w2)).exp()
    };
    let gradient = move |x: &[f64], o: &mut [f64]| {
        let r2: f64 = x.iter().zip(&c2).map(|(a, b)| (a - b).powi(2)).sum();
        let e = (-r2 / (2.0 * w2)).exp();
        for j in 0..o.len() {
            o[j] = -(x[j] - c2[j]) / w2 * e;
        }
    };
    let mut f = TestFunction::custom(
        format!("gaussian_w{width}"),
        d,
        value,
        gradient,
        1.0 / w2,
        3.0 / (w2 * w2),
        1.0,
        Decay::Gaussian { center, width, amplitude: 1.0 },
    )
    .with_axis_second(move |x, j| {
        let r2: f64 = x.iter().zip(&c3).map(|(a, b)| (a - b).powi(2)).sum();
        let e = (-r2 / (2.0 * w2)).exp();
        let u = x[j] - c3[j];
        (u * u / w2 - 1.0) / w2 * e
    });
    f.tag = TestTag::GaussianBump;
    f
}

/// (1 − |x − c|²/R²)^4 on the ball of radius R, zero outside.
pub fn poly_bump(center: Vec<f64>, radius: f64) -> TestFunction {
    let d = center.len();
    let r2 = radius * radius;
    let (c1, c2, c3) = (center.clone(), center.clone(), center.clone());
    let value = move |x: &[f64]| {
        let s: f64 = x.iter().zip(&c1).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / r2;
        if s < 1.0 {
            (1.0 - s).powi(4)
        } else {
            0.0
        }
    };
    let gradient = move |x: &[f64], o: &mut [f64]| {
        let s: f64 = x.iter().zip(&c2).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / r2;
        for j in 0..o.len() {
            o[j] = if s < 1.0 { -8.0 * (1.0 - s).powi(3) * (x[j] - c2[j]) / r2 } else { 0.0 };
        }
    };
    let mut f = TestFunction::custom(
        format!("poly_r{radius}"),
        d,
        value,
        gradient,
        8.0 / r2,
        384.0 / (r2 * r2),
        1.0,
        Decay::Compact { center, radius },
    )
    .with_axis_second(move |x, j| {
        let s: f64 = x.iter().zip(&c3).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / r2;
        if s >= 1.0 {
            return 0.0;
        }
        let u = x[j] - c3[j];
        -8.0 * (1.0 - s).powi(3) / r2 + 48.0 * (1.0 - s).powi(2) * u * u / (r2 * r2)
    });
    f.tag = TestTag::PolyBump;
    f
}

/// cos(k·x + φ).
pub fn cosine_wave(wavevector: Vec<f64>, phase: f64) -> TestFunction {
    let d = wavevector.len();
    let (k1, k2, k3) = (wavevector.clone(), wavevector.clone(), wavevector.clone());
    let kmax2 = wavevector.iter().fold(0.0f64, |m, k| m.max(k * k));
    let mut f = TestFunction::custom(
        "cosine_wave",
        d,
        move |x| (x.iter().zip(&k1).map(|(a, b)| a * b).sum::<f64>() + phase).cos(),
        move |x, o| {
            let s = (x.iter().zip(&k2).map(|(a, b)| a * b).sum::<f64>() + phase).sin();
            for j in 0..o.len() {
                o[j] = -k2[j] * s;
            }
        },
        kmax2,
        kmax2 * kmax2,
        1.0,
        Decay::Oscillatory { wavevector, amplitude: 1.0 },
    )
    .with_axis_second(move |x, j| -k3[j] * k3[j] * (x.iter().zip(&k3).map(|(a, b)| a * b).sum::<f64>() + phase).cos());
    f.tag = TestTag::CosineWave;
    f
}

/// f ≡ c.
pub fn constant(dim: usize, c: f64) -> TestFunction {
    TestFunction::custom("constant", dim, move |_| c, |_, o| o.fill(0.0), 0.0, 0.0, c.abs(), Decay::None)
        .with_axis_second(|_, _| 0.0)
}

/// Gaussian bumps at three scales, a polynomial bump and a cosine wave, all
/// centred at `center`. The cosine wave has period `period` along each axis.
pub fn bundled_battery(center: &[f64], period: f64) -> Vec<TestFunction> {
    let d = center.len();
    let k = 2.0 * std::f64::consts::PI / period;
    let phase = -k * center.iter().sum::<f64>();
    vec![
        gaussian_bump(center.to_vec(), 0.5),
        gaussian_bump(center.to_vec(), 1.0),
        gaussian_bump(center.to_vec(), 2.0),
        poly_bump(center.to_vec(), 2.0),
        cosine_wave(vec![k; d], phase),
    ]
}

/// The compactly supported or rapidly decaying members of the battery.
pub fn bump_battery(center: &[f64]) -> Vec<TestFunction> {
    let mut b = bundled_battery(center, 1.0);
    b.truncate(4);
    b
}
