//! Quadrature building blocks: Gauss–Legendre rules, a globally adaptive
//! Gauss–Kronrod integrator, and the cosine Lévy integral.

use num_complex::Complex64;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

/// Values that can be integrated: reals and complex numbers.
pub trait Quadrand: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(self) -> f64;
}

impl Quadrand for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Quadrand for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Integral estimate with an error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Integral<T> {
    pub value: T,
    pub error: f64,
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp;
        loop {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Cached 16-point Gauss–Legendre rule.
pub fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Cached Gauss–Legendre rule of arbitrary order (orders up to 64 are cached).
pub fn gl_cached(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static RULES: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=64).map(|k| gauss_legendre(k.max(1))).collect());
    &rules[n.clamp(1, 64)]
}

/// Fixed Gauss–Legendre rule on [a, b].
pub fn gl_integrate<T: Quadrand>(f: &mut impl FnMut(f64) -> T, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> T {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = T::default();
    for (x, w) in rule.0.iter().zip(&rule.1) {
        acc = acc + f(c + h * x) * (w * h);
    }
    acc
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod panel with a QUADPACK-style error estimate.
pub fn gk15<T: Quadrand>(f: &mut impl FnMut(f64) -> T, a: f64, b: f64) -> Integral<T> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut vals = [(T::default(), T::default()); 7];
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        vals[j] = (f1, f2);
        kron = kron + (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kron * 0.5;
    let mut asc = (fc - mean).magnitude() * WGK[7];
    for (j, (f1, f2)) in vals.iter().enumerate() {
        asc += WGK[j] * ((*f1 - mean).magnitude() + (*f2 - mean).magnitude());
    }
    let asc = asc * h.abs();
    let mut err = ((kron - gauss) * h).magnitude();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    Integral { value: kron * h, error: err.max(50.0 * f64::EPSILON * (kron * h).magnitude()) }
}

struct Panel<T> {
    a: f64,
    b: f64,
    est: Integral<T>,
    depth: u32,
}

/// Globally adaptive Gauss–Kronrod integration over consecutive breakpoints.
///
/// Panels are bisected in order of decreasing error until the total error is
/// below `max(abs_tol, rel_tol * |value|)` or `max_panels` is reached.
pub fn adaptive<T: Quadrand>(
    mut f: impl FnMut(f64) -> T,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Integral<T> {
    assert!(breakpoints.len() >= 2);
    let mut panels: Vec<Panel<T>> = Vec::with_capacity(breakpoints.len() * 2);
    let mut heap = BinaryHeap::new();
    let mut total = T::default();
    let mut total_err = 0.0;
    for w in breakpoints.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let est = gk15(&mut f, w[0], w[1]);
        total = total + est.value;
        total_err += est.error;
        heap.push((est.error.to_bits(), panels.len()));
        panels.push(Panel { a: w[0], b: w[1], est, depth: 0 });
    }
    while total_err > abs_tol.max(rel_tol * total.magnitude()) && panels.len() < max_panels {
        let Some((_, idx)) = heap.pop() else { break };
        let (a, b, depth) = (panels[idx].a, panels[idx].b, panels[idx].depth);
        if depth > 60 {
            continue;
        }
        let m = 0.5 * (a + b);
        let left = gk15(&mut f, a, m);
        let right = gk15(&mut f, m, b);
        let old = panels[idx].est;
        total = total - old.value + left.value + right.value;
        total_err += left.error + right.error - old.error;
        panels[idx] = Panel { a, b: m, est: left, depth: depth + 1 };
        heap.push((left.error.to_bits(), idx));
        heap.push((right.error.to_bits(), panels.len()));
        panels.push(Panel { a: m, b, est: right, depth: depth + 1 });
    }
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = T::default();
    let mut error = 0.0;
    for p in &panels {
        value = value + p.est.value;
        error += p.est.error;
    }
    Integral { value, error }
}

/// Half-line cosine Lévy integral ∫_0^∞ (1 − cos(ξu)) u^{−1−α} du, evaluated
/// numerically in the original variable u.
///
/// On [0, 1/|ξ|] the Taylor series of the cosine is integrated termwise, the
/// oscillatory range up to 2000 periods is integrated adaptively with a
/// breakpoint at every half period, and the remainder uses the exact power
/// integral minus an asymptotic expansion of the cosine tail.
pub fn one_minus_cos_integral(alpha: f64, xi: f64) -> Integral<f64> {
    let s = xi.abs();
    if s == 0.0 {
        return Integral { value: 0.0, error: 0.0 };
    }
    let u1 = 1.0 / s;
    let mut head = 0.0;
    let mut term_fact = 1.0;
    for k in 1..40 {
        let k2 = 2 * k;
        term_fact *= ((k2 - 1) * k2) as f64;
        let term = s.powi(k2 as i32) * u1.powf(k2 as f64 - alpha) / (term_fact * (k2 as f64 - alpha));
        head += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 * head.abs() {
            break;
        }
    }
    let periods = 2000usize;
    let upper = 2.0 * PI * periods as f64 / s;
    let mut bps = Vec::with_capacity(2 * periods + 2);
    bps.push(u1);
    for k in 1..=(2 * periods) {
        let b = k as f64 * PI / s;
        if b > u1 {
            bps.push(b);
        }
    }
    let mid = adaptive(
        |u: f64| (2.0 * (0.5 * s * u).sin().powi(2)) * u.powf(-1.0 - alpha),
        &bps,
        0.0,
        1e-14,
        40 * bps.len(),
    );
    let sigma = 1.0 + alpha;
    let x = s * upper;
    let cos_tail = sigma * x.powf(-sigma - 1.0) - sigma * (sigma + 1.0) * (sigma + 2.0) * x.powf(-sigma - 3.0)
        + sigma * (sigma + 1.0) * (sigma + 2.0) * (sigma + 3.0) * (sigma + 4.0) * x.powf(-sigma - 5.0);
    let tail = upper.powf(-alpha) / alpha - s.powf(alpha) * cos_tail;
    let remainder = s.powf(alpha) * 5040.0 * x.powf(-sigma - 7.0) * (sigma + 6.0).powi(6);
    Integral { value: head + mid.value + tail, error: mid.error + remainder }
}
