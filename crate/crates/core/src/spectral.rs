//! Fourier methods on periodic grids for the frozen process: the semigroup
//! P_t, resolvents R_λ and R₀, the multiplier symbol, and the locality
//! constants a, η, η₀ with the perturbation norm check.

use crate::error::{Error, Result};
use crate::field::DiagonalSde;
use crate::grid::{fmt_f64, MAX_DENSE_CELLS};
use crate::levy::FrozenSpec;
use crate::nonlocal::{second_difference_integral, SingularQuadrature};
use crate::quad::{gl_cached, one_minus_cos_integral, Integral};
use crate::stable::{density_at_zero, normalization_constant, stable_pdf, tail_probability, StableIndex};
use crate::testfn::{Decay, TestFunction};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

/// Tensor grid with nodes center_j + (k − n_j/2) h_j, k = 0..n_j, periodic
/// with period n_j h_j.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub center: Vec<f64>,
}

impl PeriodicGrid {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        let d = shape.len();
        if d == 0 || spacing.len() != d || center.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: spacing.len().min(center.len()) });
        }
        if shape.iter().any(|&n| n < 2 || n % 2 == 1) {
            return Err(Error::InvalidArgument(format!("periodic grid sizes must be even, got {shape:?}")));
        }
        if spacing.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidArgument(format!("spacings must be positive, got {spacing:?}")));
        }
        let cells = shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).unwrap_or(usize::MAX);
        if cells > MAX_DENSE_CELLS {
            return Err(Error::MemoryGuard { cells, limit: MAX_DENSE_CELLS });
        }
        Ok(Self { shape, spacing, center })
    }

    pub fn cube(d: usize, n: usize, h: f64) -> Result<Self> {
        Self::new(vec![n; d], vec![h; d], vec![0.0; d])
    }

    pub fn centered_at(mut self, center: &[f64]) -> Self {
        self.center = center.to_vec();
        self
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, j: usize, k: usize) -> f64 {
        self.center[j] + (k as f64 - (self.shape[j] / 2) as f64) * self.spacing[j]
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            idx[j] = flat % self.shape[j];
            flat /= self.shape[j];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().enumerate().map(|(j, &k)| self.coord(j, k)).collect()
    }

    pub fn period(&self, j: usize) -> f64 {
        self.shape[j] as f64 * self.spacing[j]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.period(j)).product()
    }

    /// Angular frequency of DFT index k on axis j; the Nyquist index maps to −π/h.
    pub fn frequency(&self, j: usize, k: usize) -> f64 {
        let n = self.shape[j];
        let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        2.0 * PI * kk / self.period(j)
    }

    pub fn frequencies(&self, j: usize) -> Vec<f64> {
        (0..self.shape[j]).map(|k| self.frequency(j, k)).collect()
    }

    /// Nodes at distance ≥ margin from the box faces.
    pub fn is_interior(&self, flat: usize, margin: f64) -> bool {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .all(|(j, &k)| (self.coord(j, k) - self.center[j]).abs() <= 0.5 * self.period(j) - margin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: PeriodicGrid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn sample(grid: &PeriodicGrid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.point(i))).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn from_test_function(grid: &PeriodicGrid, f: &TestFunction) -> Result<Self> {
        if f.dim != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), got: f.dim });
        }
        Ok(Self::sample(grid, |x| f.value(x)))
    }

    pub fn constant(grid: &PeriodicGrid, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L^p norm (Σ |v|^p h^d)^{1/p}; p = ∞ gives the sup.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup();
        }
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        GridFunction { grid: self.grid.clone(), values }
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Half-widths R_j of the box holding all values above rel·sup, and the
    /// largest |value| outside that box.
    pub fn support_box(&self, rel: f64) -> (Vec<f64>, f64) {
        let g = &self.grid;
        let cut = rel * self.sup();
        let mut r = vec![0.0f64; g.dim()];
        for (i, v) in self.values.iter().enumerate() {
            if v.abs() > cut {
                for (j, &k) in g.multi_index(i).iter().enumerate() {
                    r[j] = r[j].max((g.coord(j, k) - g.center[j]).abs());
                }
            }
        }
        let outside = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                g.multi_index(*i).iter().enumerate().any(|(j, &k)| (g.coord(j, k) - g.center[j]).abs() > r[j])
            })
            .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        (r, outside)
    }

    pub fn spectrum(&self) -> Spectrum {
        let mut coeffs: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut coeffs, &self.grid.shape, false);
        Spectrum { grid: self.grid.clone(), coeffs }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.grid.dim();
        let cols: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
        writeln!(out, "{},value", cols.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let p: Vec<String> = self.grid.point(i).iter().map(|&x| fmt_f64(x)).collect();
            writeln!(out, "{},{}", p.join(","), fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        Ok(())
    }

    /// Largest centred second difference along any axis divided by h², at
    /// spacing h and 2h.
    pub fn second_difference_sup(&self) -> (f64, f64) {
        let g = &self.grid;
        let mut fine: f64 = 0.0;
        let mut coarse: f64 = 0.0;
        for i in 0..g.len() {
            let idx = g.multi_index(i);
            for j in 0..g.dim() {
                let n = g.shape[j];
                let at = |off: isize| {
                    let mut m = idx.clone();
                    m[j] = ((idx[j] as isize + off).rem_euclid(n as isize)) as usize;
                    self.values[g.flat_index(&m)]
                };
                let h = g.spacing[j];
                let c = self.values[i];
                fine = fine.max((at(1) - 2.0 * c + at(-1)).abs() / (h * h));
                coarse = coarse.max((at(2) - 2.0 * c + at(-2)).abs() / (4.0 * h * h));
            }
        }
        (fine, coarse)
    }
}

fn fft_axis(data: &mut [Complex64], shape: &[usize], axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let scratch_len = fft.get_inplace_scratch_len();
    if stride == 1 {
        data.par_chunks_mut(n).for_each_init(
            || vec![Complex64::default(); scratch_len],
            |scratch, line| fft.process_with_scratch(line, scratch),
        );
        return;
    }
    data.par_chunks_mut(n * stride).for_each(|blk| {
        let mut line = vec![Complex64::default(); n];
        let mut scratch = vec![Complex64::default(); scratch_len];
        for s in 0..stride {
            for k in 0..n {
                line[k] = blk[s + k * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for k in 0..n {
                blk[s + k * stride] = line[k];
            }
        }
    });
}

/// In-place d-dimensional DFT of row-major data; the inverse is normalized.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    for axis in 0..shape.len() {
        let fft = if inverse { planner.plan_fft_inverse(shape[axis]) } else { planner.plan_fft_forward(shape[axis]) };
        fft_axis(data, shape, axis, &fft);
    }
    if inverse {
        let s = 1.0 / data.len() as f64;
        data.par_iter_mut().for_each(|c| *c *= s);
    }
}

/// DFT coefficients of a grid function.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub grid: PeriodicGrid,
    pub coeffs: Vec<Complex64>,
}

impl Spectrum {
    /// Inverse transform of m(index)·coefficients, real part.
    pub fn apply_indexed(&self, m: impl Fn(&[usize]) -> f64 + Sync) -> GridFunction {
        let g = &self.grid;
        let mut data: Vec<Complex64> =
            self.coeffs.par_iter().enumerate().map(|(i, c)| c * m(&g.multi_index(i))).collect();
        fft_nd(&mut data, &g.shape, true);
        GridFunction { grid: g.clone(), values: data.iter().map(|c| c.re).collect() }
    }

    /// (1/N) Σ |m_k| |c_k|, a bound on the sup of the inverse transform of m·c.
    pub fn sup_bound_indexed(&self, m: impl Fn(&[usize]) -> f64 + Sync) -> f64 {
        let g = &self.grid;
        let terms: Vec<f64> = self.coeffs.par_iter().enumerate().map(|(i, c)| m(&g.multi_index(i)).abs() * c.norm()).collect();
        let s: f64 = terms.iter().sum();
        s / g.len() as f64
    }

    /// Discrete L² norm of the inverse transform of m·c via Parseval.
    pub fn l2_norm_indexed(&self, m: impl Fn(&[usize]) -> f64 + Sync) -> f64 {
        let g = &self.grid;
        let terms: Vec<f64> = self.coeffs.par_iter().enumerate().map(|(i, c)| (m(&g.multi_index(i)) * c.norm()).powi(2)).collect();
        let s: f64 = terms.iter().sum();
        (s * g.cell_volume() / g.len() as f64).sqrt()
    }
}

/// Per-axis tables of w_j |ξ_j|^{α_j} so that Ψ(ξ) = Σ_j table_j[k_j].
#[derive(Debug, Clone)]
pub struct SymbolTable {
    pub axes: Vec<Vec<f64>>,
}

impl SymbolTable {
    pub fn new(frozen: &FrozenSpec, grid: &PeriodicGrid) -> Result<Self> {
        if frozen.dim() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: frozen.dim(), got: grid.dim() });
        }
        let w = frozen.weights();
        let axes = (0..grid.dim())
            .map(|j| {
                let a = frozen.alpha_spec.alpha(j);
                grid.frequencies(j).iter().map(|xi| w[j] * xi.abs().powf(a)).collect()
            })
            .collect();
        Ok(Self { axes })
    }

    pub fn psi(&self, idx: &[usize]) -> f64 {
        idx.iter().enumerate().map(|(j, &k)| self.axes[j][k]).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ErrorReport {
    pub head: f64,
    pub quadrature: f64,
    pub tail: f64,
    pub wrap: f64,
}

impl ErrorReport {
    pub fn total(&self) -> f64 {
        self.head + self.quadrature + self.tail + self.wrap
    }

    pub fn dominant(&self) -> &'static str {
        let terms = [("head", self.head), ("quadrature", self.quadrature), ("tail", self.tail), ("wrap", self.wrap)];
        terms.iter().fold(("head", -1.0), |m, t| if t.1 > m.1 { *t } else { m }).0
    }

    /// Fails with the dominating term named when the total exceeds `tolerance`.
    pub fn check(&self, tolerance: f64) -> Result<()> {
        if self.total() > tolerance {
            return Err(Error::InvalidArgument(format!(
                "error bound {:e} exceeds tolerance {tolerance:e}; dominated by the {} term",
                self.total(),
                self.dominant()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SpectralOutput {
    pub function: GridFunction,
    pub errors: ErrorReport,
}

fn check_dims(frozen: &FrozenSpec, f: &GridFunction) -> Result<()> {
    if frozen.dim() != f.grid.dim() {
        return Err(Error::DimensionMismatch { expected: frozen.dim(), got: f.grid.dim() });
    }
    Ok(())
}

/// Bound on the difference between the periodic and the free-space P_t f,
/// from the images of the transition density under the period lattice.
pub fn wrap_bound(frozen: &FrozenSpec, t: f64, f: &GridFunction) -> f64 {
    let g = &f.grid;
    let (r, outside) = f.support_box(1e-14);
    let sup = f.sup();
    let l1 = f.lp_norm(1.0);
    let w = frozen.weights();
    let mut with_images = 1.0;
    let mut peaks = 1.0;
    let mut tail_sum = 0.0;
    for j in 0..g.dim() {
        let gap = 0.5 * g.period(j) - r[j];
        if gap <= 0.0 {
            return 2.0 * sup;
        }
        let alpha = frozen.alpha_spec.index(j);
        let tw = t * w[j];
        let q0 = density_at_zero(alpha, tw);
        let qd = stable_pdf(alpha.value(), tw, gap);
        let p = tail_probability(alpha, tw, gap);
        let p = p.value + p.error;
        let images = 2.0 * (qd + p / g.period(j));
        with_images *= q0 + images;
        peaks *= q0;
        tail_sum += 2.0 * p;
    }
    (l1 * (with_images - peaks)).min(sup * tail_sum).min(2.0 * sup) + 2.0 * outside
}

/// P_t f by Fourier multiplication with e^{−tΨ(ξ)}.
pub fn semigroup_apply(frozen: &FrozenSpec, t: f64, f: &GridFunction) -> Result<SpectralOutput> {
    check_dims(frozen, f)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t = {t} must be positive")));
    }
    let table = SymbolTable::new(frozen, &f.grid)?;
    let out = f.spectrum().apply_indexed(|idx| (-t * table.psi(idx)).exp());
    Ok(SpectralOutput { function: out, errors: ErrorReport { wrap: wrap_bound(frozen, t, f), ..Default::default() } })
}

/// 𝓛₀f on the periodic grid, multiplier −Ψ(ξ).
pub fn frozen_generator_spectral(frozen: &FrozenSpec, f: &GridFunction) -> Result<GridFunction> {
    check_dims(frozen, f)?;
    let table = SymbolTable::new(frozen, &f.grid)?;
    Ok(f.spectrum().apply_indexed(|idx| -table.psi(idx)))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PaddedSymbolOutput {
    pub wrap: f64,
    pub pad_factor: usize,
}

/// 𝓛₀f by one-dimensional transforms along each axis with the line padded by
/// zeros to `pad_factor` times its length. Ψ is a sum of one-axis symbols, so
/// the periodic images are then at distance ≳ pad_factor·L.
pub fn frozen_generator_padded(frozen: &FrozenSpec, f: &GridFunction, pad_factor: usize) -> Result<(GridFunction, PaddedSymbolOutput)> {
    check_dims(frozen, f)?;
    if pad_factor < 2 {
        return Err(Error::InvalidArgument("pad_factor must be at least 2".into()));
    }
    let g = &f.grid;
    let w = frozen.weights();
    let mut out = vec![0.0; g.len()];
    let mut wrap = 0.0;
    let mut planner = FftPlanner::new();
    for j in 0..g.dim() {
        let n = g.shape[j];
        let np = n * pad_factor;
        let h = g.spacing[j];
        let a = frozen.alpha_spec.alpha(j);
        let fwd = planner.plan_fft_forward(np);
        let inv = planner.plan_fft_inverse(np);
        let mult: Vec<f64> = (0..np)
            .map(|k| {
                let kk = if k < np / 2 { k as f64 } else { k as f64 - np as f64 };
                -w[j] * (2.0 * PI * kk / (np as f64 * h)).abs().powf(a) / np as f64
            })
            .collect();
        let stride: usize = g.shape[j + 1..].iter().product();
        let lines = g.len() / n;
        let results: Vec<(usize, Vec<f64>, f64)> = (0..lines)
            .into_par_iter()
            .map(|l| {
                let base = (l / stride) * n * stride + l % stride;
                let mut buf = vec![Complex64::default(); np];
                let mut l1 = 0.0;
                for k in 0..n {
                    let v = f.values[base + k * stride];
                    buf[k] = Complex64::new(v, 0.0);
                    l1 += v.abs() * h;
                }
                fwd.process(&mut buf);
                for (c, m) in buf.iter_mut().zip(&mult) {
                    *c *= m;
                }
                inv.process(&mut buf);
                (base, buf[..n].iter().map(|c| c.re).collect(), l1)
            })
            .collect();
        let mut l1_max: f64 = 0.0;
        for (base, vals, l1) in results {
            for (k, v) in vals.iter().enumerate() {
                out[base + k * stride] += v;
            }
            l1_max = l1_max.max(l1);
        }
        // images at distance ≥ (k·pad − 1)·L contribute ≤ w c ‖g‖₁ dist^{−1−α}
        let len = g.period(j);
        let gap = len * (pad_factor as f64 - 1.0);
        let c = normalization_constant(frozen.alpha_spec.index(j));
        let sum = gap.powf(-1.0 - a) * (1.0 + gap / (a * len * pad_factor as f64));
        wrap += w[j] * 2.0 * c * l1_max * sum;
    }
    Ok((GridFunction::new(g.clone(), out)?, PaddedSymbolOutput { wrap, pad_factor }))
}

/// Geometric time grid for Laplace-type integrals: [0, t_min] is handled
/// analytically and [t_min, T*] by Gauss–Legendre panels of ratio 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeQuadrature {
    pub t_min: f64,
    pub nodes_per_panel: usize,
    /// Target for the truncation term; fixes T*.
    pub tail_tolerance: f64,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        Self { t_min: 1e-4, nodes_per_panel: 16, tail_tolerance: 1e-10 }
    }
}

struct TimeNodes {
    panels: Vec<(f64, f64)>,
    nodes: Vec<(f64, f64)>,
}

impl TimeQuadrature {
    fn nodes(&self, t_max: f64) -> TimeNodes {
        let (x, w) = gl_cached(self.nodes_per_panel);
        let mut panels = Vec::new();
        let mut a = self.t_min;
        while a < t_max {
            let b = (2.0 * a).min(t_max);
            panels.push((a, b));
            a = b;
        }
        let mut nodes = Vec::new();
        for &(a, b) in &panels {
            let (h, m) = (0.5 * (b - a), 0.5 * (a + b));
            for (xi, wi) in x.iter().zip(w) {
                nodes.push((m + h * xi, h * wi));
            }
        }
        TimeNodes { panels, nodes }
    }
}

/// ∫_0^{T*} e^{−λt} P_t f dt on the periodic grid by time quadrature; the
/// result carries the head, quadrature, tail and wrap error terms.
fn laplace_time_quadrature(frozen: &FrozenSpec, lambda: f64, t_max: f64, tail: f64, f: &GridFunction, tq: &TimeQuadrature) -> Result<SpectralOutput> {
    check_dims(frozen, f)?;
    let g = &f.grid;
    let table = SymbolTable::new(frozen, g)?;
    let tn = tq.nodes(t_max);
    let head_weight = if lambda > 0.0 { -(-lambda * tq.t_min).exp_m1() / lambda } else { tq.t_min };
    // e^{−tΨ} = Π_j e^{−t table_j[k_j]}
    let per_node: Vec<Vec<Vec<f64>>> = tn
        .nodes
        .iter()
        .map(|&(t, _)| table.axes.iter().map(|ax| ax.iter().map(|p| (-t * p).exp()).collect()).collect())
        .collect();
    let node_weights: Vec<f64> = tn.nodes.iter().map(|&(t, w)| w * (-lambda * t).exp()).collect();
    let mult = |idx: &[usize]| -> f64 {
        let mut s = head_weight;
        for (e, w) in per_node.iter().zip(&node_weights) {
            let mut p = *w;
            for (j, &k) in idx.iter().enumerate() {
                p *= e[j][k];
            }
            s += p;
        }
        s
    };
    let exact_body = |idx: &[usize]| -> f64 {
        let rate = lambda + table.psi(idx);
        if rate == 0.0 {
            t_max - tq.t_min
        } else {
            ((-rate * tq.t_min).exp() - (-rate * t_max).exp()) / rate
        }
    };
    let spec = f.spectrum();
    // The mode-wise multipliers are needed both for the output and the error
    // estimate, so compute them once.
    let mults: Vec<f64> = (0..g.len()).into_par_iter().map(|i| mult(&g.multi_index(i))).collect();
    let out = spec.apply_indexed(|idx| mults[g.flat_index(idx)]);
    let quadrature = spec.sup_bound_indexed(|idx| mults[g.flat_index(idx)] - head_weight - exact_body(idx));
    let generator_sup = spec.sup_bound_indexed(|idx| table.psi(idx));
    let head = 0.5 * tq.t_min * tq.t_min * generator_sup;
    let mut prev = wrap_bound(frozen, tq.t_min, f);
    let mut wrap = tq.t_min * prev;
    for &(a, b) in &tn.panels {
        let next = wrap_bound(frozen, b, f);
        let weight = if lambda > 0.0 { ((-lambda * a).exp() - (-lambda * b).exp()) / lambda } else { b - a };
        wrap += weight * prev.max(next);
        prev = next;
    }
    Ok(SpectralOutput { function: out, errors: ErrorReport { head, quadrature, tail, wrap } })
}

/// R_λ f = ∫_0^∞ e^{−λt} P_t f dt by time quadrature with default settings.
pub fn resolvent_apply(frozen: &FrozenSpec, lambda: f64, f: &GridFunction) -> Result<SpectralOutput> {
    resolvent_apply_with(frozen, lambda, f, &TimeQuadrature::default())
}

pub fn resolvent_apply_with(frozen: &FrozenSpec, lambda: f64, f: &GridFunction, tq: &TimeQuadrature) -> Result<SpectralOutput> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
    }
    let sup = f.sup();
    let t_max = if sup > 0.0 { ((sup / (lambda * tq.tail_tolerance)).ln() / lambda).max(2.0 * tq.t_min) } else { 2.0 * tq.t_min };
    let tail = (-lambda * t_max).exp() * sup / lambda;
    laplace_time_quadrature(frozen, lambda, t_max, tail, f, tq)
}

/// R_λ f with the exact multiplier 1/(λ + Ψ), an independent route to the
/// time-quadrature result. Only the wrap term is reported.
pub fn resolvent_exact(frozen: &FrozenSpec, lambda: f64, f: &GridFunction) -> Result<GridFunction> {
    check_dims(frozen, f)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
    }
    let table = SymbolTable::new(frozen, &f.grid)?;
    Ok(f.spectrum().apply_indexed(|idx| 1.0 / (lambda + table.psi(idx))))
}

/// Horizon T* balancing the algebraic tail ‖p_1‖_∞‖f‖₁T^{1−β}/(β−1) against
/// the zero mode T‖f‖₁/|box| of the periodic grid.
pub fn potential_horizon(frozen: &FrozenSpec, grid: &PeriodicGrid) -> f64 {
    let beta = frozen.alpha_spec.anisotropy().beta;
    (frozen.peak_density(1.0) * grid.volume()).powf(1.0 / beta)
}

/// R₀ f = ∫_0^∞ P_t f dt for a transient frozen process (d ≥ 3).
pub fn potential_apply(frozen: &FrozenSpec, f: &GridFunction) -> Result<SpectralOutput> {
    potential_apply_with(frozen, f, &TimeQuadrature::default(), None)
}

pub fn potential_apply_with(frozen: &FrozenSpec, f: &GridFunction, tq: &TimeQuadrature, horizon: Option<f64>) -> Result<SpectralOutput> {
    check_dims(frozen, f)?;
    let d = frozen.dim();
    let beta = frozen.alpha_spec.anisotropy().beta;
    if d < 3 || beta <= 1.0 {
        return Err(Error::NotTransient(d));
    }
    let t_max = horizon.unwrap_or_else(|| potential_horizon(frozen, &f.grid)).max(2.0 * tq.t_min);
    let tail = frozen.peak_density(1.0) * f.lp_norm(1.0) * t_max.powf(1.0 - beta) / (beta - 1.0);
    laplace_time_quadrature(frozen, 0.0, t_max, tail, f, tq)
}

/// Exact potential multiplier ∫_0^{T*} e^{−tΨ} dt = (1 − e^{−T*Ψ})/Ψ.
pub fn potential_exact(frozen: &FrozenSpec, f: &GridFunction, horizon: f64) -> Result<GridFunction> {
    check_dims(frozen, f)?;
    let table = SymbolTable::new(frozen, &f.grid)?;
    Ok(f.spectrum().apply_indexed(|idx| {
        let psi = table.psi(idx);
        if psi == 0.0 {
            horizon
        } else {
            -(-horizon * psi).exp_m1() / psi
        }
    }))
}

/// Per-axis data of the multiplier: (|A_jj(x₀)|^{α_j}, c_{α_j}) and
/// φ_j = |A_jj(x₀)|^{−α_j}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierSpec {
    pub alphas: Vec<f64>,
    pub weights: Vec<(f64, f64)>,
    pub phi_values: Vec<f64>,
}

impl MultiplierSpec {
    pub fn from_frozen(frozen: &FrozenSpec) -> Self {
        let w = frozen.weights();
        let alphas = frozen.alpha_spec.values();
        Self {
            weights: (0..w.len()).map(|j| (w[j], normalization_constant(frozen.alpha_spec.index(j)))).collect(),
            phi_values: w.iter().map(|x| 1.0 / x).collect(),
            alphas,
        }
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    /// a = max_j φ_j.
    pub fn a(&self) -> f64 {
        self.phi_values.iter().fold(0.0, |m, &x| m.max(x))
    }
}

fn check_xi(spec: &MultiplierSpec, j: usize, xi: &[f64]) -> Result<()> {
    if xi.len() != spec.dim() || j >= spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: xi.len() });
    }
    if xi.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroFrequency);
    }
    Ok(())
}

/// Symbol of 𝓜_j R₀: −2|ξ_j|^{α_j} / Σ_k |A_kk(x₀)|^{α_k}|ξ_k|^{α_k}.
pub fn multiplier_symbol(spec: &MultiplierSpec, j: usize, xi: &[f64]) -> Result<f64> {
    check_xi(spec, j, xi)?;
    let den: f64 = (0..spec.dim()).map(|k| spec.weights[k].0 * xi[k].abs().powf(spec.alphas[k])).sum();
    Ok(-2.0 * xi[j].abs().powf(spec.alphas[j]) / den)
}

/// The same symbol with numerator ∫(2cos(hξ_j) − 2)c_j|h|^{−1−α_j}dh and
/// denominator Σ_k w_k ∫(1 − cos(hξ_k))c_k|h|^{−1−α_k}dh by quadrature.
pub fn multiplier_symbol_quadrature(spec: &MultiplierSpec, j: usize, xi: &[f64]) -> Result<Integral<f64>> {
    check_xi(spec, j, xi)?;
    let axis = |k: usize| -> Integral<f64> {
        if xi[k] == 0.0 {
            return Integral { value: 0.0, error: 0.0 };
        }
        let half = one_minus_cos_integral(spec.alphas[k], xi[k].abs());
        let c = spec.weights[k].1;
        Integral { value: 2.0 * c * half.value, error: 2.0 * c * half.error }
    };
    let num = axis(j);
    let (mut den, mut den_err) = (0.0, 0.0);
    for k in 0..spec.dim() {
        let v = axis(k);
        den += spec.weights[k].0 * v.value;
        den_err += spec.weights[k].0 * v.error;
    }
    let value = -2.0 * num.value / den;
    let error = 2.0 * num.error / den + value.abs() * den_err / den;
    Ok(Integral { value, error })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalityConstants {
    pub a: f64,
    pub eta: f64,
    pub eta0: f64,
    pub p: f64,
    pub p_star_minus_1: f64,
    pub passes_loc: bool,
}

/// Relative tolerance on η ≤ η₀ absorbing rounding in the sampled weights.
pub const LOCALITY_RELATIVE_TOLERANCE: f64 = 1e-12;

/// η₀ = 1/(4 d a (p* − 1)), p* − 1 = max(p − 1, 1/(p − 1)).
pub fn locality_threshold(d: usize, a: f64, p: f64) -> Result<(f64, f64)> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!("p = {p} must lie in (1, inf)")));
    }
    let psm1 = (p - 1.0).max(1.0 / (p - 1.0));
    Ok((1.0 / (4.0 * d as f64 * a * psm1), psm1))
}

/// The constants a, η, η₀ with η the largest weight deviation
/// ||A_jj(x)|^{α_j} − |A_jj(x₀)|^{α_j}| over the sample points.
pub fn locality_gate(sys: &DiagonalSde, frozen: &FrozenSpec, p: f64, samples: &[Vec<f64>]) -> Result<LocalityConstants> {
    let d = sys.dim();
    if frozen.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: frozen.dim() });
    }
    let w0 = frozen.weights();
    let a = w0.iter().fold(0.0f64, |m, w| m.max(1.0 / w));
    let (eta0, psm1) = locality_threshold(d, a, p)?;
    let mut eta: f64 = 0.0;
    for x in samples {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        for (wx, w) in sys.weights_at(x).iter().zip(&w0) {
            eta = eta.max((wx - w).abs());
        }
    }
    Ok(LocalityConstants {
        a,
        eta,
        eta0,
        p,
        p_star_minus_1: psm1,
        passes_loc: eta <= eta0 * (1.0 + LOCALITY_RELATIVE_TOLERANCE),
    })
}

/// Trigonometric interpolant of one grid line through `flat` along axis j,
/// as a one-dimensional test function of the axis coordinate.
pub fn line_interpolant(g: &GridFunction, flat: usize, j: usize) -> TestFunction {
    let grid = &g.grid;
    let n = grid.shape[j];
    let stride: usize = grid.shape[j + 1..].iter().product();
    let idx = grid.multi_index(flat);
    let base = flat - idx[j] * stride;
    let mut buf: Vec<Complex64> = (0..n).map(|k| Complex64::new(g.values[base + k * stride], 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let nf = n as f64;
    let x0 = grid.coord(j, 0);
    let period = grid.period(j);
    let mean = buf[0].re / nf;
    // v ↦ mean + Σ_k (a_k cos(ω_k v) + b_k sin(ω_k v)), v = u − x0
    let mut modes: Vec<(f64, f64, f64)> = Vec::new();
    for k in 1..=n / 2 {
        let omega = 2.0 * PI * k as f64 / period;
        let (a, b) = if k == n / 2 { (buf[k].re / nf, 0.0) } else { (2.0 * buf[k].re / nf, -2.0 * buf[k].im / nf) };
        modes.push((omega, a, b));
    }
    let osc: f64 = modes.iter().map(|(_, a, b)| a.hypot(*b)).sum();
    let d2: f64 = modes.iter().map(|(w, a, b)| w * w * a.hypot(*b)).sum();
    let d4: f64 = modes.iter().map(|(w, a, b)| w.powi(4) * a.hypot(*b)).sum();
    let (m1, m2, m3) = (modes.clone(), modes.clone(), modes);
    TestFunction::custom(
        "line_interpolant",
        1,
        move |u| mean + m1.iter().map(|(w, a, b)| { let (s, c) = (w * (u[0] - x0)).sin_cos(); a * c + b * s }).sum::<f64>(),
        move |u, o| o[0] = m2.iter().map(|(w, a, b)| { let (s, c) = (w * (u[0] - x0)).sin_cos(); w * (b * c - a * s) }).sum(),
        d2,
        d4,
        mean.abs() + osc,
        Decay::Periodic { period: vec![period], mean, oscillation: osc },
    )
    .with_axis_second(move |u, _| -m3.iter().map(|(w, a, b)| { let (s, c) = (w * (u[0] - x0)).sin_cos(); w * w * (a * c + b * s) }).sum::<f64>())
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationRow {
    pub name: String,
    /// ‖𝓑R₀f‖₂ / ‖f‖₂ on the grid.
    pub ratio: f64,
    pub bound: f64,
    /// ½ η Σ_j ‖𝓜_j R₀f‖₂ / ‖f‖₂, the intermediate step of the bound.
    pub chain_ratio: f64,
    /// Error terms of R₀f propagated to the ratio.
    pub discretization_slack: f64,
    pub parseval_defect: f64,
    /// Largest |spectral − quadrature| for 𝓜_j R₀f at sample nodes, with the
    /// quadrature error bound it is compared against.
    pub quadrature_defect: f64,
    pub quadrature_bound: f64,
    pub hessian_fine: f64,
    pub hessian_coarse: f64,
    pub hessian_bounded: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub locality: LocalityConstants,
    pub rows: Vec<PerturbationRow>,
}

/// Precomputed 𝓜_j R₀f for one test function, reusable across fields.
#[derive(Debug, Clone)]
pub struct PotentialAxes {
    pub name: String,
    pub f_norm: f64,
    pub potential: SpectralOutput,
    pub axes: Vec<GridFunction>,
    pub parseval_defect: f64,
    pub quadrature_defect: f64,
    pub quadrature_bound: f64,
}

/// R₀f and 𝓜_j R₀f (multiplier −2|ξ_j|^{α_j}) for a function on the grid,
/// with the quadrature cross-check of 𝓜_j R₀f at `probe_nodes`.
pub fn potential_axes(frozen: &FrozenSpec, f: &GridFunction, name: &str, probe_nodes: &[usize]) -> Result<PotentialAxes> {
    let potential = potential_apply(frozen, f)?;
    let g = &f.grid;
    let spec = potential.function.spectrum();
    let mut axes = Vec::new();
    let mut parseval_defect: f64 = 0.0;
    let (mut qdef, mut qbound): (f64, f64) = (0.0, 0.0);
    let quad = SingularQuadrature::default();
    for j in 0..g.dim() {
        let a = frozen.alpha_spec.alpha(j);
        let freqs = g.frequencies(j);
        let m = |idx: &[usize]| -2.0 * freqs[idx[j]].abs().powf(a);
        let phys = spec.apply_indexed(m);
        let freq_norm = spec.l2_norm_indexed(m);
        let phys_norm = phys.lp_norm(2.0);
        parseval_defect = parseval_defect.max((phys_norm - freq_norm).abs() / freq_norm.max(f64::MIN_POSITIVE));
        for &node in probe_nodes {
            let line = line_interpolant(&potential.function, node, j);
            let xj = g.coord(j, g.multi_index(node)[j]);
            let q = second_difference_integral(&line, &[xj], 0, 1.0, StableIndex::new(a)?, &quad).total();
            qdef = qdef.max((q.value - phys.values[node]).abs());
            qbound = qbound.max(q.error_bound);
        }
        axes.push(phys);
    }
    Ok(PotentialAxes {
        name: name.to_string(),
        f_norm: f.lp_norm(2.0),
        potential,
        axes,
        parseval_defect,
        quadrature_defect: qdef,
        quadrature_bound: qbound,
    })
}

/// 𝓑g(x) = ½ Σ_j (|A_jj(x)|^{α_j} − |A_jj(x₀)|^{α_j}) 𝓜_j g(x) on the grid.
pub fn perturbation_on_grid(sys: &DiagonalSde, frozen: &FrozenSpec, axes: &[GridFunction]) -> GridFunction {
    let g = &axes[0].grid;
    let w0 = frozen.weights();
    let values = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let wx = sys.weights_at(&g.point(i));
            (0..axes.len()).map(|j| 0.5 * (wx[j] - w0[j]) * axes[j].values[i]).sum()
        })
        .collect();
    GridFunction { grid: g.clone(), values }
}

/// ‖𝓑R₀f‖₂/‖f‖₂ for one field from precomputed axes.
pub fn perturbation_row(sys: &DiagonalSde, frozen: &FrozenSpec, pa: &PotentialAxes, loc: &LocalityConstants) -> PerturbationRow {
    let b = perturbation_on_grid(sys, frozen, &pa.axes);
    let ratio = b.lp_norm(2.0) / pa.f_norm;
    let chain = 0.5 * loc.eta * pa.axes.iter().map(|m| m.lp_norm(2.0)).sum::<f64>() / pa.f_norm;
    let g = &pa.potential.function.grid;
    let d = g.dim() as f64;
    let slack = loc.eta * d * loc.a * g.volume().sqrt() * pa.potential.errors.total() / pa.f_norm;
    let (fine, coarse) = pa.potential.function.second_difference_sup();
    PerturbationRow {
        name: pa.name.clone(),
        ratio,
        bound: 0.25,
        chain_ratio: chain,
        discretization_slack: slack,
        parseval_defect: pa.parseval_defect,
        quadrature_defect: pa.quadrature_defect,
        quadrature_bound: pa.quadrature_bound,
        hessian_fine: fine,
        hessian_coarse: coarse,
        hessian_bounded: fine <= 1.5 * coarse + 1e-12,
    }
}

/// The chain ‖𝓑R₀f‖_p ≤ ½ η Σ_j ‖𝓜_j R₀f‖_p ≤ ¼‖f‖_p at p = 2 on a periodic
/// grid, for each test function.
pub fn perturbation_bound_check(
    sys: &DiagonalSde,
    frozen: &FrozenSpec,
    p: f64,
    battery: &[TestFunction],
    grid: &PeriodicGrid,
    samples: &[Vec<f64>],
) -> Result<PerturbationReport> {
    if p != 2.0 {
        return Err(Error::InvalidArgument("the perturbation norm check is certified for p = 2 only".into()));
    }
    let locality = locality_gate(sys, frozen, p, samples)?;
    if !locality.passes_loc {
        return Err(Error::LocalityViolated { eta: locality.eta, eta0: locality.eta0 });
    }
    let probes = vec![grid.len() / 2];
    let mut rows = Vec::new();
    for f in battery {
        let fg = GridFunction::from_test_function(grid, f)?;
        let pa = potential_axes(frozen, &fg, &f.name, &probes)?;
        rows.push(perturbation_row(sys, frozen, &pa, &locality));
    }
    Ok(PerturbationReport { locality, rows })
}
