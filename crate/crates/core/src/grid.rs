//! Rectangular grids carrying densities and test functions.
//!
//! An [`Axis`] is a uniform core, optionally extended on both sides by
//! log-spaced tail nodes so heavy-tailed densities can be integrated out to
//! very large radii without a dense uniform grid.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Default cap on the number of cells of a dense grid.
pub const MAX_DENSE_CELLS: usize = 1 << 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    /// Half-width of the uniform core.
    pub half_width: f64,
    /// Spacing of the uniform core.
    pub spacing: f64,
    /// Step in log-radius of the tail extension.
    #[serde(default = "default_log_step")]
    pub log_step: f64,
    /// Allowed probability mass beyond the last node.
    #[serde(default = "default_mass_target")]
    pub mass_target: f64,
    /// Maximum number of nodes on the axis.
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

fn default_log_step() -> f64 {
    0.05
}
fn default_mass_target() -> f64 {
    1e-8
}
fn default_max_nodes() -> usize {
    1 << 20
}

impl AxisSpec {
    pub fn new(half_width: f64, spacing: f64) -> Self {
        Self {
            half_width,
            spacing,
            log_step: default_log_step(),
            mass_target: default_mass_target(),
            max_nodes: default_max_nodes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.half_width > 0.0
            && self.spacing > 0.0
            && self.spacing <= self.half_width
            && self.log_step > 0.0
            && self.mass_target > 0.0
            && self.half_width.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad axis spec {self:?}")))
        }
    }

    /// Number of uniform core cells on each side of the centre.
    pub fn core_half_count(&self) -> usize {
        (self.half_width / self.spacing).round().max(1.0) as usize
    }
}

/// Nodes and quadrature weights along one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Index range of the uniform core.
    pub core: std::ops::Range<usize>,
    pub spacing: f64,
}

impl Axis {
    /// Uniform symmetric axis `k·h`, `k = −K..=K`, with trapezoid weights
    /// carrying fourth-order Gregory end corrections when `K ≥ 4`.
    pub fn uniform(half_count: usize, spacing: f64) -> Self {
        let n = 2 * half_count + 1;
        let nodes: Vec<f64> = (0..n).map(|k| (k as f64 - half_count as f64) * spacing).collect();
        let mut weights = vec![spacing; n];
        if half_count >= 4 {
            for (k, c) in [17.0, 59.0, 43.0, 49.0].iter().enumerate() {
                weights[k] = spacing * c / 48.0;
                weights[n - 1 - k] = spacing * c / 48.0;
            }
        } else {
            weights[0] *= 0.5;
            weights[n - 1] *= 0.5;
        }
        Self { nodes, weights, core: 0..n, spacing }
    }

    /// Uniform core of half-width `K·h` extended by `m` log-spaced Simpson
    /// panels per side, each of log-width `log_step`.
    pub fn hybrid(half_count: usize, spacing: f64, panels: usize, log_step: f64) -> Self {
        if panels == 0 {
            return Self::uniform(half_count, spacing);
        }
        let core = Self::uniform(half_count, spacing);
        let x0 = core.nodes[core.nodes.len() - 1];
        let ln0 = x0.ln();
        let m = 2 * panels;
        let mut tail_x = Vec::with_capacity(m);
        let mut tail_w = Vec::with_capacity(m);
        for i in 1..=m {
            let x = (ln0 + i as f64 * log_step).exp();
            let c = if i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            tail_x.push(x);
            tail_w.push(c * log_step / 3.0 * x);
        }
        let edge = log_step / 3.0 * x0;
        let n = core.nodes.len() + 2 * m;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in (0..m).rev() {
            nodes.push(-tail_x[i]);
            weights.push(tail_w[i]);
        }
        let start = nodes.len();
        for (k, (&x, &w)) in core.nodes.iter().zip(&core.weights).enumerate() {
            nodes.push(x);
            let extra = if k == 0 || k + 1 == core.nodes.len() { edge } else { 0.0 };
            weights.push(w + extra);
        }
        let end = nodes.len();
        for i in 0..m {
            nodes.push(tail_x[i]);
            weights.push(tail_w[i]);
        }
        Self { nodes, weights, core: start..end, spacing }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.core.start == 0 && self.core.end == self.nodes.len()
    }

    pub fn extent(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Affine image `x ↦ shift + scale·x` with `scale > 0`; weights are scaled.
    pub fn mapped(&self, shift: f64, scale: f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|x| shift + scale * x).collect(),
            weights: self.weights.iter().map(|w| w * scale).collect(),
            core: self.core.clone(),
            spacing: self.spacing * scale,
        }
    }
}

/// Builds a symmetric axis whose extent makes `tail_mass(X) < spec.mass_target`.
pub fn auto_axis(spec: &AxisSpec, tail_mass: impl Fn(f64) -> f64, alpha: f64, t: f64) -> Result<Axis> {
    spec.validate()?;
    let k = spec.core_half_count();
    let x0 = k as f64 * spec.spacing;
    let fail = |detail: String| Error::TruncationTarget { alpha, t, target: spec.mass_target, detail };
    if tail_mass(x0) < spec.mass_target {
        if 2 * k + 1 > spec.max_nodes {
            return Err(fail(format!("core needs {} nodes", 2 * k + 1)));
        }
        return Ok(Axis::uniform(k, spec.spacing));
    }
    let mut panels = 0usize;
    loop {
        panels += 1;
        let edge = x0 * (2.0 * panels as f64 * spec.log_step).exp();
        if !edge.is_finite() || edge > 1e300 {
            return Err(fail("required extent exceeds floating point range".into()));
        }
        if 2 * k + 1 + 4 * panels > spec.max_nodes {
            return Err(fail(format!("more than {} nodes needed", spec.max_nodes)));
        }
        if tail_mass(edge) < spec.mass_target {
            return Ok(Axis::hybrid(k, spec.spacing, panels, spec.log_step));
        }
    }
}

/// Scalar field on a tensor grid, stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        let n: usize = axes.iter().map(Axis::len).product();
        if n != values.len() {
            return Err(Error::DimensionMismatch { expected: n, got: values.len() });
        }
        Ok(Self { axes, values })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            let n = self.axes[j].len();
            idx[j] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.len() + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().zip(&self.axes).map(|(&i, a)| a.nodes[i]).collect()
    }

    pub fn cell_weight(&self, flat: usize) -> f64 {
        self.multi_index(flat).iter().zip(&self.axes).map(|(&i, a)| a.weights[i]).product()
    }

    /// Whether every coordinate of the node lies in its axis core.
    pub fn is_interior(&self, flat: usize) -> bool {
        self.multi_index(flat).iter().zip(&self.axes).all(|(&i, a)| a.core.contains(&i))
    }

    /// Quadrature integral of the values.
    pub fn mass(&self) -> f64 {
        self.weighted_sum(|v| v)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Quadrature L^p norm; `p = f64::INFINITY` gives the sup norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup();
        }
        self.weighted_sum(|v| v.abs().powf(p)).powf(1.0 / p)
    }

    fn weighted_sum(&self, g: impl Fn(f64) -> f64) -> f64 {
        // Sum along the last axis first, then fold outer axes in order.
        let d = self.dim();
        if d == 0 {
            return 0.0;
        }
        let last = &self.axes[d - 1];
        let inner = last.len();
        let rows = self.values.len() / inner;
        let mut acc = 0.0;
        for r in 0..rows {
            let row = &self.values[r * inner..(r + 1) * inner];
            let s: f64 = row.iter().zip(&last.weights).map(|(v, w)| g(*v) * w).sum();
            let mut outer = 1.0;
            let mut rem = r;
            for j in (0..d - 1).rev() {
                let n = self.axes[j].len();
                outer *= self.axes[j].weights[rem % n];
                rem /= n;
            }
            acc += s * outer;
        }
        acc
    }

    /// CSV with header `x,value` (1-d) or `x_1,…,x_d,value`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.dim();
        if d == 1 {
            writeln!(out, "x,value")?;
        } else {
            let cols: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
            writeln!(out, "{},value", cols.join(","))?;
        }
        for (k, v) in self.values.iter().enumerate() {
            for x in self.point(k) {
                write!(out, "{},", fmt_f64(x))?;
            }
            writeln!(out, "{}", fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        Ok(())
    }
}

/// 17-significant-digit scientific formatting used by every CSV writer.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Product of per-axis vectors on a tensor grid.
pub fn tensor_product(axes: Vec<Axis>, factors: &[Vec<f64>], max_cells: usize) -> Result<GridDensity> {
    let cells = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
    let cells = cells.unwrap_or(usize::MAX);
    if cells > max_cells {
        return Err(Error::MemoryGuard { cells, limit: max_cells });
    }
    let mut values = vec![1.0; cells];
    let mut stride = cells;
    for (j, f) in factors.iter().enumerate() {
        let n = axes[j].len();
        stride /= n;
        for (k, v) in values.iter_mut().enumerate() {
            *v *= f[(k / stride) % n];
        }
    }
    GridDensity::new(axes, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hybrid_axis_integrates_power_tail() {
        // ∫_{-∞}^{∞} 1/(π(1+x²)) dx over the grid, extended far enough.
        let axis = Axis::hybrid(200, 0.05, 200, 0.05);
        let m: f64 = axis
            .nodes
            .iter()
            .zip(&axis.weights)
            .map(|(x, w)| w / (std::f64::consts::PI * (1.0 + x * x)))
            .sum();
        let edge = axis.extent();
        let lost = 2.0 * (1.0 / edge).atan() / std::f64::consts::PI;
        assert!((m + lost - 1.0).abs() < 1e-8, "{}", m + lost - 1.0);
    }

    #[test]
    fn hybrid_axis_is_mirror_symmetric() {
        let axis = Axis::hybrid(10, 0.3, 7, 0.1);
        let n = axis.len();
        for k in 0..n {
            assert_eq!(axis.nodes[k], -axis.nodes[n - 1 - k]);
            assert_eq!(axis.weights[k], axis.weights[n - 1 - k]);
        }
    }

    #[test]
    fn tensor_product_and_indexing() {
        let a = Axis::uniform(1, 1.0);
        let b = Axis::uniform(2, 0.5);
        let g = tensor_product(vec![a, b], &[vec![1.0, 2.0, 3.0], vec![1.0, 10.0, 100.0, 1000.0, 1e4]], 1000).unwrap();
        let k = g.flat_index(&[2, 3]);
        assert_eq!(g.values[k], 3000.0);
        assert_eq!(g.point(k), vec![1.0, 0.5]);
        assert!(matches!(
            tensor_product(vec![Axis::uniform(10, 1.0); 3], &[vec![1.0; 21], vec![1.0; 21], vec![1.0; 21]], 100),
            Err(Error::MemoryGuard { .. })
        ));
    }

    #[test]
    fn csv_header_and_precision() {
        let g = GridDensity::new(vec![Axis::uniform(1, 0.1)], vec![1.0 / 3.0, 0.5, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("x,value"));
        let first = lines.next().unwrap();
        let v: f64 = first.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }
}
