//! Discretized maps `u: M → N` and sections of the pullback bundle `u⁻¹TN`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::ChartManifold;
use crate::grid::DomainGrid;

/// Target-chart coordinates `u^γ(x)` at every grid node, node-major.
#[derive(Debug, Clone)]
pub struct MapField {
    grid: Arc<DomainGrid>,
    target: Arc<ChartManifold>,
    values: Vec<f64>,
}

impl MapField {
    pub fn new(grid: Arc<DomainGrid>, target: Arc<ChartManifold>, values: Vec<f64>) -> Result<Self> {
        let d = target.dim();
        if values.len() != grid.len() * d {
            return Err(Error::Config(format!(
                "map has {} values, expected {} nodes × {d} components",
                values.len(),
                grid.len()
            )));
        }
        for (node, p) in values.chunks(d).enumerate() {
            target.check(p).map_err(|e| e.at_node(node))?;
        }
        Ok(Self {
            grid,
            target,
            values,
        })
    }

    pub fn from_fn(
        grid: Arc<DomainGrid>,
        target: Arc<ChartManifold>,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let d = target.dim();
        let mut values = Vec::with_capacity(grid.len() * d);
        for node in 0..grid.len() {
            let p = f(grid.coords(node));
            if p.len() != d {
                return Err(Error::Config(format!(
                    "map generator returned {} components for a {d}-dimensional target",
                    p.len()
                )));
            }
            values.extend(p);
        }
        Self::new(grid, target, values)
    }

    pub fn constant(grid: Arc<DomainGrid>, target: Arc<ChartManifold>, point: &[f64]) -> Result<Self> {
        Self::from_fn(grid, target, |_| point.to_vec())
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn target(&self) -> &Arc<ChartManifold> {
        &self.target
    }

    pub fn target_dim(&self) -> usize {
        self.target.dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> &[f64] {
        let d = self.target.dim();
        &self.values[node * d..(node + 1) * d]
    }

    /// `u + s·V` in chart coordinates; leaving the validity box is an error.
    pub fn displaced(&self, v: &Section, s: f64) -> Result<Self> {
        self.check_section(v)?;
        let values = self
            .values
            .iter()
            .zip(v.values())
            .map(|(u, dv)| u + s * dv)
            .collect();
        Self::new(self.grid.clone(), self.target.clone(), values)
    }

    pub fn check_section(&self, v: &Section) -> Result<()> {
        if v.dim() != self.target.dim() || v.values().len() != self.values.len() {
            return Err(Error::Config(format!(
                "section shape ({} components, {} values) does not match the map",
                v.dim(),
                v.values().len()
            )));
        }
        Ok(())
    }

    /// Fourier interpolation onto a finer (or coarser) grid over the same domain.
    pub fn resample(&self, grid: Arc<DomainGrid>) -> Result<Self> {
        let m = self.grid.dim();
        if grid.dim() != m || grid.lengths() != self.grid.lengths() {
            return Err(Error::Config("resampling needs a grid over the same domain".into()));
        }
        let d = self.target.dim();
        let (n0, n1) = (self.grid.n(), grid.n());
        let mut planner = FftPlanner::<f64>::new();
        let mut out = vec![0.0; grid.len() * d];
        for c in 0..d {
            let comp: Vec<f64> = (0..self.grid.len()).map(|i| self.values[i * d + c]).collect();
            let (rest, slopes) = match self.target.period(c) {
                Some(p) => self.grid.deramp(&comp, p),
                None => (comp, vec![0.0; m]),
            };
            let fine = if m == 1 {
                interpolate_line(&mut planner, &rest, n1)
            } else {
                // axis 0 on every row, then axis 1 on every column
                let mut rows = vec![0.0; n1 * n0];
                for i1 in 0..n0 {
                    let line = interpolate_line(&mut planner, &rest[i1 * n0..(i1 + 1) * n0], n1);
                    rows[i1 * n1..(i1 + 1) * n1].copy_from_slice(&line);
                }
                let mut fine = vec![0.0; n1 * n1];
                for i0 in 0..n1 {
                    let col: Vec<f64> = (0..n0).map(|i1| rows[i0 + n1 * i1]).collect();
                    for (i1, v) in interpolate_line(&mut planner, &col, n1).into_iter().enumerate() {
                        fine[i0 + n1 * i1] = v;
                    }
                }
                fine
            };
            for (node, v) in fine.into_iter().enumerate() {
                let x = grid.coords(node);
                out[node * d + c] = v + (0..m).map(|a| slopes[a] * x[a]).sum::<f64>();
            }
        }
        Self::new(grid, self.target.clone(), out)
    }

    /// CSV with one row per node: node multi-index, then `u0, u1, …`.
    pub fn to_csv(&self) -> String {
        fields_to_csv(&self.grid, &self.values, self.target.dim(), "u")
    }

    pub fn from_csv(grid: Arc<DomainGrid>, target: Arc<ChartManifold>, text: &str) -> Result<Self> {
        let values = fields_from_csv(&grid, text, target.dim(), "u")?;
        Self::new(grid, target, values)
    }
}

/// A section `V ∈ Γ(u⁻¹TN)`: one target-tangent vector per node, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    dim: usize,
    values: Vec<f64>,
}

impl Section {
    pub fn new(dim: usize, values: Vec<f64>) -> Self {
        assert!(dim > 0 && values.len().is_multiple_of(dim), "section length must be a multiple of dim");
        Self { dim, values }
    }

    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self::new(dim, vec![0.0; nodes * dim])
    }

    pub fn from_fn(grid: &DomainGrid, dim: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(grid.len() * dim);
        for node in 0..grid.len() {
            let v = f(grid.coords(node));
            assert_eq!(v.len(), dim);
            values.extend(v);
        }
        Self::new(dim, values)
    }

    /// Random smooth section: every component is a trigonometric polynomial
    /// with modes `|k_a| ≤ max_mode` and standard normal coefficients.
    pub fn random_smooth<R: Rng + ?Sized>(grid: &DomainGrid, dim: usize, max_mode: usize, rng: &mut R) -> Self {
        let m = grid.dim();
        let k = max_mode as i64;
        let modes: Vec<Vec<i64>> = if m == 1 {
            (0..=k).map(|a| vec![a]).collect()
        } else {
            (0..=k).flat_map(|a| (-k..=k).map(move |b| vec![a, b])).collect()
        };
        let mut coeffs = Vec::with_capacity(modes.len() * dim * 2);
        for _ in 0..modes.len() * dim * 2 {
            let z: f64 = rng.sample(StandardNormal);
            coeffs.push(z);
        }
        Self::from_fn(grid, dim, |x| {
            (0..dim)
                .map(|c| {
                    modes
                        .iter()
                        .enumerate()
                        .map(|(q, mode)| {
                            let phase: f64 = mode
                                .iter()
                                .enumerate()
                                .map(|(a, ka)| 2.0 * PI * *ka as f64 * x[a] / grid.lengths()[a])
                                .sum();
                            let base = (q * dim + c) * 2;
                            coeffs[base] * phase.cos() + coeffs[base + 1] * phase.sin()
                        })
                        .sum()
                })
                .collect()
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }

    /// Component `γ` as a scalar field.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.dim).copied().collect()
    }

    pub fn set_component(&mut self, c: usize, field: &[f64]) {
        for (node, v) in field.iter().enumerate() {
            self.values[node * self.dim + c] = *v;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.dim, self.values.iter().map(|v| v * s).collect())
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Section) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        Self::new(
            self.dim,
            self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_csv(&self, grid: &DomainGrid) -> String {
        fields_to_csv(grid, &self.values, self.dim, "v")
    }

    pub fn from_csv(grid: &DomainGrid, dim: usize, text: &str) -> Result<Self> {
        Ok(Self::new(dim, fields_from_csv(grid, text, dim, "v")?))
    }
}

fn csv_header(m: usize, d: usize, prefix: &str) -> String {
    let idx = ["i", "j"];
    let mut cols: Vec<String> = idx[..m].iter().map(|s| s.to_string()).collect();
    cols.extend((0..d).map(|c| format!("{prefix}{c}")));
    cols.join(",")
}

/// Trigonometric interpolation of one periodic line onto `n1` points.
fn interpolate_line(planner: &mut FftPlanner<f64>, values: &[f64], n1: usize) -> Vec<f64> {
    let n0 = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    planner.plan_fft_forward(n0).process(&mut buf);
    let mut spec = vec![Complex64::new(0.0, 0.0); n1];
    let half = n0.min(n1) / 2;
    for q in 0..half {
        spec[q] = buf[q];
        if q > 0 {
            spec[n1 - q] = buf[n0 - q];
        }
    }
    // split the shared Nyquist coefficient symmetrically
    if n1 > n0 {
        let nyq = buf[n0 / 2] * 0.5;
        spec[half] += nyq;
        spec[n1 - half] += nyq;
    }
    planner.plan_fft_inverse(n1).process(&mut spec);
    spec.iter().map(|z| z.re / n0 as f64).collect()
}

fn fields_to_csv(grid: &DomainGrid, values: &[f64], d: usize, prefix: &str) -> String {
    let mut s = csv_header(grid.dim(), d, prefix);
    s.push('\n');
    for node in 0..grid.len() {
        let idx = grid.multi_index(node);
        let row: Vec<String> = idx
            .iter()
            .map(|i| i.to_string())
            .chain(values[node * d..(node + 1) * d].iter().map(|v| format!("{v:?}")))
            .collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

fn fields_from_csv(grid: &DomainGrid, text: &str, d: usize, prefix: &str) -> Result<Vec<f64>> {
    let m = grid.dim();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Config("empty CSV".into()))?;
    let expected = csv_header(m, d, prefix);
    if header.trim() != expected {
        return Err(Error::Config(format!(
            "CSV header `{}` does not match `{expected}`",
            header.trim()
        )));
    }
    let mut values = vec![f64::NAN; grid.len() * d];
    let mut seen = vec![false; grid.len()];
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != m + d {
            return Err(Error::Config(format!("CSV row {} has {} cells", row + 1, cells.len())));
        }
        let parse_err = |c: &str| Error::Config(format!("CSV row {}: cannot parse `{c}`", row + 1));
        let idx: Vec<usize> = cells[..m]
            .iter()
            .map(|c| c.parse::<usize>().map_err(|_| parse_err(c)))
            .collect::<Result<_>>()?;
        if idx.iter().any(|i| *i >= grid.n()) {
            return Err(Error::Config(format!("CSV row {}: index out of range", row + 1)));
        }
        let node = grid.node(&idx);
        for c in 0..d {
            values[node * d + c] = cells[m + c].parse::<f64>().map_err(|_| parse_err(cells[m + c]))?;
        }
        seen[node] = true;
    }
    if let Some(node) = seen.iter().position(|s| !s) {
        return Err(Error::Config(format!("CSV is missing node {:?}", grid.multi_index(node))));
    }
    Ok(values)
}
