//! Periodic grids over flat-torus charts of the domain manifold.
//!
//! Nodes are numbered with axis 0 fastest: `node = i0 + n·i1`. Every
//! per-node array in the crate follows that order.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChartManifold, Christoffel};

/// Derivative discretization on the periodic grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffScheme {
    /// Second-order central differences, 3-point second derivatives.
    Central,
    /// Fourier differentiation; the Nyquist mode is dropped from first
    /// derivatives and kept in second derivatives.
    #[default]
    Spectral,
}

/// A periodic grid over the flat-torus chart of a compact domain `M`.
pub struct DomainGrid {
    domain: Arc<ChartManifold>,
    m: usize,
    n: usize,
    lengths: Vec<f64>,
    scheme: DiffScheme,
    coords: Vec<f64>,
    metric_inv: Vec<f64>,
    christoffel: Vec<Christoffel>,
    sqrt_det: Vec<f64>,
    weights: Vec<f64>,
    fft: (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>),
}

impl fmt::Debug for DomainGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainGrid")
            .field("domain", &self.domain.name())
            .field("m", &self.m)
            .field("n", &self.n)
            .field("lengths", &self.lengths)
            .field("scheme", &self.scheme)
            .finish()
    }
}

/// Builds a grid and checks the requested lengths against the torus periods.
pub fn build_grid(
    domain: Arc<ChartManifold>,
    n: usize,
    lengths: &[f64],
    scheme: DiffScheme,
) -> Result<DomainGrid> {
    let periods: Vec<f64> = domain.periods().into_iter().flatten().collect();
    if periods.len() != lengths.len()
        || periods
            .iter()
            .zip(lengths)
            .any(|(p, l)| (p - l).abs() > 1e-12 * p.abs().max(1.0))
    {
        return Err(Error::Config(format!(
            "grid lengths {lengths:?} do not match the periods of {}",
            domain.name()
        )));
    }
    DomainGrid::new(domain, n, scheme)
}

impl DomainGrid {
    pub fn new(domain: Arc<ChartManifold>, n: usize, scheme: DiffScheme) -> Result<Self> {
        if !domain.is_flat_torus() {
            return Err(Error::Config(format!(
                "domain must be a flat_torus chart, got {}",
                domain.name()
            )));
        }
        let m = domain.dim();
        if !(1..=2).contains(&m) {
            return Err(Error::Config(format!("domain dimension {m} not supported")));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "grid resolution must be even and at least 8, got {n}"
            )));
        }
        let lengths: Vec<f64> = (0..m).map(|a| domain.period(a).unwrap()).collect();
        let count = n.pow(m as u32);
        let cell: f64 = lengths.iter().map(|l| l / n as f64).product();

        let mut coords = Vec::with_capacity(count * m);
        let mut metric_inv = Vec::with_capacity(count * m * m);
        let mut christoffel = Vec::with_capacity(count);
        let mut sqrt_det = Vec::with_capacity(count);
        for node in 0..count {
            let x: Vec<f64> = (0..m)
                .map(|a| {
                    let i = (node / n.pow(a as u32)) % n;
                    i as f64 * lengths[a] / n as f64
                })
                .collect();
            let g = domain.metric(&x)?;
            let ginv = domain.metric_inverse(&x)?;
            sqrt_det.push(g.determinant().sqrt());
            metric_inv.extend(ginv.iter().copied());
            christoffel.push(domain.christoffel(&x)?);
            coords.extend(x);
        }
        let weights = sqrt_det.iter().map(|s| s * cell).collect();

        let mut planner = FftPlanner::new();
        let fft = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
        Ok(Self {
            domain,
            m,
            n,
            lengths,
            scheme,
            coords,
            metric_inv,
            christoffel,
            sqrt_det,
            weights,
            fft,
        })
    }

    /// Same domain and resolution with another difference scheme.
    pub fn with_scheme(&self, scheme: DiffScheme) -> Result<Self> {
        Self::new(self.domain.clone(), self.n, scheme)
    }

    pub fn domain(&self) -> &Arc<ChartManifold> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.n.pow(self.m as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.n as f64
    }

    pub fn scheme(&self) -> DiffScheme {
        self.scheme
    }

    pub fn coords(&self, node: usize) -> &[f64] {
        &self.coords[node * self.m..(node + 1) * self.m]
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.m).map(|a| (node / self.n.pow(a as u32)) % self.n).collect()
    }

    pub fn node(&self, index: &[usize]) -> usize {
        index
            .iter()
            .enumerate()
            .map(|(a, i)| (i % self.n) * self.n.pow(a as u32))
            .sum()
    }

    /// `g^{ab}` at a node, row-major `m×m`.
    pub fn metric_inverse(&self, node: usize) -> &[f64] {
        let mm = self.m * self.m;
        &self.metric_inv[node * mm..(node + 1) * mm]
    }

    /// Domain connection `Γ^{M,k}_ij` at a node.
    pub fn christoffel(&self, node: usize) -> &Christoffel {
        &self.christoffel[node]
    }

    pub fn sqrt_det(&self, node: usize) -> f64 {
        self.sqrt_det[node]
    }

    /// Quadrature weights `w_x = (∏ L_a/n)·√det g(x)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Largest `g^{aa}/h_a²` over the grid, the leading stiffness scale.
    pub fn max_inverse_metric_over_spacing(&self) -> f64 {
        let mut s: f64 = 0.0;
        for node in 0..self.len() {
            let gi = self.metric_inverse(node);
            for a in 0..self.m {
                let h = self.spacing(a);
                s = s.max(gi[a * self.m + a] / (h * h));
            }
        }
        s
    }

    /// Starting node and stride of every grid line along `axis`.
    fn lines(&self, axis: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let stride = self.n.pow(axis as u32);
        let count = self.len() / self.n;
        (0..count).map(move |q| {
            if self.m == 1 {
                (0, 1)
            } else if axis == 0 {
                (q * self.n, stride)
            } else {
                (q, stride)
            }
        })
    }

    fn check_shape(&self, field: &[f64], axis: usize) -> Result<()> {
        if axis >= self.m {
            return Err(Error::Config(format!(
                "axis {axis} out of range for a {}-dimensional grid",
                self.m
            )));
        }
        if field.len() != self.len() {
            return Err(Error::Config(format!(
                "field has {} values, grid has {} nodes",
                field.len(),
                self.len()
            )));
        }
        Ok(())
    }

    fn spectral_line(&self, line: &mut [Complex64], axis: usize, order: usize) {
        let n = self.n;
        self.fft.0.process(line);
        let base = 2.0 * PI / self.lengths[axis];
        for (q, c) in line.iter_mut().enumerate() {
            let k = if q <= n / 2 { q as f64 } else { q as f64 - n as f64 };
            let kk = k * base;
            *c = match order {
                1 if q == n / 2 => Complex64::new(0.0, 0.0),
                1 => *c * Complex64::new(0.0, kk),
                _ => *c * (-kk * kk),
            };
        }
        self.fft.1.process(line);
        let inv = 1.0 / n as f64;
        for c in line.iter_mut() {
            *c *= inv;
        }
    }

    fn derivative_along(&self, field: &[f64], axis: usize, order: usize) -> Vec<f64> {
        let n = self.n;
        let h = self.spacing(axis);
        let mut out = vec![0.0; field.len()];
        match self.scheme {
            DiffScheme::Central => {
                for (start, stride) in self.lines(axis) {
                    for j in 0..n {
                        let c = start + j * stride;
                        let p = start + ((j + 1) % n) * stride;
                        let q = start + ((j + n - 1) % n) * stride;
                        out[c] = if order == 1 {
                            (field[p] - field[q]) / (2.0 * h)
                        } else {
                            (field[p] - 2.0 * field[c] + field[q]) / (h * h)
                        };
                    }
                }
            }
            DiffScheme::Spectral => {
                let mut line = vec![Complex64::new(0.0, 0.0); n];
                for (start, stride) in self.lines(axis) {
                    for (j, c) in line.iter_mut().enumerate() {
                        *c = Complex64::new(field[start + j * stride], 0.0);
                    }
                    self.spectral_line(&mut line, axis, order);
                    for (j, c) in line.iter().enumerate() {
                        out[start + j * stride] = c.re;
                    }
                }
            }
        }
        out
    }

    /// Multiplier of the discrete derivative of order 1 or 2 along `axis` on
    /// the Fourier mode `exp(2πi·q·j/n)`.
    pub fn symbol(&self, axis: usize, q: usize, order: usize) -> Complex64 {
        let n = self.n;
        let h = self.spacing(axis);
        let theta = 2.0 * PI * q as f64 / n as f64;
        match (self.scheme, order) {
            (DiffScheme::Central, 1) => Complex64::new(0.0, theta.sin() / h),
            (DiffScheme::Central, _) => Complex64::new(-(2.0 - 2.0 * theta.cos()) / (h * h), 0.0),
            (DiffScheme::Spectral, o) => {
                let k = if q <= n / 2 { q as f64 } else { q as f64 - n as f64 };
                let kk = k * 2.0 * PI / self.lengths[axis];
                match o {
                    1 if q == n / 2 => Complex64::new(0.0, 0.0),
                    1 => Complex64::new(0.0, kk),
                    _ => Complex64::new(-kk * kk, 0.0),
                }
            }
        }
    }

    /// First derivative along `axis` with periodic wrap.
    pub fn partial(&self, field: &[f64], axis: usize) -> Result<Vec<f64>> {
        self.check_shape(field, axis)?;
        Ok(self.derivative_along(field, axis, 1))
    }

    /// `partial` preceded by the wrap-discontinuity diagnostic.
    pub fn partial_checked(&self, field: &[f64], axis: usize) -> Result<Vec<f64>> {
        self.check_periodic(field, axis)?;
        self.partial(field, axis)
    }

    /// Second derivative `∂_a∂_b`; the diagonal uses the dedicated second-order
    /// stencil (3-point or `−k²`), off-diagonal terms compose first derivatives.
    pub fn second(&self, field: &[f64], a: usize, b: usize) -> Result<Vec<f64>> {
        self.check_shape(field, a)?;
        self.check_shape(field, b)?;
        if a == b {
            Ok(self.derivative_along(field, a, 2))
        } else {
            let fb = self.derivative_along(field, b, 1);
            Ok(self.derivative_along(&fb, a, 1))
        }
    }

    /// Largest jump across the periodic seam and largest interior increment.
    pub fn seam_jump(&self, field: &[f64], axis: usize) -> Result<(f64, f64)> {
        self.check_shape(field, axis)?;
        let n = self.n;
        let mut jump: f64 = 0.0;
        let mut interior: f64 = 0.0;
        for (start, stride) in self.lines(axis) {
            for j in 0..n - 1 {
                let d = field[start + (j + 1) * stride] - field[start + j * stride];
                interior = interior.max(d.abs());
            }
            jump = jump.max((field[start] - field[start + (n - 1) * stride]).abs());
        }
        Ok((jump, interior))
    }

    /// Rejects fields whose seam jump is far larger than any interior step.
    pub fn check_periodic(&self, field: &[f64], axis: usize) -> Result<()> {
        let (jump, interior) = self.seam_jump(field, axis)?;
        let scale = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if jump > 3.0 * interior + 1e-12 * (1.0 + scale) {
            return Err(Error::NonPeriodic {
                axis,
                jump,
                interior,
            });
        }
        Ok(())
    }

    /// `Σ_x w_x f(x)`.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        assert_eq!(field.len(), self.len(), "field shape does not match grid");
        field.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }

    /// `div^g(tr_g K^M)` of the domain's difference tensor, per node.
    pub fn trace_k_divergence(&self) -> Result<Vec<f64>> {
        let m = self.m;
        let mut fluxes = vec![vec![0.0; self.len()]; m];
        for node in 0..self.len() {
            let k = self.domain.difference_tensor(self.coords(node))?;
            let gi = self.metric_inverse(node);
            for (c, flux) in fluxes.iter_mut().enumerate() {
                let mut t = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        t += gi[i * m + j] * k.get(c, i, j);
                    }
                }
                flux[node] = self.sqrt_det[node] * t;
            }
        }
        let mut div = vec![0.0; self.len()];
        for (c, flux) in fluxes.iter().enumerate() {
            let d = self.derivative_along(flux, c, 1);
            for (o, v) in div.iter_mut().zip(d) {
                *o += v;
            }
        }
        for (o, s) in div.iter_mut().zip(&self.sqrt_det) {
            *o /= s;
        }
        Ok(div)
    }

    /// Removes winding from a map component with period `period`, returning
    /// the periodic remainder and the per-axis slopes so that
    /// `u = remainder + Σ slope_a·x_a (mod period)`.
    pub fn deramp(&self, values: &[f64], period: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let wrap = |d: f64| d - period * (d / period).round();
        let mut un = values.to_vec();
        // axis 0 along the first line, then every axis-1 line from that row
        for j in 1..n {
            un[j] = un[j - 1] + wrap(values[j] - values[j - 1]);
        }
        if self.m == 2 {
            for i0 in 0..n {
                for i1 in 1..n {
                    let c = i0 + n * i1;
                    let p = i0 + n * (i1 - 1);
                    un[c] = un[p] + wrap(values[c] - values[p]);
                }
            }
        }
        let mut slopes = vec![0.0; self.m];
        for (a, slope) in slopes.iter_mut().enumerate() {
            let stride = n.pow(a as u32);
            let last = (n - 1) * stride;
            let total = un[last] - un[0] + wrap(values[0] - values[last]);
            let winding = (total / period).round();
            *slope = winding * period / self.lengths[a];
        }
        let rest = (0..self.len())
            .map(|node| {
                let x = self.coords(node);
                un[node] - (0..self.m).map(|a| slopes[a] * x[a]).sum::<f64>()
            })
            .collect();
        (rest, slopes)
    }
}
