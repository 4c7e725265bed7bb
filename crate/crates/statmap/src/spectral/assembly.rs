use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::jacobi::JacobiOperator;
use crate::error::{Error, Result};
use crate::fields::Section;

pub const DEFAULT_DOF_CAP: usize = 6000;

/// Dense matrix of `J_u` in the per-node coordinate basis, with the
/// block-diagonal quadrature weight `Wt = diag(w_x·h(u(x)))`.
#[derive(Debug, Clone)]
pub struct JacobiAssembly {
    a: DMatrix<f64>,
    weight_blocks: Vec<DMatrix<f64>>,
    dim: usize,
}

impl JacobiAssembly {
    pub fn new(op: &JacobiOperator, cap: usize) -> Result<Self> {
        let ndof = op.ndof();
        if ndof > cap {
            return Err(Error::SizeCap { ndof, cap });
        }
        let pb = op.geometry();
        let d = pb.target_dim();
        let nodes = pb.nodes();
        let columns: Vec<Vec<f64>> = (0..ndof)
            .into_par_iter()
            .map(|k| {
                let mut e = Section::zeros(nodes, d);
                e.values_mut()[k] = 1.0;
                op.apply(&e).map(Section::into_values)
            })
            .collect::<Result<_>>()?;
        let a = DMatrix::from_fn(ndof, ndof, |i, j| columns[j][i]);
        let weights = pb.grid().weights();
        let weight_blocks = (0..nodes)
            .map(|node| DMatrix::from_row_slice(d, d, pb.h(node)) * weights[node])
            .collect();
        Ok(Self {
            a,
            weight_blocks,
            dim: d,
        })
    }

    pub fn ndof(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn weight_blocks(&self) -> &[DMatrix<f64>] {
        &self.weight_blocks
    }

    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mut wt = DMatrix::zeros(self.ndof(), self.ndof());
        for (node, blk) in self.weight_blocks.iter().enumerate() {
            wt.view_mut((node * d, node * d), (d, d)).copy_from(blk);
        }
        wt
    }

    /// `Wt·A`, the matrix of the bilinear form `(V, W) ↦ ∫h(W, J V)`.
    pub fn weighted(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mut wa = DMatrix::zeros(self.ndof(), self.ndof());
        for (node, blk) in self.weight_blocks.iter().enumerate() {
            let rows = self.a.rows(node * d, d);
            wa.rows_mut(node * d, d).copy_from(&(blk * rows));
        }
        wa
    }

    /// `B = ½(Wt·A + (Wt·A)ᵀ)`.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let wa = self.weighted();
        (&wa + wa.transpose()) * 0.5
    }

    /// `‖Wt·A − (Wt·A)ᵀ‖_F / ‖Wt·A‖_F`.
    pub fn asymmetry(&self) -> f64 {
        let wa = self.weighted();
        let norm = wa.norm();
        if norm == 0.0 {
            0.0
        } else {
            (&wa - wa.transpose()).norm() / norm
        }
    }

    pub fn apply(&self, v: &Section) -> Section {
        let out = &self.a * DVector::from_column_slice(v.values());
        Section::new(self.dim, out.as_slice().to_vec())
    }

    /// Ascending eigenvalues of `B x = λ Wt x` via blockwise Cholesky of `Wt`.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let d = self.dim;
        let n = self.ndof();
        let mut linv = Vec::with_capacity(self.weight_blocks.len());
        for (node, blk) in self.weight_blocks.iter().enumerate() {
            let chol = blk.clone().cholesky().ok_or_else(|| {
                Error::Numeric(format!("weight block at node {node} is not positive definite"))
            })?;
            let l = chol.l();
            let inv = l.clone().try_inverse().ok_or_else(|| {
                Error::Numeric(format!("singular weight factor at node {node}"))
            })?;
            linv.push(inv);
        }
        let b = self.symmetrized();
        let mut c = DMatrix::zeros(n, n);
        for (x, lx) in linv.iter().enumerate() {
            for (y, ly) in linv.iter().enumerate() {
                let blk = b.view((x * d, y * d), (d, d));
                c.view_mut((x * d, y * d), (d, d)).copy_from(&(lx * blk * ly.transpose()));
            }
        }
        let c = (&c + c.transpose()) * 0.5;
        let eig = c.symmetric_eigen();
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "eigendecomposition produced non-finite values (weight condition {:.3e})",
                weight_condition(&self.weight_blocks)
            )));
        }
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }
}

fn weight_condition(blocks: &[DMatrix<f64>]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for b in blocks {
        for v in b.clone().symmetric_eigen().eigenvalues.iter() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    hi / lo
}

/// Fourier-diagonalized form of `J_u` when every coefficient of the operator
/// is the same at all nodes (constant maps, flat identities, great circles).
#[derive(Debug, Clone)]
pub struct CirculantJacobi {
    symbols: Vec<DMatrix<Complex64>>,
    weight: DMatrix<f64>,
}

/// Relative tolerance for treating per-node coefficients as equal.
const INVARIANCE_TOLERANCE: f64 = 1e-11;

impl CirculantJacobi {
    /// `None` when the operator coefficients vary across nodes.
    pub fn new(op: &JacobiOperator) -> Option<Self> {
        let pb = op.geometry();
        let grid = pb.grid();
        let m = grid.dim();
        let d = pb.target_dim();
        let n = grid.n();

        let data = |node: usize| -> Vec<f64> {
            let mut v = Vec::new();
            v.extend_from_slice(grid.metric_inverse(node));
            v.extend_from_slice(grid.christoffel(node).as_slice());
            v.push(grid.weights()[node]);
            v.extend_from_slice(pb.h(node));
            for a in 0..m {
                v.extend_from_slice(pb.du(node, a));
                v.extend_from_slice(pb.connection_matrix(node, a));
            }
            let r = pb.curvature(node).expect("curvature cached");
            for l in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            v.push(r.get(l, i, j, k));
                        }
                    }
                }
            }
            v
        };
        let base = data(0);
        let scale = base.iter().fold(1.0_f64, |s, x| s.max(x.abs()));
        for node in 1..grid.len() {
            let other = data(node);
            if base.iter().zip(&other).any(|(a, b)| (a - b).abs() > INVARIANCE_TOLERANCE * scale) {
                return None;
            }
        }

        let ginv = grid.metric_inverse(0);
        let gm = grid.christoffel(0);
        let id = DMatrix::<Complex64>::identity(d, d);
        let amat: Vec<DMatrix<Complex64>> = (0..m)
            .map(|a| DMatrix::from_row_slice(d, d, pb.connection_matrix(0, a)).map(|x| Complex64::new(x, 0.0)))
            .collect();
        let mut curv = DMatrix::<Complex64>::zeros(d, d);
        {
            let r = pb.curvature(0).expect("curvature cached");
            let mut buf = vec![0.0; d];
            for b in 0..d {
                let mut e = vec![0.0; d];
                e[b] = 1.0;
                for i in 0..m {
                    for j in 0..m {
                        r.apply(&e, pb.du(0, i), pb.du(0, j), &mut buf);
                        for c in 0..d {
                            curv[(c, b)] += Complex64::new(ginv[i * m + j] * buf[c], 0.0);
                        }
                    }
                }
            }
        }
        let trace_gamma: Vec<f64> = (0..m)
            .map(|k| (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| ginv[i * m + j] * gm.get(k, i, j)).sum())
            .collect();

        let modes = grid.len();
        let mut symbols = Vec::with_capacity(modes);
        for mode in 0..modes {
            let q: Vec<usize> = (0..m).map(|a| (mode / n.pow(a as u32)) % n).collect();
            let d1: Vec<Complex64> = (0..m).map(|a| grid.symbol(a, q[a], 1)).collect();
            let mut s = -curv.clone();
            for i in 0..m {
                for j in 0..m {
                    let gij = ginv[i * m + j];
                    if gij == 0.0 {
                        continue;
                    }
                    let second = if i == j { grid.symbol(i, q[i], 2) } else { d1[i] * d1[j] };
                    let term = &id * second + &amat[j] * d1[i] + &amat[i] * (&id * d1[j] + &amat[j]);
                    s -= term * Complex64::new(gij, 0.0);
                }
            }
            for k in 0..m {
                if trace_gamma[k] != 0.0 {
                    s += (&id * d1[k] + &amat[k]) * Complex64::new(trace_gamma[k], 0.0);
                }
            }
            symbols.push(s);
        }
        let weight = DMatrix::from_row_slice(d, d, pb.h(0)) * grid.weights()[0];
        Some(Self { symbols, weight })
    }

    pub fn ndof(&self) -> usize {
        self.symbols.len() * self.weight.nrows()
    }

    /// Per-mode symbol of `J_u`.
    pub fn symbols(&self) -> &[DMatrix<Complex64>] {
        &self.symbols
    }

    /// Same measure as `JacobiAssembly::asymmetry`, evaluated mode by mode.
    pub fn asymmetry(&self) -> f64 {
        let w = self.weight.map(|x| Complex64::new(x, 0.0));
        let mut num = 0.0;
        let mut den = 0.0;
        for s in &self.symbols {
            let ws = &w * s;
            num += (&ws - ws.adjoint()).norm_squared();
            den += ws.norm_squared();
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let chol = self
            .weight
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("weight block is not positive definite".into()))?;
        let linv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular weight factor".into()))?
            .map(|x| Complex64::new(x, 0.0));
        let w = self.weight.map(|x| Complex64::new(x, 0.0));
        let mut vals = Vec::with_capacity(self.ndof());
        for s in &self.symbols {
            let ws = &w * s;
            let b = (&ws + ws.adjoint()) * Complex64::new(0.5, 0.0);
            let c = &linv * b * linv.adjoint();
            let c = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
            vals.extend(c.symmetric_eigen().eigenvalues.iter().copied());
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("circulant eigendecomposition produced non-finite values".into()));
        }
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }
}
