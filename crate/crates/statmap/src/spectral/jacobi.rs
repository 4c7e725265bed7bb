use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::fields::{MapField, Section};
use crate::grid::DomainGrid;
use crate::pullback::PullbackGeometry;
use crate::variational::{energy_of, tension_of, tension_sup, VariationFamily};

/// Relative threshold of the harmonicity gate.
pub const HARMONICITY_GATE: f64 = 1e-4;

/// `J_u = Δ̄_u − ℜ^u` along a fixed map, with the target geometry cached.
#[derive(Debug, Clone)]
pub struct JacobiOperator {
    pb: PullbackGeometry,
    tension_sup: f64,
    energy: f64,
    harmonic: bool,
    /// Whether `g^{ij}` vanishes identically off the diagonal.
    diagonal_metric: bool,
    /// `M_ij = w g^{ij} h` per node, indexed by `i·m + j`.
    coef: Vec<Vec<f64>>,
    /// `∂_i² M_ii` per node, indexed by `i`.
    d2coef: Vec<Vec<f64>>,
    /// `(w h)⁻¹` per node.
    wh_inv: Vec<f64>,
}

impl JacobiOperator {
    pub fn new(u: &MapField) -> Result<Self> {
        let pb = PullbackGeometry::new(u, true)?;
        let tau = tension_of(&pb);
        let sup = tension_sup(&pb, &tau);
        let energy = energy_of(&pb);
        let grid = pb.grid();
        let m = grid.dim();
        let diagonal_metric = (0..grid.len()).all(|node| {
            let gi = grid.metric_inverse(node);
            (0..m).all(|i| (0..m).all(|j| i == j || gi[i * m + j] == 0.0))
        });
        let harmonic = sup < HARMONICITY_GATE * energy_scale(energy, grid.volume());

        let d = pb.target_dim();
        let dd = d * d;
        let nodes = grid.len();
        let weights = grid.weights();
        let mut coef = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let mut c = vec![0.0; nodes * dd];
                for node in 0..nodes {
                    let s = weights[node] * grid.metric_inverse(node)[i * m + j];
                    for (o, h) in c[node * dd..(node + 1) * dd].iter_mut().zip(pb.h(node)) {
                        *o = s * h;
                    }
                }
                coef.push(c);
            }
        }
        let mut d2coef = Vec::with_capacity(m);
        for i in 0..m {
            let c = &coef[i * m + i];
            let mut out = vec![0.0; nodes * dd];
            for e in 0..dd {
                let field: Vec<f64> = (0..nodes).map(|node| c[node * dd + e]).collect();
                for (node, x) in grid.second(&field, i, i)?.into_iter().enumerate() {
                    out[node * dd + e] = x;
                }
            }
            d2coef.push(out);
        }
        let mut wh_inv = Vec::with_capacity(nodes * dd);
        for node in 0..nodes {
            let wh = DMatrix::from_row_slice(d, d, pb.h(node)) * weights[node];
            let inv = wh
                .try_inverse()
                .ok_or_else(|| crate::Error::Numeric(format!("singular target metric at node {node}")))?;
            wh_inv.extend(inv.transpose().iter());
        }
        Ok(Self {
            pb,
            tension_sup: sup,
            energy,
            harmonic,
            diagonal_metric,
            coef,
            d2coef,
            wh_inv,
        })
    }

    pub fn geometry(&self) -> &PullbackGeometry {
        &self.pb
    }

    pub fn tension_sup(&self) -> f64 {
        self.tension_sup
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `‖τ‖_∞` is below the gate, so Hessian semantics apply.
    pub fn is_harmonic(&self) -> bool {
        self.harmonic
    }

    pub fn ndof(&self) -> usize {
        self.pb.nodes() * self.pb.target_dim()
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let m = self.pb.grid().dim();
        (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|(i, j)| i == j || !self.diagonal_metric)
            .collect()
    }

    /// `Δ̄V = −g^{ij}(∇̃_i∇̃_j V − Γ^{M,k}_{ij}∇̃_k V)`, evaluated in the
    /// equivalent weak form `(w h)⁻¹ Σ (−∂_i + A*_iᵀ)(w g^{ij} h ∇̃_j V)`
    /// with `A*` the pullback of the dual connection. The discrete operator
    /// is then exactly self-adjoint in `∫h` whenever `∇ = ∇*`. The
    /// second-order part uses `−(Mf')' = −½((Mf)'' + Mf'' − M''f)` so the
    /// Nyquist modes keep their stencil.
    pub fn rough_laplacian(&self, v: &Section) -> Result<Section> {
        let raw = self.weighted_laplacian(v)?;
        let d = self.pb.target_dim();
        let mut out = Section::zeros(self.pb.nodes(), d);
        for node in 0..self.pb.nodes() {
            let inv = &self.wh_inv[node * d * d..(node + 1) * d * d];
            mat_vec_add(inv, &raw[node * d..(node + 1) * d], &mut out.values_mut()[node * d..(node + 1) * d], 1.0);
        }
        Ok(out)
    }

    /// `Wt·Δ̄V` node by node.
    fn weighted_laplacian(&self, v: &Section) -> Result<Vec<f64>> {
        let pb = &self.pb;
        let grid = pb.grid();
        let m = grid.dim();
        let d = pb.target_dim();
        let nodes = pb.nodes();
        let dd = d * d;
        let dv: Vec<Section> = (0..m).map(|a| derivative(grid, v, a, 1)).collect::<Result<_>>()?;
        let mut raw = vec![0.0; nodes * d];

        for (i, j) in self.pairs() {
            let coef = &self.coef[i * m + j];
            let at = |node: usize| &coef[node * dd..(node + 1) * dd];
            if i == j {
                let mv = pointwise(nodes, d, |node, out| mat_vec_add(at(node), v.at(node), out, 1.0));
                let d2mv = derivative(grid, &mv, i, 2)?;
                let d2v = derivative(grid, v, i, 2)?;
                let d2m = &self.d2coef[i];
                for node in 0..nodes {
                    let r = &mut raw[node * d..(node + 1) * d];
                    for c in 0..d {
                        r[c] -= 0.5 * d2mv.at(node)[c];
                    }
                    mat_vec_add(at(node), d2v.at(node), r, -0.5);
                    mat_vec_add(&d2m[node * dd..(node + 1) * dd], v.at(node), r, 0.5);
                }
            } else {
                let mdv = pointwise(nodes, d, |node, out| mat_vec_add(at(node), dv[j].at(node), out, 1.0));
                let dmdv = derivative(grid, &mdv, i, 1)?;
                for (r, x) in raw.iter_mut().zip(dmdv.values()) {
                    *r -= x;
                }
            }
            let av = pb.apply_connection(v, j);
            let mav = pointwise(nodes, d, |node, out| mat_vec_add(at(node), av.at(node), out, 1.0));
            let dmav = derivative(grid, &mav, i, 1)?;
            for node in 0..nodes {
                let mut x = vec![0.0; d];
                for c in 0..d {
                    x[c] = dv[j].at(node)[c] + av.at(node)[c];
                }
                let mut mx = vec![0.0; d];
                mat_vec_add(at(node), &x, &mut mx, 1.0);
                let dual = pb.dual_connection_matrix(node, i).expect("dual connection cached");
                let r = &mut raw[node * d..(node + 1) * d];
                for c in 0..d {
                    r[c] -= dmav.at(node)[c];
                    // (A*_iᵀ M x)_c
                    r[c] += (0..d).map(|b| dual[b * d + c] * mx[b]).sum::<f64>();
                }
            }
        }
        Ok(raw)
    }

    /// `ℜ(V) = g^{ij} R(V, ∂_i u)∂_j u`.
    pub fn curvature_term(&self, v: &Section) -> Section {
        let pb = &self.pb;
        let grid = pb.grid();
        let m = grid.dim();
        let d = pb.target_dim();
        let mut out = Section::zeros(pb.nodes(), d);
        let mut buf = vec![0.0; d];
        for node in 0..pb.nodes() {
            let r = pb.curvature(node).expect("curvature cached");
            let gi = grid.metric_inverse(node);
            for (i, j) in self.pairs() {
                let gij = gi[i * m + j];
                r.apply(v.at(node), pb.du(node, i), pb.du(node, j), &mut buf);
                for c in 0..d {
                    out.values_mut()[node * d + c] += gij * buf[c];
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &Section) -> Result<Section> {
        let lap = self.rough_laplacian(v)?;
        Ok(lap.axpy(-1.0, &self.curvature_term(v)))
    }

    /// `∫ h(J V, W) dμ_g`.
    pub fn hessian(&self, v: &Section, w: &Section) -> Result<f64> {
        let raw = self.weighted_laplacian(v)?;
        let lap: f64 = raw.iter().zip(w.values()).map(|(a, b)| a * b).sum();
        Ok(lap - self.pb.l2_inner(&self.curvature_term(v), w))
    }
}

/// `out += s·A x` for a row-major `d×d` matrix.
fn mat_vec_add(a: &[f64], x: &[f64], out: &mut [f64], s: f64) {
    let d = x.len();
    for r in 0..d {
        out[r] += s * (0..d).map(|c| a[r * d + c] * x[c]).sum::<f64>();
    }
}

fn pointwise(nodes: usize, d: usize, f: impl Fn(usize, &mut [f64])) -> Section {
    let mut out = Section::zeros(nodes, d);
    for node in 0..nodes {
        f(node, &mut out.values_mut()[node * d..(node + 1) * d]);
    }
    out
}

/// Componentwise derivative of order 1 or 2 along `axis`.
fn derivative(grid: &DomainGrid, v: &Section, axis: usize, order: usize) -> Result<Section> {
    let d = v.dim();
    let mut out = Section::zeros(v.nodes(), d);
    for c in 0..d {
        let comp = v.component(c);
        let dc = if order == 1 { grid.partial(&comp, axis)? } else { grid.second(&comp, axis, axis)? };
        out.set_component(c, &dc);
    }
    Ok(out)
}

/// Energy scale of the harmonicity gate: the root-mean-square `|du|`, floored at 1.
pub fn energy_scale(energy: f64, volume: f64) -> f64 {
    (2.0 * energy / volume).max(0.0).sqrt().max(1.0)
}

pub fn rough_laplacian(u: &MapField, v: &Section) -> Result<Section> {
    u.check_section(v)?;
    JacobiOperator::new(u)?.rough_laplacian(v)
}

pub fn curvature_term(u: &MapField, v: &Section) -> Result<Section> {
    u.check_section(v)?;
    Ok(JacobiOperator::new(u)?.curvature_term(v))
}

pub fn jacobi_apply(u: &MapField, v: &Section) -> Result<Section> {
    u.check_section(v)?;
    JacobiOperator::new(u)?.apply(v)
}

/// Hessian value tagged with the harmonicity gate of the base map.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HessianValue {
    pub value: f64,
    pub harmonicity_gate: bool,
}

pub fn hessian(u: &MapField, v: &Section, w: &Section) -> Result<HessianValue> {
    u.check_section(v)?;
    u.check_section(w)?;
    let op = JacobiOperator::new(u)?;
    Ok(HessianValue {
        value: op.hessian(v, w)?,
        harmonicity_gate: op.is_harmonic(),
    })
}

/// Mixed central difference of `E(u_{s,t})` against the operator Hessian.
#[derive(Debug, Clone, Serialize)]
pub struct HessianCheck {
    pub finite_difference: f64,
    pub operator: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub step: f64,
    pub harmonicity_gate: bool,
    pub passed: bool,
}

pub const DEFAULT_HESSIAN_STEP: f64 = 1e-3;

pub fn hessian_check(op: &JacobiOperator, fam: &VariationFamily, step: f64) -> Result<HessianCheck> {
    let e = |s: f64, t: f64| -> Result<f64> { Ok(energy_of(&PullbackGeometry::new(&fam.at(s, t)?, false)?)) };
    let h = step;
    let fd = (e(h, h)? - e(h, -h)? - e(-h, h)? + e(-h, -h)?) / (4.0 * h * h);
    let value = op.hessian(fam.v(), fam.w())?;
    let residual = (fd - value).abs();
    let tolerance = 1e-4 * (1.0 + value.abs());
    Ok(HessianCheck {
        finite_difference: fd,
        operator: value,
        residual,
        tolerance,
        step,
        harmonicity_gate: op.is_harmonic(),
        passed: residual <= tolerance,
    })
}
