//! Per-node target geometry evaluated along a map: `h(u)`, `Γ^N(u)`, `R^N(u)`,
//! the map jet `∂u`, `∂²u`, and the pullback connection matrices.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::Result;
use crate::fields::{MapField, Section};
use crate::geometry::{ChartManifold, Christoffel, CurvatureTensor};
use crate::grid::DomainGrid;

#[derive(Debug, Clone)]
pub struct PullbackGeometry {
    grid: Arc<DomainGrid>,
    target: Arc<ChartManifold>,
    d: usize,
    m: usize,
    du: Vec<f64>,
    ddu: Vec<f64>,
    h: Vec<f64>,
    gamma: Vec<Christoffel>,
    curvature: Option<Vec<CurvatureTensor>>,
    conn: Vec<f64>,
    dual_conn: Option<Vec<f64>>,
}

struct NodeData {
    h: Vec<f64>,
    gamma: Christoffel,
    curvature: Option<CurvatureTensor>,
    dual: Option<Christoffel>,
}

impl PullbackGeometry {
    /// Evaluates the target geometry at every node. Curvature and the dual
    /// connection are only needed by the Jacobi operator.
    pub fn new(u: &MapField, with_curvature: bool) -> Result<Self> {
        let grid = u.grid().clone();
        let target = u.target().clone();
        let d = target.dim();
        let m = grid.dim();
        let nodes = grid.len();

        let data: Vec<NodeData> = (0..nodes)
            .into_par_iter()
            .map(|node| {
                let p = u.value(node);
                let at = |e: crate::Error| e.at_node(node);
                let h = target.metric(p).map_err(at)?;
                let gamma = target.christoffel(p).map_err(at)?;
                let (curvature, dual) = if with_curvature {
                    (
                        Some(target.curvature(p).map_err(at)?),
                        Some(target.dual_connection(p).map_err(at)?),
                    )
                } else {
                    (None, None)
                };
                Ok(NodeData {
                    h: h.transpose().as_slice().to_vec(),
                    gamma,
                    curvature,
                    dual,
                })
            })
            .collect::<Result<_>>()?;

        let mut du = vec![0.0; nodes * m * d];
        let mut ddu = vec![0.0; nodes * m * m * d];
        for c in 0..d {
            let comp: Vec<f64> = (0..nodes).map(|i| u.values()[i * d + c]).collect();
            let (rest, slopes) = match target.period(c) {
                Some(p) => grid.deramp(&comp, p),
                None => (comp, vec![0.0; m]),
            };
            for a in 0..m {
                let first = grid.partial(&rest, a)?;
                for (node, v) in first.iter().enumerate() {
                    du[(node * m + a) * d + c] = v + slopes[a];
                }
                for b in a..m {
                    let second = grid.second(&rest, a, b)?;
                    for (node, v) in second.iter().enumerate() {
                        ddu[((node * m + a) * m + b) * d + c] = *v;
                        ddu[((node * m + b) * m + a) * d + c] = *v;
                    }
                }
            }
        }

        // (A_a)^γ_β = Γ^γ_{αβ} ∂_a u^α
        let matrices = |gamma: &dyn for<'a> Fn(&'a [NodeData], usize) -> &'a Christoffel| {
            let mut conn = vec![0.0; nodes * m * d * d];
            for node in 0..nodes {
                let g = gamma(&data, node);
                for a in 0..m {
                    let dua = &du[(node * m + a) * d..(node * m + a + 1) * d];
                    let base = (node * m + a) * d * d;
                    for k in 0..d {
                        for b in 0..d {
                            conn[base + k * d + b] = (0..d).map(|al| g.get(k, al, b) * dua[al]).sum();
                        }
                    }
                }
            }
            conn
        };
        let conn = matrices(&|data, node| &data[node].gamma);
        let dual_conn = with_curvature.then(|| matrices(&|data, node| data[node].dual.as_ref().expect("dual evaluated")));

        let mut h = Vec::with_capacity(nodes * d * d);
        let mut gamma = Vec::with_capacity(nodes);
        let mut curvature = with_curvature.then(|| Vec::with_capacity(nodes));
        for nd in data {
            h.extend(nd.h);
            gamma.push(nd.gamma);
            if let (Some(list), Some(r)) = (curvature.as_mut(), nd.curvature) {
                list.push(r);
            }
        }
        Ok(Self {
            grid,
            target,
            d,
            m,
            du,
            ddu,
            h,
            gamma,
            curvature,
            conn,
            dual_conn,
        })
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn target(&self) -> &Arc<ChartManifold> {
        &self.target
    }

    pub fn target_dim(&self) -> usize {
        self.d
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    /// `∂_a u` at a node.
    pub fn du(&self, node: usize, a: usize) -> &[f64] {
        let s = (node * self.m + a) * self.d;
        &self.du[s..s + self.d]
    }

    pub fn ddu(&self, node: usize, a: usize, b: usize) -> &[f64] {
        let s = ((node * self.m + a) * self.m + b) * self.d;
        &self.ddu[s..s + self.d]
    }

    /// Target metric at `u(node)`, row-major `d×d`.
    pub fn h(&self, node: usize) -> &[f64] {
        &self.h[node * self.d * self.d..(node + 1) * self.d * self.d]
    }

    pub fn gamma(&self, node: usize) -> &Christoffel {
        &self.gamma[node]
    }

    pub fn curvature(&self, node: usize) -> Option<&CurvatureTensor> {
        self.curvature.as_ref().map(|r| &r[node])
    }

    /// Pullback connection matrix `A_a` at a node, row-major.
    pub fn connection_matrix(&self, node: usize, a: usize) -> &[f64] {
        let s = (node * self.m + a) * self.d * self.d;
        &self.conn[s..s + self.d * self.d]
    }

    /// Pullback matrix of the dual connection, when evaluated.
    pub fn dual_connection_matrix(&self, node: usize, a: usize) -> Option<&[f64]> {
        let s = (node * self.m + a) * self.d * self.d;
        self.dual_conn.as_ref().map(|c| &c[s..s + self.d * self.d])
    }

    pub fn inner(&self, node: usize, x: &[f64], y: &[f64]) -> f64 {
        let h = self.h(node);
        let d = self.d;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += h[i * d + j] * x[i] * y[j];
            }
        }
        s
    }

    /// `∫_M h(V, W) dvol_g`.
    pub fn l2_inner(&self, v: &Section, w: &Section) -> f64 {
        let weights = self.grid.weights();
        (0..self.nodes())
            .map(|node| weights[node] * self.inner(node, v.at(node), w.at(node)))
            .sum()
    }

    pub fn l2_norm(&self, v: &Section) -> f64 {
        self.l2_inner(v, v).max(0.0).sqrt()
    }

    /// Pullback covariant derivative `∇̃_a V = ∂_a V + A_a V`.
    pub fn covariant_derivative(&self, v: &Section, a: usize) -> Result<Section> {
        let d = self.d;
        let mut out = self.apply_connection(v, a);
        for c in 0..d {
            let dv = self.grid.partial(&v.component(c), a)?;
            for (node, x) in dv.iter().enumerate() {
                out.values_mut()[node * d + c] += x;
            }
        }
        Ok(out)
    }

    /// `A_a V` pointwise.
    pub fn apply_connection(&self, v: &Section, a: usize) -> Section {
        let d = self.d;
        let mut out = Section::zeros(self.nodes(), d);
        for node in 0..self.nodes() {
            let am = self.connection_matrix(node, a);
            let vn = v.at(node);
            for k in 0..d {
                out.values_mut()[node * d + k] = (0..d).map(|b| am[k * d + b] * vn[b]).sum();
            }
        }
        out
    }
}
