/// Components of a (1,2)-tensor `T^k_ij` on a `d`-dimensional chart, stored as `[k][i][j]`.
///
/// Used both for Christoffel symbols and for the difference tensor `K = ∇ − ∇^LC`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

/// The difference tensor has the same index layout as a connection.
pub type DifferenceTensor = Christoffel;

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    /// Sets `T^k_ij` and `T^k_ji` together; connections here are torsion free.
    #[inline]
    pub fn set_sym(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let d = self.dim;
        self.data[(k * d + i) * d + j] = v;
        self.data[(k * d + j) * d + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `T^k_ij a^i b^j` for each `k`.
    pub fn contract(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (k, o) in out.iter_mut().enumerate().take(d) {
            let mut s = 0.0;
            for i in 0..d {
                if a[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    s += self.get(k, i, j) * a[i] * b[j];
                }
            }
            *o = s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Elementwise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }
}

/// Curvature components `R^l_ijk`, with `R(∂_i, ∂_j)∂_k = R^l_ijk ∂_l` and
/// `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTensor {
    dim: usize,
    data: Vec<f64>,
}

impl CurvatureTensor {
    /// Builds `R^l_ijk = ∂_iΓ^l_jk − ∂_jΓ^l_ik + Γ^l_im Γ^m_jk − Γ^l_jm Γ^m_ik`
    /// from a connection and its coordinate derivatives (`dgamma[a] = ∂_a Γ`).
    pub fn from_connection(gamma: &Christoffel, dgamma: &[Christoffel]) -> Self {
        let d = gamma.dim();
        let mut data = vec![0.0; d * d * d * d];
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let mut r = dgamma[i].get(l, j, k) - dgamma[j].get(l, i, k);
                        for m in 0..d {
                            r += gamma.get(l, i, m) * gamma.get(m, j, k)
                                - gamma.get(l, j, m) * gamma.get(m, i, k);
                        }
                        data[((l * d + i) * d + j) * d + k] = r;
                    }
                }
            }
        }
        Self { dim: d, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let d = self.dim;
        self.data[((l * d + i) * d + j) * d + k]
    }

    /// Vector `R(x, y)z`.
    pub fn apply(&self, x: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (l, o) in out.iter_mut().enumerate().take(d) {
            let mut s = 0.0;
            for i in 0..d {
                if x[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    if y[j] == 0.0 {
                        continue;
                    }
                    for k in 0..d {
                        s += self.get(l, i, j, k) * x[i] * y[j] * z[k];
                    }
                }
            }
            *o = s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max |R^l_ijk + R^l_jik|`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        m = m.max((self.get(l, i, j, k) + self.get(l, j, i, k)).abs());
                    }
                }
            }
        }
        m
    }
}
