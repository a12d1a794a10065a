//! Packed symmetric rank-2 and rank-3 containers.
//!
//! Both types store only canonical entries (`j <= k` resp. `j <= k <= l`),
//! so symmetry holds by construction: reading any index permutation returns
//! the identical scalar because all permutations map to the same slot.

use nalgebra::DMatrix;

/// Number of canonical entries of a symmetric `n x n` matrix.
pub fn len2(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Number of canonical entries of a totally symmetric `n x n x n` tensor.
pub fn len3(n: usize) -> usize {
    n * (n + 1) * (n + 2) / 6
}

/// Packed slot of the ordered pair `(j, k)`, `j <= k`, row-major upper triangle.
#[inline]
pub fn idx2(n: usize, j: usize, k: usize) -> usize {
    debug_assert!(j <= k && k < n);
    j * n - j * (j + 1) / 2 + k
}

/// Packed slot of the ordered triple `(j, k, l)`, `j <= k <= l`.
#[inline]
pub fn idx3(n: usize, j: usize, k: usize, l: usize) -> usize {
    debug_assert!(j <= k && k <= l && l < n);
    // Entries with first index < j occupy sum_{i<j} len2(n - i) slots; the
    // remainder is the rank-2 packing of (k - j, l - j) in dimension n - j.
    let mut off = 0;
    for i in 0..j {
        off += len2(n - i);
    }
    off + idx2(n - j, k - j, l - j)
}

fn sort2(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn sort3(a: usize, b: usize, c: usize) -> (usize, usize, usize) {
    let (x, y) = sort2(a, b);
    if c >= y {
        (x, y, c)
    } else if c >= x {
        (x, c, y)
    } else {
        (c, x, y)
    }
}

/// Symmetric `n x n` matrix in packed storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Sym2 {
    n: usize,
    data: Vec<f64>,
}

impl Sym2 {
    pub fn zeros(n: usize) -> Self {
        Sym2 { n, data: vec![0.0; len2(n)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Read with arbitrary index order.
    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        let (j, k) = sort2(j, k);
        self.data[idx2(self.n, j, k)]
    }

    /// Write with arbitrary index order (all permutations share the slot).
    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: f64) {
        let (j, k) = sort2(j, k);
        self.data[idx2(self.n, j, k)] = v;
    }

    #[inline]
    pub fn add_to(&mut self, j: usize, k: usize, v: f64) {
        let (j, k) = sort2(j, k);
        self.data[idx2(self.n, j, k)] += v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, c: f64) -> Sym2 {
        Sym2 { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &Sym2) -> Sym2 {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Sym2 { n: self.n, data }
    }

    pub fn sub(&self, other: &Sym2) -> Sym2 {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Sym2 { n: self.n, data }
    }

    /// Symmetric outer product `u u^T`.
    pub fn outer(u: &[f64]) -> Sym2 {
        let n = u.len();
        let mut m = Sym2::zeros(n);
        for j in 0..n {
            for k in j..n {
                m.set(j, k, u[j] * u[k]);
            }
        }
        m
    }

    /// Contraction `sum_{jk} A^{jk} B_{jk}` of two symmetric matrices.
    pub fn full_contract(&self, other: &Sym2) -> f64 {
        assert_eq!(self.n, other.n);
        let mut acc = 0.0;
        for j in 0..self.n {
            for k in 0..self.n {
                acc += self.get(j, k) * other.get(j, k);
            }
        }
        acc
    }

    /// Matrix-vector product treating the packed data as a full matrix.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.n, v.len());
        (0..self.n)
            .map(|j| (0..self.n).map(|k| self.get(j, k) * v[k]).sum())
            .collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |j, k| self.get(j, k))
    }

    /// Build from a dense matrix, requiring symmetry within `tol` (max
    /// absolute asymmetry); canonical entries are taken from the upper
    /// triangle.
    pub fn from_dmatrix(m: &DMatrix<f64>, tol: f64) -> Option<Sym2> {
        let n = m.nrows();
        if m.ncols() != n {
            return None;
        }
        let mut dev = 0.0_f64;
        for j in 0..n {
            for k in j + 1..n {
                dev = dev.max((m[(j, k)] - m[(k, j)]).abs());
            }
        }
        if dev > tol {
            return None;
        }
        let mut s = Sym2::zeros(n);
        for j in 0..n {
            for k in j..n {
                s.set(j, k, m[(j, k)]);
            }
        }
        Some(s)
    }
}

/// Totally symmetric `n x n x n` tensor in packed storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Sym3 {
    n: usize,
    data: Vec<f64>,
}

impl Sym3 {
    pub fn zeros(n: usize) -> Self {
        Sym3 { n, data: vec![0.0; len3(n)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize, l: usize) -> f64 {
        let (j, k, l) = sort3(j, k, l);
        self.data[idx3(self.n, j, k, l)]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, l: usize, v: f64) {
        let (j, k, l) = sort3(j, k, l);
        self.data[idx3(self.n, j, k, l)] = v;
    }

    #[inline]
    pub fn add_to(&mut self, j: usize, k: usize, l: usize, v: f64) {
        let (j, k, l) = sort3(j, k, l);
        self.data[idx3(self.n, j, k, l)] += v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, c: f64) -> Sym3 {
        Sym3 { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &Sym3) -> Sym3 {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Sym3 { n: self.n, data }
    }

    pub fn sub(&self, other: &Sym3) -> Sym3 {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Sym3 { n: self.n, data }
    }

    /// Cyclic symmetrization `u_j m_kl + u_k m_lj + u_l m_jk` of a covector
    /// against a symmetric matrix. The result is totally symmetric.
    pub fn cyclic_outer(u: &[f64], m: &Sym2) -> Sym3 {
        let n = u.len();
        assert_eq!(n, m.dim());
        let mut t = Sym3::zeros(n);
        for j in 0..n {
            for k in j..n {
                for l in k..n {
                    t.set(j, k, l, u[j] * m.get(k, l) + u[k] * m.get(l, j) + u[l] * m.get(j, k));
                }
            }
        }
        t
    }

    /// Iterate canonical triples `(j, k, l)` with their values.
    pub fn iter_canonical(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |j| {
            (j..n).flat_map(move |k| (k..n).map(move |l| ((j, k, l), self.get(j, k, l))))
        })
    }

    /// Contraction `sum_{kl} A^{kl} T_{jkl}` producing a covector.
    pub fn contract_sym2(&self, a: &Sym2) -> Vec<f64> {
        assert_eq!(self.n, a.dim());
        (0..self.n)
            .map(|j| {
                let mut acc = 0.0;
                for k in 0..self.n {
                    for l in 0..self.n {
                        acc += a.get(k, l) * self.get(j, k, l);
                    }
                }
                acc
            })
            .collect()
    }

    /// Contraction with a vector in the first slot: `sum_j v^j T_{jkl}`.
    pub fn contract_vec(&self, v: &[f64]) -> Sym2 {
        assert_eq!(self.n, v.len());
        let mut m = Sym2::zeros(self.n);
        for k in 0..self.n {
            for l in k..self.n {
                let mut acc = 0.0;
                for j in 0..self.n {
                    acc += v[j] * self.get(j, k, l);
                }
                m.set(k, l, acc);
            }
        }
        m
    }
}

pub fn max_abs_vec(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
