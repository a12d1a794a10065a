//! Symmetric linear algebra helpers: eigendecomposition-backed inversion,
//! Cholesky whitening, and orthonormal frame construction.

use crate::error::{Error, Result};
use crate::sym::Sym2;
use nalgebra::{DMatrix, DVector};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// ascending (ties broken by original position, so the ordering is
/// deterministic).
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors, in the sorted order.
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    SymEigen { values, vectors }
}

/// Invert a symmetric matrix through its eigendecomposition, also returning
/// the smallest eigenvalue (signed). Errors when the smallest absolute
/// eigenvalue is negligible against the largest.
pub fn invert_sym(m: &Sym2) -> Result<(Sym2, f64)> {
    let n = m.dim();
    let eig = sym_eigen(&m.to_dmatrix());
    let max_abs = eig.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min_abs = eig.values.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if max_abs == 0.0 || min_abs / max_abs < 1e-14 {
        return Err(Error::SingularMetric { ratio: if max_abs == 0.0 { 0.0 } else { min_abs / max_abs } });
    }
    let mut inv = DMatrix::zeros(n, n);
    for i in 0..n {
        let vi = eig.vectors.column(i);
        let li = 1.0 / eig.values[i];
        for j in 0..n {
            for k in 0..n {
                inv[(j, k)] += li * vi[j] * vi[k];
            }
        }
    }
    let eig_min = eig.values[0];
    let sym = Sym2::from_dmatrix(&inv, f64::INFINITY).expect("inverse of symmetric is symmetric");
    Ok((sym, eig_min))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn eig_min(m: &Sym2) -> f64 {
    sym_eigen(&m.to_dmatrix()).values[0]
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite { what })
}

/// Whitening data for an inner product `r = L L^T`: coordinates
/// `z = L^T y` make `r` the identity; `y = W z` with `W = L^{-T}`.
#[derive(Debug, Clone)]
pub struct Whitening {
    pub l: DMatrix<f64>,
    pub lt: DMatrix<f64>,
    /// `W = L^{-T}`, the matrix sending whitened coordinates back.
    pub w: DMatrix<f64>,
}

pub fn whitening(r: &DMatrix<f64>) -> Result<Whitening> {
    let l = cholesky_lower(r, "inner product")?;
    let lt = l.transpose();
    let w = lt
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { what: "inner product (Cholesky factor)" })?;
    Ok(Whitening { l, lt, w })
}

impl Whitening {
    /// Push a fiber vector into whitened coordinates: `z = L^T y`.
    pub fn to_white(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.lt * y
    }

    /// Pull a whitened vector back: `y = W z`.
    pub fn from_white(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.w * z
    }

    /// Transform a covariant symmetric 2-tensor into whitened coordinates:
    /// `t_white = W^T t W`.
    pub fn cov2_to_white(&self, t: &DMatrix<f64>) -> DMatrix<f64> {
        self.w.transpose() * t * &self.w
    }
}

/// Orthonormal basis whose last column is the given unit vector (Euclidean),
/// built from a Householder reflection. Input need not be normalized.
pub fn frame_with_last_axis(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = v.len();
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector { what: "frame axis" });
    }
    let u = v / norm;
    let mut en = DVector::zeros(n);
    en[n - 1] = 1.0;
    // Reflect e_n onto u (or -u when they are nearly opposite, for stability).
    let sign = if u[n - 1] >= 0.0 { 1.0 } else { -1.0 };
    let w = &u * sign - &en;
    let wn2 = w.norm_squared();
    let mut q = DMatrix::identity(n, n);
    if wn2 > 1e-30 {
        q -= (&w * w.transpose()) * (2.0 / wn2);
    }
    // q maps e_n to sign * u; flip the last column if needed so it equals u.
    if sign < 0.0 {
        for i in 0..n {
            let v = -q[(i, n - 1)];
            q[(i, n - 1)] = v;
        }
    }
    Ok(q)
}

/// Generalized symmetric eigenproblem `s v = lambda r v` for symmetric `s`
/// and SPD `r`: eigenvalues of the endomorphism `r^{-1} s`, with
/// eigenvectors returned in the original (un-whitened) coordinates.
pub fn generalized_eigen(s: &DMatrix<f64>, white: &Whitening) -> SymEigen {
    // In whitened coordinates the problem becomes ordinary symmetric:
    // M = W^T s W (covariant transform of s).
    let m = white.cov2_to_white(s);
    let eig = sym_eigen(&m);
    let vectors = &white.w * &eig.vectors;
    SymEigen { values: eig.values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inversion_via_eigen_matches_identity_product() {
        let mut g = Sym2::zeros(3);
        g.set(0, 0, 2.0);
        g.set(1, 1, 3.0);
        g.set(2, 2, 1.5);
        g.set(0, 1, 0.4);
        g.set(1, 2, -0.2);
        let (inv, emin) = invert_sym(&g).unwrap();
        assert!(emin > 0.0);
        let prod = g.to_dmatrix() * inv.to_dmatrix();
        for j in 0..3 {
            for k in 0..3 {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert_relative_eq!(prod[(j, k)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn whitening_maps_inner_product_to_identity() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let w = whitening(&r).unwrap();
        let r_white = w.cov2_to_white(&r);
        for j in 0..2 {
            for k in 0..2 {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert_relative_eq!(r_white[(j, k)], expect, epsilon = 1e-12);
            }
        }
        // Round trip of a vector.
        let y = DVector::from_row_slice(&[0.7, -1.2]);
        let back = w.from_white(&w.to_white(&y));
        assert_relative_eq!((back - y).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn frame_last_axis_is_orthonormal_and_aligned() {
        for v in [
            DVector::from_row_slice(&[0.0, 0.0, 1.0]),
            DVector::from_row_slice(&[0.0, 0.0, -2.0]),
            DVector::from_row_slice(&[1.0, -1.0, 0.5]),
        ] {
            let q = frame_with_last_axis(&v).unwrap();
            let qtq = q.transpose() * &q;
            for j in 0..3 {
                for k in 0..3 {
                    let expect = if j == k { 1.0 } else { 0.0 };
                    assert_relative_eq!(qtq[(j, k)], expect, epsilon = 1e-12);
                }
            }
            let unit = &v / v.norm();
            for j in 0..3 {
                assert_relative_eq!(q[(j, 2)], unit[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn generalized_eigen_recovers_planted_spectrum() {
        // r = diag(4, 1); s chosen so r^{-1} s has eigenvalues 0.5 and 0.
        let r = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let w = whitening(&r).unwrap();
        let eig = generalized_eigen(&s, &w);
        assert_relative_eq!(eig.values[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(eig.values[1], 0.5, epsilon = 1e-12);
    }
}
