//! Forward-mode truncated Taylor arithmetic of order 3 in `n` variables.
//!
//! A [`Jet3`] carries a value together with its first, second, and third
//! partial derivatives with respect to the fiber coordinates. Derivative
//! blocks live in packed symmetric storage ([`Sym2`], [`Sym3`]), so reading
//! any index permutation returns the identical scalar.

use crate::error::{Error, Result};
use crate::sym::{Sym2, Sym3};

/// Smallest value whose square root we are willing to differentiate through;
/// guards against denormal blow-up in the derivative coefficients.
pub const SQRT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet3 {
    n: usize,
    pub val: f64,
    pub d1: Vec<f64>,
    pub d2: Sym2,
    pub d3: Sym3,
}

impl Jet3 {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Constant jet: all derivatives vanish.
    pub fn constant(n: usize, c: f64) -> Jet3 {
        Jet3 { n, val: c, d1: vec![0.0; n], d2: Sym2::zeros(n), d3: Sym3::zeros(n) }
    }

    pub fn zero(n: usize) -> Jet3 {
        Jet3::constant(n, 0.0)
    }

    /// The `j`-th coordinate jet at the point `y`: value `y[j]`, gradient
    /// `e_j`, higher derivatives zero.
    pub fn coordinate(y: &[f64], j: usize) -> Jet3 {
        let n = y.len();
        assert!(j < n);
        let mut d1 = vec![0.0; n];
        d1[j] = 1.0;
        Jet3 { n, val: y[j], d1, d2: Sym2::zeros(n), d3: Sym3::zeros(n) }
    }

    /// All coordinate jets at `y`, the seeds every evaluation composes from.
    pub fn coordinates(y: &[f64]) -> Vec<Jet3> {
        (0..y.len()).map(|j| Jet3::coordinate(y, j)).collect()
    }

    pub fn add(&self, other: &Jet3) -> Jet3 {
        assert_eq!(self.n, other.n);
        Jet3 {
            n: self.n,
            val: self.val + other.val,
            d1: self.d1.iter().zip(&other.d1).map(|(a, b)| a + b).collect(),
            d2: self.d2.add(&other.d2),
            d3: self.d3.add(&other.d3),
        }
    }

    pub fn sub(&self, other: &Jet3) -> Jet3 {
        assert_eq!(self.n, other.n);
        Jet3 {
            n: self.n,
            val: self.val - other.val,
            d1: self.d1.iter().zip(&other.d1).map(|(a, b)| a - b).collect(),
            d2: self.d2.sub(&other.d2),
            d3: self.d3.sub(&other.d3),
        }
    }

    pub fn scale(&self, c: f64) -> Jet3 {
        Jet3 {
            n: self.n,
            val: self.val * c,
            d1: self.d1.iter().map(|a| a * c).collect(),
            d2: self.d2.scale(c),
            d3: self.d3.scale(c),
        }
    }

    pub fn neg(&self) -> Jet3 {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Jet3 {
        let mut out = self.clone();
        out.val += c;
        out
    }

    /// Leibniz product through order 3.
    pub fn mul(&self, other: &Jet3) -> Jet3 {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let (a, b) = (self, other);
        let val = a.val * b.val;
        let d1: Vec<f64> =
            (0..n).map(|j| a.d1[j] * b.val + a.val * b.d1[j]).collect();
        let mut d2 = Sym2::zeros(n);
        for j in 0..n {
            for k in j..n {
                d2.set(
                    j,
                    k,
                    a.d2.get(j, k) * b.val
                        + a.d1[j] * b.d1[k]
                        + a.d1[k] * b.d1[j]
                        + a.val * b.d2.get(j, k),
                );
            }
        }
        let mut d3 = Sym3::zeros(n);
        for j in 0..n {
            for k in j..n {
                for l in k..n {
                    d3.set(
                        j,
                        k,
                        l,
                        a.d3.get(j, k, l) * b.val
                            + a.val * b.d3.get(j, k, l)
                            + a.d2.get(j, k) * b.d1[l]
                            + a.d2.get(j, l) * b.d1[k]
                            + a.d2.get(k, l) * b.d1[j]
                            + a.d1[j] * b.d2.get(k, l)
                            + a.d1[k] * b.d2.get(j, l)
                            + a.d1[l] * b.d2.get(j, k),
                    );
                }
            }
        }
        Jet3 { n, val, d1, d2, d3 }
    }

    /// Composition with a scalar function given its first three derivatives
    /// at `self.val` (Faa di Bruno through order 3).
    pub fn compose(&self, f0: f64, f1: f64, f2: f64, f3: f64) -> Jet3 {
        let n = self.n;
        let a = self;
        let d1: Vec<f64> = (0..n).map(|j| f1 * a.d1[j]).collect();
        let mut d2 = Sym2::zeros(n);
        for j in 0..n {
            for k in j..n {
                d2.set(j, k, f2 * a.d1[j] * a.d1[k] + f1 * a.d2.get(j, k));
            }
        }
        let mut d3 = Sym3::zeros(n);
        for j in 0..n {
            for k in j..n {
                for l in k..n {
                    d3.set(
                        j,
                        k,
                        l,
                        f3 * a.d1[j] * a.d1[k] * a.d1[l]
                            + f2 * (a.d2.get(j, k) * a.d1[l]
                                + a.d2.get(j, l) * a.d1[k]
                                + a.d2.get(k, l) * a.d1[j])
                            + f1 * a.d3.get(j, k, l),
                    );
                }
            }
        }
        Jet3 { n, val: f0, d1, d2, d3 }
    }

    /// Square root; errors when the value sits at or below [`SQRT_FLOOR`],
    /// which in norm evaluation means the point is on (or numerically on)
    /// the slit.
    pub fn sqrt(&self) -> Result<Jet3> {
        if self.val < SQRT_FLOOR {
            return Err(Error::SqrtDomain { value: self.val });
        }
        let v = self.val.sqrt();
        let f1 = 0.5 / v;
        let f2 = -0.25 / (v * v * v);
        let f3 = 0.375 / (v * v * v * v * v);
        Ok(self.compose(v, f1, f2, f3))
    }

    /// Reciprocal `1 / self`.
    pub fn recip(&self) -> Result<Jet3> {
        if self.val == 0.0 {
            return Err(Error::DivByZeroJet);
        }
        let v = self.val;
        let f0 = 1.0 / v;
        let f1 = -f0 / v;
        let f2 = 2.0 * f0 / (v * v);
        let f3 = -6.0 * f0 / (v * v * v);
        Ok(self.compose(f0, f1, f2, f3))
    }

    pub fn div(&self, other: &Jet3) -> Result<Jet3> {
        Ok(self.mul(&other.recip()?))
    }

    /// Max absolute entry of the requested derivative order (0..=3).
    pub fn max_abs_order(&self, order: usize) -> f64 {
        match order {
            0 => self.val.abs(),
            1 => crate::sym::max_abs_vec(&self.d1),
            2 => self.d2.max_abs(),
            3 => self.d3.max_abs(),
            _ => panic!("jet order out of range"),
        }
    }
}

/// Quadratic form `sum_{jk} m[j][k] y^j y^k` assembled through jet
/// arithmetic from the coordinate seeds.
pub fn quadratic_form_jet(m: &nalgebra::DMatrix<f64>, coords: &[Jet3]) -> Jet3 {
    let n = coords.len();
    assert_eq!(m.nrows(), n);
    assert_eq!(m.ncols(), n);
    let mut acc = Jet3::zero(n);
    for j in 0..n {
        for k in 0..n {
            let c = m[(j, k)];
            if c != 0.0 {
                acc = acc.add(&coords[j].mul(&coords[k]).scale(c));
            }
        }
    }
    acc
}

/// Linear form `sum_j c[j] y^j` assembled from the coordinate seeds. The
/// result has exactly zero second and third derivatives.
pub fn linear_form_jet(c: &[f64], coords: &[Jet3]) -> Jet3 {
    let n = coords.len();
    assert_eq!(c.len(), n);
    let mut acc = Jet3::zero(n);
    for j in 0..n {
        if c[j] != 0.0 {
            acc = acc.add(&coords[j].scale(c[j]));
        }
    }
    acc
}
