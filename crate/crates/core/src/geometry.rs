//! Norm families and their fiberwise evaluation.
//!
//! A [`NormSpec`] describes a norm field over a coordinate chart: a Riemann
//! inner product `r(x)` plus family data (a Randers/parallel field `a`, a
//! perpendicular field `b`, or a full bipartite form `s`). Freezing a spec
//! at a base point `x` yields a [`Chart`]: validated matrices, spectral data
//! of the bipartite endomorphism, and the slit geometry. All per-direction
//! work (jets, tensors, meshes) runs against a `Chart`.

use crate::error::{Error, Result};
use crate::jet::{linear_form_jet, quadratic_form_jet, Jet3};
use crate::linalg::{generalized_eigen, whitening, Whitening};
use crate::poly::Polynomial;
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

/// Default relative width of the excluded band around the slit.
pub const DELTA_MIN_DEFAULT: f64 = 1e-3;
/// Default margin by which bipartite eigenvalues must stay below 1.
pub const EIGEN_MARGIN_DEFAULT: f64 = 1e-6;
/// Eigenvalues below this count as the kernel of the bipartite form.
pub const KERNEL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignBranch {
    Plus,
    Minus,
}

impl SignBranch {
    pub fn factor(self) -> f64 {
        match self {
            SignBranch::Plus => 1.0,
            SignBranch::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            SignBranch::Plus => "+",
            SignBranch::Minus => "-",
        }
    }
}

/// Matrix-valued field over the chart coordinates.
#[derive(Clone)]
pub enum MatrixField {
    Constant(DMatrix<f64>),
    /// Row-major `dim * dim` polynomial entries in `x`.
    Poly { dim: usize, entries: Vec<Polynomial> },
    Callback(Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>),
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixField::Constant(m) => write!(f, "MatrixField::Constant({m})"),
            MatrixField::Poly { dim, .. } => write!(f, "MatrixField::Poly(dim={dim})"),
            MatrixField::Callback(_) => write!(f, "MatrixField::Callback"),
        }
    }
}

impl MatrixField {
    pub fn at(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            MatrixField::Constant(m) => m.clone(),
            MatrixField::Poly { dim, entries } => {
                DMatrix::from_fn(*dim, *dim, |j, k| entries[j * dim + k].eval(x))
            }
            MatrixField::Callback(f) => f(x),
        }
    }
}

/// Vector-valued field over the chart coordinates.
#[derive(Clone)]
pub enum VectorField {
    Constant(DVector<f64>),
    Poly(Vec<Polynomial>),
    Callback(Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>),
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Constant(v) => write!(f, "VectorField::Constant({v})"),
            VectorField::Poly(p) => write!(f, "VectorField::Poly(len={})", p.len()),
            VectorField::Callback(_) => write!(f, "VectorField::Callback"),
        }
    }
}

impl VectorField {
    pub fn at(&self, x: &[f64]) -> DVector<f64> {
        match self {
            VectorField::Constant(v) => v.clone(),
            VectorField::Poly(entries) => {
                DVector::from_iterator(entries.len(), entries.iter().map(|p| p.eval(x)))
            }
            VectorField::Callback(f) => f(x),
        }
    }
}

/// Riemann inner product field `x -> r(x)` (symmetric positive definite).
#[derive(Debug, Clone)]
pub struct RiemannMetric {
    pub dim: usize,
    pub source: MatrixField,
}

impl RiemannMetric {
    pub fn euclidean(dim: usize) -> RiemannMetric {
        RiemannMetric { dim, source: MatrixField::Constant(DMatrix::identity(dim, dim)) }
    }

    pub fn constant(m: DMatrix<f64>) -> RiemannMetric {
        RiemannMetric { dim: m.nrows(), source: MatrixField::Constant(m) }
    }

    /// Evaluate and validate at `x`: symmetric to 1e-14 (absolute, relative
    /// to the largest entry) and positive definite.
    pub fn at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.source.at(x);
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: m.nrows() });
        }
        let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
        let mut dev = 0.0_f64;
        for j in 0..self.dim {
            for k in j + 1..self.dim {
                dev = dev.max((m[(j, k)] - m[(k, j)]).abs());
            }
        }
        if dev > 1e-14 * scale {
            return Err(Error::NotSymmetric { what: "inner product", deviation: dev });
        }
        Ok(m)
    }
}

/// Family data of a norm specification.
#[derive(Debug, Clone)]
pub enum FamilySpec {
    /// `F = rho`.
    Euclidean,
    /// `F = rho +/- <a, y>_r` with `|a|_r < 1`.
    Randers { a: VectorField },
    /// `F = rho +/- |a|_r |y_par|_r`, slit = the hyperplane `a^perp`.
    ASpace { a: VectorField },
    /// `F = rho +/- |b|_r |y_perp|_r`, slit = the line spanned by `b`.
    BSpace { b: VectorField },
    /// `F = rho +/- sqrt(s(y, y))` for a general form `s`.
    Bipartite { s: MatrixField },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Euclidean,
    Randers,
    ASpace,
    BSpace,
    Bipartite,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Euclidean => "euclidean",
            FamilyKind::Randers => "randers",
            FamilyKind::ASpace => "aspace",
            FamilyKind::BSpace => "bspace",
            FamilyKind::Bipartite => "bipartite",
        }
    }

    /// Families whose perturbation is `+/- sqrt(s(y,y))` for a symmetric
    /// nonnegative `s` (slit-bearing families).
    pub fn is_bipartite_type(self) -> bool {
        matches!(self, FamilyKind::ASpace | FamilyKind::BSpace | FamilyKind::Bipartite)
    }
}

/// A norm field: inner product plus family data plus numerical policy.
#[derive(Debug, Clone)]
pub struct NormSpec {
    pub dim: usize,
    pub metric: RiemannMetric,
    pub family: FamilySpec,
    pub sign: SignBranch,
    /// Minimum admissible slit distance for jet evaluation.
    pub delta_min: f64,
    /// Bipartite eigenvalues must satisfy `lambda <= 1 - eigen_margin`.
    pub eigen_margin: f64,
}

impl NormSpec {
    pub fn new(dim: usize, metric: RiemannMetric, family: FamilySpec, sign: SignBranch) -> NormSpec {
        NormSpec {
            dim,
            metric,
            family,
            sign,
            delta_min: DELTA_MIN_DEFAULT,
            eigen_margin: EIGEN_MARGIN_DEFAULT,
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match self.family {
            FamilySpec::Euclidean => FamilyKind::Euclidean,
            FamilySpec::Randers { .. } => FamilyKind::Randers,
            FamilySpec::ASpace { .. } => FamilyKind::ASpace,
            FamilySpec::BSpace { .. } => FamilyKind::BSpace,
            FamilySpec::Bipartite { .. } => FamilyKind::Bipartite,
        }
    }
}

/// A norm spec frozen at a base point: validated matrices, spectral data of
/// the bipartite endomorphism, slit geometry. Immutable once built; all
/// evaluation methods are reentrant.
#[derive(Debug)]
pub struct Chart {
    pub n: usize,
    pub x: Vec<f64>,
    pub kind: FamilyKind,
    pub sign: SignBranch,
    pub r: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    pub white: Whitening,
    /// Canonical bipartite form (lowered indices); `None` for Euclidean and
    /// Randers families.
    pub s: Option<DMatrix<f64>>,
    /// The field vector `a` (Randers/ASpace) or `b` (BSpace).
    pub field: Option<DVector<f64>>,
    /// Generalized eigenvalues of `r^{-1} s`, ascending. Empty when `s` is
    /// absent.
    pub s_eigvals: Vec<f64>,
    /// `r`-orthonormal basis of `ker(s)`.
    pub ker_basis: Vec<DVector<f64>>,
    pub delta_min: f64,
    pub eigen_margin: f64,
}

impl Chart {
    pub fn new(spec: &NormSpec, x: &[f64]) -> Result<Chart> {
        let n = spec.dim;
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        if x.len() != n {
            return Err(Error::DimMismatch { expected: n, found: x.len() });
        }
        let r = spec.metric.at(x)?;
        let white = whitening(&r)?;
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or(Error::NotPositiveDefinite { what: "inner product" })?;

        let mut field = None;
        let s = match &spec.family {
            FamilySpec::Euclidean => None,
            FamilySpec::Randers { a } => {
                let av = a.at(x);
                check_len(&av, n)?;
                let a2 = (av.transpose() * &r * &av)[(0, 0)];
                if a2 >= 1.0 - spec.eigen_margin {
                    return Err(Error::FieldTooLarge { norm: a2.sqrt() });
                }
                field = Some(av);
                None
            }
            FamilySpec::ASpace { a } => {
                let av = a.at(x);
                check_len(&av, n)?;
                if av.norm() == 0.0 {
                    return Err(Error::ZeroVector { what: "parallel field a" });
                }
                let alpha = &r * &av; // lowered a
                let s = &alpha * alpha.transpose();
                field = Some(av);
                Some(s)
            }
            FamilySpec::BSpace { b } => {
                let bv = b.at(x);
                check_len(&bv, n)?;
                if bv.norm() == 0.0 {
                    return Err(Error::ZeroVector { what: "perpendicular field b" });
                }
                let beta = &r * &bv; // lowered b
                let b2 = (bv.transpose() * &beta)[(0, 0)];
                // s = |b|^2 P with P the r-orthogonal projector away from b
                // (lowered indices): s_jk = |b|^2 r_jk - beta_j beta_k.
                let s = &r * b2 - &beta * beta.transpose();
                field = Some(bv);
                Some(s)
            }
            FamilySpec::Bipartite { s } => {
                let sm = s.at(x);
                if sm.nrows() != n || sm.ncols() != n {
                    return Err(Error::DimMismatch { expected: n, found: sm.nrows() });
                }
                let scale = sm.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
                let mut dev = 0.0_f64;
                for j in 0..n {
                    for k in j + 1..n {
                        dev = dev.max((sm[(j, k)] - sm[(k, j)]).abs());
                    }
                }
                if dev > 1e-12 * scale {
                    return Err(Error::NotSymmetric { what: "bipartite form", deviation: dev });
                }
                Some(sm)
            }
        };

        let (s_eigvals, ker_basis) = match &s {
            None => (Vec::new(), Vec::new()),
            Some(sm) => {
                let eig = generalized_eigen(sm, &white);
                let max = *eig.values.last().expect("n >= 1");
                if max > 1.0 - spec.eigen_margin {
                    return Err(Error::EigenvalueRange {
                        value: max,
                        max_allowed: 1.0 - spec.eigen_margin,
                    });
                }
                if eig.values[0] < -KERNEL_TOL {
                    return Err(Error::NegativeEigenvalue { value: eig.values[0] });
                }
                let ker: Vec<DVector<f64>> = eig
                    .values
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v.abs() < KERNEL_TOL)
                    .map(|(i, _)| DVector::from(eig.vectors.column(i).clone_owned()))
                    .collect();
                (eig.values, ker)
            }
        };

        Ok(Chart {
            n,
            x: x.to_vec(),
            kind: spec.kind(),
            sign: spec.sign,
            r,
            r_inv,
            white,
            s,
            field,
            s_eigvals,
            ker_basis,
            delta_min: spec.delta_min,
            eigen_margin: spec.eigen_margin,
        })
    }

    /// `<u, v>_r`.
    pub fn rdot(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.r * v)[(0, 0)]
    }

    /// `|v|_r`.
    pub fn rnorm(&self, v: &DVector<f64>) -> f64 {
        self.rdot(v, v).max(0.0).sqrt()
    }

    pub fn dim_ker(&self) -> usize {
        if self.s.is_some() {
            self.ker_basis.len()
        } else {
            0
        }
    }

    /// The canonical bipartite form `s` (lowered indices). Errors for
    /// families that do not carry one.
    pub fn bipartite_form(&self) -> Result<&DMatrix<f64>> {
        self.s.as_ref().ok_or(Error::UnsupportedFamily {
            op: "bipartite form",
            family: self.kind.name(),
        })
    }

    /// Whether the bipartite form vanishes identically (the norm degenerates
    /// to the Riemann norm and the formal slit is the whole fiber; evaluation
    /// then treats the norm as smooth everywhere off the origin).
    pub fn s_is_zero(&self) -> bool {
        match &self.s {
            None => false,
            Some(s) => s.iter().all(|&v| v == 0.0),
        }
    }

    /// Normalized distance of a direction from the slit, in `[0, 1]`.
    /// Families without a slit return 1.
    pub fn slit_distance(&self, y: &DVector<f64>) -> Result<f64> {
        if y.len() != self.n {
            return Err(Error::DimMismatch { expected: self.n, found: y.len() });
        }
        let rho = self.rnorm(y);
        if rho == 0.0 {
            return Err(Error::ZeroVector { what: "fiber vector" });
        }
        match self.kind {
            FamilyKind::Euclidean | FamilyKind::Randers => Ok(1.0),
            FamilyKind::ASpace => {
                let a = self.field.as_ref().expect("aspace field");
                let na = self.rnorm(a);
                Ok((self.rdot(a, y) / (na * rho)).abs())
            }
            FamilyKind::BSpace => {
                let b = self.field.as_ref().expect("bspace field");
                let (_, perp) = decompose(&self.r, b, y)?;
                Ok(self.rnorm(&perp) / rho)
            }
            FamilyKind::Bipartite => {
                if self.s_is_zero() {
                    return Ok(1.0);
                }
                let s = self.s.as_ref().expect("bipartite form");
                let s2 = (y.transpose() * s * y)[(0, 0)].max(0.0);
                Ok(s2.sqrt() / rho)
            }
        }
    }

    /// Plain value of `F` (no jets, no slit restriction): the norm is
    /// continuous across the slit even where it fails to be smooth.
    pub fn norm_value(&self, y: &DVector<f64>) -> f64 {
        self.norm_value_signed(self.sign, y)
    }

    /// Value of the `sign` branch of the family at `y`.
    pub fn norm_value_signed(&self, sign: SignBranch, y: &DVector<f64>) -> f64 {
        let rho = self.rnorm(y);
        let delta = match self.kind {
            FamilyKind::Euclidean => 0.0,
            FamilyKind::Randers => {
                let a = self.field.as_ref().expect("randers field");
                sign.factor() * self.rdot(a, y)
            }
            _ => {
                let s = self.s.as_ref().expect("bipartite form");
                let s2 = (y.transpose() * s * y)[(0, 0)].max(0.0);
                sign.factor() * s2.sqrt()
            }
        };
        rho + delta
    }
}

fn check_len(v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        Err(Error::DimMismatch { expected: n, found: v.len() })
    } else {
        Ok(())
    }
}

/// Split `y` into its component along `b` and its `r`-orthogonal rest.
pub fn decompose(
    r: &DMatrix<f64>,
    b: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let b2 = (b.transpose() * r * b)[(0, 0)];
    if b2 == 0.0 {
        return Err(Error::ZeroVector { what: "decomposition axis" });
    }
    let c = (b.transpose() * r * y)[(0, 0)] / b2;
    let par = b * c;
    let perp = y - &par;
    Ok((par, perp))
}

/// A fiber point admitted for jet evaluation: off the slit by at least the
/// chart's minimum distance.
#[derive(Debug, Clone)]
pub struct EvalPoint {
    pub y: DVector<f64>,
    pub slit_distance: f64,
}

impl EvalPoint {
    pub fn new(chart: &Chart, y: DVector<f64>) -> Result<EvalPoint> {
        let d = chart.slit_distance(&y)?;
        if d < chart.delta_min {
            return Err(Error::SlitProximity { distance: d, minimum: chart.delta_min });
        }
        Ok(EvalPoint { y, slit_distance: d })
    }
}

/// Order-3 jets of the norm and its parts at one fiber point.
#[derive(Debug, Clone)]
pub struct NormJets {
    /// `F = rho + delta`.
    pub f: Jet3,
    /// The Riemann part `rho = sqrt(r(y, y))`.
    pub rho: Jet3,
    /// The perturbation `delta` (0 for Euclidean, the signed linear form for
    /// Randers, `+/- sigma` for bipartite-type families). Built directly, so
    /// structural zeros in its derivative slots are exact.
    pub delta: Jet3,
}

/// Evaluate the norm jets at an admitted point.
pub fn eval_norm(chart: &Chart, point: &EvalPoint) -> Result<NormJets> {
    let y: Vec<f64> = point.y.iter().copied().collect();
    let coords = Jet3::coordinates(&y);
    let rho = quadratic_form_jet(&chart.r, &coords).sqrt()?;
    let delta = match chart.kind {
        FamilyKind::Euclidean => Jet3::zero(chart.n),
        FamilyKind::Randers => {
            let a = chart.field.as_ref().expect("randers field");
            let alpha = &chart.r * a;
            let coeffs: Vec<f64> = alpha.iter().copied().collect();
            linear_form_jet(&coeffs, &coords).scale(chart.sign.factor())
        }
        FamilyKind::ASpace => {
            // sigma = |<alpha, y>| is linear on each smooth branch, so the
            // jet is built as a signed linear form: the higher derivative
            // slots stay exactly zero instead of carrying the square-root
            // cancellation noise of the generic route.
            let a = chart.field.as_ref().expect("aspace field");
            let alpha = &chart.r * a;
            let coeffs: Vec<f64> = alpha.iter().copied().collect();
            let lin = linear_form_jet(&coeffs, &coords);
            let branch = if lin.val < 0.0 { -1.0 } else { 1.0 };
            lin.scale(chart.sign.factor() * branch)
        }
        _ => {
            let s = chart.s.as_ref().expect("bipartite form");
            if chart.s_is_zero() {
                Jet3::zero(chart.n)
            } else {
                quadratic_form_jet(s, &coords).sqrt()?.scale(chart.sign.factor())
            }
        }
    };
    let f = rho.add(&delta);
    if !(f.val > 0.0) {
        return Err(Error::NotPositiveDefinite { what: "norm value" });
    }
    Ok(NormJets { f, rho, delta })
}
