//! Finite-difference cross-check of jet derivatives.
//!
//! Central 4th-order stencils on plain value evaluations, for all three
//! derivative orders. The check is independent of the jet arithmetic by
//! construction — it only ever calls the value function.

use crate::error::{Error, Result};
use crate::jet::Jet3;
use crate::sym::max_abs_vec;

/// Default step, relative to `|y|`.
pub const H_REL_DEFAULT: f64 = 1e-3;

/// Offsets and weights of the 1-d stencils (weights before division by the
/// appropriate power of `h`).
const D1_ORDER4: &[(i32, f64)] =
    &[(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
const D2_ORDER4: &[(i32, f64)] = &[
    (-2, -1.0 / 12.0),
    (-1, 16.0 / 12.0),
    (0, -30.0 / 12.0),
    (1, 16.0 / 12.0),
    (2, -1.0 / 12.0),
];
const D3_ORDER4: &[(i32, f64)] = &[
    (-3, 1.0 / 8.0),
    (-2, -1.0),
    (-1, 13.0 / 8.0),
    (1, -13.0 / 8.0),
    (2, 1.0),
    (3, -1.0 / 8.0),
];

/// Relative disagreement between jet and finite-difference derivatives,
/// per derivative order.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub err_d1: f64,
    pub err_d2: f64,
    pub err_d3: f64,
    pub h: f64,
}

impl FdReport {
    pub fn max_rel(&self) -> f64 {
        self.err_d1.max(self.err_d2).max(self.err_d3)
    }
}

/// Convolve the value function with a tensor product of 1-d stencils
/// applied along the given axes.
fn convolve<F>(f: &F, y: &[f64], h: f64, parts: &[(usize, &[(i32, f64)])]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    fn rec<F>(
        f: &F,
        base: &mut Vec<f64>,
        h: f64,
        parts: &[(usize, &[(i32, f64)])],
        w: f64,
        acc: &mut f64,
    ) -> Result<()>
    where
        F: Fn(&[f64]) -> Result<f64>,
    {
        match parts.split_first() {
            None => {
                let v = f(base).map_err(|e| Error::StencilDomain { detail: e.to_string() })?;
                *acc += w * v;
                Ok(())
            }
            Some((&(axis, stencil), rest)) => {
                for &(off, c) in stencil {
                    base[axis] += off as f64 * h;
                    rec(f, base, h, rest, w * c, acc)?;
                    base[axis] -= off as f64 * h;
                }
                Ok(())
            }
        }
    }
    let mut base = y.to_vec();
    let mut acc = 0.0;
    rec(f, &mut base, h, parts, 1.0, &mut acc)?;
    Ok(acc)
}

/// Compare a jet against finite differences of the value function at `y`.
/// The step is `h_rel * |y|`. Returns per-order relative errors; evaluation
/// failures inside a stencil (for example a slit crossing) are reported as
/// errors, not skipped.
pub fn fd_check<F>(f: F, y: &[f64], h_rel: f64, jet: &Jet3) -> Result<FdReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = y.len();
    assert_eq!(n, jet.dim());
    let ynorm = (y.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if ynorm == 0.0 {
        return Err(Error::ZeroVector { what: "finite-difference base point" });
    }
    let h = h_rel * ynorm;
    let fval = f(y)?;

    let mut fd1 = vec![0.0; n];
    for j in 0..n {
        fd1[j] = convolve(&f, y, h, &[(j, D1_ORDER4)])? / h;
    }

    let mut fd2 = Vec::with_capacity(n * (n + 1) / 2);
    let mut jet2 = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for k in j..n {
            let v = if j == k {
                convolve(&f, y, h, &[(j, D2_ORDER4)])? / (h * h)
            } else {
                convolve(&f, y, h, &[(j, D1_ORDER4), (k, D1_ORDER4)])? / (h * h)
            };
            fd2.push(v);
            jet2.push(jet.d2.get(j, k));
        }
    }

    let mut fd3 = Vec::new();
    let mut jet3 = Vec::new();
    for j in 0..n {
        for k in j..n {
            for l in k..n {
                let v = if j == k && k == l {
                    convolve(&f, y, h, &[(j, D3_ORDER4)])? / (h * h * h)
                } else if j == k {
                    convolve(&f, y, h, &[(j, D2_ORDER4), (l, D1_ORDER4)])? / (h * h * h)
                } else if k == l {
                    convolve(&f, y, h, &[(k, D2_ORDER4), (j, D1_ORDER4)])? / (h * h * h)
                } else {
                    convolve(&f, y, h, &[(j, D1_ORDER4), (k, D1_ORDER4), (l, D1_ORDER4)])?
                        / (h * h * h)
                };
                fd3.push(v);
                jet3.push(jet.d3.get(j, k, l));
            }
        }
    }

    // Relative error per order, against the larger of the jet block's own
    // magnitude and the dimensional scale |F| / |y|^k (which keeps blocks
    // that vanish identically from dividing by zero).
    let scale = |jet_block: f64, k: i32| jet_block.max(fval.abs() / ynorm.powi(k)).max(1e-300);
    let err = |a: &[f64], b: &[f64], s: f64| {
        a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / s
    };
    let err_d1 = err(&jet.d1, &fd1, scale(max_abs_vec(&jet.d1), 1));
    let err_d2 = err(&jet2, &fd2, scale(max_abs_vec(&jet2), 2));
    let err_d3 = err(&jet3, &fd3, scale(max_abs_vec(&jet3), 3));
    Ok(FdReport { err_d1, err_d2, err_d3, h })
}
