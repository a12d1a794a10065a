//! Closed-form expressions that double-check the jet pipeline: the
//! fundamental tensor of a bipartite-type norm in orthonormal coordinates,
//! the explicit inverse metric of perpendicular-family norms, the
//! associated projectors, and the closed form of the principal scalar.

use crate::error::{Error, Result};
use crate::geometry::{Chart, FamilyKind, NormJets};
use crate::sym::Sym2;
use nalgebra::{DMatrix, DVector};

/// Fundamental tensor of `F = |z| + sign * sqrt(z^T s z)` in coordinates
/// where the inner product is the identity:
///
/// `g = (F/rho) I - rho*delta (rho'/rho - delta'/delta) (x)^2 + (F/delta) s`
///
/// with `delta = sign * sigma`. For the minus branch this is the familiar
/// spindle form `(F/rho) I + rho*sigma (rho'/rho - sigma'/sigma)^2 - (F/sigma) s`.
pub fn g_closed_form_white(
    s_white: &DMatrix<f64>,
    sign: f64,
    z: &DVector<f64>,
) -> Result<Sym2> {
    let n = z.len();
    let rho2 = z.norm_squared();
    if rho2 == 0.0 {
        return Err(Error::ZeroVector { what: "fiber vector" });
    }
    let rho = rho2.sqrt();
    let sigma2 = (z.transpose() * s_white * z)[(0, 0)].max(0.0);
    if sigma2 == 0.0 {
        return Err(Error::DegenerateDenominator { what: "sigma", value: 0.0 });
    }
    let sigma = sigma2.sqrt();
    let delta = sign * sigma;
    let f = rho + delta;

    let rho_d = z / rho;
    let sigma_d = (s_white * z) / sigma;
    // rho'/rho - delta'/delta = rho'/rho - sigma'/sigma for either sign.
    let diff = &rho_d / rho - &sigma_d / sigma;

    let mut g = DMatrix::identity(n, n) * (f / rho);
    g -= (&diff * diff.transpose()) * (rho * delta);
    g += s_white * (f / delta);
    Ok(Sym2::from_dmatrix(&g, 1e-12 * g.amax().max(1.0)).expect("symmetric by construction"))
}

/// Whitened closed-form fundamental tensor for a bipartite-type chart at
/// `y` (in original coordinates). Returns `g` in whitened coordinates; a
/// jet-based `g` can be compared after the covariant transform
/// `W^T g W`.
pub fn g_closed_form(chart: &Chart, y: &DVector<f64>) -> Result<Sym2> {
    let s = chart.bipartite_form()?;
    let s_white = chart.white.cov2_to_white(s);
    let z = chart.white.to_white(y);
    g_closed_form_white(&s_white, chart.sign.factor(), &z)
}

/// Closed form of the principal scalar on perpendicular-family norms:
///
/// `kappa_b = n + 1 - (n-2) F (F - delta) |delta'|^2
///            / (delta (delta + (F - delta) |delta'|^2))`
///
/// where `|delta'|^2` is the `r`-raised square of the fiber gradient of
/// `delta` (identically `|b|^2` on these norms). Equals `n + 1` for `n = 2`.
pub fn kappa_b_closed_form(n: usize, f: f64, delta: f64, grad2: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::DegenerateDenominator { what: "delta", value: delta });
    }
    let denom = delta * (delta + (f - delta) * grad2);
    if denom.abs() < 1e-300 {
        return Err(Error::DegenerateDenominator { what: "delta + rho |delta'|^2", value: denom });
    }
    Ok(n as f64 + 1.0 - (n as f64 - 2.0) * f * (f - delta) * grad2 / denom)
}

/// Explicit inverse of the fundamental tensor on perpendicular-family
/// norms, in the original coordinates:
///
/// `g^{jk} = (rho/F) [ r^{jk}
///           + (b.y)^2 rho / (delta^2 (delta + |b|^2 rho)) lam^j lam^k
///           - |b|^2 rho / (delta + |b|^2 rho) P^{jk} ]`
///
/// with `lam_j = (b.y / F) rho_j - b_j` (lowered) and `P^{jk}` the raised
/// projector away from `b`. All inner products are `r`-referenced.
pub fn bspace_inverse_metric(chart: &Chart, y: &DVector<f64>) -> Result<Sym2> {
    if chart.kind != FamilyKind::BSpace {
        return Err(Error::UnsupportedFamily {
            op: "perpendicular-family inverse metric",
            family: chart.kind.name(),
        });
    }
    let b = chart.field.as_ref().expect("bspace field");
    let n = chart.n;
    let rho = chart.rnorm(y);
    if rho == 0.0 {
        return Err(Error::ZeroVector { what: "fiber vector" });
    }
    let f = chart.norm_value(y);
    let delta = f - rho;
    if delta.abs() < 1e-14 * f {
        return Err(Error::DegenerateDenominator { what: "delta", value: delta });
    }
    let b2 = chart.rdot(b, b);
    let by = chart.rdot(b, y);
    let denom = delta + b2 * rho;
    if denom.abs() < 1e-12 * b2 * rho {
        return Err(Error::DegenerateDenominator { what: "delta + |b|^2 rho", value: denom });
    }

    let rho_low = (&chart.r * y) / rho;
    let b_low = &chart.r * b;
    let lam_low = &rho_low * (by / f) - &b_low;
    let lam = &chart.r_inv * &lam_low;
    let p_raised = &chart.r_inv - b * b.transpose() / b2;

    let mut g_inv = chart.r_inv.clone();
    g_inv += (&lam * lam.transpose()) * (by * by * rho / (delta * delta * denom));
    g_inv -= p_raised * (b2 * rho / denom);
    g_inv *= rho / f;
    let _ = n;
    Ok(Sym2::from_dmatrix(&g_inv, 1e-11 * g_inv.amax().max(1.0))
        .expect("symmetric by construction"))
}

/// The two natural endomorphisms of a perpendicular-family chart at `y`:
/// the `r`-orthogonal projector `P` away from `b`, and the normalized
/// fiber Hessian of the perturbation `Dt = (delta / |b|^2) delta''` with
/// one index raised.
#[derive(Debug, Clone)]
pub struct BspaceProjectors {
    /// Mixed `P^j_k`.
    pub p: DMatrix<f64>,
    /// Lowered `P_jk`.
    pub p_low: DMatrix<f64>,
    /// Mixed `Dt^j_k`.
    pub delta_tilde: DMatrix<f64>,
    pub b_norm2: f64,
}

pub fn bspace_projectors(chart: &Chart, jets: &NormJets) -> Result<BspaceProjectors> {
    if chart.kind != FamilyKind::BSpace {
        return Err(Error::UnsupportedFamily {
            op: "perpendicular-family projectors",
            family: chart.kind.name(),
        });
    }
    let b = chart.field.as_ref().expect("bspace field");
    let n = chart.n;
    let b_low = &chart.r * b;
    let b2 = chart.rdot(b, b);
    let p = DMatrix::identity(n, n) - b * b_low.transpose() / b2;
    let p_low = &chart.r * &p;
    let d2 = jets.delta.d2.to_dmatrix();
    let delta_tilde = (&chart.r_inv * d2) * (jets.delta.val / b2);
    Ok(BspaceProjectors { p, p_low, delta_tilde, b_norm2: b2 })
}

/// Relative residuals of the projector and gradient identities on
/// perpendicular-family norms at one admitted point.
pub fn projector_residuals(
    chart: &Chart,
    jets: &NormJets,
    y: &DVector<f64>,
) -> Result<Vec<(&'static str, f64)>> {
    let pr = bspace_projectors(chart, jets)?;
    let n = chart.n;
    let b = chart.field.as_ref().expect("bspace field");
    let b2 = pr.b_norm2;
    let delta = &jets.delta;
    let rel = |num: f64, scale: f64| num / scale.max(1e-300);

    let mut out = Vec::new();

    let pnorm = pr.p.amax().max(1.0);
    out.push(("projector idempotent", rel((&pr.p * &pr.p - &pr.p).amax(), pnorm)));
    out.push((
        "projector trace n-1",
        rel((pr.p.trace() - (n as f64 - 1.0)).abs(), (n as f64 - 1.0).max(1.0)),
    ));
    out.push(("projector annihilates b", rel((&pr.p * b).amax(), b.amax())));

    let dt = &pr.delta_tilde;
    let dtnorm = dt.amax().max(1.0);
    out.push(("hessian endomorphism idempotent", rel((dt * dt - dt).amax(), dtnorm)));
    out.push((
        "hessian endomorphism trace n-2",
        rel((dt.trace() - (n as f64 - 2.0)).abs(), (n as f64).max(1.0)),
    ));
    out.push(("hessian endomorphism annihilates b", rel((dt * b).amax(), b.amax())));

    let grad_delta = &chart.r_inv * DVector::from_row_slice(&delta.d1);
    let grad_rho = &chart.r_inv * DVector::from_row_slice(&jets.rho.d1);
    let grad_f = &chart.r_inv * DVector::from_row_slice(&jets.f.d1);
    let gd_scale = grad_delta.amax().max(1e-3);
    out.push(("hessian endomorphism annihilates delta'", rel((dt * &grad_delta).amax(), gd_scale)));
    out.push(("hessian endomorphism annihilates rho'", rel((dt * &grad_rho).amax(), grad_rho.amax())));
    out.push(("hessian endomorphism annihilates F'", rel((dt * &grad_f).amax(), grad_f.amax())));
    out.push((
        "projector fixes delta'",
        rel((&pr.p * &grad_delta - &grad_delta).amax(), gd_scale),
    ));
    let dmix = &chart.r_inv * delta.d2.to_dmatrix();
    out.push((
        "projector fixes delta'' endomorphism",
        rel((&pr.p * &dmix - &dmix).amax(), dmix.amax().max(1e-3)),
    ));

    let grad2 = (grad_delta.transpose() * &chart.r * &grad_delta)[(0, 0)];
    out.push(("squared gradient of delta equals |b|^2", rel((grad2 - b2).abs(), b2)));

    // delta * delta' = |b|^2 (P y) (lowered).
    let py_low = &pr.p_low * y;
    let lhs = DVector::from_row_slice(&delta.d1) * delta.val;
    let rhs = &py_low * b2;
    out.push((
        "gradient identity delta delta' = |b|^2 Py",
        rel((lhs - &rhs).amax(), rhs.amax().max(1e-3)),
    ));

    // delta * delta'' = |b|^2 P_low - (|b|^4 / delta^2) (Py)(Py)^T.
    let lhs = delta.d2.to_dmatrix() * delta.val;
    let rhs = &pr.p_low * b2 - (&py_low * py_low.transpose()) * (b2 * b2 / (delta.val * delta.val));
    out.push((
        "hessian identity for delta delta''",
        rel((lhs - &rhs).amax(), rhs.amax().max(b2)),
    ));

    Ok(out)
}
