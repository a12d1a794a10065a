//! Characteristic tensors of the fiber metric.
//!
//! From the order-3 jet of `F` at an admitted fiber point we assemble: the
//! Hilbert form `p = F'`, the angular metric `h = F F''`, the fundamental
//! tensor `g = (1/2)(F^2)''`, the Cartan torsion `C = (1/4)(F^2)'''`, the
//! mean torsion `I = g^{-1} : C`, the Matsumoto tensor, and — for norms of
//! the form `F = rho + delta` — the reduction tensors that measure how far
//! `C` deviates from the rank-one profile forced by the cyclic identity.

use crate::closedforms;
use crate::error::{Error, Result};
use crate::geometry::{eval_norm, Chart, EvalPoint, FamilyKind, NormJets};
use crate::jet::Jet3;
use crate::linalg::invert_sym;
use crate::sym::{max_abs_vec, Sym2, Sym3};

/// `|kappa|` below this is treated as singular (the reduction formula
/// divides by it).
pub const KAPPA_FLOOR: f64 = 1e-8;
/// `|delta| / F` below this cannot be divided through safely.
pub const DELTA_FLOOR: f64 = 1e-12;
/// Relative threshold on `|delta''|` under which the perturbation counts as
/// linear and the Randers limit applies.
pub const RANDERS_LIMIT_REL: f64 = 1e-12;

/// Which branch of the reduction formulas was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitBranch {
    /// Generic bipartite perturbation.
    General,
    /// `delta'' = 0`: linear perturbation; `kappa = n + 1` and the
    /// reduction tensor coincides with the Matsumoto tensor.
    RandersLimit,
    /// `delta = 0` identically: Riemann norm; the reduction tensor is the
    /// Cartan torsion itself.
    RiemannLimit,
}

impl LimitBranch {
    pub fn name(self) -> &'static str {
        match self {
            LimitBranch::General => "general",
            LimitBranch::RandersLimit => "randers-limit",
            LimitBranch::RiemannLimit => "riemann-limit",
        }
    }
}

/// All fiberwise tensors at one admitted point.
#[derive(Debug, Clone)]
pub struct TensorSet {
    pub n: usize,
    /// Norm value `F(y)`.
    pub f: f64,
    /// Hilbert form `p_j = F_j`.
    pub p: Vec<f64>,
    /// Angular metric `h_jk = F F_jk`.
    pub h: Sym2,
    /// Fundamental tensor `g_jk = (1/2)(F^2)_jk`.
    pub g: Sym2,
    pub g_inv: Sym2,
    pub eig_min_g: f64,
    /// Cartan torsion `C_jkl = (1/4)(F^2)_jkl`.
    pub c: Sym3,
    /// Mean Cartan torsion `I_j = g^{kl} C_jkl`.
    pub i: Vec<f64>,
    /// Principal scalar `kappa = n + 1 - (F^2/delta) g^{kl} delta_kl`.
    pub kappa: f64,
    /// Matsumoto tensor `M = C - cyc(I, h) / (n+1)`.
    pub m: Sym3,
    /// Bipartite reduction tensor (vanishes on bipartite-type norms
    /// wherever the fiber metric is invertible).
    pub s: Sym3,
    pub branch: LimitBranch,
    /// Perpendicular-family reduction tensor, populated for `bspace` charts.
    pub b: Option<Sym3>,
    /// Closed-form principal scalar of `bspace` charts.
    pub kappa_b: Option<f64>,
}

/// Relative size of a "must vanish" tensor against the Cartan scale at the
/// point: `|t|_inf / max(|c|_inf, F^{-2})`.
pub fn vanish_ratio(t: &Sym3, c: &Sym3, f: f64) -> f64 {
    t.max_abs() / c.max_abs().max(f.powi(-2))
}

/// Contraction `w_j = g^{kl} delta_k delta_{lj}` (the bound indices `k, l`
/// are summed independently of any surrounding cyclic structure).
pub fn bipartite_w(g_inv: &Sym2, delta: &Jet3) -> Vec<f64> {
    let u = g_inv.mul_vec(&delta.d1);
    delta.d2.mul_vec(&u)
}

fn limit_branch(f: &Jet3, rho: &Jet3, delta: &Jet3) -> LimitBranch {
    let zero = delta.val == 0.0
        && delta.max_abs_order(1) == 0.0
        && delta.max_abs_order(2) == 0.0
        && delta.max_abs_order(3) == 0.0;
    if zero {
        return LimitBranch::RiemannLimit;
    }
    let threshold = RANDERS_LIMIT_REL * f.val / (rho.val * rho.val);
    if delta.max_abs_order(2) <= threshold {
        LimitBranch::RandersLimit
    } else {
        LimitBranch::General
    }
}

/// Assemble the full tensor set at an admitted point.
pub fn tensor_set(chart: &Chart, point: &EvalPoint) -> Result<TensorSet> {
    let jets = eval_norm(chart, point)?;
    tensor_set_from_jets(chart, &jets)
}

/// Assemble from precomputed norm jets.
pub fn tensor_set_from_jets(chart: &Chart, jets: &NormJets) -> Result<TensorSet> {
    let n = chart.n;
    let fjet = &jets.f;
    let delta = &jets.delta;
    let f = fjet.val;
    let f2 = fjet.mul(fjet);

    let p = fjet.d1.clone();
    let h = fjet.d2.scale(f);
    let g = f2.d2.scale(0.5);
    let c = f2.d3.scale(0.25);
    let (g_inv, eig_min_g) = invert_sym(&g)?;
    let i = c.contract_sym2(&g_inv);
    let m = c.sub(&Sym3::cyclic_outer(&i, &h).scale(1.0 / (n as f64 + 1.0)));

    let branch = limit_branch(fjet, &jets.rho, delta);
    let (kappa, s) = match branch {
        LimitBranch::RiemannLimit => (n as f64 + 1.0, c.clone()),
        LimitBranch::RandersLimit => (n as f64 + 1.0, m.clone()),
        LimitBranch::General => {
            if (delta.val / f).abs() < DELTA_FLOOR {
                return Err(Error::SlitProximity {
                    distance: (delta.val / f).abs(),
                    minimum: DELTA_FLOOR,
                });
            }
            let tr = g_inv.full_contract(&delta.d2);
            let kappa = n as f64 + 1.0 - f * f / delta.val * tr;
            if kappa.abs() < KAPPA_FLOOR {
                return Err(Error::SingularKappa { kappa });
            }
            let w = bipartite_w(&g_inv, delta);
            let cfac = f * f / ((f - delta.val) * delta.val);
            let coeff: Vec<f64> = i.iter().zip(&w).map(|(ij, wj)| ij + cfac * wj).collect();
            let hmod = h.sub(&delta.d2.scale(f * f / delta.val));
            let s = c.sub(&Sym3::cyclic_outer(&coeff, &hmod).scale(1.0 / kappa));
            (kappa, s)
        }
    };

    // Perpendicular-family data: closed-form principal scalar and the
    // reduction tensor built from it.
    let (b, kappa_b) = if chart.kind == FamilyKind::BSpace {
        let grad2 = raised_inner(&g_or_r(chart), &delta.d1, &delta.d1);
        let kb = closedforms::kappa_b_closed_form(n, f, delta.val, grad2)?;
        let hmod = match branch {
            LimitBranch::General => h.sub(&delta.d2.scale(f * f / delta.val)),
            _ => h.clone(),
        };
        let bt = c.sub(&Sym3::cyclic_outer(&i, &hmod).scale(1.0 / kb));
        (Some(bt), Some(kb))
    } else {
        (None, None)
    };

    Ok(TensorSet {
        n,
        f,
        p,
        h,
        g,
        g_inv,
        eig_min_g,
        c,
        i,
        kappa,
        m,
        s,
        branch,
        b,
        kappa_b,
    })
}

fn g_or_r(chart: &Chart) -> nalgebra::DMatrix<f64> {
    chart.r_inv.clone()
}

fn raised_inner(minv: &nalgebra::DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let mut acc = 0.0;
    for j in 0..n {
        for k in 0..n {
            acc += minv[(j, k)] * u[j] * v[k];
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Identity residuals
// ---------------------------------------------------------------------------

/// The radial (degree-one homogeneity) identities of the fiber metric.
/// All residuals are relative to the natural scale of the identity.
#[derive(Debug, Clone)]
pub struct EulerResiduals {
    /// `y^j h_jk = 0`
    pub radial_h: f64,
    /// `y^j = F g^{jk} p_k`
    pub radial_g: f64,
    /// `g^{jk} p_j p_k = 1`
    pub p_unit: f64,
    /// `g^{jk} h_kj = n - 1`
    pub h_trace: f64,
    /// `g^{jk} p_j delta_kl = 0`
    pub p_delta2: f64,
    /// `g^{jk} p_j delta_k = delta / F`
    pub p_delta1: f64,
    /// `g^{jk} h_kl delta_j = delta_l - (delta/F) p_l`
    pub h_delta: f64,
}

impl EulerResiduals {
    pub fn max(&self) -> f64 {
        self.radial_h
            .max(self.radial_g)
            .max(self.p_unit)
            .max(self.h_trace)
            .max(self.p_delta2)
            .max(self.p_delta1)
            .max(self.h_delta)
    }

    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("radial annihilation y.h", self.radial_h),
            ("radial recovery y = F g^{-1} p", self.radial_g),
            ("unit length of p in g^{-1}", self.p_unit),
            ("trace g^{-1} h = n - 1", self.h_trace),
            ("p-orthogonality of delta''", self.p_delta2),
            ("p-pairing of delta'", self.p_delta1),
            ("h-contraction of delta'", self.h_delta),
        ]
    }
}

const FLOOR: f64 = 1e-300;

pub fn euler_residuals(ts: &TensorSet, jets: &NormJets, y: &[f64]) -> EulerResiduals {
    let n = ts.n;
    let f = ts.f;
    let delta = &jets.delta;
    let ynorm = max_abs_vec(y);

    // y^j h_jk = 0
    let yh = ts.h.mul_vec(y);
    let radial_h = max_abs_vec(&yh) / (ynorm * ts.h.max_abs()).max(FLOOR);

    // y = F g^{-1} p
    let gp = ts.g_inv.mul_vec(&ts.p);
    let rec: Vec<f64> = (0..n).map(|j| y[j] - f * gp[j]).collect();
    let radial_g = max_abs_vec(&rec) / ynorm.max(FLOOR);

    // g^{jk} p_j p_k = 1
    let pp: f64 = (0..n).map(|j| gp[j] * ts.p[j]).sum();
    let p_unit = (pp - 1.0).abs();

    // g^{jk} h_kj = n - 1
    let tr = ts.g_inv.full_contract(&ts.h);
    let h_trace = (tr - (n as f64 - 1.0)).abs() / (n as f64 - 1.0).max(1.0);

    // g^{jk} p_j delta_kl = 0
    let pd2 = delta.d2.mul_vec(&gp);
    let p_delta2 =
        max_abs_vec(&pd2) / (max_abs_vec(&gp) * delta.d2.max_abs()).max(1.0 / f).max(FLOOR);

    // g^{jk} p_j delta_k = delta / F
    let pd1: f64 = (0..n).map(|j| gp[j] * delta.d1[j]).sum();
    let p_delta1 = (pd1 - delta.val / f).abs()
        / (delta.val / f)
            .abs()
            .max(max_abs_vec(&gp) * max_abs_vec(&delta.d1))
            .max(1e-3);

    // g^{jk} h_kl delta_j = delta_l - (delta/F) p_l
    let gd = ts.g_inv.mul_vec(&delta.d1);
    let lhs = ts.h.mul_vec(&gd);
    let resid: Vec<f64> = (0..n)
        .map(|l| lhs[l] - (delta.d1[l] - delta.val / f * ts.p[l]))
        .collect();
    let h_delta = max_abs_vec(&resid)
        / (max_abs_vec(&delta.d1) + delta.val.abs() / f * max_abs_vec(&ts.p)).max(1e-3);

    EulerResiduals { radial_h, radial_g, p_unit, h_trace, p_delta2, p_delta1, h_delta }
}

/// Residuals of the cyclic third-derivative identity of `F = rho + delta`,
/// in raw, geometric, and perturbation-only form. Each is relative to the
/// max norm of the participating terms.
#[derive(Debug, Clone)]
pub struct CyclicResiduals {
    /// `(F^2)''' - 2 delta F''' - 2 F delta''' - 2 cyc(delta' F'' + delta'' F') = 0`
    pub cyclic: f64,
    /// `2 (F - delta) C + cyc((delta/F) p - delta', h - (F^2/delta) delta'') = 0`
    pub geometric: f64,
    /// `delta delta''' + cyc(delta' delta'') = 0`
    pub third_derivative: f64,
}

impl CyclicResiduals {
    pub fn max(&self) -> f64 {
        self.cyclic.max(self.geometric).max(self.third_derivative)
    }
}

pub fn cyclic_residuals(ts: &TensorSet, jets: &NormJets) -> CyclicResiduals {
    let fjet = &jets.f;
    let delta = &jets.delta;
    let f = fjet.val;

    // Raw form.
    let t0 = ts.c.scale(4.0);
    let t1 = fjet.d3.scale(2.0 * delta.val);
    let t2 = delta.d3.scale(2.0 * f);
    let t3 = Sym3::cyclic_outer(&delta.d1, &fjet.d2).scale(2.0);
    let t4 = Sym3::cyclic_outer(&fjet.d1, &delta.d2).scale(2.0);
    let resid = t0.sub(&t1).sub(&t2).sub(&t3).sub(&t4);
    // Both sides vanish identically when delta does; the norm's own
    // third-derivative magnitude floors the scale so that limit reads as a
    // zero residual instead of 0/0.
    let intrinsic = f * fjet.d3.max_abs();
    let scale = t0
        .max_abs()
        .max(t1.max_abs())
        .max(t2.max_abs())
        .max(t3.max_abs())
        .max(t4.max_abs())
        .max(intrinsic);
    let cyclic = resid.max_abs() / scale.max(FLOOR);

    // Geometric form.
    let u: Vec<f64> = (0..ts.n)
        .map(|j| delta.val / f * ts.p[j] - delta.d1[j])
        .collect();
    let hmod = match ts.branch {
        LimitBranch::General => ts.h.sub(&delta.d2.scale(f * f / delta.val)),
        _ => ts.h.clone(),
    };
    let ga = ts.c.scale(2.0 * (f - delta.val));
    let gb = Sym3::cyclic_outer(&u, &hmod);
    let gres = ga.add(&gb);
    let geometric =
        gres.max_abs() / ga.max_abs().max(gb.max_abs()).max(f * intrinsic).max(FLOOR);

    // Perturbation-only form (multiplied through by delta to stay finite in
    // the linear limit).
    let da = delta.d3.scale(delta.val);
    let db = Sym3::cyclic_outer(&delta.d1, &delta.d2);
    let dres = da.add(&db);
    // When the perturbation is linear on the smooth branch, both terms are
    // square-root cancellation noise; |delta| |F'''| floors the scale so the
    // ratio does not compare noise against noise.
    let base = da
        .max_abs()
        .max(db.max_abs())
        .max(delta.val.abs() * fjet.d3.max_abs());
    let third_derivative = if base == 0.0 { 0.0 } else { dres.max_abs() / base };

    CyclicResiduals { cyclic, geometric, third_derivative }
}

/// Residual of the contracted (mean-torsion) identity
/// `2 (F - delta) I_j + kappa ((delta/F) p_j - delta_j)
///  + (2 F^2 / delta) g^{kl} delta_k delta_{lj} = 0`, relative to the
/// largest participating term.
pub fn mean_cartan_residual(ts: &TensorSet, jets: &NormJets) -> f64 {
    let n = ts.n;
    let f = ts.f;
    let delta = &jets.delta;
    let t1: Vec<f64> = ts.i.iter().map(|v| 2.0 * (f - delta.val) * v).collect();
    let t2: Vec<f64> = (0..n)
        .map(|j| ts.kappa * (delta.val / f * ts.p[j] - delta.d1[j]))
        .collect();
    let t3: Vec<f64> = match ts.branch {
        LimitBranch::General => {
            let w = bipartite_w(&ts.g_inv, delta);
            w.iter().map(|v| 2.0 * f * f / delta.val * v).collect()
        }
        _ => vec![0.0; n],
    };
    let resid: Vec<f64> = (0..n).map(|j| t1[j] + t2[j] + t3[j]).collect();
    // Every term vanishes identically when delta does; the intrinsic size
    // of the mean torsion (inverse metric times the third-derivative
    // magnitude of the norm) floors the scale so that limit reads as a
    // zero residual instead of 0/0.
    let intrinsic =
        (f - delta.val) * ts.g_inv.max_abs() * f * jets.f.d3.max_abs();
    let scale = max_abs_vec(&t1)
        .max(max_abs_vec(&t2))
        .max(max_abs_vec(&t3))
        .max(intrinsic);
    max_abs_vec(&resid) / scale.max(FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FamilySpec, NormSpec, RiemannMetric, SignBranch, VectorField};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn at(spec: &NormSpec, y: &[f64]) -> (Chart, EvalPoint, NormJets, TensorSet) {
        let chart = Chart::new(spec, &vec![0.0; spec.dim]).unwrap();
        let point = EvalPoint::new(&chart, dv(y)).unwrap();
        let jets = eval_norm(&chart, &point).unwrap();
        let ts = tensor_set_from_jets(&chart, &jets).unwrap();
        (chart, point, jets, ts)
    }

    #[test]
    fn euclidean_cartan_vanishes_and_g_equals_r() {
        let spec = NormSpec::new(
            3,
            RiemannMetric::euclidean(3),
            FamilySpec::Euclidean,
            SignBranch::Plus,
        );
        let (_, _, _, ts) = at(&spec, &[0.3, -1.2, 0.9]);
        assert!(ts.c.max_abs() < 1e-14);
        assert_eq!(ts.branch, LimitBranch::RiemannLimit);
        for j in 0..3 {
            for k in 0..3 {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert_relative_eq!(ts.g.get(j, k), expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bspace_plus_tensor_set_at_perpendicular_point() {
        // b = (0,0,1/2), r = I, y = e1: F = 3/2, g = diag(9/4, 9/4, 3/2),
        // g^{-1} = diag(4/9, 4/9, 2/3), kappa = kappa_b = 3.
        let spec = NormSpec::new(
            3,
            RiemannMetric::euclidean(3),
            FamilySpec::BSpace { b: VectorField::Constant(dv(&[0.0, 0.0, 0.5])) },
            SignBranch::Plus,
        );
        let (_, _, _, ts) = at(&spec, &[1.0, 0.0, 0.0]);
        assert_relative_eq!(ts.f, 1.5, epsilon = 1e-14);
        let gd = [2.25, 2.25, 1.5];
        let gi = [4.0 / 9.0, 4.0 / 9.0, 2.0 / 3.0];
        for j in 0..3 {
            assert_relative_eq!(ts.g.get(j, j), gd[j], epsilon = 1e-13);
            assert_relative_eq!(ts.g_inv.get(j, j), gi[j], epsilon = 1e-13);
            for k in (j + 1)..3 {
                assert!(ts.g.get(j, k).abs() < 1e-13);
            }
        }
        assert_relative_eq!(ts.kappa, 3.0, epsilon = 1e-10);
        assert_relative_eq!(ts.kappa_b.unwrap(), 3.0, epsilon = 1e-12);
        assert_eq!(ts.branch, LimitBranch::General);
        // Both reduction tensors vanish.
        assert!(vanish_ratio(&ts.s, &ts.c, ts.f) < 1e-12);
        assert!(vanish_ratio(ts.b.as_ref().unwrap(), &ts.c, ts.f) < 1e-12);
    }

    #[test]
    fn randers_matsumoto_vanishes_via_limit_branch() {
        let spec = NormSpec::new(
            3,
            RiemannMetric::constant(DMatrix::from_row_slice(
                3,
                3,
                &[1.2, 0.1, 0.0, 0.1, 1.0, 0.05, 0.0, 0.05, 0.9],
            )),
            FamilySpec::Randers { a: VectorField::Constant(dv(&[0.1, -0.2, 0.3])) },
            SignBranch::Plus,
        );
        let (_, _, _, ts) = at(&spec, &[0.7, 0.4, -1.1]);
        assert_eq!(ts.branch, LimitBranch::RandersLimit);
        assert_relative_eq!(ts.kappa, 4.0, epsilon = 1e-14);
        assert!(vanish_ratio(&ts.m, &ts.c, ts.f) < 1e-12, "matsumoto {}", ts.m.max_abs());
        assert_eq!(ts.m, ts.s);
    }

    #[test]
    fn aspace_reduction_matches_matsumoto() {
        let spec = NormSpec::new(
            2,
            RiemannMetric::euclidean(2),
            FamilySpec::ASpace { a: VectorField::Constant(dv(&[0.5, 0.0])) },
            SignBranch::Minus,
        );
        let (_, _, _, ts) = at(&spec, &[1.0, 0.7]);
        assert_eq!(ts.branch, LimitBranch::RandersLimit);
        assert!(vanish_ratio(&ts.m, &ts.c, ts.f) < 1e-11);
    }

    #[test]
    fn generic_bipartite_reduction_vanishes() {
        let s = DMatrix::from_row_slice(
            3,
            3,
            &[0.45, 0.15, 0.0, 0.15, 0.45, 0.10, 0.0, 0.10, 0.50],
        );
        let spec = NormSpec::new(
            3,
            RiemannMetric::euclidean(3),
            FamilySpec::Bipartite { s: crate::geometry::MatrixField::Constant(s) },
            SignBranch::Plus,
        );
        let (_, _, jets, ts) = at(&spec, &[0.9, -0.3, 0.8]);
        assert_eq!(ts.branch, LimitBranch::General);
        assert!(
            vanish_ratio(&ts.s, &ts.c, ts.f) < 1e-12,
            "reduction tensor ratio {}",
            vanish_ratio(&ts.s, &ts.c, ts.f)
        );
        // The assembled identities hold at the same point.
        let e = euler_residuals(&ts, &jets, &[0.9, -0.3, 0.8]);
        assert!(e.max() < 1e-12, "euler {:?}", e);
        let cyc = cyclic_residuals(&ts, &jets);
        assert!(cyc.max() < 1e-12, "cyclic {:?}", cyc);
        assert!(mean_cartan_residual(&ts, &jets) < 1e-12);
    }

    #[test]
    fn g_is_h_plus_p_outer_p() {
        let spec = NormSpec::new(
            3,
            RiemannMetric::euclidean(3),
            FamilySpec::BSpace { b: VectorField::Constant(dv(&[0.0, 0.0, 0.5])) },
            SignBranch::Minus,
        );
        let (_, _, _, ts) = at(&spec, &[1.0, -0.5, 0.4]);
        let rebuilt = ts.h.add(&Sym2::outer(&ts.p));
        assert!(rebuilt.sub(&ts.g).max_abs() < 1e-12 * ts.g.max_abs().max(1.0));
    }
}
