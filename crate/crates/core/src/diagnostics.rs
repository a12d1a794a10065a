//! Sampling diagnostics over the admitted fiber: positive-definiteness
//! scans with slit-directed refinement, deterministic direction streams,
//! planted-spectrum generators, the transverse-curvature witness, and the
//! aggregate verification suite behind the command-line tools.
//!
//! Every random draw is keyed by `(seed, sample index)`, parallel results
//! are collected in index order, and all report containers are ordered, so
//! serialized reports are byte-identical across runs and thread counts.

use crate::closedforms;
use crate::error::{Error, Result};
use crate::fd::fd_check;
use crate::geometry::{
    eval_norm, Chart, EvalPoint, FamilyKind, FamilySpec, MatrixField, NormSpec, RiemannMetric,
    SignBranch, KERNEL_TOL,
};
use crate::linalg::{eig_min, whitening};
use crate::sym::Sym2;
use crate::tensors::{
    cyclic_residuals, euler_residuals, mean_cartan_residual, tensor_set_from_jets, vanish_ratio,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Default number of base directions for a positive-definiteness scan.
pub const SCAN_SAMPLES_DEFAULT: usize = 10_000;
/// Slit-directed refinement: rounds of children spawned around the worst
/// parents found so far.
pub const REFINE_ROUNDS: usize = 3;
pub const REFINE_CHILDREN: usize = 32;
/// A sample counts as a definiteness violation when the smallest eigenvalue
/// of `g` falls below `-NEG_EIG_REL * max(1, |g|_inf)`.
pub const NEG_EIG_REL: f64 = 1e-10;
/// How many worst samples a scan report retains.
pub const WORST_KEPT: usize = 32;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed for one sample index.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 is kept away from zero so the log is finite.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// Deterministic direction on the unit sphere of the chart inner product:
/// a whitened Gaussian draw keyed by `(seed, index)`, normalized, mapped
/// back through the whitening.
pub fn sphere_direction(chart: &Chart, seed: u64, index: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index));
    let mut z = gaussian_vector(&mut rng, chart.n);
    while z.norm() < 1e-8 {
        z = gaussian_vector(&mut rng, chart.n);
    }
    z /= z.norm();
    chart.white.from_white(&z)
}

/// One evaluated scan sample.
#[derive(Debug, Clone, Serialize)]
pub struct ScanSample {
    pub index: u64,
    pub y: Vec<f64>,
    pub slit_distance: f64,
    pub eig_min: f64,
    /// `eig_min / max(1, |g|_inf)`.
    pub eig_min_rel: f64,
}

enum ScanOutcome {
    Sample(ScanSample),
    Skip(String),
}

fn metric_from_jets(jets: &crate::geometry::NormJets) -> Sym2 {
    // g = F F'' + F' (x) F'.
    jets.f.d2.scale(jets.f.val).add(&Sym2::outer(&jets.f.d1))
}

fn evaluate_direction(
    chart: &Chart,
    seed: u64,
    index: u64,
    parent: Option<(&DVector<f64>, f64)>,
) -> ScanOutcome {
    let y = match parent {
        None => sphere_direction(chart, seed, index),
        Some((z_parent, tau)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index));
            let mut z = z_parent + gaussian_vector(&mut rng, chart.n) * tau;
            while z.norm() < 1e-8 {
                z = z_parent + gaussian_vector(&mut rng, chart.n) * tau;
            }
            z /= z.norm();
            chart.white.from_white(&z)
        }
    };
    let slit_distance = match chart.slit_distance(&y) {
        Ok(d) => d,
        Err(e) => return ScanOutcome::Skip(e.to_string()),
    };
    if slit_distance < chart.delta_min {
        return ScanOutcome::Skip("slit band".to_string());
    }
    let point = match EvalPoint::new(chart, y.clone()) {
        Ok(p) => p,
        Err(e) => return ScanOutcome::Skip(e.to_string()),
    };
    let jets = match eval_norm(chart, &point) {
        Ok(j) => j,
        Err(e) => return ScanOutcome::Skip(e.to_string()),
    };
    let g = metric_from_jets(&jets);
    let eig = eig_min(&g);
    let rel = eig / g.max_abs().max(1.0);
    ScanOutcome::Sample(ScanSample {
        index,
        y: y.as_slice().to_vec(),
        slit_distance,
        eig_min: eig,
        eig_min_rel: rel,
    })
}

/// Result of a definiteness scan over the admitted fiber.
#[derive(Debug, Clone, Serialize)]
pub struct SlitProbeReport {
    pub family: String,
    pub sign: String,
    pub dim: usize,
    pub dim_ker: usize,
    pub seed: u64,
    pub base_samples: usize,
    pub refined_samples: usize,
    pub evaluated: usize,
    /// Skip reason -> count.
    pub skipped: BTreeMap<String, usize>,
    pub min_eig_rel: f64,
    pub negative_found: bool,
    pub verdict: String,
    /// The worst samples by relative smallest eigenvalue, ascending.
    pub worst: Vec<ScanSample>,
    /// Present exactly when a violation was found; the worst sample.
    pub witness: Option<ScanSample>,
}

impl SlitProbeReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "definiteness scan: family {} sign {} dim {} (kernel {})",
            self.family, self.sign, self.dim, self.dim_ker
        );
        let _ = writeln!(
            out,
            "samples: {} base + {} refined, {} evaluated, {} skipped",
            self.base_samples,
            self.refined_samples,
            self.evaluated,
            self.skipped.values().sum::<usize>()
        );
        for (reason, count) in &self.skipped {
            let _ = writeln!(out, "  skipped [{reason}]: {count}");
        }
        let _ = writeln!(out, "min relative eigenvalue: {:.6e}", self.min_eig_rel);
        let _ = writeln!(out, "verdict: {}", self.verdict);
        if let Some(w) = &self.witness {
            let _ = writeln!(
                out,
                "witness: y = {:?}, slit distance {:.6e}, eig {:.6e}",
                w.y, w.slit_distance, w.eig_min
            );
        }
        if !self.worst.is_empty() {
            let _ = writeln!(out, "{:<10} {:>16} {:>16}", "index", "slit distance", "eig rel");
            for s in self.worst.iter().take(8) {
                let _ = writeln!(
                    out,
                    "{:<10} {:>16.6e} {:>16.6e}",
                    s.index, s.slit_distance, s.eig_min_rel
                );
            }
        }
        out
    }
}

fn merge_outcomes(
    outcomes: Vec<ScanOutcome>,
    pool: &mut Vec<ScanSample>,
    skipped: &mut BTreeMap<String, usize>,
) {
    for o in outcomes {
        match o {
            ScanOutcome::Sample(s) => pool.push(s),
            ScanOutcome::Skip(reason) => *skipped.entry(reason).or_insert(0) += 1,
        }
    }
}

fn sort_by_eig(pool: &mut [ScanSample]) {
    pool.sort_by(|a, b| {
        a.eig_min_rel
            .partial_cmp(&b.eig_min_rel)
            .expect("finite eigenvalues")
            .then(a.index.cmp(&b.index))
    });
}

/// Scan the fundamental tensor for definiteness violations over `samples`
/// deterministic sphere directions, then refine around the worst samples:
/// each round re-draws [`REFINE_CHILDREN`] perturbed children per parent
/// with perturbation scale half the parent's slit distance, drilling into
/// the region where definiteness degrades first.
pub fn scan_positive_definiteness(
    chart: &Chart,
    samples: usize,
    seed: u64,
) -> Result<SlitProbeReport> {
    let mut pool: Vec<ScanSample> = Vec::new();
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();

    let base: Vec<ScanOutcome> = (0..samples as u64)
        .into_par_iter()
        .map(|i| evaluate_direction(chart, seed, i, None))
        .collect();
    merge_outcomes(base, &mut pool, &mut skipped);

    let n_parents = (samples / 100).clamp(1, 100);
    let mut next_index = samples as u64;
    let mut refined = 0usize;
    for _ in 0..REFINE_ROUNDS {
        if pool.is_empty() {
            break;
        }
        sort_by_eig(&mut pool);
        let parents: Vec<(DVector<f64>, f64)> = pool
            .iter()
            .take(n_parents)
            .map(|s| {
                let y = DVector::from_row_slice(&s.y);
                (chart.white.to_white(&y), 0.5 * s.slit_distance)
            })
            .collect();
        let candidates: Vec<(u64, usize)> = (0..parents.len() * REFINE_CHILDREN)
            .map(|k| (next_index + k as u64, k / REFINE_CHILDREN))
            .collect();
        next_index += candidates.len() as u64;
        refined += candidates.len();
        let children: Vec<ScanOutcome> = candidates
            .par_iter()
            .map(|(idx, parent)| {
                let (z, tau) = &parents[*parent];
                evaluate_direction(chart, seed, *idx, Some((z, *tau)))
            })
            .collect();
        merge_outcomes(children, &mut pool, &mut skipped);
    }

    sort_by_eig(&mut pool);
    let evaluated = pool.len();
    let min_eig_rel = pool.first().map(|s| s.eig_min_rel).unwrap_or(0.0);
    let negative_found = min_eig_rel < -NEG_EIG_REL;
    let verdict = if evaluated == 0 {
        "no admitted samples".to_string()
    } else if negative_found {
        "negative found".to_string()
    } else {
        "positive definite on sample".to_string()
    };
    let worst: Vec<ScanSample> = pool.iter().take(WORST_KEPT).cloned().collect();
    let witness = if negative_found { pool.first().cloned() } else { None };
    Ok(SlitProbeReport {
        family: chart.kind.name().to_string(),
        sign: chart.sign.symbol().to_string(),
        dim: chart.n,
        dim_ker: chart.dim_ker(),
        seed,
        base_samples: samples,
        refined_samples: refined,
        evaluated,
        skipped,
        min_eig_rel,
        negative_found,
        verdict,
        worst,
        witness,
    })
}

/// Whether definiteness away from the slit is asserted for this chart:
/// `Some(true)` asserted definite, `Some(false)` asserted to fail
/// somewhere, `None` recorded as evidence only.
pub fn pd_expectation(chart: &Chart) -> Option<bool> {
    match chart.kind {
        FamilyKind::Euclidean | FamilyKind::Randers | FamilyKind::ASpace => Some(true),
        FamilyKind::BSpace => match chart.sign {
            SignBranch::Plus => Some(true),
            SignBranch::Minus => {
                if chart.n == 2 {
                    Some(true)
                } else {
                    Some(false)
                }
            }
        },
        FamilyKind::Bipartite => {
            if chart.s_is_zero() {
                return Some(true);
            }
            let k = chart.dim_ker();
            match chart.sign {
                SignBranch::Minus => {
                    if k + 1 >= chart.n {
                        Some(true)
                    } else if k >= 1 {
                        Some(false)
                    } else {
                        // Full-rank perturbations are outside the dichotomy;
                        // record evidence without asserting either way.
                        None
                    }
                }
                SignBranch::Plus => {
                    let pos: Vec<f64> = chart
                        .s_eigvals
                        .iter()
                        .copied()
                        .filter(|l| *l > KERNEL_TOL)
                        .collect();
                    let rank = pos.len();
                    let spread = pos.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
                        - pos.iter().fold(f64::INFINITY, |a, &v| a.min(v));
                    let one_eigenvalue = spread <= 1e-9;
                    // Definiteness of the plus branch is asserted only for the
                    // spectra realized by the named families (rank 1, corank 1
                    // with equal eigenvalue, or a pure rescaling).
                    if one_eigenvalue && (rank == 1 || rank + 1 == chart.n || rank == chart.n) {
                        Some(true)
                    } else {
                        None
                    }
                }
            }
        }
    }
}

/// Haar-ish random orthogonal matrix: QR of a Gaussian matrix with the
/// column signs fixed by the R diagonal, fully determined by the seed.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x4F52_5448));
    let m = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Random symmetric positive definite matrix with eigenvalues uniform in
/// `[eig_lo, eig_hi]`, determined by the seed.
pub fn random_spd(n: usize, seed: u64, eig_lo: f64, eig_hi: f64) -> DMatrix<f64> {
    let q = random_orthogonal(n, mix_seed(seed, 0x5350_4431));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5350_4432));
    let d = DVector::from_fn(n, |_, _| eig_lo + (eig_hi - eig_lo) * rng.random::<f64>());
    symmetrize(&(&q * DMatrix::from_diagonal(&d) * q.transpose()))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |j, k| 0.5 * (m[(j, k)] + m[(k, j)]))
}

/// Bipartite norm specification with a planted spectrum: the generalized
/// eigenvalues of the perturbation form against `r` equal `eigs` exactly
/// (up to roundoff), with a seeded random eigenbasis.
pub fn planted_bipartite(
    r: &DMatrix<f64>,
    eigs: &[f64],
    sign: SignBranch,
    seed: u64,
) -> Result<NormSpec> {
    let n = r.nrows();
    if eigs.len() != n {
        return Err(Error::DimMismatch { expected: n, found: eigs.len() });
    }
    let white = whitening(r)?;
    let u = random_orthogonal(n, mix_seed(seed, 0x4249_5031));
    let s_white = &u * DMatrix::from_diagonal(&DVector::from_row_slice(eigs)) * u.transpose();
    let s = symmetrize(&(&white.l * s_white * white.l.transpose()));
    Ok(NormSpec::new(
        n,
        RiemannMetric::constant(r.clone()),
        FamilySpec::Bipartite { s: MatrixField::Constant(s) },
        sign,
    ))
}

/// The transverse-curvature witness against definiteness of the minus
/// branch when the perturbation kernel is too small: in dimension 3 with
/// `s = diag(lam1, lam2, 0)` and the standard inner product, evaluate at
/// `y = (eps, 0, 1 + eta)` with `eta` chosen so `F = 1`. The transverse
/// diagonal entry of `g` is `1/rho - lam2/sigma` exactly and
/// `1 - lam2 - lam2 / (sqrt(lam1) eps)` to leading order, so it diverges
/// to `-infinity` as `eps -> 0`.
#[derive(Debug, Clone, Serialize)]
pub struct TransverseWitness {
    pub eps: f64,
    pub y: Vec<f64>,
    pub g_transverse_jet: f64,
    pub g_transverse_exact: f64,
    pub g_transverse_leading: f64,
    pub eig_min_rel: f64,
}

pub fn transverse_witness(lam1: f64, lam2: f64, eps: f64) -> Result<TransverseWitness> {
    if !(0.0 < lam1 && lam1 < 1.0 && 0.0 < lam2 && lam2 < 1.0) {
        return Err(Error::Config(format!(
            "witness eigenvalues must lie in (0, 1), got {lam1}, {lam2}"
        )));
    }
    let s = DMatrix::from_diagonal(&DVector::from_row_slice(&[lam1, lam2, 0.0]));
    let spec = NormSpec::new(
        3,
        RiemannMetric::euclidean(3),
        FamilySpec::Bipartite { s: MatrixField::Constant(s) },
        SignBranch::Minus,
    );
    let chart = Chart::new(&spec, &[0.0; 3])?;
    let eta = (1.0 + 2.0 * lam1.sqrt() * eps + (lam1 - 1.0) * eps * eps).sqrt() - 1.0;
    let y = DVector::from_row_slice(&[eps, 0.0, 1.0 + eta]);
    let point = EvalPoint::new(&chart, y.clone())?;
    let jets = eval_norm(&chart, &point)?;
    let g = metric_from_jets(&jets);
    let rho = chart.rnorm(&y);
    let sigma = lam1.sqrt() * eps;
    Ok(TransverseWitness {
        eps,
        y: y.as_slice().to_vec(),
        g_transverse_jet: g.get(1, 1),
        g_transverse_exact: 1.0 / rho - lam2 / sigma,
        g_transverse_leading: 1.0 - lam2 - lam2 / (lam1.sqrt() * eps),
        eig_min_rel: eig_min(&g) / g.max_abs().max(1.0),
    })
}

/// Options for [`run_invariant_suite`].
#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// Tensor samples per chart.
    pub samples: usize,
    pub seed: u64,
    /// How many samples also get a finite-difference cross-check.
    pub fd_samples: usize,
    /// Base samples for the embedded definiteness scan.
    pub scan_samples: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { samples: 400, seed: 0, fd_samples: 6, scan_samples: 2000 }
    }
}

/// One verified residual block.
#[derive(Debug, Clone, Serialize)]
pub struct BlockResult {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Aggregate verification report for one norm configuration.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub family: String,
    pub sign: String,
    pub dim: usize,
    pub dim_ker: usize,
    pub seed: u64,
    pub samples_requested: usize,
    pub samples_evaluated: usize,
    pub skipped: BTreeMap<String, usize>,
    pub branch_counts: BTreeMap<String, usize>,
    pub blocks: Vec<BlockResult>,
    /// Definiteness assertion for this chart, if any.
    pub pd_expected: Option<bool>,
    pub pd_consistent: bool,
    pub scan: SlitProbeReport,
    pub pass: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "norm: family {} sign {} dim {} (kernel {})",
            self.family, self.sign, self.dim, self.dim_ker
        );
        let _ = writeln!(
            out,
            "samples: {} requested, {} evaluated, {} skipped (seed {})",
            self.samples_requested,
            self.samples_evaluated,
            self.skipped.values().sum::<usize>(),
            self.seed
        );
        let branches: Vec<String> =
            self.branch_counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
        let _ = writeln!(out, "branches: {}", branches.join(", "));
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<40} {:>14} {:>12} {:>6}",
            "block", "max residual", "tolerance", "status"
        );
        for b in &self.blocks {
            let _ = writeln!(
                out,
                "{:<40} {:>14.3e} {:>12.1e} {:>6}",
                b.name,
                b.max_residual,
                b.tolerance,
                if b.pass { "pass" } else { "FAIL" }
            );
        }
        let _ = writeln!(out);
        let expectation = match self.pd_expected {
            Some(true) => "asserted definite",
            Some(false) => "asserted to fail",
            None => "evidence only",
        };
        let _ = writeln!(
            out,
            "definiteness: {} ({}), min eig rel {:.3e} -> {}",
            self.scan.verdict,
            expectation,
            self.scan.min_eig_rel,
            if self.pd_consistent { "consistent" } else { "INCONSISTENT" }
        );
        let _ = writeln!(out, "verdict: {}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}

struct SampleResiduals {
    branch: &'static str,
    slit_distance: f64,
    y: Vec<f64>,
    euler: f64,
    cyclic: f64,
    geometric: f64,
    perturbation: f64,
    mean_torsion: f64,
    family_vanish: Option<f64>,
    s_vanish: Option<f64>,
    b_vanish: Option<f64>,
    reductions_agree: Option<f64>,
    inverse_metric: Option<f64>,
    kappa_closed_form: Option<f64>,
    projector: Option<f64>,
    g_closed_form: Option<f64>,
}

fn sample_residuals(chart: &Chart, seed: u64, index: u64) -> std::result::Result<SampleResiduals, String> {
    let y = sphere_direction(chart, seed, index);
    let point = EvalPoint::new(chart, y.clone()).map_err(|e| e.to_string())?;
    let jets = eval_norm(chart, &point).map_err(|e| e.to_string())?;
    let ts = tensor_set_from_jets(chart, &jets).map_err(|e| e.to_string())?;
    let yv: Vec<f64> = y.iter().copied().collect();

    let euler = euler_residuals(&ts, &jets, &yv).max();
    let cyc = cyclic_residuals(&ts, &jets);
    let mean_torsion = mean_cartan_residual(&ts, &jets);

    let family_vanish = match chart.kind {
        FamilyKind::Euclidean => Some(vanish_ratio(&ts.c, &ts.c, ts.f)),
        FamilyKind::Randers => Some(vanish_ratio(&ts.m, &ts.c, ts.f)),
        _ => None,
    };
    let (s_vanish, g_cf) = if chart.kind.is_bipartite_type() {
        let sv = vanish_ratio(&ts.s, &ts.c, ts.f);
        let g_white_jet = chart.white.cov2_to_white(&ts.g.to_dmatrix());
        let g_white_cf = closedforms::g_closed_form(chart, &y).map_err(|e| e.to_string())?;
        let gcf = (g_white_cf.to_dmatrix() - &g_white_jet).amax() / g_white_jet.amax();
        (Some(sv), Some(gcf))
    } else {
        (None, None)
    };
    let (b_vanish, reductions_agree, inverse_metric, kappa_cf, projector) =
        if chart.kind == FamilyKind::BSpace {
            let b = ts.b.as_ref().expect("perpendicular-family reduction");
            let kb = ts.kappa_b.expect("perpendicular-family principal scalar");
            let bv = vanish_ratio(b, &ts.c, ts.f);
            let agree = vanish_ratio(&b.sub(&ts.s), &ts.c, ts.f);
            let gi_cf = closedforms::bspace_inverse_metric(chart, &y).map_err(|e| e.to_string())?;
            let gi = (gi_cf.sub(&ts.g_inv)).max_abs() / ts.g_inv.max_abs();
            let kcf = (ts.kappa - kb).abs() / kb.abs().max(1.0);
            let proj = closedforms::projector_residuals(chart, &jets, &y)
                .map_err(|e| e.to_string())?
                .into_iter()
                .fold(0.0_f64, |a, (_, v)| a.max(v));
            (Some(bv), Some(agree), Some(gi), Some(kcf), Some(proj))
        } else {
            (None, None, None, None, None)
        };

    Ok(SampleResiduals {
        branch: ts.branch.name(),
        slit_distance: point.slit_distance,
        y: yv,
        euler,
        cyclic: cyc.cyclic,
        geometric: cyc.geometric,
        perturbation: cyc.third_derivative,
        mean_torsion,
        family_vanish,
        s_vanish,
        b_vanish,
        reductions_agree,
        inverse_metric,
        kappa_closed_form: kappa_cf,
        projector,
        g_closed_form: g_cf,
    })
}

fn fold_max(acc: &mut Option<f64>, v: Option<f64>) {
    if let Some(v) = v {
        *acc = Some(acc.map_or(v, |a| a.max(v)));
    }
}

/// Run every applicable identity block over deterministic fiber samples,
/// embed a definiteness scan, and aggregate a pass/fail report.
pub fn run_invariant_suite(spec: &NormSpec, x: &[f64], opts: &SuiteOptions) -> Result<VerifyReport> {
    let chart = Chart::new(spec, x)?;
    let results: Vec<std::result::Result<SampleResiduals, String>> = (0..opts.samples as u64)
        .into_par_iter()
        .map(|i| sample_residuals(&chart, opts.seed, i))
        .collect();

    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();
    let mut branch_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut euler = None;
    let mut cyclic = None;
    let mut geometric = None;
    let mut perturbation = None;
    let mut mean_torsion = None;
    let mut family_vanish = None;
    let mut s_vanish = None;
    let mut b_vanish = None;
    let mut reductions_agree = None;
    let mut inverse_metric = None;
    let mut kappa_cf = None;
    let mut projector = None;
    let mut g_cf = None;
    let mut fd_candidates: Vec<Vec<f64>> = Vec::new();
    let mut evaluated = 0usize;

    for r in results {
        match r {
            Err(reason) => *skipped.entry(reason).or_insert(0) += 1,
            Ok(s) => {
                evaluated += 1;
                *branch_counts.entry(s.branch.to_string()).or_insert(0) += 1;
                fold_max(&mut euler, Some(s.euler));
                fold_max(&mut cyclic, Some(s.cyclic));
                fold_max(&mut geometric, Some(s.geometric));
                fold_max(&mut perturbation, Some(s.perturbation));
                fold_max(&mut mean_torsion, Some(s.mean_torsion));
                fold_max(&mut family_vanish, s.family_vanish);
                fold_max(&mut s_vanish, s.s_vanish);
                fold_max(&mut b_vanish, s.b_vanish);
                fold_max(&mut reductions_agree, s.reductions_agree);
                fold_max(&mut inverse_metric, s.inverse_metric);
                fold_max(&mut kappa_cf, s.kappa_closed_form);
                fold_max(&mut projector, s.projector);
                fold_max(&mut g_cf, s.g_closed_form);
                // Finite differences need room to place the stencil on the
                // smooth side of the slit.
                if fd_candidates.len() < opts.fd_samples && s.slit_distance >= 0.1 {
                    fd_candidates.push(s.y);
                }
            }
        }
    }

    let mut fd_max = None;
    for yv in &fd_candidates {
        let y = DVector::from_row_slice(yv);
        let point = EvalPoint::new(&chart, y)?;
        let jets = eval_norm(&chart, &point)?;
        let eval = |p: &[f64]| -> Result<f64> {
            let v = DVector::from_row_slice(p);
            Ok(chart.norm_value(&v))
        };
        let report = fd_check(eval, yv, crate::fd::H_REL_DEFAULT, &jets.f)?;
        fold_max(&mut fd_max, Some(report.max_rel()));
    }

    let mut blocks = Vec::new();
    let mut push = |name: &str, value: Option<f64>, tol: f64| {
        if let Some(v) = value {
            blocks.push(BlockResult { name: name.to_string(), max_residual: v, tolerance: tol, pass: v <= tol });
        }
    };
    push("radial and unit identities", euler, 1e-9);
    push("third-derivative cyclic identity", cyclic, 1e-9);
    push("geometric reduction identity", geometric, 1e-9);
    push("perturbation cyclic identity", perturbation, 1e-9);
    push("mean torsion identity", mean_torsion, 1e-9);
    push("finite-difference jet check", fd_max, 1e-5);
    match chart.kind {
        FamilyKind::Euclidean => push("torsion vanishes", family_vanish, 1e-12),
        FamilyKind::Randers => push("matsumoto reduction vanishes", family_vanish, 1e-9),
        _ => {}
    }
    push("bipartite reduction vanishes", s_vanish, 1e-8);
    push("fundamental tensor closed form", g_cf, 1e-9);
    push("perpendicular reduction vanishes", b_vanish, 1e-8);
    push("reductions agree", reductions_agree, 1e-9);
    push("inverse metric closed form", inverse_metric, 1e-9);
    push("principal scalar closed form", kappa_cf, 1e-10);
    push("projector identities", projector, 1e-9);

    let scan =
        scan_positive_definiteness(&chart, opts.scan_samples, mix_seed(opts.seed, 0x5343_414E))?;
    let pd_expected = pd_expectation(&chart);
    let pd_consistent = match pd_expected {
        Some(true) => !scan.negative_found,
        Some(false) => scan.negative_found,
        None => true,
    };

    let pass = evaluated > 0 && pd_consistent && blocks.iter().all(|b| b.pass);
    Ok(VerifyReport {
        family: chart.kind.name().to_string(),
        sign: chart.sign.symbol().to_string(),
        dim: chart.n,
        dim_ker: chart.dim_ker(),
        seed: opts.seed,
        samples_requested: opts.samples,
        samples_evaluated: evaluated,
        skipped,
        branch_counts,
        blocks,
        pd_expected,
        pd_consistent,
        scan,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VectorField;
    use crate::tensors::LimitBranch;
    use approx::assert_relative_eq;

    fn euclidean_spec(n: usize) -> NormSpec {
        NormSpec::new(n, RiemannMetric::euclidean(n), FamilySpec::Euclidean, SignBranch::Plus)
    }

    fn bspace_spec(n: usize, b: &[f64], sign: SignBranch) -> NormSpec {
        NormSpec::new(
            n,
            RiemannMetric::euclidean(n),
            FamilySpec::BSpace { b: VectorField::Constant(DVector::from_row_slice(b)) },
            sign,
        )
    }

    #[test]
    fn sphere_directions_are_unit_and_deterministic() {
        let spec = NormSpec::new(
            3,
            RiemannMetric::constant(random_spd(3, 5, 0.5, 2.0)),
            FamilySpec::Euclidean,
            SignBranch::Plus,
        );
        let chart = Chart::new(&spec, &[0.0; 3]).unwrap();
        for i in 0..50 {
            let y = sphere_direction(&chart, 7, i);
            assert_relative_eq!(chart.rnorm(&y), 1.0, epsilon = 1e-12);
            let y2 = sphere_direction(&chart, 7, i);
            assert_eq!(y, y2);
        }
    }

    #[test]
    fn euclidean_scan_is_definite_with_no_skips() {
        let chart = Chart::new(&euclidean_spec(3), &[0.0; 3]).unwrap();
        let report = scan_positive_definiteness(&chart, 300, 1).unwrap();
        assert!(!report.negative_found);
        assert!(report.skipped.is_empty());
        assert_eq!(report.evaluated, 300 + report.refined_samples);
        assert!(report.min_eig_rel > 0.0);
    }

    #[test]
    fn perpendicular_minus_scan_finds_violation_in_dimension_three() {
        let chart = Chart::new(&bspace_spec(3, &[0.0, 0.0, 0.5], SignBranch::Minus), &[0.0; 3])
            .unwrap();
        let report = scan_positive_definiteness(&chart, 2000, 3).unwrap();
        assert!(report.negative_found, "min eig rel {}", report.min_eig_rel);
        assert!(report.witness.is_some());
    }

    #[test]
    fn perpendicular_minus_scan_is_definite_in_dimension_two() {
        let chart =
            Chart::new(&bspace_spec(2, &[0.0, 0.5], SignBranch::Minus), &[0.0; 2]).unwrap();
        let report = scan_positive_definiteness(&chart, 2000, 3).unwrap();
        assert!(!report.negative_found, "min eig rel {}", report.min_eig_rel);
    }

    #[test]
    fn scan_reports_are_byte_identical_across_thread_counts() {
        let chart = Chart::new(&bspace_spec(3, &[0.0, 0.0, 0.5], SignBranch::Minus), &[0.0; 3])
            .unwrap();
        let a = scan_positive_definiteness(&chart, 400, 9).unwrap().to_json();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| scan_positive_definiteness(&chart, 400, 9).unwrap().to_json());
        assert_eq!(a, b);
    }

    #[test]
    fn transverse_witness_matches_frozen_values() {
        let w = transverse_witness(0.5, 0.5, 0.01).unwrap();
        // Exact transverse entry at eps = 0.01:
        // 1/(1 + sqrt(0.5) * 0.01) - 0.5 / (sqrt(0.5) * 0.01).
        assert_relative_eq!(w.g_transverse_exact, -69.717_699_54, epsilon = 1e-6);
        assert_relative_eq!(w.g_transverse_jet, w.g_transverse_exact, epsilon = 1e-9);
        let rel = (w.g_transverse_exact - w.g_transverse_leading).abs()
            / w.g_transverse_leading.abs();
        assert!(rel < 0.01, "leading-order gap {rel}");
        assert!(w.eig_min_rel < 0.0);
    }

    #[test]
    fn planted_spectrum_is_recovered() {
        let r = random_spd(4, 11, 0.5, 2.0);
        let eigs = [0.0, 0.2, 0.45, 0.8];
        let spec = planted_bipartite(&r, &eigs, SignBranch::Minus, 13).unwrap();
        let chart = Chart::new(&spec, &[0.0; 4]).unwrap();
        for (got, want) in chart.s_eigvals.iter().zip(eigs.iter()) {
            assert_relative_eq!(got, want, epsilon = 1e-10);
        }
        assert_eq!(chart.dim_ker(), 1);
    }

    #[test]
    fn expectation_table_matches_family_claims() {
        let c = Chart::new(&euclidean_spec(3), &[0.0; 3]).unwrap();
        assert_eq!(pd_expectation(&c), Some(true));
        let c = Chart::new(&bspace_spec(2, &[0.0, 0.5], SignBranch::Minus), &[0.0; 2]).unwrap();
        assert_eq!(pd_expectation(&c), Some(true));
        let c = Chart::new(&bspace_spec(4, &[0.0, 0.0, 0.0, 0.5], SignBranch::Minus), &[0.0; 4])
            .unwrap();
        assert_eq!(pd_expectation(&c), Some(false));
        let r = DMatrix::identity(4, 4);
        let spec = planted_bipartite(&r, &[0.0, 0.0, 0.3, 0.6], SignBranch::Minus, 2).unwrap();
        let c = Chart::new(&spec, &[0.0; 4]).unwrap();
        assert_eq!(pd_expectation(&c), Some(false));
        let spec = planted_bipartite(&r, &[0.0, 0.0, 0.0, 0.6], SignBranch::Minus, 2).unwrap();
        let c = Chart::new(&spec, &[0.0; 4]).unwrap();
        assert_eq!(pd_expectation(&c), Some(true));
        let spec = planted_bipartite(&r, &[0.1, 0.2, 0.3, 0.6], SignBranch::Minus, 2).unwrap();
        let c = Chart::new(&spec, &[0.0; 4]).unwrap();
        assert_eq!(pd_expectation(&c), None);
    }

    #[test]
    fn suite_passes_on_randers_chart() {
        let spec = NormSpec::new(
            3,
            RiemannMetric::constant(random_spd(3, 21, 0.8, 1.6)),
            FamilySpec::Randers {
                a: VectorField::Constant(DVector::from_row_slice(&[0.1, -0.2, 0.25])),
            },
            SignBranch::Minus,
        );
        let opts = SuiteOptions { samples: 60, seed: 4, fd_samples: 3, scan_samples: 300 };
        let report = run_invariant_suite(&spec, &[0.0; 3], &opts).unwrap();
        assert!(report.pass, "{}", report.render_table());
        assert_eq!(report.samples_evaluated, 60);
        assert_eq!(report.branch_counts.get(LimitBranch::RandersLimit.name()), Some(&60));
    }
}
