//! Indicatrix geometry: deterministic direction grids, the two-branch unit
//! level set (the "lemon" for the plus branch, the "apple" for the minus
//! branch) together with the fixed sphere they share on the slit, residuals
//! against the spindle-toroid and ellipsoid closed forms, mesh topology,
//! and lossless OBJ/CSV interchange.

use crate::error::{Error, Result};
use crate::geometry::{Chart, FamilyKind, SignBranch};
use crate::linalg::frame_with_last_axis;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// Vertices within this slit distance are flagged `slit_adjacent`.
pub const SLIT_BAND_DEFAULT: f64 = 0.02;

/// Fixed generic rotation applied to the base icosahedron. Without it the
/// first subdivision produces vertices exactly on the coordinate axes,
/// which would sit on the slit of axis-aligned configurations.
const ICO_ROTATION: [f64; 3] = [0.256, 0.531, 0.117];

/// A deterministic family of unit directions (in whitened coordinates).
#[derive(Debug, Clone)]
pub enum DirectionGrid {
    /// `count` angles at half-step offsets around the circle (dim 2).
    Circle { count: usize },
    /// Subdivided icosahedron (dim 3); `subdivisions` quadruples the face
    /// count each time.
    Icosphere { subdivisions: usize },
    /// Halton low-discrepancy points pushed through a Gaussian map and
    /// normalized (any dimension).
    LowDiscrepancy { count: usize },
}

/// The grid conventionally used for a given dimension.
pub fn default_grid(n: usize) -> DirectionGrid {
    match n {
        2 => DirectionGrid::Circle { count: 256 },
        3 => DirectionGrid::Icosphere { subdivisions: 4 },
        _ => DirectionGrid::LowDiscrepancy { count: 2048 },
    }
}

impl DirectionGrid {
    /// Unit directions plus the face/edge structure connecting them (faces
    /// for the icosphere, a closed polyline for the circle).
    pub fn build(&self, n: usize) -> Result<(Vec<DVector<f64>>, Vec<[usize; 3]>, Vec<[usize; 2]>)> {
        match self {
            DirectionGrid::Circle { count } => {
                if n != 2 {
                    return Err(Error::DimMismatch { expected: 2, found: n });
                }
                if *count < 3 {
                    return Err(Error::Config("circle grid needs at least 3 points".into()));
                }
                let verts: Vec<DVector<f64>> = (0..*count)
                    .map(|k| {
                        let t = (k as f64 + 0.5) * std::f64::consts::TAU / *count as f64;
                        DVector::from_row_slice(&[t.cos(), t.sin()])
                    })
                    .collect();
                let edges: Vec<[usize; 2]> =
                    (0..*count).map(|k| [k, (k + 1) % count]).collect();
                Ok((verts, Vec::new(), edges))
            }
            DirectionGrid::Icosphere { subdivisions } => {
                if n != 3 {
                    return Err(Error::DimMismatch { expected: 3, found: n });
                }
                let (verts, faces) = icosphere(*subdivisions);
                let verts = verts
                    .into_iter()
                    .map(|v| DVector::from_row_slice(&v))
                    .collect();
                Ok((verts, faces, Vec::new()))
            }
            DirectionGrid::LowDiscrepancy { count } => {
                let verts = halton_sphere(n, *count)?;
                Ok((verts, Vec::new(), Vec::new()))
            }
        }
    }
}

/// Radical-inverse (van der Corput) value of `i >= 1` in the given base.
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const HALTON_BASES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Unit directions from the Halton sequence: pairs of coordinates feed a
/// Box-Muller map, the Gaussian vector is normalized. Fully deterministic.
fn halton_sphere(n: usize, count: usize) -> Result<Vec<DVector<f64>>> {
    let pairs = n.div_ceil(2);
    if 2 * pairs > HALTON_BASES.len() {
        return Err(Error::Config(format!(
            "low-discrepancy grid supports dimension <= {}, got {n}",
            HALTON_BASES.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    for i in 1..=count as u64 {
        let mut g = Vec::with_capacity(2 * pairs);
        for p in 0..pairs {
            let u1 = radical_inverse(i, HALTON_BASES[2 * p]);
            let u2 = radical_inverse(i, HALTON_BASES[2 * p + 1]);
            let r = (-2.0 * (1.0 - u1).ln()).sqrt();
            g.push(r * (std::f64::consts::TAU * u2).cos());
            g.push(r * (std::f64::consts::TAU * u2).sin());
        }
        g.truncate(n);
        let mut z = DVector::from_row_slice(&g);
        if z.norm() < 1e-8 {
            // Radical inverses of i >= 1 never vanish, so this is unreachable
            // in practice; keep the point stream well defined regardless.
            z = DVector::from_fn(n, |j, _| if j == 0 { 1.0 } else { 0.0 });
        }
        let norm = z.norm();
        out.push(z / norm);
    }
    Ok(out)
}

/// Unit icosphere: `subdivisions` rounds of 4-to-1 triangle splits of a
/// (generically rotated) icosahedron, midpoints re-projected to the sphere.
pub fn icosphere(subdivisions: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw: [[f64; 3]; 12] = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let rot = rotation_xyz(ICO_ROTATION);
    let mut verts: Vec<[f64; 3]> = raw
        .iter()
        .map(|v| {
            let p = &rot * DVector::from_row_slice(v);
            let p = &p / p.norm();
            [p[0], p[1], p[2]]
        })
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for (slot, (a, b)) in [(0, (f[0], f[1])), (1, (f[1], f[2])), (2, (f[2], f[0]))] {
                let key = (a.min(b), a.max(b));
                mid[slot] = *midpoint.entry(key).or_insert_with(|| {
                    let va = verts[a];
                    let vb = verts[b];
                    let mut m = [
                        0.5 * (va[0] + vb[0]),
                        0.5 * (va[1] + vb[1]),
                        0.5 * (va[2] + vb[2]),
                    ];
                    let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                    m = [m[0] / norm, m[1] / norm, m[2] / norm];
                    verts.push(m);
                    verts.len() - 1
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }
    (verts, faces)
}

fn rotation_xyz(angles: [f64; 3]) -> DMatrix<f64> {
    let (cx, sx) = (angles[0].cos(), angles[0].sin());
    let (cy, sy) = (angles[1].cos(), angles[1].sin());
    let (cz, sz) = (angles[2].cos(), angles[2].sin());
    let rx = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx]);
    let ry = DMatrix::from_row_slice(3, 3, &[cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy]);
    let rz = DMatrix::from_row_slice(3, 3, &[cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0]);
    rz * ry * rx
}

/// `V - E + F` with edges deduplicated from the face list.
pub fn euler_characteristic(n_vertices: usize, faces: &[[usize; 3]]) -> i64 {
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    n_vertices as i64 - edges.len() as i64 + faces.len() as i64
}

/// One connected component of the indicatrix union.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shell {
    /// `lemon` (plus branch), `apple` (minus branch), or `fixed-sphere`.
    pub name: String,
    pub vertices: Vec<Vec<f64>>,
    pub slit_adjacent: Vec<bool>,
    pub faces: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
}

/// The union of the two unit level sets and their shared fixed sphere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatrixUnion {
    pub family: String,
    pub dim: usize,
    pub shells: Vec<Shell>,
}

/// Sample the indicatrix union of a chart. Level-set vertices are
/// `y / F(y)` over the direction grid for both sign branches (plain norm
/// values, so slit-adjacent directions are fine); the fixed sphere is the
/// unit sphere of the kernel, where both branches meet.
pub fn indicatrix_union(
    chart: &Chart,
    grid: &DirectionGrid,
    slit_band: f64,
) -> Result<IndicatrixUnion> {
    let (dirs, faces, edges) = grid.build(chart.n)?;
    let mut shells = Vec::new();
    for (name, sign) in [("lemon", SignBranch::Plus), ("apple", SignBranch::Minus)] {
        let mut vertices = Vec::with_capacity(dirs.len());
        let mut flags = Vec::with_capacity(dirs.len());
        for z in &dirs {
            let y = chart.white.from_white(z);
            let f = chart.norm_value_signed(sign, &y);
            if !(f > 0.0) {
                return Err(Error::NotPositiveDefinite { what: "norm value on grid" });
            }
            let v = &y / f;
            flags.push(chart.slit_distance(&v)? < slit_band);
            vertices.push(v.as_slice().to_vec());
        }
        shells.push(Shell {
            name: name.to_string(),
            vertices,
            slit_adjacent: flags,
            faces: faces.clone(),
            edges: edges.clone(),
        });
    }
    if let Some(shell) = fixed_sphere_shell(chart)? {
        shells.push(shell);
    }
    Ok(IndicatrixUnion { family: chart.kind.name().to_string(), dim: chart.n, shells })
}

/// The unit sphere of the slit (kernel of the perturbation form), sampled
/// according to the kernel dimension. `None` when there is no slit.
fn fixed_sphere_shell(chart: &Chart) -> Result<Option<Shell>> {
    let k = chart.dim_ker();
    if !chart.kind.is_bipartite_type() || k == 0 {
        return Ok(None);
    }
    let basis = &chart.ker_basis;
    let embed = |coeffs: &[f64]| -> Vec<f64> {
        let mut v = DVector::zeros(chart.n);
        for (c, b) in coeffs.iter().zip(basis) {
            v += b * *c;
        }
        v.as_slice().to_vec()
    };
    let (vertices, faces, edges) = match k {
        1 => (vec![embed(&[1.0]), embed(&[-1.0])], Vec::new(), Vec::new()),
        2 => {
            let count = 128;
            let verts: Vec<Vec<f64>> = (0..count)
                .map(|i| {
                    let t = (i as f64 + 0.5) * std::f64::consts::TAU / count as f64;
                    embed(&[t.cos(), t.sin()])
                })
                .collect();
            let edges = (0..count).map(|i| [i, (i + 1) % count]).collect();
            (verts, Vec::new(), edges)
        }
        3 => {
            let (verts, faces) = icosphere(2);
            let verts = verts.iter().map(|v| embed(v)).collect();
            (verts, faces, Vec::new())
        }
        _ => {
            let verts = halton_sphere(k, 256)?
                .iter()
                .map(|z| embed(z.as_slice()))
                .collect();
            (verts, Vec::new(), Vec::new())
        }
    };
    let flags = vec![true; vertices.len()];
    Ok(Some(Shell {
        name: "fixed-sphere".to_string(),
        vertices,
        slit_adjacent: flags,
        faces,
        edges,
    }))
}

/// Scale parameter of the spindle toroid traced by the perpendicular-family
/// indicatrix: `B = 1 / (1 - |b|^2)`.
pub fn spindle_parameter(b_norm: f64) -> f64 {
    1.0 / (1.0 - b_norm * b_norm)
}

/// Both spindle-toroid residuals at a point given in slit-aligned
/// coordinates (`w_bar` = distance from the slit axis, `w_axis` = height):
/// `q_pm = (w_bar +/- b B)^2 / B^2 + w_axis^2 / B - 1` with `B` the
/// spindle parameter. The plus sign is the lemon, the minus the apple.
pub fn spindle_residuals(b_norm: f64, w_bar: f64, w_axis: f64) -> (f64, f64) {
    let big_b = spindle_parameter(b_norm);
    let q = |s: f64| {
        let t = w_bar + s * b_norm * big_b;
        t * t / (big_b * big_b) + w_axis * w_axis / big_b - 1.0
    };
    (q(1.0), q(-1.0))
}

/// Distance of a vertex from the spindle-toroid surface pair of a
/// perpendicular-family chart: whiten, rotate the slit axis to the last
/// coordinate, evaluate both branch residuals, return the smaller.
pub fn toroid_residual(chart: &Chart, y: &DVector<f64>) -> Result<f64> {
    if chart.kind != FamilyKind::BSpace {
        return Err(Error::Alignment {
            detail: format!("spindle toroid applies to the perpendicular family, not {}", chart.kind.name()),
        });
    }
    let b = chart.field.as_ref().expect("bspace field");
    let b_white = chart.white.to_white(b);
    let b_norm = b_white.norm();
    let frame = frame_with_last_axis(&b_white)?;
    let w = frame.transpose() * chart.white.to_white(y);
    let n = chart.n;
    let w_axis = w[n - 1];
    let w_bar = w.rows(0, n - 1).norm();
    let (qp, qm) = spindle_residuals(b_norm, w_bar, w_axis);
    Ok(qp.abs().min(qm.abs()))
}

/// The indicatrix of a linear-perturbation norm is an ellipsoid:
/// `(y - center)^T q (y - center) = level` with `q = r - alpha alpha^T`
/// (`alpha` the lowered field), `center = -/+ a / (1 - |a|^2)` for the
/// plus/minus branch, and `level = 1 / (1 - |a|^2)`.
#[derive(Debug, Clone)]
pub struct EllipsoidForm {
    pub q: DMatrix<f64>,
    pub center: DVector<f64>,
    pub level: f64,
}

pub fn randers_ellipsoid(chart: &Chart, branch: SignBranch) -> Result<EllipsoidForm> {
    if chart.kind != FamilyKind::Randers {
        return Err(Error::UnsupportedFamily {
            op: "indicatrix ellipsoid",
            family: chart.kind.name(),
        });
    }
    let a = chart.field.as_ref().expect("randers field");
    let alpha = &chart.r * a;
    let a2 = chart.rdot(a, a);
    let q = &chart.r - &alpha * alpha.transpose();
    let level = 1.0 / (1.0 - a2);
    let center = a * (-branch.factor() * level);
    Ok(EllipsoidForm { q, center, level })
}

impl EllipsoidForm {
    /// `|(y - c)^T q (y - c) - level| / level`.
    pub fn residual(&self, y: &DVector<f64>) -> f64 {
        let d = y - &self.center;
        ((d.transpose() * &self.q * &d)[(0, 0)] - self.level).abs() / self.level
    }
}

/// Largest relative gap between two norm values over a deterministic
/// direction sample; used to confirm that two charts define the same norm.
pub fn max_norm_gap(a: &Chart, b: &Chart, samples: usize, seed: u64) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::DimMismatch { expected: a.n, found: b.n });
    }
    let mut worst = 0.0_f64;
    for i in 0..samples as u64 {
        let y = crate::diagnostics::sphere_direction(a, seed, i);
        let fa = a.norm_value(&y);
        let fb = b.norm_value(&y);
        worst = worst.max((fa - fb).abs() / fa.abs().max(1e-300));
    }
    Ok(worst)
}

fn push_f64(out: &mut String, v: f64) {
    // `{}` prints the shortest representation that round-trips exactly.
    let _ = write!(out, "{v}");
}

/// Wavefront OBJ export (dimension 3): one object per shell, vertices,
/// faces, polylines, and a comment line carrying the slit flags so the
/// reader can reconstruct the union exactly.
pub fn to_obj(union: &IndicatrixUnion) -> Result<String> {
    if union.dim != 3 {
        return Err(Error::DimMismatch { expected: 3, found: union.dim });
    }
    let mut out = String::new();
    let mut offset = 1usize;
    for shell in &union.shells {
        let _ = writeln!(out, "o {}", shell.name);
        for v in &shell.vertices {
            out.push('v');
            for c in v {
                out.push(' ');
                push_f64(&mut out, *c);
            }
            out.push('\n');
        }
        let flags: Vec<&str> =
            shell.slit_adjacent.iter().map(|f| if *f { "1" } else { "0" }).collect();
        let _ = writeln!(out, "# slit-adjacent: {}", flags.join(","));
        for f in &shell.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + offset, f[1] + offset, f[2] + offset);
        }
        for e in &shell.edges {
            let _ = writeln!(out, "l {} {}", e[0] + offset, e[1] + offset);
        }
        offset += shell.vertices.len();
    }
    Ok(out)
}

/// Read back an OBJ produced by [`to_obj`]. Foreign OBJ features beyond
/// objects, vertices, triangles, lines, and the slit comment are rejected.
pub fn from_obj(text: &str) -> Result<IndicatrixUnion> {
    let mut shells: Vec<Shell> = Vec::new();
    let mut offsets: Vec<usize> = Vec::new();
    let mut total = 0usize;
    let bad = |line: &str| Error::Config(format!("unsupported OBJ line: {line:?}"));
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("o ") {
            offsets.push(total);
            shells.push(Shell {
                name: name.to_string(),
                vertices: Vec::new(),
                slit_adjacent: Vec::new(),
                faces: Vec::new(),
                edges: Vec::new(),
            });
        } else if let Some(rest) = line.strip_prefix("v ") {
            let shell = shells.last_mut().ok_or_else(|| bad(line))?;
            let coords: Vec<f64> = rest
                .split(' ')
                .map(|t| t.parse::<f64>().map_err(|_| bad(line)))
                .collect::<Result<_>>()?;
            if coords.len() != 3 {
                return Err(bad(line));
            }
            shell.vertices.push(coords);
            total += 1;
        } else if let Some(rest) = line.strip_prefix("# slit-adjacent: ") {
            let shell = shells.last_mut().ok_or_else(|| bad(line))?;
            shell.slit_adjacent =
                rest.split(',').map(|t| t == "1").collect();
            if shell.slit_adjacent.len() != shell.vertices.len() {
                return Err(bad(line));
            }
        } else if let Some(rest) = line.strip_prefix("f ") {
            let shell = shells.last_mut().ok_or_else(|| bad(line))?;
            let offset = *offsets.last().unwrap();
            let idx: Vec<usize> = rest
                .split(' ')
                .map(|t| t.parse::<usize>().map_err(|_| bad(line)))
                .collect::<Result<_>>()?;
            if idx.len() != 3 || idx.iter().any(|i| *i < offset + 1) {
                return Err(bad(line));
            }
            shell.faces.push([idx[0] - offset - 1, idx[1] - offset - 1, idx[2] - offset - 1]);
        } else if let Some(rest) = line.strip_prefix("l ") {
            let shell = shells.last_mut().ok_or_else(|| bad(line))?;
            let offset = *offsets.last().unwrap();
            let idx: Vec<usize> = rest
                .split(' ')
                .map(|t| t.parse::<usize>().map_err(|_| bad(line)))
                .collect::<Result<_>>()?;
            if idx.len() != 2 || idx.iter().any(|i| *i < offset + 1) {
                return Err(bad(line));
            }
            shell.edges.push([idx[0] - offset - 1, idx[1] - offset - 1]);
        } else {
            return Err(bad(line));
        }
    }
    Ok(IndicatrixUnion { family: "unknown".to_string(), dim: 3, shells })
}

/// CSV export (any dimension): one row per vertex,
/// `shell,index,slit_adjacent,y0,...`. Exact float round-trip.
pub fn to_csv(union: &IndicatrixUnion) -> String {
    let mut out = String::from("shell,index,slit_adjacent");
    for j in 0..union.dim {
        let _ = write!(out, ",y{j}");
    }
    out.push('\n');
    for shell in &union.shells {
        for (i, v) in shell.vertices.iter().enumerate() {
            let _ = write!(out, "{},{},{}", shell.name, i, u8::from(shell.slit_adjacent[i]));
            for c in v {
                out.push(',');
                push_f64(&mut out, *c);
            }
            out.push('\n');
        }
    }
    out
}

/// Read back a CSV produced by [`to_csv`] (vertices and flags; face and
/// edge structure travels via OBJ).
pub fn from_csv(text: &str) -> Result<IndicatrixUnion> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "shell" || cols[1] != "index" || cols[2] != "slit_adjacent" {
        return Err(Error::Config(format!("unexpected CSV header: {header:?}")));
    }
    let dim = cols.len() - 3;
    let mut shells: Vec<Shell> = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(Error::Config(format!("short CSV row: {line:?}")));
        }
        let name = fields[0];
        if shells.last().map(|s| s.name.as_str()) != Some(name) {
            shells.push(Shell {
                name: name.to_string(),
                vertices: Vec::new(),
                slit_adjacent: Vec::new(),
                faces: Vec::new(),
                edges: Vec::new(),
            });
        }
        let shell = shells.last_mut().unwrap();
        let flag = match fields[2] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Config(format!("bad slit flag {other:?}"))),
        };
        let coords: Vec<f64> = fields[3..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("bad float in {line:?}"))))
            .collect::<Result<_>>()?;
        shell.slit_adjacent.push(flag);
        shell.vertices.push(coords);
    }
    Ok(IndicatrixUnion { family: "unknown".to_string(), dim, shells })
}
