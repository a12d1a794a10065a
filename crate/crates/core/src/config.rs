//! TOML-backed norm configurations: a small declarative schema that maps
//! onto [`NormSpec`]. Matrix and vector fields may be constant (nested
//! arrays, row-major) or polynomial in the chart coordinates (sparse
//! entry lists with exponent tuples).

use crate::error::{Error, Result};
use crate::geometry::{
    FamilySpec, MatrixField, NormSpec, RiemannMetric, SignBranch, VectorField,
};
use crate::poly::{Monomial, Polynomial};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One monomial of a polynomial entry: `coeff * prod_i x_i^{exps[i]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermConfig {
    pub exps: Vec<u32>,
    pub coeff: f64,
}

/// One polynomial entry of a matrix field, addressed by `(row, col)`.
/// Entries not listed are zero; if the mirror slot `(col, row)` is not
/// listed it is filled symmetrically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntryConfig {
    pub row: usize,
    pub col: usize,
    pub terms: Vec<TermConfig>,
}

/// One polynomial component of a vector field. Components not listed are
/// zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorEntryConfig {
    pub component: usize,
    pub terms: Vec<TermConfig>,
}

/// Matrix field: exactly one of `constant` / `poly`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<Vec<MatrixEntryConfig>>,
}

/// Vector field: exactly one of `constant` / `poly`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<Vec<VectorEntryConfig>>,
}

/// The `[norm]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    pub dim: usize,
    /// `euclidean | randers | aspace | bspace | bipartite`.
    pub family: String,
    /// `"+"` or `"-"`; defaults to `"+"`.
    #[serde(default = "default_sign")]
    pub sign: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen_margin: Option<f64>,
    /// Inner product; omitted means the standard one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MatrixConfig>,
    /// `a` for randers/aspace, `b` for bspace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<VectorConfig>,
    /// The bipartite form (bipartite family only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<MatrixConfig>,
}

fn default_sign() -> String {
    "+".to_string()
}

/// The optional `[evaluation]` table: base point, fiber vector, and
/// sampling parameters consumed by the command-line tools.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A full configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub norm: NormConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)?;
        ConfigFile::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Base point for chart construction; defaults to the origin.
    pub fn base_point(&self) -> Vec<f64> {
        self.evaluation.x.clone().unwrap_or_else(|| vec![0.0; self.norm.dim])
    }

    /// Materialize the runtime norm specification, validating dimensions
    /// and family/field consistency.
    pub fn to_norm_spec(&self) -> Result<NormSpec> {
        let n = self.norm.dim;
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        let sign = match self.norm.sign.as_str() {
            "+" => SignBranch::Plus,
            "-" => SignBranch::Minus,
            other => {
                return Err(Error::Config(format!("sign must be \"+\" or \"-\", got {other:?}")))
            }
        };
        let metric = match &self.norm.metric {
            None => RiemannMetric::euclidean(n),
            Some(mc) => RiemannMetric { dim: n, source: matrix_field(mc, n, "metric")? },
        };

        let family = self.norm.family.as_str();
        let need_field = matches!(family, "randers" | "aspace" | "bspace");
        if need_field && self.norm.field.is_none() {
            return Err(Error::Config(format!("family {family:?} requires a [norm.field] table")));
        }
        if !need_field && self.norm.field.is_some() {
            return Err(Error::Config(format!("family {family:?} does not take [norm.field]")));
        }
        if family == "bipartite" && self.norm.s.is_none() {
            return Err(Error::Config("family \"bipartite\" requires a [norm.s] table".into()));
        }
        if family != "bipartite" && self.norm.s.is_some() {
            return Err(Error::Config(format!("family {family:?} does not take [norm.s]")));
        }

        let family = match family {
            "euclidean" => FamilySpec::Euclidean,
            "randers" => {
                FamilySpec::Randers { a: vector_field(self.norm.field.as_ref().unwrap(), n)? }
            }
            "aspace" => {
                FamilySpec::ASpace { a: vector_field(self.norm.field.as_ref().unwrap(), n)? }
            }
            "bspace" => {
                FamilySpec::BSpace { b: vector_field(self.norm.field.as_ref().unwrap(), n)? }
            }
            "bipartite" => {
                FamilySpec::Bipartite { s: matrix_field(self.norm.s.as_ref().unwrap(), n, "s")? }
            }
            other => return Err(Error::Config(format!("unknown family {other:?}"))),
        };

        let mut spec = NormSpec::new(n, metric, family, sign);
        if let Some(d) = self.norm.delta_min {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::Config(format!("delta_min must lie in [0, 1), got {d}")));
            }
            spec.delta_min = d;
        }
        if let Some(m) = self.norm.eigen_margin {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::Config(format!("eigen_margin must lie in [0, 1), got {m}")));
            }
            spec.eigen_margin = m;
        }
        for (name, v) in [("x", &self.evaluation.x), ("y", &self.evaluation.y)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(Error::Config(format!(
                        "evaluation.{name} has length {}, expected {n}",
                        v.len()
                    )));
                }
            }
        }
        Ok(spec)
    }
}

fn terms_to_poly(terms: &[TermConfig], nvars: usize, what: &str) -> Result<Polynomial> {
    let mut out = Vec::with_capacity(terms.len());
    for t in terms {
        if t.exps.len() != nvars {
            return Err(Error::Config(format!(
                "{what}: exponent tuple has length {}, expected {nvars}",
                t.exps.len()
            )));
        }
        out.push(Monomial { exps: t.exps.clone(), coeff: t.coeff });
    }
    Ok(Polynomial { nvars, terms: out })
}

fn matrix_field(mc: &MatrixConfig, n: usize, what: &str) -> Result<MatrixField> {
    match (&mc.constant, &mc.poly) {
        (Some(rows), None) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config(format!("{what}: constant must be {n} rows of {n}")));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Ok(MatrixField::Constant(DMatrix::from_row_slice(n, n, &flat)))
        }
        (None, Some(entries)) => {
            let mut grid: Vec<Option<Polynomial>> = vec![None; n * n];
            for e in entries {
                if e.row >= n || e.col >= n {
                    return Err(Error::Config(format!(
                        "{what}: entry ({}, {}) out of range for dim {n}",
                        e.row, e.col
                    )));
                }
                let p = terms_to_poly(&e.terms, n, what)?;
                if grid[e.row * n + e.col].replace(p).is_some() {
                    return Err(Error::Config(format!(
                        "{what}: entry ({}, {}) listed twice",
                        e.row, e.col
                    )));
                }
            }
            // Unlisted mirror slots are filled symmetrically.
            for j in 0..n {
                for k in 0..n {
                    if grid[j * n + k].is_none() {
                        if let Some(p) = grid[k * n + j].clone() {
                            grid[j * n + k] = Some(p);
                        }
                    }
                }
            }
            let entries =
                grid.into_iter().map(|p| p.unwrap_or_else(|| Polynomial::constant(n, 0.0))).collect();
            Ok(MatrixField::Poly { dim: n, entries })
        }
        (None, None) => Err(Error::Config(format!("{what}: need `constant` or `poly`"))),
        (Some(_), Some(_)) => {
            Err(Error::Config(format!("{what}: `constant` and `poly` are mutually exclusive")))
        }
    }
}

fn vector_field(vc: &VectorConfig, n: usize) -> Result<VectorField> {
    match (&vc.constant, &vc.poly) {
        (Some(v), None) => {
            if v.len() != n {
                return Err(Error::Config(format!(
                    "field: constant has length {}, expected {n}",
                    v.len()
                )));
            }
            Ok(VectorField::Constant(DVector::from_row_slice(v)))
        }
        (None, Some(entries)) => {
            let mut comps: Vec<Option<Polynomial>> = vec![None; n];
            for e in entries {
                if e.component >= n {
                    return Err(Error::Config(format!(
                        "field: component {} out of range for dim {n}",
                        e.component
                    )));
                }
                let p = terms_to_poly(&e.terms, n, "field")?;
                if comps[e.component].replace(p).is_some() {
                    return Err(Error::Config(format!(
                        "field: component {} listed twice",
                        e.component
                    )));
                }
            }
            let comps =
                comps.into_iter().map(|p| p.unwrap_or_else(|| Polynomial::constant(n, 0.0))).collect();
            Ok(VectorField::Poly(comps))
        }
        (None, None) => Err(Error::Config("field: need `constant` or `poly`".into())),
        (Some(_), Some(_)) => {
            Err(Error::Config("field: `constant` and `poly` are mutually exclusive".into()))
        }
    }
}
