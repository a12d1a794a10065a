//! Sparse multivariate polynomials: coefficient tables indexed by monomial
//! exponent tuples. Used for position-dependent metric and field entries,
//! and as analytic oracles in the test suites.

use serde::{Deserialize, Serialize};

/// One monomial: coefficient times `prod_i x_i^{exps[i]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub exps: Vec<u32>,
    pub coeff: f64,
}

/// Polynomial in `nvars` variables as a list of monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub nvars: usize,
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn constant(nvars: usize, c: f64) -> Polynomial {
        Polynomial { nvars, terms: vec![Monomial { exps: vec![0; nvars], coeff: c }] }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|t| {
                let mut m = t.coeff;
                for (xi, &e) in x.iter().zip(&t.exps) {
                    for _ in 0..e {
                        m *= xi;
                    }
                }
                m
            })
            .sum()
    }

    /// Formal partial derivative with respect to variable `j`.
    pub fn partial(&self, j: usize) -> Polynomial {
        assert!(j < self.nvars);
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exps[j] > 0)
            .map(|t| {
                let mut exps = t.exps.clone();
                let e = exps[j];
                exps[j] = e - 1;
                Monomial { exps, coeff: t.coeff * e as f64 }
            })
            .collect();
        Polynomial { nvars: self.nvars, terms }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exps.iter().sum::<u32>()).max().unwrap_or(0)
    }
}
