//! Numerical toolkit for Finsler norms with conelike singular sets.
//!
//! The pipeline: order-3 fiber jets of a norm `F = rho +/- sigma`
//! ([`jet`], [`geometry`]) feed the characteristic tensors of the fiber
//! metric — Cartan torsion, its mean, the Matsumoto tensor, and the
//! reduction tensors of bipartite-type norms ([`tensors`]). Closed-form
//! expressions for the fundamental tensor and its inverse provide
//! independent cross-checks ([`closedforms`]). On top sit sampling
//! diagnostics for positive definiteness ([`diagnostics`]) and indicatrix
//! mesh extraction ([`indicatrix`]).

pub mod closedforms;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fd;
pub mod geometry;
pub mod indicatrix;
pub mod jet;
pub mod linalg;
pub mod poly;
pub mod sym;
pub mod tensors;

pub use error::{Error, Result};
