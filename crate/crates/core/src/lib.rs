//! Rank-constrained feasibility toolkit.
//!
//! Everything revolves around the rank level set `S = { y : rank(y) <= s }`
//! in the space of real m-by-n matrices with the trace inner product:
//! projections onto S with tie-aware multivaluedness certificates, the
//! normal-cone machinery at rank-s points, exact projectors for affine and
//! magnitude constraint sets, alternating/averaged projection solvers with
//! verifiable inexactness conditions, and diagnostics that compare the
//! fitted convergence rate of a run against the angle-based prediction.

pub mod constraint;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod ortho;
pub mod random;
pub mod rank_set;
pub mod solver;
pub mod svd;
pub mod tol;

pub use constraint::{AffineConstraint, ConstraintSet, MagnitudeConstraint};
pub use diagnostics::{RateReport, RegularityMethod, RegularityReport};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rank_set::{ProjectionResult, RankSetSpec, Threshold};
pub use solver::{Algorithm, InexactStrategy, IterateTrace, SolverConfig};
pub use svd::SvdFactors;
pub use tol::Tolerances;
