//! Two-class quadratic discriminant analysis when the dimension p grows at
//! the same rate as the sample sizes (p/n_i -> c_i in (0,1)).
//!
//! In that regime the sample covariance matrices are invertible but no longer
//! operator-norm consistent, and classical plug-in QDA degrades badly: its
//! quadratic terms acquire an O(p) bias and its log-determinants drift by a
//! dimension-dependent constant. This crate implements
//!
//! * the three classification rules: the optimal rule evaluated with true
//!   population parameters, the naive plug-in (sample) rule, and a corrected
//!   (generalized) rule whose quadratic terms are rescaled and whose
//!   log-determinants are recentered so the rule stays consistent
//!   ([`qda`]);
//! * closed-form asymptotic misclassification-rate limits for all rules,
//!   together with the covariance moments, drift terms, variance constants,
//!   and separation diagnostics they are built from ([`theory`]);
//! * divide-and-conquer refinements: two dimension-screening methods that
//!   improve the corrected rule when the covariance difference is confined to
//!   a small block of coordinates, and sample-splitting rules over
//!   observations that are implemented because they demonstrably do *not*
//!   help ([`dnc`]);
//! * a deterministic, parallel Monte Carlo harness with the standard
//!   covariance test cases, plus two numerical oracles for the limit theorems
//!   the rate formulas rest on ([`simgen`]).
//!
//! Dense SPD linear algebra (Cholesky with log-determinant, quadratic forms
//! via triangular solves, symmetric square roots) lives in [`la`]; nothing in
//! the crate ever forms an explicit matrix inverse.
//!
//! All randomized entry points take explicit seeds and derive one RNG stream
//! per (replication, role), so results are bit-identical across thread
//! counts.

pub mod dnc;
mod error;
pub mod la;
pub mod qda;
pub mod simgen;
pub mod theory;

pub use error::{Error, Result};
