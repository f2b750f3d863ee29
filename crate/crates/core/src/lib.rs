//! Joint estimation of `L` sparse precision matrices under the fused graphical
//! Lasso penalty.
//!
//! The main solver is a regularized proximal point method whose strongly
//! concave dual subproblems are solved by a semismooth Newton method with
//! conjugate-gradient linear solves ([`rppa`], [`ssn`]). The Newton systems use
//! a structured generalized Jacobian of the penalty's proximal map
//! ([`jacobian`]) that reduces to block averaging plus a 0/1 mask per
//! off-diagonal entry. An ADMM solver ([`admm`]) serves as baseline and as the
//! warm-start for the proximal point method.
//!
//! [`data`] covers synthetic nearest-neighbour networks, Gaussian sampling,
//! covariance construction (including log-entropy weighting of term counts),
//! and edge-recovery metrics.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod data;
pub mod error;
pub mod io;
pub mod jacobian;
pub mod linalg;
pub mod prox;
pub mod report;
pub mod rppa;
pub mod ssn;

pub use error::{FglError, Result};
pub use linalg::{collection_inner, sym_eig, EigenFactorization, EntryVector, MatrixCollection};
pub use prox::ProblemData;
