//! Numerical kernels: equality-constrained convex QP via a sparse LDLᵀ
//! factorization of the KKT system, and exact/relaxed solvers for the
//! budgeted multiple-choice selection problem.

mod mcks;
mod qp;

pub use mcks::{selection_costs, selection_gain, solve_mcks, McksInstance, McksMode, McksOption};
pub use qp::{kkt_residual_norms, objective, solve_eq_qp, EqConstrainedQp, SparseSymmetric};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("constraint rows are rank deficient after deduplication")]
    RankDeficientConstraints,
    #[error("reduced system is not positive definite on the constraint nullspace")]
    IndefiniteReducedSystem,
}
