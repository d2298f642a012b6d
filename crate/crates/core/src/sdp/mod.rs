//! A small semidefinite programming engine.
//!
//! Problems are assembled with [`ConicProblem`] from PSD matrix blocks and
//! scalar variables and solved by [`solve`], a first-order operator-splitting
//! method with a cached factorization.

mod kkt;
mod problem;
mod solver;
mod sparse;

use thiserror::Error;

pub use kkt::LinearSolver;
pub use problem::{
    BlockId, ConicProblem, Epigraph, LinExpr, Objective, ScalarId, ScalarKind, SymmetricVar,
};
pub use solver::{solve, ConicSolution, SolveStatus, SolverConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("undeclared variable: {0}")]
    UndeclaredVariable(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("objective square has negative weight {0}")]
    NotConvex(f64),
    #[error("linear system factorization failed")]
    Factorization,
    #[error("invalid solver configuration")]
    InvalidConfig,
}
