//! Sequential dual / sequential primal solver for nonlinear optimal control
//! problems with box-constrained controls.
//!
//! The nonlinear problem is expanded around a nominal trajectory into a
//! sequence of linear-quadratic subproblems. Each subproblem is solved either
//! directly as a box-constrained QP (the primal path) or through its Fenchel
//! dual, whose control is unconstrained, with the primal solution read off the
//! dual optimum via the saddle-point identities (the dual path). Both paths
//! share one forward-Euler transcription, paired so that the discrete duality
//! gap vanishes at the optimum.

pub mod autodiff;
pub mod benchmarks;
pub mod config_file;
pub mod diagnostics;
pub mod dual;
pub mod error;
pub mod expr;
pub mod grid;
pub mod lq;
pub mod oracle;
pub mod outer;
pub mod problem;
pub mod problem_file;
pub mod psi;
pub mod qp;
pub mod quasilin;
pub mod riccati;
pub mod transcribe;
#[cfg(test)]
pub(crate) mod testutil;
pub mod trajectory;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use lq::{lq_objective, project_control, LqProblem};
pub use problem::{l1_defect_norm, nlp_objective, rollout, NlpProblem};
pub use quasilin::build_subproblem;
pub use trajectory::{sup_norm, CostateTrajectory, Trajectory};
