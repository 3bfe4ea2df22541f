//! Solver-agnostic linear models, a primal simplex, branch and bound with
//! lazy constraints, and MPS export.

mod bnb;
mod model;
mod mps;
mod simplex;

pub use bnb::{solve_mip, Candidate, LazyConstraints, MipError, MipOptions, MipResult, MipStatus, INTEGRALITY_TOL};
pub use model::{to_f64, Constraint, LinearModel, ModelError, Sense, VarId, Variable};
pub use mps::write_mps;
pub use simplex::{solve, solve_lp, Basis, LpProblem, LpResult, LpRow, LpSolver, LpStatus, SimplexOptions};
