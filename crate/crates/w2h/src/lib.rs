//! Dispatch optimization for wind-to-hydrogen critical infrastructure.
//!
//! The crate is organized around a pipeline:
//!
//! * [`conic`] — a canonical mixed-integer second-order cone program
//!   representation with tagged constraints, binary fixing, and
//!   active-set reduction.
//! * [`solver`] — a primal-dual interior-point method for the continuous
//!   relaxations, returning duals and slacks for active-set extraction.
//! * [`bnb`] — exact branch-and-bound over the binaries, plus an
//!   exhaustive enumeration oracle used for testing.
//! * [`model`] — translation of a physical system description (power,
//!   water, hydrogen, carbon capture) and a scenario into the tagged
//!   conic program.
//! * [`scenario`] — seedable synthetic scenario generation and spline
//!   interpolation to 5-minute resolution.
//! * [`learn`] — offline dataset generation, decision-tree training, and
//!   single- or multi-stage strategy prediction.
//! * [`sim`] — rolling-horizon controllers that dispatch the system with
//!   either the exact solver or a learned surrogate, with feasibility
//!   repair.

pub mod bnb;
pub mod conic;
pub mod learn;
pub mod model;
pub mod scenario;
pub mod sim;
pub mod solver;

pub use conic::{ConicProgram, ConstraintTag, EquationId, ProgramBuilder, Relation, VarKind};
pub use solver::{solve_socp, ActiveSet, ContinuousSolution, SolveStatus};
