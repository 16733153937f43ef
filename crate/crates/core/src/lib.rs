//! Solver and verifier for causal variational principles on finite metric
//! point clouds.
//!
//! The crate minimizes the causal action `S(ρ) = Σ ρ(x) ρ(y) L(x,y)` over
//! normalized measures on each stage of a compact exhaustion, rescales the
//! stage minimizers so that the Euler-Lagrange parameter equals one, and
//! then checks the Euler-Lagrange equations, the boundedness and decay
//! hypotheses on the Lagrangian, and minimality under sampled variations.
//!
//! Module map:
//!
//! * [`space`]: metric point clouds, balls, covering numbers, exhaustions.
//! * [`lagrangian`]: kernel families and the structural checks on them.
//! * [`measure`]: discrete measures, signed variations, action arithmetic.
//! * [`simplex_solver`]: minimization of the action on one compact stage.
//! * [`pipeline`]: the exhaustion run and its convergence diagnostics.
//! * [`el_analysis`]: Euler-Lagrange certification and the derived checks.
//! * [`cli`]: config-driven `solve` / `verify` / `oracle` / `sweep` commands.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod el_analysis;
pub mod error;
pub mod lagrangian;
pub mod measure;
pub mod numeric;
pub mod pipeline;
pub mod report;
pub mod simplex_solver;
pub mod space;

pub use error::{CvpError, Result};
pub use lagrangian::{DecayProfile, KernelKind, KernelSpec, Lagrangian, ProfileSpec};
pub use measure::{DiscreteMeasure, SignedVariation};
pub use simplex_solver::{CompactProblem, CompactSolution, SolverOptions};
pub use space::{Exhaustion, MetricSpace, PointId};
