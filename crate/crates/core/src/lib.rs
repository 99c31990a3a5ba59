//! Optimal sparse binary decision trees for the objective
//! `misclassification loss + lambda * leaves`, optionally under a depth limit,
//! accelerated by guesses taken from a gradient-boosted reference model:
//!
//! * **threshold guessing**: column elimination keeps only the split points the
//!   reference ensemble needs ([`guess::column_eliminate`]);
//! * **depth guessing**: a depth at which single trees are at least as
//!   expressive as the ensemble ([`guess::min_depth_for_ensemble`]);
//! * **lower-bound guessing**: per-subproblem bounds taken from the reference
//!   model's mistakes ([`guess::ReferenceLabels`], [`solver::optimize`]).
//!
//! All objective arithmetic is exact: `lambda` is held as a rational and every
//! comparison is done on integers (see [`objective::Regularizer`]).

pub mod dataset;
pub mod ensemble;
pub mod eval;
pub mod guess;
pub mod objective;
pub mod parallel;
pub mod solver;
pub mod support;
pub mod tree;

pub use dataset::{BinaryDataset, EquivalenceClasses, RawDataset, ThresholdSet};
pub use ensemble::{BoostedEnsemble, BoostingParams};
pub use guess::{EliminationTrace, ReferenceLabels};
pub use objective::{Objective, Regularizer};
pub use parallel::Parallelism;
pub use solver::{DepthLimit, SolveStatus, SolverConfig, SolverOutcome};
pub use support::SupportSet;
pub use tree::Tree;
