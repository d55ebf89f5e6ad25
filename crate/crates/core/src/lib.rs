//! Simulation of binary-trait language evolution along phylogenetic trees.
//!
//! The crate covers tree handling (Newick, Yule generation, temporal
//! queries), single-branch substitution kernels (GTR by transition matrix
//! or explicit events, covarion, stochastic-Dollo), whole-tree generation
//! with and without horizontal borrowing, missing-data corruption, the
//! tree-comparison metrics and distribution fits used by the validation
//! suites, and the configuration/alignment file formats of the command-line
//! driver.
//!
//! All numeric kernels are generic over the scalar type through
//! [`num::Real`]; the aliases below fix the common `f64` instantiation.

pub mod borrowing;
pub mod config;
pub mod evolve;
pub mod io;
pub mod log;
pub mod metrics;
pub mod missing;
pub mod num;
pub mod rate;
pub mod run;
pub mod seq;
pub mod stats;
pub mod substitution;
pub mod tree;
pub mod validation;

pub use num::Real;
pub use seq::{
    Alignment, ClassId, SeqError, SiteActivity, TraitId, TraitRegistry, TraitSequence, TraitState,
};
pub use substitution::{EmptyTraitGuard, KernelMode, SimError};
pub use tree::NodeId;

/// Scalar type of the concrete aliases below.
pub type Scalar = f64;

pub type Tree = tree::Tree<Scalar>;
pub type AncestorBound = tree::AncestorBound<Scalar>;
pub type RateMatrix = rate::RateMatrix<Scalar>;
pub type SquareMatrix = rate::SquareMatrix<Scalar>;
pub type EventLog = log::EventLog<Scalar>;
pub type EventRecord = log::EventRecord<Scalar>;
pub type ModelParams = substitution::ModelParams<Scalar>;
pub type RateConfig = substitution::RateConfig<Scalar>;
pub type GtrBorrowingParams = borrowing::GtrBorrowingParams<Scalar>;
pub type SdBorrowingParams = borrowing::SdBorrowingParams<Scalar>;
pub type TreeSimState = borrowing::TreeSimState<Scalar>;
pub type FitOutcome = stats::FitOutcome<Scalar>;
pub type RunConfig = config::RunConfig<Scalar>;
pub type SuiteReport = validation::SuiteReport<Scalar>;
pub type Replicate = run::Replicate<Scalar>;
