//! Solver toolkit for the production routing problem with mobile inventories.
//!
//! Mobile storage units are trucked between sources (where they are refilled)
//! and destinations (where they satisfy demand); a delivery swaps the full
//! unit against the one stationed at the destination, which returns to a
//! source the same day. The toolkit builds a time-expanded flow model of this
//! process, solves it exactly (reference branch-and-bound, or any external
//! solver through LP-file export), solves it approximately (greedy dispatch
//! and a two-step routing-then-refill heuristic), decodes flow solutions into
//! per-storage transport plans, and benchmarks all methods on a generated
//! instance suite.
//!
//! Module map:
//! - [`instance`]: problem data, generation, validation, JSON (de)serialization
//! - [`teg`]: the time-expanded graph and its time order
//! - [`model`]: MILP assembly (full, relaxed, refill subproblem), linearization
//!   kernels, flow-solution extraction and cost evaluation
//! - [`solver`]: dense-simplex branch-and-bound, LP-file export, external
//!   solver subprocess adapter, brute-force verification oracle
//! - [`heuristics`]: greedy dispatch (GH), two-step heuristic (RH), direct
//!   MILP method (MA), refill-subproblem evaluation
//! - [`planning`]: flow-to-transport-plan decoding and its invariants
//! - [`bench`]: suite generation, parallel benchmark runner, summary statistics
//! - [`fixtures`]: small hand-scale instances used by tests and benchmarks

pub mod bench;
pub mod fixtures;
pub mod heuristics;
pub mod instance;
pub mod model;
pub mod planning;
pub mod simplex;
pub mod solver;
pub mod teg;

pub use instance::{GenerationSpec, Instance};
pub use model::{CostBreakdown, FlowSolution, MilpModel};
pub use solver::{SolveLimits, SolveOutcome, SolveStatus};
pub use teg::{TimeExpandedGraph, TimeIndex};
