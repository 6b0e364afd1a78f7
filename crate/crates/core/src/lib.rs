//! Safe in-context reinforcement learning at desk scale.
//!
//! The crate pairs an exact-penalty constrained policy optimizer with
//! context-conditioned sequence-model pretraining, then evaluates the frozen
//! policy on provably out-of-distribution grid tasks. Tabular oracles (dynamic
//! programming, an occupancy-measure LP, exhaustive search) back every claim
//! the optimizer makes.

pub mod grid;
pub mod nn;
pub mod penalty;
pub mod sl;
pub mod tabular;
pub mod taskgen;
pub mod trainer;

pub use grid::{Action, DarkRoom, Episode, GridPos, History, TaskSpec, Transition};
pub use tabular::{ConstrainedSolution, TabularCmdp, TabularPolicy};
pub use taskgen::{Orientation, SpawnDistribution};
