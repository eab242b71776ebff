//! Worst-case generalized Nash equilibria for games whose linear coupling
//! constraints carry polyhedral uncertainty.
//!
//! The pipeline is: describe an [`UncertainGame`], dualize its robust rows
//! into a deterministic [`ExtendedGame`], lower that onto a communication
//! graph as a [`CanonicalGame`] with per-agent copies of the shared dual
//! variable, and run the distributed relaxed-inertial forward-backward-forward
//! iteration in [`solver`]. [`verify`] certifies the result independently.

pub mod error;
pub mod geometry;
pub mod graph;
pub mod instances;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod operators;
pub mod robustify;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{CommGraph, Topology};
pub use model::{
    Agent, AgentCost, Polytope, QuadraticCost, UncertainConstraint, UncertainGame, UncertaintySets,
};
pub use operators::{Layout, Preconditioner, StackedPoint};
pub use robustify::{CanonicalGame, ExtendedGame};
pub use solver::{DistributedRun, Mode, SolverParams};
