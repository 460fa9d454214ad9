//! Day-ahead unit commitment planned as a deterministic finite-horizon MDP.
//!
//! [`mdp::UcEnv`] wraps a [`model::ProblemInstance`] and exposes the
//! transition, feasible-action and reward functions; the solvers work purely
//! through it:
//!
//! * [`treesearch`]: depth-limited lookahead with optional action sub-sampling.
//! * [`backsweep`]: backward sweep over sampled states with nearest-neighbour
//!   value lookup, then a greedy forward pass.
//! * [`api`]: approximate policy iteration with SARSA evaluation and a
//!   perceptron-tree policy.
//! * [`oracle`]: exhaustive references for tiny instances.

pub mod api;
pub mod backsweep;
pub mod dispatch;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod model;
pub mod oracle;
pub mod solution;
pub mod treesearch;

pub use error::{Result, UcError};
pub use mdp::{CommitmentAction, SystemState, UcEnv};
pub use model::{CostBreakdown, DemandProfile, GeneratorSpec, ProblemInstance};
pub use solution::ScheduleSolution;
