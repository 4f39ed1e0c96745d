//! Decoupled finite-horizon Markov potential games: exact and sample-based
//! evaluation, the simultaneous policy-improvement learner, the covering-game
//! environment and price-of-anarchy analysis.

pub mod counterexample;
pub mod covering;
pub mod error;
pub mod eval;
pub mod game;
pub mod io;
pub mod joint;
pub mod poa;
pub mod policy;
pub mod runner;
pub mod sampling;
pub mod spi;
pub mod table;

pub use error::{Error, Result};
pub use game::{AgentSpace, GameDefinition, GameOracle, TabularOracle, TransitionKernel};
pub use policy::{JointPolicy, LocalPolicy};
pub use table::LocalTable;
