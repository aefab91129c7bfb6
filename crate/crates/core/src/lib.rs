//! Almost-stable matchings in a simulated synchronous message-passing network.
//!
//! Men and women are processors on the bipartite acceptability graph. Each
//! round, every processor reads its inbox, updates local state and sends
//! messages of `O(log n)` bits to neighbors. The crate provides the round
//! engine, maximal matching subroutines, the quantile-based proposal
//! algorithms, a verifier, and tooling for generating instances and running
//! experiments.

pub mod analysis;
pub mod engine;
pub mod maximal;
pub mod model;
pub mod protocol;
pub mod workbench;

pub use analysis::{count_blocking_pairs, gale_shapley_oracle, verify_run, VerificationReport};
pub use model::{Matching, PlayerId, PreferenceProfile, Side};
pub use protocol::{run_algorithm, Algorithm, RunConfig, RunOutcome};
