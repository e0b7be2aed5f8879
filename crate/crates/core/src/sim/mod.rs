//! Tabular multi-objective bandit simulator.
//!
//! A softmax policy over `A` discrete actions is trained with a clipped
//! surrogate on groups of single-action rollouts. Each action has a fixed
//! reward vector, so exact per-dimension policy gradients are available for
//! the improvement-bound harness in [`theorem`].

pub mod env;
pub mod policy;
pub mod theorem;
pub mod train;

pub use env::{BanditEnv, EnvKind};
pub use policy::{
    exact_dimension_gradient, expected_improvement, gram_matrix, population_covariance,
    predicted_gap, sample_group, surrogate_gradient, surrogate_objective, surrogate_update,
    PolicyParams,
};
pub use theorem::{verify_theorem, verify_theorem_at, TheoremCheck, TheoremReport};
pub use train::{run_training, StepRecord, TrainConfig};
