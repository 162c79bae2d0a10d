//! Exploration of controllable Markov chains.
//!
//! An agent picks controls to learn the transition probabilities of an
//! unknown chain over a fixed number of periods. Policies greedily maximise
//! the predicted information gain over a time-varying control set whose
//! parameters are searched for directly, optionally improved by rollout.
//!
//! Internally every state and control index is zero-based. Parameter vectors,
//! environment files and command-line arguments are one-based.

pub mod chain;
pub mod cli;
pub mod environments;
pub mod error;
pub mod experiment;
pub mod measures;
pub mod optimizer;
pub mod planner;
pub mod policies;
pub mod report;
pub mod rollout;
pub mod simulator;

pub use chain::{
    estimate_row, kl_divergence, missing_information, Cmc, Control, ControlSpace, CountTensor, EstimatorConfig, State,
};
pub use environments::{
    build_example, builtin, compile_grid, load_environment, save_environment, EnvironmentBundle, GridSpec,
};
pub use error::{Error, Result};
pub use experiment::{Experiment, ExperimentConfig, Reproduction};
pub use measures::{pig, InfoMeasure};
pub use optimizer::{
    cem_optimize, exhaustive_search, refine_time_constants, CemParams, ParamSpace, SearchProblem, SearchResult,
};
pub use planner::{extract_path, policy_iteration, PlanningProblem};
pub use policies::{control_set, ControlSetParams, ParamShape, Policy, PolicyKind, RestrictionEntry};
pub use rollout::{evaluate_rollout, rollout_step, run_rollouts, RolloutConfig};
pub use simulator::{
    evaluate_objective, exact_dp_oracle, run_trajectories, run_trajectory, ObjectiveEstimate, SimConfig, Trajectory,
};
