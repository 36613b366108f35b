//! Exact solvers and brute-force verification for finite dynamic inference:
//! sequential estimation where each estimate steers the next observation.
//!
//! - [`known`]: backward induction when the quantity kernel is known.
//! - [`offline`]: plug-in Bayes posterior from a training set, then DP.
//! - [`online`]: DP over the reachable posteriors updated along the way.
//! - [`oracle`]: exhaustive search and exact/Monte Carlo evaluation that
//!   share no code with the solvers.

pub mod cli;
pub mod error;
pub mod io;
pub mod known;
pub mod model;
pub mod offline;
pub mod online;
pub mod oracle;
pub mod synth;

pub use error::{Error, Result, Violation};
pub use known::{bar_loss, loss_to_go_known, solve_known, value_known, KnownPolicy, StageTables};
pub use model::{
    generate_dataset, mixture_kernel, validate_scenario, Belief, Dataset, Distribution, FiniteSpace, LossTensor,
    ObservationKernel, ParametricFamily, QuantityKernel, QuantityModel, Scenario,
};
pub use offline::{
    loss_to_go_offline, offline_pipeline, posterior_from_dataset, solve_offline, tilde_loss, value_offline,
    OfflinePolicy,
};
pub use online::{
    act_online, belief_update, loss_to_go_online, predictive, reachable_beliefs, solve_online, solve_online_capped,
    value_online, BeliefGraph, BeliefNode, OnlinePolicy,
};
