//! Discrete-time multiple optimal stopping.
//!
//! A problem has `N` components that evolve jointly and can each be stopped
//! once. The solver performs backward induction on a simulated sample, fitting
//! one shallow network per step to the continuation value, and evaluates the
//! resulting policy by Monte Carlo. Exact dynamic programming on finite
//! instances, a binomial put tree and the closed-form log-utility value serve
//! as references.

pub mod cli;
pub mod error;
pub mod evaluate;
pub mod mask;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod shallownet;
pub mod simgen;
pub mod solver;

pub use error::{Error, Result};
pub use mask::SurvivalVector;
pub use problem::{GbmMarket, NoiseLaw, ProblemSpec};
pub use shallownet::{Activation, ShallowNet, TrainConfig};
pub use simgen::{draw_training_set, StateLaw, TrainingSet};
pub use solver::{solve, Mode, NetConfig, ValueStack};
