//! Decision-theoretic value of information: what a signal is worth to a
//! Bayesian-rational decision maker, on its own, on top of an agent's
//! decisions, and instance by instance.

pub mod data;
pub mod decision;
pub mod dgp;
pub mod error;
pub mod estimation;
pub mod explain;
pub mod game;
pub mod infovalue;
pub mod robustness;

pub use data::Dataset;
pub use decision::{Belief, DecisionProblem};
pub use error::{Error, Result};
pub use infovalue::SignalSet;
