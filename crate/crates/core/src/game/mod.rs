//! Utilities, coalition strategies, and exact equilibrium checks.

mod search;
mod strategy;
mod utility;

pub use search::{
    candidate_modes, conditional_output_distribution, expected_utility,
    find_profitable_deviation, find_profitable_deviations, max_split_leader_success, split_leader_success, split_view_modes,
    Deviation, EquilibriumReport, SplitSearch, StrategySpace, Verdict,
};
pub use strategy::{
    Claim, CoalitionPopulation, CoalitionStrategy, Communication, ContingentEntry, Mode,
    ScriptEntry, View,
};
pub use utility::{
    check_solution_preference, make_preference_utility, outcome_universe, OutcomeCase,
    UtilityFunction,
};

use thiserror::Error;

use crate::engine::EngineError;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("outcome universe is empty")]
    EmptyUniverse,
    #[error("invalid coalition: {0}")]
    InvalidCoalition(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("input distribution covers {got} values, protocol uses {expected}")]
    DistributionMismatch { expected: u32, got: u32 },
}
