//! Concrete protocols: input sharing, XOR consensus, leader-based binary
//! consensus, multi-valued candidates, and counterexample toys.

mod leader;
mod sharing;
mod toys;

pub use leader::{elect_leader, validate_knowledge, KnowledgeTriple, Validation};
pub use sharing::{
    make_algorithm1, make_candidate_multivalued, make_ris_two_path, make_xor_consensus,
    make_xor_consensus_deterministic, MultiRule, Rule, Sharing,
};
pub use toys::{make_toy, Toy, ToyKind};

use thiserror::Error;

use crate::engine::{Protocol, Value};
use crate::net::Topology;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    #[error("r = {r} is too small, need at least {min}")]
    ValueCount { r: u32, min: u32 },
    #[error("random {value} outside 1..={n}")]
    OutOfRangeRandom { value: Value, n: usize },
    #[error("no agents to elect from")]
    NoAgents,
    #[error("unknown protocol {0:?}")]
    UnknownProtocol(String),
}

pub const PROTOCOL_NAMES: &[&str] = &[
    "ris",
    "xor-consensus",
    "algorithm1",
    "mv-min",
    "mv-leader",
    "toy-send-iff-one",
    "toy-silent",
    "toy-echo",
    "xor-lossy",
];

/// Looks a protocol up by its configuration name. `r` only matters for the
/// multi-valued candidates; `deterministic` drops the masks of the sharing
/// protocols where that leaves no randomness.
pub fn by_name(
    name: &str,
    t: &Topology,
    r: u32,
    deterministic: bool,
) -> Result<Box<dyn Protocol>, ProtocolError> {
    let masked = !deterministic;
    Ok(match name {
        "ris" => Box::new(Sharing::new(t, Rule::Ris, 2, masked)?),
        "xor-consensus" => Box::new(Sharing::new(t, Rule::Xor, 2, masked)?),
        "algorithm1" => Box::new(Sharing::new(t, Rule::Algorithm1, 2, masked)?),
        "mv-min" => Box::new(make_candidate_multivalued(t, r, MultiRule::MinInput)?),
        "mv-leader" => Box::new(make_candidate_multivalued(t, r, MultiRule::LeaderInput)?),
        "toy-send-iff-one" => Box::new(make_toy(ToyKind::SendIffOne, t)?),
        "toy-silent" => Box::new(make_toy(ToyKind::Silent, t)?),
        "toy-echo" => Box::new(make_toy(ToyKind::Echo, t)?),
        "xor-lossy" => Box::new(make_toy(ToyKind::XorLossy, t)?),
        other => return Err(ProtocolError::UnknownProtocol(other.to_string())),
    })
}
