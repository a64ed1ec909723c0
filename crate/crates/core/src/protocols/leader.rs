//! Leader election from pooled randoms and the knowledge check that guards it.

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::engine::Value;
use crate::net::AgentId;

/// `<input, random, id>` as gathered from one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub input: Value,
    pub random: Value,
    pub id: AgentId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    Ok,
    Abort,
}

/// `L = (Σ r_k) mod n`, then the id at position `L` of the ascending ids.
pub fn elect_leader(randoms: &[Value], ids: &[AgentId]) -> Result<AgentId, ProtocolError> {
    let n = ids.len();
    if n == 0 {
        return Err(ProtocolError::NoAgents);
    }
    if let Some(&bad) = randoms.iter().find(|&&r| r < 1 || r > n as Value) {
        return Err(ProtocolError::OutOfRangeRandom { value: bad, n });
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    let l = randoms.iter().sum::<Value>().rem_euclid(n as Value) as usize;
    Ok(sorted[l])
}

/// Binary inputs, randoms in `1..=n`, distinct ids, exactly `n` triples.
pub fn validate_knowledge(k: &[KnowledgeTriple], n: usize) -> Validation {
    let mut ids: Vec<AgentId> = k.iter().map(|t| t.id).collect();
    ids.sort_unstable();
    ids.dedup();
    let ok = k.len() == n
        && ids.len() == n
        && k
            .iter()
            .all(|t| (0..=1).contains(&t.input) && (1..=n as Value).contains(&t.random));
    if ok {
        Validation::Ok
    } else {
        Validation::Abort
    }
}
