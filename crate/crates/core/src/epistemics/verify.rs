//! Whole-protocol checks: resilience of input sharing and sufficiency of
//! the information that reaches each agent.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::runs::{InfoSharing, RunSet};
use super::{aff_of, EpistemicsError};
use crate::engine::{
    enumerate_executions, Decision, EnumOptions, InputDistribution, Link, MessageRecord, Protocol,
    Value, Weighted,
};
use crate::net::AgentId;

/// Enough to re-run an execution: its inputs and every draw.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct RunRef {
    pub inputs: Vec<Value>,
    /// `(agent, round, value)`
    pub draws: Vec<(AgentId, usize, u32)>,
}

impl RunRef {
    pub fn of(w: &Weighted) -> Self {
        RunRef {
            inputs: w.inputs.clone(),
            draws: w
                .randomness
                .draws
                .iter()
                .map(|(&(a, t), &v)| (a, t, v))
                .collect(),
        }
    }
}

/// A knower sent `agent` something it could not have predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResilienceViolation {
    pub agent: AgentId,
    pub knower: AgentId,
    pub round: usize,
    pub run: RunRef,
    /// A run `agent` cannot tell apart in which the knower sent otherwise.
    pub alternative: RunRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResilienceReport {
    pub protocol: String,
    pub runs: usize,
    pub sharing: InfoSharing,
    pub terminated: bool,
    pub initial_knowledge_empty: bool,
    pub terminal_point_mass: bool,
    pub violations: Vec<ResilienceViolation>,
    pub pass: bool,
}

fn link_at(w: &Weighted, i: AgentId, t: usize, j: AgentId) -> Option<&Link> {
    w.trace
        .rounds
        .get(t)
        .and_then(|r| r[i.index()].incoming.iter().find(|(k, _)| *k == j))
        .map(|(_, l)| l)
}

/// Checks the three input-sharing conditions on every enumerated run:
/// everyone terminates, everyone ends up certain of every input, and no
/// agent ever hears anything unpredictable from someone who already knows
/// its input. Knowers are computed with link-limited pooling among the
/// other agents.
pub fn verify_ris_resilience(
    p: &dyn Protocol,
    dist: &InputDistribution,
    opts: EnumOptions,
) -> Result<ResilienceReport, EpistemicsError> {
    let sharing = InfoSharing::Coalition;
    let set = RunSet::enumerate(p, dist, opts)?;
    let runs = set.runs();
    let topo = p.topology();

    let terminated = runs
        .iter()
        .all(|w| w.trace.decisions.iter().all(|d| d.is_final()));

    let mut initial_knowledge_empty = true;
    let mut violations = Vec::new();
    let horizon = runs.iter().map(|w| w.trace.rounds.len()).max().unwrap_or(0);
    for &i in topo.agents() {
        for t in 0..horizon {
            let know = set.knower_table(i, t, sharing);
            if t == 0 && know.iter().any(|k| !k.is_empty()) {
                initial_knowledge_empty = false;
            }
            // runs i cannot tell apart, keyed by its history before round t
            let mut classes: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for k in 0..runs.len() {
                classes.entry(set.prefix_id(k, i, t)).or_default().push(k);
            }
            for members in classes.values() {
                for &j in topo.neighbors(i) {
                    let first = members[0];
                    let Some(other) = members
                        .iter()
                        .copied()
                        .find(|&k| link_at(&runs[k], i, t, j) != link_at(&runs[first], i, t, j))
                    else {
                        continue;
                    };
                    for &k in members {
                        if !know[k].contains(&j) {
                            continue;
                        }
                        let alt = if link_at(&runs[k], i, t, j) == link_at(&runs[first], i, t, j) {
                            other
                        } else {
                            first
                        };
                        violations.push(ResilienceViolation {
                            agent: i,
                            knower: j,
                            round: t,
                            run: RunRef::of(&runs[k]),
                            alternative: RunRef::of(&runs[alt]),
                        });
                    }
                }
            }
        }
    }

    let terminal_point_mass = topo.agents().iter().all(|&j| {
        let mut seen: HashMap<u32, &[Value]> = HashMap::new();
        runs.iter().enumerate().all(|(k, w)| {
            let key = set.prefix_id(k, j, usize::MAX);
            // j's own input is in its records, so only the others matter
            *seen.entry(key).or_insert(&w.inputs) == w.inputs.as_slice()
        })
    });

    let pass = terminated && initial_knowledge_empty && terminal_point_mass && violations.is_empty();
    Ok(ResilienceReport {
        protocol: p.name(),
        runs: runs.len(),
        sharing,
        terminated,
        initial_knowledge_empty,
        terminal_point_mass,
        violations,
        pass,
    })
}

/// Two runs that look the same to `agent` yet differ in someone's input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncodingWitness {
    pub agent: AgentId,
    pub first: RunRef,
    pub second: RunRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncodingReport {
    pub protocol: String,
    pub runs: usize,
    pub groups: usize,
    pub witness: Option<EncodingWitness>,
    pub pass: bool,
}

/// For an XOR consensus protocol, checks that each agent's input, decision
/// and the messages that reached it pin down every other input.
pub fn verify_input_encoding(
    p: &dyn Protocol,
    opts: EnumOptions,
) -> Result<EncodingReport, EpistemicsError> {
    let dist = InputDistribution::uniform(p.values());
    let runs = enumerate_executions(p, &dist, EnumOptions { record: true, ..opts })?;
    let is_xor = p.values() == 2
        && runs.iter().all(|w| {
            let x = w.inputs.iter().fold(0, |a, b| a ^ b);
            w.trace.decisions.iter().all(|d| *d == Decision::Value(x))
        });
    if !is_xor {
        return Err(EpistemicsError::NotAXorProtocol);
    }

    type Key = (AgentId, Value, Decision, BTreeSet<MessageRecord>);
    let mut groups: HashMap<Key, usize> = HashMap::new();
    let mut witness = None;
    'outer: for &i in p.topology().agents() {
        for (k, w) in runs.iter().enumerate() {
            let key = (
                i,
                w.inputs[i.index()],
                w.trace.decisions[i.index()],
                aff_of(&w.trace, i),
            );
            let first = *groups.entry(key).or_insert(k);
            if runs[first].inputs != w.inputs {
                witness = Some(EncodingWitness {
                    agent: i,
                    first: RunRef::of(&runs[first]),
                    second: RunRef::of(w),
                });
                break 'outer;
            }
        }
    }
    Ok(EncodingReport {
        protocol: p.name(),
        runs: runs.len(),
        groups: groups.len(),
        pass: witness.is_none(),
        witness,
    })
}
