//! Lockstep synchronous execution of agent state machines.
//!
//! A round `t` has three phases: every agent sends (at most one payload per
//! link), every message is delivered, and every agent processes its round-`t`
//! incoming experiences and reports its decision status. Silence is recorded
//! explicitly as [`Link::Silence`].

mod enumerate;
mod export;
mod types;

pub use enumerate::{
    enumerate_executions, enumerate_population, expectation, input_vectors, randomness_choices,
    sample_executions, sample_population, space_size, EnumOptions, Weighted, DEFAULT_CAP,
};
pub use export::{trace_to_jsonl, traces_to_jsonl};
pub use types::*;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{check_two_vertex_connected, AgentId, Topology};
use crate::ratio::{self, Prob};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("protocol did not terminate within {bound} rounds")]
    ProtocolOverrun { bound: usize },
    #[error("agent {src} addressed non-neighbor {dst} in round {round}")]
    IllegalSend {
        src: AgentId,
        dst: AgentId,
        round: usize,
    },
    #[error("agent {src} sent twice on link to {dst} in round {round}")]
    DuplicateSend {
        src: AgentId,
        dst: AgentId,
        round: usize,
    },
    #[error("agent {0} changed a final decision")]
    DecisionChanged(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("input vector has {got} entries, topology has {expected} agents")]
    InputArity { expected: usize, got: usize },
    #[error("input {value} outside 0..{r}")]
    InputOutOfRange { value: Value, r: u32 },
    #[error("topology is not 2-vertex-connected")]
    NotTwoConnected,
    #[error("enumeration of {count} executions exceeds the cap of {cap}")]
    EnumerationCapExceeded { count: u128, cap: u128 },
    #[error("invalid input distribution: {0}")]
    Distribution(String),
}

/// Who an agent claims to be and what input it acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Persona {
    pub agent: AgentId,
    /// Identifier written into records; honest agents use their own.
    pub id: AgentId,
    pub input: Value,
    /// Replaces the agent's round-0 random draw when set.
    pub draw: Option<u32>,
}

impl Persona {
    pub fn honest(agent: AgentId, input: Value) -> Self {
        Persona {
            agent,
            id: agent,
            input,
            draw: None,
        }
    }
}

/// One agent's state machine. Implementations are deterministic given the
/// draws they are handed.
pub trait Machine: Send {
    fn send(&mut self, round: usize, draw: Option<u32>) -> Vec<(AgentId, Payload)>;
    fn receive(&mut self, round: usize, incoming: &Links) -> Decision;
    fn learned(&self) -> Option<Vec<Value>> {
        None
    }
}

/// A protocol bound to its topology.
pub trait Protocol: Send + Sync {
    fn name(&self) -> String;
    fn topology(&self) -> &Topology;
    /// `r`, the number of input/output values.
    fn values(&self) -> u32;
    fn rounds_bound(&self) -> usize;
    fn randomness(&self, agent: AgentId, round: usize) -> Option<RandomDomain>;
    /// Every well-formed payload an honest agent could send.
    fn alphabet(&self) -> Vec<Payload>;
    fn spawn(&self, persona: Persona) -> Box<dyn Machine>;

    fn is_deterministic(&self) -> bool {
        let t = self.topology();
        (0..self.rounds_bound()).all(|round| {
            t.agents()
                .iter()
                .all(|&a| self.randomness(a, round).is_none_or(|d| d.len() <= 1))
        })
    }
}

macro_rules! forward_protocol {
    ($($ty:ty),*) => {$(
        impl<P: Protocol + ?Sized> Protocol for $ty {
            fn name(&self) -> String {
                (**self).name()
            }
            fn topology(&self) -> &Topology {
                (**self).topology()
            }
            fn values(&self) -> u32 {
                (**self).values()
            }
            fn rounds_bound(&self) -> usize {
                (**self).rounds_bound()
            }
            fn randomness(&self, agent: AgentId, round: usize) -> Option<RandomDomain> {
                (**self).randomness(agent, round)
            }
            fn alphabet(&self) -> Vec<Payload> {
                (**self).alphabet()
            }
            fn spawn(&self, persona: Persona) -> Box<dyn Machine> {
                (**self).spawn(persona)
            }
            fn is_deterministic(&self) -> bool {
                (**self).is_deterministic()
            }
        }
    )*};
}

forward_protocol!(&P, Box<P>, std::sync::Arc<P>);

/// Drives one or more agents. Honest agents each get their own controller;
/// a coalition may share one.
pub trait Controller: Send {
    fn agents(&self) -> Vec<AgentId>;
    fn send(
        &mut self,
        round: usize,
        draws: &dyn Fn(AgentId) -> Option<u32>,
    ) -> Vec<(AgentId, AgentId, Payload)>;
    /// `incoming` is indexed by agent id; only this controller's agents are read.
    fn receive(&mut self, round: usize, incoming: &[Links]) -> Vec<(AgentId, Decision)>;
    fn learned(&self, _agent: AgentId) -> Option<Vec<Value>> {
        None
    }
}

/// Everything needed to instantiate one execution.
pub trait Population: Sync {
    fn topology(&self) -> &Topology;
    fn rounds_bound(&self) -> usize;
    /// Declared draw slots in canonical `(agent, round)` order.
    fn domains(&self) -> Vec<((AgentId, usize), RandomDomain)>;
    fn instantiate(&self, inputs: &[Value]) -> Vec<Box<dyn Controller>>;
}

pub struct Solo {
    agent: AgentId,
    machine: Box<dyn Machine>,
}

impl Solo {
    pub fn new(agent: AgentId, machine: Box<dyn Machine>) -> Self {
        Solo { agent, machine }
    }
}

impl Controller for Solo {
    fn agents(&self) -> Vec<AgentId> {
        vec![self.agent]
    }

    fn send(
        &mut self,
        round: usize,
        draws: &dyn Fn(AgentId) -> Option<u32>,
    ) -> Vec<(AgentId, AgentId, Payload)> {
        self.machine
            .send(round, draws(self.agent))
            .into_iter()
            .map(|(dst, p)| (self.agent, dst, p))
            .collect()
    }

    fn receive(&mut self, round: usize, incoming: &[Links]) -> Vec<(AgentId, Decision)> {
        vec![(
            self.agent,
            self.machine.receive(round, &incoming[self.agent.index()]),
        )]
    }

    fn learned(&self, _agent: AgentId) -> Option<Vec<Value>> {
        self.machine.learned()
    }
}

/// Every agent runs the protocol as written.
pub struct Honest<'a>(pub &'a dyn Protocol);

impl Population for Honest<'_> {
    fn topology(&self) -> &Topology {
        self.0.topology()
    }

    fn rounds_bound(&self) -> usize {
        self.0.rounds_bound()
    }

    fn domains(&self) -> Vec<((AgentId, usize), RandomDomain)> {
        protocol_domains(self.0, self.0.topology().agents())
    }

    fn instantiate(&self, inputs: &[Value]) -> Vec<Box<dyn Controller>> {
        self.0
            .topology()
            .agents()
            .iter()
            .map(|&a| {
                Box::new(Solo::new(
                    a,
                    self.0.spawn(Persona::honest(a, inputs[a.index()])),
                )) as Box<dyn Controller>
            })
            .collect()
    }
}

/// Non-trivial draw slots the protocol declares for `agents`.
pub fn protocol_domains(
    p: &dyn Protocol,
    agents: &[AgentId],
) -> Vec<((AgentId, usize), RandomDomain)> {
    let mut out = Vec::new();
    for &a in agents {
        for round in 0..p.rounds_bound() {
            if let Some(d) = p.randomness(a, round) {
                if !d.is_empty() {
                    out.push(((a, round), d));
                }
            }
        }
    }
    out
}

/// Result of driving a population through one execution.
#[derive(Debug, Clone)]
pub struct Run {
    pub decisions: Vec<Decision>,
    pub rounds: Vec<Vec<RoundRecord>>,
    pub terminated_at: usize,
    pub overrun: bool,
    pub learned: Vec<Option<Vec<Value>>>,
}

/// Drives `pop` to completion. When `record` is false neither round records
/// nor learned vectors are kept, which is what the strategy searches use.
pub fn run_population(
    pop: &dyn Population,
    inputs: &[Value],
    rc: &RandomnessChoice,
    record: bool,
) -> Result<Run, EngineError> {
    let topo = pop.topology();
    let n = topo.n();
    if inputs.len() != n {
        return Err(EngineError::InputArity {
            expected: n,
            got: inputs.len(),
        });
    }
    let mut controllers = pop.instantiate(inputs);
    let bound = pop.rounds_bound();
    let mut status = vec![Decision::Undecided; n];
    let mut rounds = Vec::new();
    let mut terminated_at = bound.saturating_sub(1);
    let mut overrun = true;

    for t in 0..bound {
        let draws = |a: AgentId| rc.draw(a, t);
        // outgoing[src] holds (dst, payload) pairs
        let mut outgoing: Vec<Vec<(AgentId, Payload)>> = vec![Vec::new(); n];
        for c in controllers.iter_mut() {
            for (src, dst, payload) in c.send(t, &draws) {
                if !topo.contains(src) {
                    return Err(EngineError::UnknownAgent(src));
                }
                if !topo.is_edge(src, dst) {
                    return Err(EngineError::IllegalSend { src, dst, round: t });
                }
                let out = &mut outgoing[src.index()];
                if out.iter().any(|(d, _)| *d == dst) {
                    return Err(EngineError::DuplicateSend { src, dst, round: t });
                }
                out.push((dst, payload));
            }
        }

        let mut incoming: Vec<Links> = topo
            .agents()
            .iter()
            .map(|&a| {
                topo.neighbors(a)
                    .iter()
                    .map(|&j| (j, Link::Silence))
                    .collect()
            })
            .collect();
        for (src, outs) in outgoing.iter_mut().enumerate() {
            // the sender's copy is only needed for the record
            let sent: Vec<(AgentId, Payload)> = if record {
                outs.clone()
            } else {
                std::mem::take(outs)
            };
            for (dst, payload) in sent {
                let slot = incoming[dst.index()]
                    .iter_mut()
                    .find(|(j, _)| j.index() == src)
                    .expect("edge checked above");
                slot.1 = Link::Msg(payload);
            }
        }

        for c in controllers.iter_mut() {
            for (agent, d) in c.receive(t, &incoming) {
                let cur = &mut status[agent.index()];
                if cur.is_final() {
                    if *cur != d {
                        return Err(EngineError::DecisionChanged(agent));
                    }
                } else {
                    *cur = d;
                }
            }
        }

        if record {
            let per_agent = topo
                .agents()
                .iter()
                .map(|&a| {
                    let mut out: Links = topo
                        .neighbors(a)
                        .iter()
                        .map(|&j| (j, Link::Silence))
                        .collect();
                    for (dst, p) in &outgoing[a.index()] {
                        if let Some(slot) = out.iter_mut().find(|(j, _)| j == dst) {
                            slot.1 = Link::Msg(p.clone());
                        }
                    }
                    RoundRecord {
                        agent: a,
                        round: t,
                        input: inputs[a.index()],
                        incoming: std::mem::take(&mut incoming[a.index()]),
                        outgoing: out,
                        decision: status[a.index()],
                    }
                })
                .collect();
            rounds.push(per_agent);
        }

        if status.iter().all(|d| d.is_final()) {
            terminated_at = t;
            overrun = false;
            break;
        }
    }

    let mut learned = vec![None; n];
    if record {
        for c in &controllers {
            for a in c.agents() {
                learned[a.index()] = c.learned(a);
            }
        }
    }

    Ok(Run {
        decisions: status,
        rounds,
        terminated_at,
        overrun,
        learned,
    })
}

/// Runs `p` honestly on one input vector and one randomness choice.
pub fn execute(
    p: &dyn Protocol,
    inputs: &[Value],
    rc: &RandomnessChoice,
) -> Result<Trace, EngineError> {
    let topo = p.topology();
    if !check_two_vertex_connected(topo) {
        return Err(EngineError::NotTwoConnected);
    }
    let r = p.values();
    if let Some(&bad) = inputs.iter().find(|&&v| v < 0 || v >= r as Value) {
        return Err(EngineError::InputOutOfRange { value: bad, r });
    }
    let run = run_population(&Honest(p), inputs, rc, true)?;
    if run.overrun {
        return Err(EngineError::ProtocolOverrun {
            bound: p.rounds_bound(),
        });
    }
    Ok(assemble(topo, inputs, rc, run))
}

pub(crate) fn assemble(topo: &Topology, inputs: &[Value], rc: &RandomnessChoice, run: Run) -> Trace {
    Trace {
        topology: topo.clone(),
        inputs: inputs.to_vec(),
        randomness: rc.clone(),
        rounds: run.rounds,
        decisions: run.decisions,
        terminated_at: run.terminated_at,
        learned: run.learned,
    }
}

pub fn project(tr: &Trace, i: AgentId) -> Result<AgentRun, EngineError> {
    if !tr.topology.contains(i) {
        return Err(EngineError::UnknownAgent(i));
    }
    Ok(AgentRun {
        agent: i,
        rounds: tr.rounds.iter().map(|r| r[i.index()].clone()).collect(),
    })
}

/// Legal iff every agent decided the same value and that value is some
/// agent's input. Termination failures are reported before agreement,
/// agreement before validity.
pub fn classify(inputs: &[Value], decisions: &[Decision]) -> Outcome {
    if decisions.iter().any(|d| d.value().is_none()) {
        return Outcome::Erroneous(ErrorReason::Termination);
    }
    let first = decisions[0];
    if decisions.iter().any(|&d| d != first) {
        return Outcome::Erroneous(ErrorReason::Agreement);
    }
    let v = first.value().unwrap();
    if !inputs.contains(&v) {
        return Outcome::Erroneous(ErrorReason::Validity);
    }
    Outcome::Legal
}

pub fn classify_outcome(tr: &Trace) -> Outcome {
    classify(&tr.inputs, &tr.decisions)
}

/// I.i.d. per-agent input distribution over `0..r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputDistribution {
    #[serde(with = "crate::ratio::serde_prob_vec")]
    probs: Vec<Prob>,
}

impl InputDistribution {
    pub fn new(probs: Vec<Prob>) -> Result<Self, EngineError> {
        if probs.is_empty() {
            return Err(EngineError::Distribution("no values".into()));
        }
        if probs.iter().any(|p| *p < ratio::zero()) {
            return Err(EngineError::Distribution("negative probability".into()));
        }
        let total: Prob = probs.iter().cloned().sum();
        if total != ratio::one() {
            return Err(EngineError::Distribution(format!(
                "probabilities sum to {}",
                ratio::format(&total)
            )));
        }
        Ok(InputDistribution { probs })
    }

    pub fn uniform(r: u32) -> Self {
        InputDistribution {
            probs: vec![ratio::ratio(1, r as i64); r as usize],
        }
    }

    /// Binary distribution with `P[I = 1] = p1`.
    pub fn binary(p1: Prob) -> Self {
        InputDistribution::new(vec![ratio::one() - p1.clone(), p1]).expect("valid binary")
    }

    pub fn r(&self) -> u32 {
        self.probs.len() as u32
    }

    pub fn prob(&self, v: Value) -> Prob {
        if v < 0 {
            return ratio::zero();
        }
        self.probs.get(v as usize).cloned().unwrap_or_else(ratio::zero)
    }

    pub fn probs(&self) -> &[Prob] {
        &self.probs
    }

    pub fn vector_prob(&self, inputs: &[Value]) -> Prob {
        inputs.iter().map(|&v| self.prob(v)).product()
    }
}

/// Helper for tests and reports: decisions keyed by agent.
pub fn decisions_by_agent(tr: &Trace) -> BTreeMap<AgentId, Decision> {
    tr.topology
        .agents()
        .iter()
        .map(|&a| (a, tr.decisions[a.index()]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[i64]) -> Vec<Decision> {
        v.iter().map(|&x| Decision::Value(x)).collect()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify(&[1, 1, 1, 1], &d(&[0, 0, 0, 0])),
            Outcome::Erroneous(ErrorReason::Validity)
        );
        assert_eq!(
            classify(&[0, 1, 1], &d(&[1, 1, 0])),
            Outcome::Erroneous(ErrorReason::Agreement)
        );
        assert_eq!(classify(&[0, 1, 1], &d(&[0, 0, 0])), Outcome::Legal);
        assert_eq!(
            classify(&[0, 1, 1], &[Decision::Abort, Decision::Value(0), Decision::Value(0)]),
            Outcome::Erroneous(ErrorReason::Termination)
        );
    }

    #[test]
    fn distribution_validation() {
        assert!(InputDistribution::new(vec![ratio::ratio(1, 2), ratio::ratio(1, 3)]).is_err());
        assert!(InputDistribution::new(vec![]).is_err());
        let b = InputDistribution::binary(ratio::ratio(3, 4));
        assert_eq!(b.vector_prob(&[1, 1, 0]), ratio::ratio(9, 64));
    }

    #[test]
    fn decision_serde() {
        let s = serde_json::to_string(&vec![
            Decision::Value(1),
            Decision::Abort,
            Decision::Undecided,
        ])
        .unwrap();
        assert_eq!(s, r#"[1,"bot","undecided"]"#);
        let back: Vec<Decision> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[1], Decision::Abort);
    }

    #[test]
    fn empty_payload_is_literal_string() {
        assert_eq!(serde_json::to_string(&Payload::Empty).unwrap(), r#""EMPTY""#);
    }
}
