//! The piggyback wrapper: every message carries everything its sender has
//! heard about, so each agent ends holding the provenance of its decision.

use std::collections::BTreeSet;

use super::EpistemicsError;
use crate::engine::{
    execute, input_vectors, Decision, Link, Links, Machine, MessageRecord, Payload, Persona,
    Protocol, RandomDomain, RandomnessChoice, Trace, Value,
};
use crate::net::{AgentId, Topology};

pub struct Piggybacked<P> {
    inner: P,
}

impl<P: Protocol> Piggybacked<P> {
    pub fn inner(&self) -> &P {
        &self.inner
    }
}

/// Wraps a deterministic protocol; randomized ones are refused.
pub fn ris_transform<P: Protocol>(p: P) -> Result<Piggybacked<P>, EpistemicsError> {
    if !p.is_deterministic() {
        return Err(EpistemicsError::NondeterministicProtocol);
    }
    Ok(Piggybacked { inner: p })
}

impl<P: Protocol> Protocol for Piggybacked<P> {
    fn name(&self) -> String {
        format!("{}+piggyback", self.inner.name())
    }

    fn topology(&self) -> &Topology {
        self.inner.topology()
    }

    fn values(&self) -> u32 {
        self.inner.values()
    }

    fn rounds_bound(&self) -> usize {
        self.inner.rounds_bound()
    }

    fn randomness(&self, agent: AgentId, round: usize) -> Option<RandomDomain> {
        self.inner.randomness(agent, round)
    }

    /// The underlying alphabet; buffers are unbounded so they are not listed.
    fn alphabet(&self) -> Vec<Payload> {
        self.inner.alphabet()
    }

    fn spawn(&self, persona: Persona) -> Box<dyn Machine> {
        Box::new(PiggybackMachine {
            me: persona.agent,
            inner: self.inner.spawn(persona),
            buffer: BTreeSet::new(),
        })
    }
}

struct PiggybackMachine {
    me: AgentId,
    inner: Box<dyn Machine>,
    buffer: BTreeSet<MessageRecord>,
}

impl Machine for PiggybackMachine {
    fn send(&mut self, round: usize, draw: Option<u32>) -> Vec<(AgentId, Payload)> {
        let buffer: Vec<MessageRecord> = self.buffer.iter().cloned().collect();
        self.inner
            .send(round, draw)
            .into_iter()
            .map(|(dst, p)| {
                (
                    dst,
                    Payload::Piggyback {
                        inner: Box::new(p),
                        buffer: buffer.clone(),
                    },
                )
            })
            .collect()
    }

    fn receive(&mut self, round: usize, incoming: &Links) -> Decision {
        absorb(&mut self.buffer, self.me, round, incoming);
        let plain: Links = incoming
            .iter()
            .map(|(j, l)| (*j, strip_link(l)))
            .collect();
        self.inner.receive(round, &plain)
    }

    fn learned(&self) -> Option<Vec<Value>> {
        self.inner.learned()
    }
}

fn absorb(buffer: &mut BTreeSet<MessageRecord>, me: AgentId, round: usize, incoming: &Links) {
    for (src, l) in incoming {
        let Link::Msg(p) = l else { continue };
        buffer.insert(MessageRecord {
            payload: p.stripped().clone(),
            round,
            src: *src,
            dst: me,
        });
        if let Payload::Piggyback { buffer: carried, .. } = p {
            buffer.extend(carried.iter().cloned());
        }
    }
}

fn strip_link(l: &Link) -> Link {
    match l {
        Link::Silence => Link::Silence,
        Link::Msg(p) => Link::Msg(p.stripped().clone()),
    }
}

/// The buffer agent `i` holds at the end of a piggybacked run.
pub fn final_buffer(tr: &Trace, i: AgentId) -> BTreeSet<MessageRecord> {
    let mut buffer = BTreeSet::new();
    for (t, per_agent) in tr.rounds.iter().enumerate() {
        if let Some(rec) = per_agent.get(i.index()) {
            absorb(&mut buffer, i, t, &rec.incoming);
        }
    }
    buffer
}

/// The same trace with every buffer removed.
pub fn strip_trace(tr: &Trace) -> Trace {
    let mut out = tr.clone();
    for rec in out.rounds.iter_mut().flatten() {
        for (_, l) in rec.incoming.iter_mut().chain(rec.outgoing.iter_mut()) {
            *l = strip_link(l);
        }
    }
    out
}

/// Recovers the whole input vector from what agent `agent` holds at the end:
/// its input, its decision and its buffer. Every candidate vector is
/// simulated and the ones reproducing exactly that view are kept.
pub fn decode_inputs(
    own_input: Value,
    decision: Decision,
    buffer: &BTreeSet<MessageRecord>,
    p: &dyn Protocol,
    agent: AgentId,
) -> Result<Vec<Value>, EpistemicsError> {
    let topo = p.topology();
    if !topo.contains(agent) {
        return Err(EpistemicsError::UnknownAgent(agent));
    }
    let wrapped = ris_transform(p)?;
    let rc = RandomnessChoice::trivial();
    let mut survivors = Vec::new();
    for inputs in input_vectors(topo.n(), p.values()) {
        if inputs[agent.index()] != own_input {
            continue;
        }
        let tr = execute(&wrapped, &inputs, &rc)?;
        if tr.decisions[agent.index()] == decision && final_buffer(&tr, agent) == *buffer {
            survivors.push(inputs);
        }
    }
    match survivors.len() {
        0 => Err(EpistemicsError::NoConsistentCandidate),
        1 => Ok(survivors.pop().unwrap()),
        k => Err(EpistemicsError::AmbiguousDecoding(k)),
    }
}
