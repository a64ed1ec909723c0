//! Small deterministic protocols used as counterexamples by the analyses.

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::engine::{Decision, Link, Links, Machine, Payload, Persona, Protocol, RandomDomain, Value};
use crate::net::{AgentId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyKind {
    /// Round 0: `Tag(1)` to every neighbor iff the input is 1. Round 1: the
    /// number of tags heard. Decides `(input + heard) mod 2`.
    SendIffOne,
    /// Never sends; decides its own input.
    Silent,
    /// Round 0: own input to the successor. Round 1: `input ^ pred_input`
    /// back to the predecessor. Halts without deciding a value.
    Echo,
    /// XOR consensus on three agents where agent 0 only ever learns the
    /// parity of the other two inputs, through a silence-or-EMPTY bit.
    XorLossy,
}

impl ToyKind {
    pub fn name(self) -> &'static str {
        match self {
            ToyKind::SendIffOne => "toy-send-iff-one",
            ToyKind::Silent => "toy-silent",
            ToyKind::Echo => "toy-echo",
            ToyKind::XorLossy => "xor-lossy",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Toy {
    kind: ToyKind,
    topo: Topology,
    order: Vec<AgentId>,
}

pub fn make_toy(kind: ToyKind, t: &Topology) -> Result<Toy, ProtocolError> {
    let order = match kind {
        ToyKind::Echo => t.ring_order().ok_or_else(|| {
            ProtocolError::UnsupportedTopology("the echo toy needs a cycle".into())
        })?,
        ToyKind::XorLossy if !(t.n() == 3 && t.is_complete()) => {
            return Err(ProtocolError::UnsupportedTopology(
                "the lossy variant is defined on three fully connected agents".into(),
            ))
        }
        _ => t.agents().to_vec(),
    };
    Ok(Toy {
        kind,
        topo: t.clone(),
        order,
    })
}

impl Protocol for Toy {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn topology(&self) -> &Topology {
        &self.topo
    }

    fn values(&self) -> u32 {
        2
    }

    fn rounds_bound(&self) -> usize {
        match self.kind {
            ToyKind::Silent => 1,
            _ => 2,
        }
    }

    fn randomness(&self, _agent: AgentId, _round: usize) -> Option<RandomDomain> {
        None
    }

    fn alphabet(&self) -> Vec<Payload> {
        match self.kind {
            ToyKind::Silent => Vec::new(),
            // never sends EMPTY, so silence is its only way to say nothing
            ToyKind::SendIffOne => (0..self.topo.n() as Value).map(Payload::Tag).collect(),
            _ => vec![Payload::Empty, Payload::Tag(0), Payload::Tag(1)],
        }
    }

    fn spawn(&self, persona: Persona) -> Box<dyn Machine> {
        let n = self.order.len();
        let p = self
            .order
            .iter()
            .position(|&a| a == persona.agent)
            .unwrap_or(0);
        Box::new(ToyMachine {
            kind: self.kind,
            neighbors: self.topo.neighbors(persona.agent).to_vec(),
            succ: self.order[(p + 1) % n],
            pred: self.order[(p + n - 1) % n],
            me: persona.agent,
            input: persona.input,
            heard: 0,
            seen: Vec::new(),
            decision: Decision::Undecided,
        })
    }
}

struct ToyMachine {
    kind: ToyKind,
    neighbors: Vec<AgentId>,
    succ: AgentId,
    pred: AgentId,
    me: AgentId,
    input: Value,
    heard: Value,
    seen: Vec<Value>,
    decision: Decision,
}

fn tag(l: &Link) -> Option<Value> {
    match l {
        Link::Msg(Payload::Tag(v)) => Some(*v),
        _ => None,
    }
}

impl Machine for ToyMachine {
    fn send(&mut self, round: usize, _draw: Option<u32>) -> Vec<(AgentId, Payload)> {
        let all = |p: Payload| self.neighbors.iter().map(|&j| (j, p.clone())).collect();
        match (self.kind, round) {
            (ToyKind::SendIffOne, 0) if self.input == 1 => all(Payload::Tag(1)),
            (ToyKind::SendIffOne, 1) => all(Payload::Tag(self.heard)),
            (ToyKind::Echo, 0) => vec![
                (self.succ, Payload::Tag(self.input)),
                (self.pred, Payload::Empty),
            ],
            (ToyKind::Echo, 1) => vec![
                (self.pred, Payload::Tag(self.input ^ self.seen.first().copied().unwrap_or(0))),
                (self.succ, Payload::Empty),
            ],
            (ToyKind::XorLossy, 0) => match self.me.0 {
                0 => vec![
                    (AgentId(1), Payload::Tag(self.input)),
                    (AgentId(2), Payload::Tag(self.input)),
                ],
                1 if self.input == 1 => vec![(AgentId(2), Payload::Tag(1))],
                2 => vec![(AgentId(1), Payload::Tag(self.input))],
                _ => Vec::new(),
            },
            (ToyKind::XorLossy, 1) if self.me == AgentId(2) => {
                // seen[0] = I0, seen[1] = I1
                if self.seen.get(1).copied().unwrap_or(0) ^ self.input == 1 {
                    vec![(AgentId(0), Payload::Empty)]
                } else {
                    Vec::new()
                }
            }
            _ => Vec::new(),
        }
    }

    fn receive(&mut self, round: usize, incoming: &Links) -> Decision {
        if self.decision.is_final() {
            return self.decision;
        }
        let from = |a: AgentId| incoming.iter().find(|(j, _)| *j == a).map(|(_, l)| l);
        self.decision = match (self.kind, round) {
            (ToyKind::Silent, _) => Decision::Value(self.input),
            (ToyKind::SendIffOne, 0) => {
                self.heard = incoming.iter().filter(|(_, l)| tag(l) == Some(1)).count() as Value;
                Decision::Undecided
            }
            (ToyKind::SendIffOne, _) => Decision::Value((self.input + self.heard) % 2),
            (ToyKind::Echo, 0) => {
                self.seen = from(self.pred).and_then(tag).into_iter().collect();
                Decision::Undecided
            }
            (ToyKind::Echo, _) => Decision::Halted,
            (ToyKind::XorLossy, 0) => {
                let bit = |a: u32| from(AgentId(a)).and_then(tag).unwrap_or(0);
                self.seen = vec![bit(0), bit(1), bit(2)];
                Decision::Undecided
            }
            (ToyKind::XorLossy, _) => {
                let s = &self.seen;
                let v = match self.me.0 {
                    0 => {
                        let parity = matches!(from(AgentId(2)), Some(Link::Msg(_))) as Value;
                        self.input ^ parity
                    }
                    1 => s[0] ^ self.input ^ s[2],
                    _ => s[0] ^ s[1] ^ self.input,
                };
                Decision::Value(v)
            }
        };
        self.decision
    }
}
