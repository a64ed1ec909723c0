//! Input sharing over two disjoint paths, and the consensus rules built on it.
//!
//! On a complete graph every agent broadcasts its record once. On a ring each
//! record is split into two additive shares: the clockwise share is a uniform
//! mask, the counterclockwise share is `record - mask`. Both travel all the
//! way around in opposite directions, so every agent holds both shares of
//! every other agent after `n - 1` rounds, and no single relay ever sees both
//! halves of a record before its owner's round-0 commitment.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::leader::{elect_leader, validate_knowledge, KnowledgeTriple, Validation};
use super::ProtocolError;
use crate::engine::{
    Decision, Direction, Link, Links, Machine, Payload, Persona, Protocol, RandomDomain, Value,
};
use crate::net::{AgentId, Topology, TopologyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// Learn every input, decide nothing.
    Ris,
    Xor,
    Algorithm1,
    MvMin,
    MvLeader,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Ris => "ris",
            Rule::Xor => "xor-consensus",
            Rule::Algorithm1 => "algorithm1",
            Rule::MvMin => "mv-min",
            Rule::MvLeader => "mv-leader",
        }
    }

    fn has_random(self) -> bool {
        matches!(self, Rule::Algorithm1 | Rule::MvLeader)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiRule {
    MinInput,
    LeaderInput,
}

#[derive(Debug)]
enum Scheme {
    Complete,
    Ring { order: Vec<AgentId>, pos: Vec<usize> },
}

#[derive(Debug)]
struct Spec {
    topo: Topology,
    rule: Rule,
    r: u32,
    masked: bool,
    scheme: Scheme,
}

impl Spec {
    fn n(&self) -> usize {
        self.topo.n()
    }

    /// Field moduli of a ring share; the random field is stored as `random - 1`.
    fn moduli(&self) -> Vec<Value> {
        let mut m = vec![self.r as Value];
        if self.rule.has_random() {
            m.push(self.n() as Value);
        }
        m
    }

    fn domain_size(&self) -> usize {
        let rand = if self.rule.has_random() { self.n() } else { 1 };
        let masks: usize = match self.scheme {
            Scheme::Ring { .. } if self.masked => self.moduli().iter().product::<Value>() as usize,
            _ => 1,
        };
        rand * masks
    }

    /// Splits a draw into (random in 1..=n, per-field masks).
    fn decode_draw(&self, draw: Option<u32>) -> (Value, Vec<Value>) {
        let mut d = draw.unwrap_or(0) as Value;
        let n = self.n() as Value;
        let random = if self.rule.has_random() {
            let v = d % n + 1;
            d /= n;
            v
        } else {
            0
        };
        let masks = self
            .moduli()
            .iter()
            .map(|&m| {
                if self.masked && matches!(self.scheme, Scheme::Ring { .. }) {
                    let v = d % m;
                    d /= m;
                    v
                } else {
                    0
                }
            })
            .collect();
        (random, masks)
    }
}

/// A sharing protocol bound to its topology.
#[derive(Debug, Clone)]
pub struct Sharing(Arc<Spec>);

impl Sharing {
    /// `masked = false` fixes every mask to zero, making the ring variant
    /// deterministic for rules without a random field.
    pub fn new(t: &Topology, rule: Rule, r: u32, masked: bool) -> Result<Self, ProtocolError> {
        if r < 2 {
            return Err(ProtocolError::ValueCount { r, min: 2 });
        }
        let order = if t.kind() == TopologyKind::Complete {
            None
        } else {
            t.ring_order()
        };
        let scheme = match order {
            Some(order) => {
                let mut pos = vec![0; t.n()];
                for (k, a) in order.iter().enumerate() {
                    pos[a.index()] = k;
                }
                Scheme::Ring { order, pos }
            }
            None if t.n() >= 3 && t.is_complete() => Scheme::Complete,
            None => {
                return Err(ProtocolError::UnsupportedTopology(format!(
                    "{:?} graph on {} agents is neither a cycle nor complete",
                    t.kind(),
                    t.n()
                )))
            }
        };
        Ok(Sharing(Arc::new(Spec {
            topo: t.clone(),
            rule,
            r,
            masked,
            scheme,
        })))
    }

    pub fn rule(&self) -> Rule {
        self.0.rule
    }

    pub fn is_ring(&self) -> bool {
        matches!(self.0.scheme, Scheme::Ring { .. })
    }
}

pub fn make_ris_two_path(t: &Topology) -> Result<Sharing, ProtocolError> {
    Sharing::new(t, Rule::Ris, 2, true)
}

pub fn make_xor_consensus(t: &Topology) -> Result<Sharing, ProtocolError> {
    Sharing::new(t, Rule::Xor, 2, true)
}

/// XOR consensus with zero masks: no randomness at all.
pub fn make_xor_consensus_deterministic(t: &Topology) -> Result<Sharing, ProtocolError> {
    Sharing::new(t, Rule::Xor, 2, false)
}

pub fn make_algorithm1(t: &Topology) -> Result<Sharing, ProtocolError> {
    Sharing::new(t, Rule::Algorithm1, 2, true)
}

pub fn make_candidate_multivalued(
    t: &Topology,
    r: u32,
    rule: MultiRule,
) -> Result<Sharing, ProtocolError> {
    if r < 3 {
        return Err(ProtocolError::ValueCount { r, min: 3 });
    }
    let rule = match rule {
        MultiRule::MinInput => Rule::MvMin,
        MultiRule::LeaderInput => Rule::MvLeader,
    };
    Sharing::new(t, rule, r, true)
}

fn all_field_vectors(ranges: &[(Value, Value)]) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for &(lo, hi) in ranges {
        out = out
            .into_iter()
            .flat_map(|base| {
                (lo..hi).map(move |v| {
                    let mut f = base.clone();
                    f.push(v);
                    f
                })
            })
            .collect();
    }
    out
}

impl Protocol for Sharing {
    fn name(&self) -> String {
        self.0.rule.name().to_string()
    }

    fn topology(&self) -> &Topology {
        &self.0.topo
    }

    fn values(&self) -> u32 {
        self.0.r
    }

    fn rounds_bound(&self) -> usize {
        match self.0.scheme {
            Scheme::Complete => 1,
            Scheme::Ring { .. } => self.0.n() - 1,
        }
    }

    fn randomness(&self, _agent: AgentId, round: usize) -> Option<RandomDomain> {
        let size = self.0.domain_size();
        (round == 0 && size > 1).then(|| RandomDomain::uniform(0..size as u32))
    }

    fn alphabet(&self) -> Vec<Payload> {
        let s = &self.0;
        let n = s.n() as Value;
        let mut out = vec![Payload::Empty];
        match s.scheme {
            Scheme::Complete => {
                let mut ranges = vec![(0, s.r as Value)];
                if s.rule.has_random() {
                    ranges.push((1, n + 1));
                }
                for &origin in s.topo.agents() {
                    for fields in all_field_vectors(&ranges) {
                        out.push(Payload::Record { origin, fields });
                    }
                }
            }
            Scheme::Ring { .. } => {
                let ranges: Vec<_> = s.moduli().iter().map(|&m| (0, m)).collect();
                for &origin in s.topo.agents() {
                    for dir in [Direction::Clockwise, Direction::Counterclockwise] {
                        for fields in all_field_vectors(&ranges) {
                            out.push(Payload::Share { origin, dir, fields });
                        }
                    }
                }
            }
        }
        out
    }

    fn spawn(&self, persona: Persona) -> Box<dyn Machine> {
        let n = if self.is_ring() { self.0.n() } else { 0 };
        Box::new(SharingMachine {
            spec: self.0.clone(),
            persona,
            own: Vec::new(),
            masks: Vec::new(),
            cw: vec![None; n],
            ccw: vec![None; n],
            triples: Vec::new(),
            decision: Decision::Undecided,
            learned: None,
        })
    }
}

struct SharingMachine {
    spec: Arc<Spec>,
    persona: Persona,
    /// Own record in share encoding (random stored as `random - 1`).
    own: Vec<Value>,
    masks: Vec<Value>,
    cw: Vec<Option<Vec<Value>>>,
    ccw: Vec<Option<Vec<Value>>>,
    triples: Vec<KnowledgeTriple>,
    decision: Decision,
    learned: Option<Vec<Value>>,
}

impl SharingMachine {
    fn abort(&mut self) -> Decision {
        self.decision = Decision::Abort;
        self.decision
    }

    fn share_fields_ok(&self, fields: &[Value]) -> bool {
        let m = self.spec.moduli();
        fields.len() == m.len() && fields.iter().zip(&m).all(|(v, m)| (0..*m).contains(v))
    }

    fn finish(&mut self) -> Decision {
        let s = self.spec.clone();
        let n = s.n();
        let mut learned = vec![0; n];
        for t in &self.triples {
            if t.id.index() < n {
                learned[t.id.index()] = t.input;
            }
        }
        self.learned = Some(learned);
        let inputs = || self.triples.iter().map(|t| t.input);
        let leader = || {
            let randoms: Vec<Value> = self.triples.iter().map(|t| t.random).collect();
            let ids: Vec<AgentId> = self.triples.iter().map(|t| t.id).collect();
            elect_leader(&randoms, &ids)
        };
        self.decision = match s.rule {
            Rule::Ris => Decision::Halted,
            Rule::Xor => Decision::Value(inputs().fold(0, |a, b| a ^ b)),
            Rule::MvMin => Decision::Value(inputs().min().unwrap_or(0)),
            Rule::Algorithm1 => {
                if validate_knowledge(&self.triples, n) == Validation::Abort {
                    Decision::Abort
                } else {
                    match leader() {
                        Ok(l) => Decision::Value(
                            self.triples
                                .iter()
                                .filter(|t| t.id != l)
                                .fold(0, |a, t| a ^ t.input),
                        ),
                        Err(_) => Decision::Abort,
                    }
                }
            }
            Rule::MvLeader => match leader() {
                Ok(l) => Decision::Value(
                    self.triples
                        .iter()
                        .find(|t| t.id == l)
                        .map(|t| t.input)
                        .unwrap_or(0),
                ),
                Err(_) => Decision::Abort,
            },
        };
        self.decision
    }

    fn triple(&self, id: AgentId, fields: &[Value], random_offset: Value) -> KnowledgeTriple {
        KnowledgeTriple {
            input: fields[0],
            random: fields.get(1).map_or(0, |r| r + random_offset),
            id,
        }
    }

    fn receive_complete(&mut self, incoming: &Links) -> Decision {
        let s = self.spec.clone();
        let n = s.n() as Value;
        let mut triples = vec![KnowledgeTriple {
            input: self.own[0],
            random: self.own.get(1).map_or(0, |r| r + 1),
            id: self.persona.id,
        }];
        let width = if s.rule.has_random() { 2 } else { 1 };
        for (j, link) in incoming {
            let Link::Msg(Payload::Record { origin, fields }) = link else {
                return self.abort();
            };
            if fields.len() != width {
                return self.abort();
            }
            if s.rule != Rule::Algorithm1 {
                let random_ok = !s.rule.has_random() || (1..=n).contains(&fields[1]);
                if origin != j || !(0..s.r as Value).contains(&fields[0]) || !random_ok {
                    return self.abort();
                }
            }
            triples.push(self.triple(*origin, fields, 0));
        }
        triples.sort_by_key(|t| t.id);
        self.triples = triples;
        self.finish()
    }

    fn receive_ring(&mut self, round: usize, incoming: &Links) -> Decision {
        let s = self.spec.clone();
        let Scheme::Ring { order, pos } = &s.scheme else {
            unreachable!()
        };
        let n = s.n();
        let p = pos[self.persona.agent.index()];
        let pred = order[(p + n - 1) % n];
        let succ = order[(p + 1) % n];
        let from_pred = order[(p + 2 * n - 1 - round % n) % n];
        let from_succ = order[(p + 1 + round) % n];
        for (j, link) in incoming {
            let (want_origin, want_dir) = if *j == pred {
                (from_pred, Direction::Clockwise)
            } else if *j == succ {
                (from_succ, Direction::Counterclockwise)
            } else {
                return self.abort();
            };
            match link {
                Link::Msg(Payload::Share { origin, dir, fields })
                    if *origin == want_origin && *dir == want_dir && self.share_fields_ok(fields) =>
                {
                    let slot = match dir {
                        Direction::Clockwise => &mut self.cw,
                        Direction::Counterclockwise => &mut self.ccw,
                    };
                    slot[origin.index()] = Some(fields.clone());
                }
                _ => return self.abort(),
            }
        }
        if round + 2 < n {
            return Decision::Undecided;
        }
        let moduli = s.moduli();
        let mut triples = Vec::with_capacity(n);
        for &a in s.topo.agents() {
            let fields = if a == self.persona.agent {
                self.own.clone()
            } else {
                match (&self.cw[a.index()], &self.ccw[a.index()]) {
                    (Some(x), Some(y)) => x
                        .iter()
                        .zip(y)
                        .zip(&moduli)
                        .map(|((x, y), m)| (x + y).rem_euclid(*m))
                        .collect(),
                    _ => return self.abort(),
                }
            };
            triples.push(self.triple(a, &fields, 1));
        }
        self.triples = triples;
        self.finish()
    }
}

impl Machine for SharingMachine {
    fn send(&mut self, round: usize, draw: Option<u32>) -> Vec<(AgentId, Payload)> {
        let s = self.spec.clone();
        if self.decision == Decision::Abort {
            return s
                .topo
                .neighbors(self.persona.agent)
                .iter()
                .map(|&j| (j, Payload::Empty))
                .collect();
        }
        if self.decision.is_final() {
            return Vec::new();
        }
        let n = s.n();
        if round == 0 {
            let (random, masks) = s.decode_draw(self.persona.draw.or(draw));
            self.own = vec![self.persona.input];
            if s.rule.has_random() {
                self.own.push(random - 1);
            }
            self.masks = masks;
        }
        match &s.scheme {
            Scheme::Complete => {
                if round > 0 {
                    return Vec::new();
                }
                let mut fields = vec![self.persona.input];
                if let Some(r) = self.own.get(1) {
                    fields.push(r + 1);
                }
                s.topo
                    .neighbors(self.persona.agent)
                    .iter()
                    .map(|&j| {
                        (
                            j,
                            Payload::Record {
                                origin: self.persona.id,
                                fields: fields.clone(),
                            },
                        )
                    })
                    .collect()
            }
            Scheme::Ring { order, pos } => {
                if round + 1 >= n {
                    return Vec::new();
                }
                let p = pos[self.persona.agent.index()];
                let succ = order[(p + 1) % n];
                let pred = order[(p + n - 1) % n];
                let moduli = s.moduli();
                let (cw, ccw) = if round == 0 {
                    let ccw = self
                        .own
                        .iter()
                        .zip(&self.masks)
                        .zip(&moduli)
                        .map(|((v, k), m)| (v - k).rem_euclid(*m))
                        .collect();
                    (self.masks.clone(), ccw)
                } else {
                    let cw_origin = order[(p + n - round % n) % n];
                    let ccw_origin = order[(p + round) % n];
                    match (&self.cw[cw_origin.index()], &self.ccw[ccw_origin.index()]) {
                        (Some(a), Some(b)) => (a.clone(), b.clone()),
                        _ => return Vec::new(),
                    }
                };
                let cw_origin = order[(p + n - round % n) % n];
                let ccw_origin = order[(p + round) % n];
                vec![
                    (
                        succ,
                        Payload::Share {
                            origin: cw_origin,
                            dir: Direction::Clockwise,
                            fields: cw,
                        },
                    ),
                    (
                        pred,
                        Payload::Share {
                            origin: ccw_origin,
                            dir: Direction::Counterclockwise,
                            fields: ccw,
                        },
                    ),
                ]
            }
        }
    }

    fn receive(&mut self, round: usize, incoming: &Links) -> Decision {
        if self.decision.is_final() {
            return self.decision;
        }
        match self.spec.scheme {
            Scheme::Complete => {
                if round > 0 {
                    return self.abort();
                }
                self.receive_complete(incoming)
            }
            Scheme::Ring { .. } => self.receive_ring(round, incoming),
        }
    }

    fn learned(&self) -> Option<Vec<Value>> {
        self.learned.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{classify_outcome, execute, ErrorReason, Outcome, RandomnessChoice};
    use crate::net::build_topology;

    fn ring(n: usize) -> Topology {
        build_topology(TopologyKind::Ring, n).unwrap()
    }

    fn complete(n: usize) -> Topology {
        build_topology(TopologyKind::Complete, n).unwrap()
    }

    fn draws(n: usize, vals: &[u32]) -> RandomnessChoice {
        let mut rc = RandomnessChoice::trivial();
        for (a, &x) in vals.iter().enumerate().take(n) {
            rc.draws.insert((AgentId(a as u32), 0), x);
        }
        rc
    }

    fn values(tr: &crate::engine::Trace) -> Vec<Option<Value>> {
        tr.decisions.iter().map(|d| d.value()).collect()
    }

    #[test]
    fn xor_examples() {
        let p = make_xor_consensus_deterministic(&ring(3)).unwrap();
        let tr = execute(&p, &[1, 0, 1], &RandomnessChoice::trivial()).unwrap();
        assert_eq!(values(&tr), vec![Some(0); 3]);
        let tr = execute(&p, &[1, 1, 1], &RandomnessChoice::trivial()).unwrap();
        assert_eq!(values(&tr), vec![Some(1); 3]);

        let p5 = make_xor_consensus(&ring(5)).unwrap();
        let tr = execute(&p5, &[1, 1, 0, 0, 0], &draws(5, &[1, 0, 1, 1, 0])).unwrap();
        assert_eq!(values(&tr), vec![Some(0); 5]);

        let p4 = make_xor_consensus(&ring(4)).unwrap();
        let tr = execute(&p4, &[1, 1, 1, 1], &draws(4, &[0, 1, 1, 0])).unwrap();
        assert_eq!(values(&tr), vec![Some(0); 4]);
        assert_eq!(
            classify_outcome(&tr),
            Outcome::Erroneous(ErrorReason::Validity)
        );
    }

    #[test]
    fn ring_lengths() {
        assert_eq!(make_ris_two_path(&ring(3)).unwrap().rounds_bound(), 2);
        assert_eq!(make_ris_two_path(&ring(5)).unwrap().rounds_bound(), 4);
        assert_eq!(make_ris_two_path(&complete(4)).unwrap().rounds_bound(), 1);
    }

    #[test]
    fn ris_reconstructs_everything() {
        let p = make_ris_two_path(&ring(5)).unwrap();
        let tr = execute(&p, &[1, 0, 1, 1, 0], &draws(5, &[1, 1, 0, 0, 1])).unwrap();
        for l in &tr.learned {
            assert_eq!(l.as_deref(), Some(&[1, 0, 1, 1, 0][..]));
        }
        assert!(tr.decisions.iter().all(|d| *d == Decision::Halted));

        let c = make_ris_two_path(&complete(4)).unwrap();
        let tr = execute(&c, &[0, 1, 1, 0], &RandomnessChoice::trivial()).unwrap();
        assert_eq!(tr.terminated_at, 0);
        for l in &tr.learned {
            assert_eq!(l.as_deref(), Some(&[0, 1, 1, 0][..]));
        }
    }

    #[test]
    fn diamond_is_a_ring() {
        let d = crate::net::build_custom(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let p = make_ris_two_path(&d).unwrap();
        let tr = execute(&p, &[1, 1, 0, 1], &draws(4, &[0, 1, 0, 1])).unwrap();
        assert_eq!(tr.learned[2].as_deref(), Some(&[1, 1, 0, 1][..]));
    }

    #[test]
    fn algorithm1_example() {
        let p = make_algorithm1(&complete(4)).unwrap();
        // draw d encodes random d + 1
        let tr = execute(&p, &[1, 0, 1, 1], &draws(4, &[0, 1, 2, 3])).unwrap();
        assert_eq!(values(&tr), vec![Some(0); 4]);
    }

    #[test]
    fn multivalued_examples() {
        let p = make_candidate_multivalued(&ring(3), 3, MultiRule::MinInput).unwrap();
        let tr = execute(&p, &[2, 1, 2], &draws(3, &[4, 2, 7])).unwrap();
        assert_eq!(values(&tr), vec![Some(1); 3]);
        let q = make_candidate_multivalued(&complete(3), 3, MultiRule::LeaderInput).unwrap();
        let tr = execute(&q, &[2, 0, 1], &draws(3, &[0, 0, 0])).unwrap();
        assert_eq!(values(&tr), vec![Some(2); 3]);
        assert!(make_candidate_multivalued(&ring(3), 2, MultiRule::MinInput).is_err());
    }

    #[test]
    fn unsupported_topology() {
        let t = crate::net::build_custom(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        assert!(matches!(
            make_xor_consensus(&t),
            Err(ProtocolError::UnsupportedTopology(_))
        ));
    }
}
