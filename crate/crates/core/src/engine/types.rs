use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::net::{AgentId, Topology};
use crate::ratio::{self, Prob};

/// Input and decision values. Honest inputs lie in `0..r`, but claimed values
/// carried in payloads may be anything, so the type is signed.
pub type Value = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Clockwise,
    Counterclockwise,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Payload {
    #[serde(rename = "EMPTY")]
    Empty,
    /// A knowledge record sent in the clear, with its claimed origin.
    Record { origin: AgentId, fields: Vec<Value> },
    /// One share of a record travelling around a ring.
    Share {
        origin: AgentId,
        dir: Direction,
        fields: Vec<Value>,
    },
    Tag(Value),
    /// A payload with a provenance buffer attached.
    Piggyback {
        inner: Box<Payload>,
        buffer: Vec<MessageRecord>,
    },
}

impl Payload {
    pub fn is_empty(&self) -> bool {
        matches!(self, Payload::Empty)
    }

    /// Drops any piggybacked buffer.
    pub fn stripped(&self) -> &Payload {
        match self {
            Payload::Piggyback { inner, .. } => inner.stripped(),
            p => p,
        }
    }
}

/// `<m, t_m, src_m, dst_m>`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageRecord {
    pub payload: Payload,
    pub round: usize,
    pub src: AgentId,
    pub dst: AgentId,
}

/// What an agent experiences on one link in one round.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Link {
    Silence,
    Msg(Payload),
}

impl Link {
    pub fn payload(&self) -> Option<&Payload> {
        match self {
            Link::Silence => None,
            Link::Msg(p) => Some(p),
        }
    }

    pub fn is_silence(&self) -> bool {
        matches!(self, Link::Silence)
    }
}

impl Serialize for Link {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Link::Silence => s.serialize_none(),
            Link::Msg(p) => p.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Link {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match Option::<Payload>::deserialize(d)? {
            None => Link::Silence,
            Some(p) => Link::Msg(p),
        })
    }
}

/// Per-neighbor link experiences, sorted by neighbor id.
pub type Links = Vec<(AgentId, Link)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Decision {
    Undecided,
    /// ⊥
    Abort,
    /// Terminated without a consensus value (input-sharing protocols).
    Halted,
    Value(Value),
}

impl Decision {
    pub fn is_final(self) -> bool {
        !matches!(self, Decision::Undecided)
    }

    pub fn value(self) -> Option<Value> {
        match self {
            Decision::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Undecided => f.write_str("?"),
            Decision::Abort => f.write_str("⊥"),
            Decision::Halted => f.write_str("halt"),
            Decision::Value(v) => v.fmt(f),
        }
    }
}

impl Serialize for Decision {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Decision::Undecided => s.serialize_str("undecided"),
            Decision::Abort => s.serialize_str("bot"),
            Decision::Halted => s.serialize_str("halt"),
            Decision::Value(v) => s.serialize_i64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(i64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Decision::Value(v)),
            Raw::Word(w) => match w.as_str() {
                "undecided" => Ok(Decision::Undecided),
                "bot" => Ok(Decision::Abort),
                "halt" => Ok(Decision::Halted),
                other => Err(de::Error::custom(format!("unknown decision {other:?}"))),
            },
        }
    }
}

/// `round(i, t) = <I_i, in(i,t), out(i,t), D(i,t)>`
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoundRecord {
    pub agent: AgentId,
    pub round: usize,
    pub input: Value,
    #[serde(rename = "in", with = "links_serde")]
    pub incoming: Links,
    #[serde(rename = "out", with = "links_serde")]
    pub outgoing: Links,
    pub decision: Decision,
}

mod links_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        peer: AgentId,
        msg: Link,
    }

    pub fn serialize<S: Serializer>(links: &Links, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Entry> = links
            .iter()
            .map(|(p, l)| Entry {
                peer: *p,
                msg: l.clone(),
            })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Links, D::Error> {
        let v = Vec::<Entry>::deserialize(d)?;
        Ok(v.into_iter().map(|e| (e.peer, e.msg)).collect())
    }
}

/// A finite distribution over draw values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomDomain(pub Vec<(u32, Prob)>);

impl RandomDomain {
    pub fn uniform(values: impl IntoIterator<Item = u32>) -> Self {
        let values: Vec<u32> = values.into_iter().collect();
        let p = ratio::ratio(1, values.len() as i64);
        RandomDomain(values.into_iter().map(|v| (v, p.clone())).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().map(|(v, _)| *v)
    }
}

/// One joint selection of every declared draw, with its probability.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RandomnessChoice {
    pub draws: BTreeMap<(AgentId, usize), u32>,
    pub probability: Prob,
}

impl RandomnessChoice {
    /// The choice for a protocol without randomness.
    pub fn trivial() -> Self {
        RandomnessChoice {
            draws: BTreeMap::new(),
            probability: ratio::one(),
        }
    }

    pub fn draw(&self, agent: AgentId, round: usize) -> Option<u32> {
        self.draws.get(&(agent, round)).copied()
    }
}

impl Serialize for RandomnessChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Draw {
            agent: AgentId,
            round: usize,
            value: u32,
        }
        #[derive(Serialize)]
        struct Out {
            draws: Vec<Draw>,
            #[serde(with = "crate::ratio::serde_prob")]
            probability: Prob,
        }
        Out {
            draws: self
                .draws
                .iter()
                .map(|(&(agent, round), &value)| Draw {
                    agent,
                    round,
                    value,
                })
                .collect(),
            probability: self.probability.clone(),
        }
        .serialize(s)
    }
}

/// A complete run transcript. `rounds[t][i]` is `round(i, t)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub topology: Topology,
    pub inputs: Vec<Value>,
    pub randomness: RandomnessChoice,
    pub rounds: Vec<Vec<RoundRecord>>,
    pub decisions: Vec<Decision>,
    pub terminated_at: usize,
    /// Input vectors reconstructed by agents that expose them.
    pub learned: Vec<Option<Vec<Value>>>,
}

impl Trace {
    pub fn record(&self, agent: AgentId, round: usize) -> &RoundRecord {
        &self.rounds[round][agent.index()]
    }

    /// Every message sent in the run, in (round, src, dst) order.
    pub fn messages(&self) -> Vec<MessageRecord> {
        let mut out = Vec::new();
        for (t, per_agent) in self.rounds.iter().enumerate() {
            for rec in per_agent {
                for (dst, link) in &rec.outgoing {
                    if let Link::Msg(p) = link {
                        out.push(MessageRecord {
                            payload: p.clone(),
                            round: t,
                            src: rec.agent,
                            dst: *dst,
                        });
                    }
                }
            }
        }
        out
    }
}

/// `R(i)`: the projection of a run on one agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct AgentRun {
    pub agent: AgentId,
    pub rounds: Vec<RoundRecord>,
}

impl AgentRun {
    /// `R(i)^{0..t}`; `t = -1` yields the empty prefix.
    pub fn prefix(&self, t: i64) -> AgentRun {
        let len = if t < 0 {
            0
        } else {
            (t as usize + 1).min(self.rounds.len())
        };
        AgentRun {
            agent: self.agent,
            rounds: self.rounds[..len].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReason {
    Agreement,
    Validity,
    Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Legal,
    Erroneous(ErrorReason),
}

impl Outcome {
    pub fn is_legal(self) -> bool {
        matches!(self, Outcome::Legal)
    }
}
