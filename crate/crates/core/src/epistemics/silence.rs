//! Silent rounds that carry information, and the EMPTY rewrite that removes
//! silence altogether.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::runs::RunSet;
use super::verify::RunRef;
use super::EpistemicsError;
use crate::engine::{
    Decision, EnumOptions, InputDistribution, Link, Links, Machine, Payload, Persona, Protocol,
    RandomDomain, RoundRecord, Value,
};
use crate::net::{AgentId, Topology};
use crate::ratio::{self, Prob};

/// `agent` heard nothing from `from` in `round`, and that told it something.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SilenceFlag {
    pub agent: AgentId,
    pub from: AgentId,
    pub round: usize,
    /// A run with the silence and one that differs only on that link.
    pub witnesses: (RunRef, RunRef),
}

type Suffix<'a> = Vec<&'a RoundRecord>;

/// Normalized distribution of `i`'s records after round `t` over `runs`.
fn suffix_distribution<'a>(
    set: &'a RunSet,
    runs: &[usize],
    i: AgentId,
    t: usize,
) -> HashMap<Suffix<'a>, Prob> {
    let mut out: HashMap<Suffix<'a>, Prob> = HashMap::new();
    let mut total = ratio::zero();
    for &k in runs {
        let w = &set.runs()[k];
        let suffix: Suffix<'a> = w
            .trace
            .rounds
            .iter()
            .skip(t + 1)
            .map(|r| &r[i.index()])
            .collect();
        total += &w.probability;
        *out.entry(suffix).or_insert_with(ratio::zero) += &w.probability;
    }
    if total != ratio::zero() {
        for v in out.values_mut() {
            *v = &*v / &total;
        }
    }
    out
}

/// Flags every silent incoming link whose silence changes what the receiver
/// goes on to experience, compared with some other experience on that link
/// in an otherwise indistinguishable situation.
pub fn detect_informative_silences(
    p: &dyn Protocol,
    dist: &InputDistribution,
    opts: EnumOptions,
) -> Result<Vec<SilenceFlag>, EpistemicsError> {
    let set = RunSet::enumerate(p, dist, opts)?;
    let runs = set.runs();
    let topo = p.topology();
    let horizon = runs.iter().map(|w| w.trace.rounds.len()).max().unwrap_or(0);
    let mut flags = Vec::new();

    for &i in topo.agents() {
        for t in 0..horizon {
            for &j in topo.neighbors(i) {
                // situation -> experience on (j -> i) -> runs
                let mut situations: BTreeMap<_, BTreeMap<&Link, Vec<usize>>> = BTreeMap::new();
                for (k, w) in runs.iter().enumerate() {
                    let Some(rec) = w.trace.rounds.get(t).map(|r| &r[i.index()]) else {
                        continue;
                    };
                    let others: Vec<&(AgentId, Link)> =
                        rec.incoming.iter().filter(|(a, _)| *a != j).collect();
                    let ile = &rec
                        .incoming
                        .iter()
                        .find(|(a, _)| *a == j)
                        .expect("neighbor link")
                        .1;
                    let key = (
                        set.prefix_id(k, i, t),
                        rec.input,
                        rec.outgoing.clone(),
                        others,
                        rec.decision,
                    );
                    situations
                        .entry(key)
                        .or_default()
                        .entry(ile)
                        .or_default()
                        .push(k);
                }
                let mut found = None;
                for by_link in situations.values() {
                    let Some(silent) = by_link.get(&Link::Silence) else {
                        continue;
                    };
                    let base = suffix_distribution(&set, silent, i, t);
                    for (link, alt) in by_link {
                        if link.is_silence() {
                            continue;
                        }
                        if suffix_distribution(&set, alt, i, t) != base {
                            found = Some((silent[0], alt[0]));
                            break;
                        }
                    }
                    if found.is_some() {
                        break;
                    }
                }
                if let Some((a, b)) = found {
                    flags.push(SilenceFlag {
                        agent: i,
                        from: j,
                        round: t,
                        witnesses: (RunRef::of(&runs[a]), RunRef::of(&runs[b])),
                    });
                }
            }
        }
    }
    Ok(flags)
}

const SUFFIX: &str = "+empty";

/// `p` with EMPTY sent on every link it would leave silent.
pub struct WithEmpty<P> {
    inner: P,
}

/// Protocols that never send EMPTY themselves get it translated back into
/// silence on receipt, so their behavior is unchanged. Protocols that
/// already use EMPTY see it as they would anyway.
pub fn rewrite_with_empty<P: Protocol>(p: P) -> WithEmpty<P> {
    WithEmpty { inner: p }
}

impl<P: Protocol> Protocol for WithEmpty<P> {
    fn name(&self) -> String {
        let name = self.inner.name();
        if name.ends_with(SUFFIX) {
            name
        } else {
            name + SUFFIX
        }
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

    fn alphabet(&self) -> Vec<Payload> {
        let mut out = self.inner.alphabet();
        if !out.contains(&Payload::Empty) {
            out.insert(0, Payload::Empty);
        }
        out
    }

    fn spawn(&self, persona: Persona) -> Box<dyn Machine> {
        Box::new(EmptyMachine {
            neighbors: self.inner.topology().neighbors(persona.agent).to_vec(),
            translate: !self.inner.alphabet().contains(&Payload::Empty),
            inner: self.inner.spawn(persona),
        })
    }
}

struct EmptyMachine {
    neighbors: Vec<AgentId>,
    translate: bool,
    inner: Box<dyn Machine>,
}

impl Machine for EmptyMachine {
    fn send(&mut self, round: usize, draw: Option<u32>) -> Vec<(AgentId, Payload)> {
        let mut out = self.inner.send(round, draw);
        for &j in &self.neighbors {
            if !out.iter().any(|(d, _)| *d == j) {
                out.push((j, Payload::Empty));
            }
        }
        out
    }

    fn receive(&mut self, round: usize, incoming: &Links) -> Decision {
        if !self.translate {
            return self.inner.receive(round, incoming);
        }
        let seen: Links = incoming
            .iter()
            .map(|(j, l)| match l {
                Link::Msg(Payload::Empty) => (*j, Link::Silence),
                other => (*j, other.clone()),
            })
            .collect();
        self.inner.receive(round, &seen)
    }

    fn learned(&self) -> Option<Vec<Value>> {
        self.inner.learned()
    }
}
