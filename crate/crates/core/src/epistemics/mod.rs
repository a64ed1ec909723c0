//! What agents learn from a run: message effects, posteriors over inputs,
//! and the checks built on them.

mod runs;
mod silence;
mod transform;
mod verify;

pub use runs::{knowers, posterior, InfoSharing, KnowledgeState, RunSet};
pub use silence::{detect_informative_silences, rewrite_with_empty, SilenceFlag, WithEmpty};
pub use transform::{decode_inputs, final_buffer, ris_transform, strip_trace, Piggybacked};
pub use verify::{
    verify_input_encoding, verify_ris_resilience, EncodingReport, EncodingWitness,
    ResilienceReport, ResilienceViolation, RunRef,
};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::engine::{EngineError, Link, MessageRecord, Trace};
use crate::net::AgentId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EpistemicsError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("message is not part of the trace")]
    MessageNotInTrace,
    #[error("round {round} precedes the message's round {sent}")]
    RoundBeforeMessage { round: usize, sent: usize },
    #[error("protocol does not decide the XOR of all inputs")]
    NotAXorProtocol,
    #[error("the transform needs a deterministic protocol")]
    NondeterministicProtocol,
    #[error("{0} input vectors are consistent with the buffer")]
    AmbiguousDecoding(usize),
    #[error("no input vector is consistent with the buffer")]
    NoConsistentCandidate,
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("the run is not among the enumerated executions")]
    RunNotEnumerated,
}

/// Agents that got at least one non-EMPTY message from `c` in round `t`.
pub fn recv_set(tr: &Trace, c: &BTreeSet<AgentId>, t: usize) -> BTreeSet<AgentId> {
    let mut out = BTreeSet::new();
    let Some(per_agent) = tr.rounds.get(t) else {
        return out;
    };
    for src in c {
        if let Some(rec) = per_agent.get(src.index()) {
            for (dst, link) in &rec.outgoing {
                if matches!(link, Link::Msg(p) if !p.is_empty()) {
                    out.insert(*dst);
                }
            }
        }
    }
    out
}

/// `Aff(m, R, t)`: the destination, then everyone it (transitively) talked to.
pub fn affected_set(
    tr: &Trace,
    m: &MessageRecord,
    t: usize,
) -> Result<BTreeSet<AgentId>, EpistemicsError> {
    let present = tr
        .rounds
        .get(m.round)
        .and_then(|r| r.get(m.src.index()))
        .is_some_and(|rec| {
            rec.outgoing
                .iter()
                .any(|(d, l)| *d == m.dst && l.payload() == Some(&m.payload))
        });
    if !present {
        return Err(EpistemicsError::MessageNotInTrace);
    }
    if t < m.round {
        return Err(EpistemicsError::RoundBeforeMessage {
            round: t,
            sent: m.round,
        });
    }
    Ok(aff_closure(tr, m, t))
}

fn aff_closure(tr: &Trace, m: &MessageRecord, t: usize) -> BTreeSet<AgentId> {
    let mut aff = BTreeSet::from([m.dst]);
    for round in m.round + 1..=t {
        let more = recv_set(tr, &aff, round);
        aff.extend(more);
    }
    aff
}

/// Every message (EMPTY included) whose effect reached `i` by the end.
pub fn aff_of(tr: &Trace, i: AgentId) -> BTreeSet<MessageRecord> {
    let end = tr.rounds.len().saturating_sub(1);
    tr.messages()
        .into_iter()
        .filter(|m| aff_closure(tr, m, end).contains(&i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{execute, RandomnessChoice};
    use crate::net::{build_custom, build_topology, TopologyKind};
    use crate::protocols::{make_ris_two_path, make_xor_consensus_deterministic};

    fn draws(n: usize, v: &[u32]) -> RandomnessChoice {
        let mut rc = RandomnessChoice::trivial();
        for (a, &x) in v.iter().enumerate().take(n) {
            rc.draws.insert((AgentId(a as u32), 0), x);
        }
        rc
    }

    #[test]
    fn recv_examples() {
        let p = make_ris_two_path(&build_topology(TopologyKind::Ring, 3).unwrap()).unwrap();
        let tr = execute(&p, &[1, 0, 1], &draws(3, &[0, 1, 1])).unwrap();
        assert_eq!(
            recv_set(&tr, &BTreeSet::from([AgentId(0)]), 0),
            BTreeSet::from([AgentId(1), AgentId(2)])
        );
        assert!(recv_set(&tr, &BTreeSet::new(), 0).is_empty());
        assert!(recv_set(&tr, &BTreeSet::from([AgentId(0)]), 9).is_empty());
    }

    #[test]
    fn diamond_affects_far_corner() {
        let d = build_custom(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let p = make_ris_two_path(&d).unwrap();
        let tr = execute(&p, &[1, 0, 1, 1], &draws(4, &[1, 0, 1, 0])).unwrap();
        let m = tr
            .messages()
            .into_iter()
            .find(|m| m.round == 0 && m.src == AgentId(0) && m.dst == AgentId(1))
            .unwrap();
        assert_eq!(affected_set(&tr, &m, 0).unwrap(), BTreeSet::from([AgentId(1)]));
        assert!(affected_set(&tr, &m, 1).unwrap().contains(&AgentId(3)));
        let mut fake = m.clone();
        fake.round = 2;
        assert_eq!(affected_set(&tr, &fake, 2), Err(EpistemicsError::MessageNotInTrace));
    }

    #[test]
    fn single_round_aff_is_own_inbox() {
        let t = build_topology(TopologyKind::Complete, 4).unwrap();
        let p = make_xor_consensus_deterministic(&t).unwrap();
        let tr = execute(&p, &[0, 1, 1, 0], &RandomnessChoice::trivial()).unwrap();
        let a = aff_of(&tr, AgentId(2));
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|m| m.dst == AgentId(2)));
    }

    #[test]
    fn ring5_aff_reaches_two_hops() {
        let p = make_ris_two_path(&build_topology(TopologyKind::Ring, 5).unwrap()).unwrap();
        let tr = execute(&p, &[1, 0, 1, 1, 0], &draws(5, &[0, 1, 1, 0, 1])).unwrap();
        let a = aff_of(&tr, AgentId(0));
        assert!(a.iter().any(|m| m.round == 0 && m.src == AgentId(2) && m.dst == AgentId(1)));
        assert!(a.iter().any(|m| m.round == 0 && m.src == AgentId(3) && m.dst == AgentId(4)));
    }
}
