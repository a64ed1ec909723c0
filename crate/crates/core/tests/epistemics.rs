use std::collections::BTreeSet;
use std::sync::Arc;

use ratcons::engine::{
    enumerate_executions, execute, project, EnumOptions, InputDistribution, Protocol,
    RandomnessChoice,
};
use ratcons::epistemics::*;
use ratcons::net::{build_custom, build_topology, AgentId, TopologyKind};
use ratcons::protocols::*;
use ratcons::ratio;

fn ring(n: usize) -> ratcons::net::Topology {
    build_topology(TopologyKind::Ring, n).unwrap()
}

fn complete(n: usize) -> ratcons::net::Topology {
    build_topology(TopologyKind::Complete, n).unwrap()
}

fn diamond() -> ratcons::net::Topology {
    build_custom(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap()
}

fn ids(v: &[u32]) -> BTreeSet<AgentId> {
    v.iter().map(|&a| AgentId(a)).collect()
}

fn opts() -> EnumOptions {
    EnumOptions::default()
}

#[test]
fn ris_resilience_passes_on_shipped_networks() {
    let uni = InputDistribution::uniform(2);
    for t in [ring(3), ring(5), complete(4), diamond()] {
        let p = make_ris_two_path(&t).unwrap();
        let rep = verify_ris_resilience(&p, &uni, opts()).unwrap();
        assert!(rep.terminated && rep.initial_knowledge_empty && rep.terminal_point_mass);
        assert!(rep.violations.is_empty(), "{:?}", rep.violations.first());
        assert!(rep.pass);
    }
}

#[test]
fn echoing_knower_is_caught() {
    let p = make_toy(ToyKind::Echo, &ring(3)).unwrap();
    let rep = verify_ris_resilience(&p, &InputDistribution::uniform(2), opts()).unwrap();
    assert!(!rep.pass);
    let v = &rep.violations[0];
    assert_eq!(v.round, 1);
    assert_ne!(v.run, v.alternative);
}

#[test]
fn diamond_knower_timeline() {
    let p = make_ris_two_path(&diamond()).unwrap();
    let set = RunSet::enumerate(&p, &InputDistribution::uniform(2), opts()).unwrap();
    let a = AgentId(0);
    for (t, want) in [(0, ids(&[])), (2, ids(&[3])), (3, ids(&[1, 2, 3]))] {
        let table = set.knower_table(a, t, InfoSharing::Coalition);
        assert!(table.iter().all(|k| *k == want), "round {t}");
    }
    // the table agrees with the one-run query
    let tr = &set.runs()[5].trace;
    let k = knowers(&p, set.distribution(), tr, a, 2, InfoSharing::Coalition, opts()).unwrap();
    assert_eq!(k, ids(&[3]));
}

#[test]
fn complete_graph_everyone_knows_after_one_round() {
    let p = make_ris_two_path(&complete(4)).unwrap();
    let set = RunSet::enumerate(&p, &InputDistribution::uniform(2), opts()).unwrap();
    for i in 0..4 {
        let table = set.knower_table(AgentId(i), 1, InfoSharing::Private);
        let others: BTreeSet<AgentId> = (0..4).filter(|&j| j != i).map(AgentId).collect();
        assert!(table.iter().all(|k| *k == others));
    }
}

#[test]
fn posterior_examples() {
    let p = make_ris_two_path(&ring(3)).unwrap();
    let uni = InputDistribution::uniform(2);
    let mut rc = RandomnessChoice::trivial();
    for (a, d) in [(0, 1), (1, 0), (2, 1)] {
        rc.draws.insert((AgentId(a), 0), d);
    }
    let tr = execute(&p, &[1, 0, 1], &rc).unwrap();
    let r1 = project(&tr, AgentId(1)).unwrap();

    let prior = posterior(&p, &uni, &r1.prefix(-1), AgentId(0), &[], opts()).unwrap();
    assert_eq!(prior.posterior[&0], ratio::ratio(1, 2));
    assert_eq!(prior.posterior[&1], ratio::ratio(1, 2));

    let done = posterior(&p, &uni, &r1, AgentId(0), &[], opts()).unwrap();
    assert_eq!(done.posterior[&1], ratio::one());
    assert!(done.basis > 0);

    // agent 1 holds only agent 0's clockwise share after round 0
    let early = posterior(&p, &uni, &r1.prefix(0), AgentId(0), &[], opts()).unwrap();
    assert_eq!(early.posterior[&1], ratio::ratio(1, 2));
    // pooling with agent 2's round-0 view gives both shares
    let r2 = project(&tr, AgentId(2)).unwrap();
    let pooled = posterior(&p, &uni, &r1.prefix(0), AgentId(0), &[r2.prefix(0)], opts()).unwrap();
    assert_eq!(pooled.posterior[&1], ratio::one());
}

#[test]
fn knower_sets_only_grow() {
    let p = make_ris_two_path(&ring(5)).unwrap();
    let set = RunSet::enumerate(&p, &InputDistribution::uniform(2), opts()).unwrap();
    for i in 0..5 {
        let tables: Vec<_> = (0..=5)
            .map(|t| set.knower_table(AgentId(i), t, InfoSharing::Private))
            .collect();
        for w in tables.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!(a.is_subset(b));
            }
        }
    }
}

#[test]
fn encoding_holds_for_xor_consensus() {
    for t in [ring(3), ring(5), complete(3)] {
        let p = make_xor_consensus(&t).unwrap();
        let rep = verify_input_encoding(&p, opts()).unwrap();
        assert!(rep.pass, "{}", p.name());
        assert!(rep.witness.is_none());
    }
}

#[test]
fn encoding_fails_for_lossy_variant() {
    let p = make_toy(ToyKind::XorLossy, &complete(3)).unwrap();
    let rep = verify_input_encoding(&p, opts()).unwrap();
    assert!(!rep.pass);
    let w = rep.witness.unwrap();
    assert_eq!(w.agent, AgentId(0));
    assert_eq!(w.first.inputs[0], w.second.inputs[0]);
    assert_ne!(w.first.inputs, w.second.inputs);
}

#[test]
fn encoding_rejects_non_xor() {
    let p = make_ris_two_path(&ring(3)).unwrap();
    assert_eq!(
        verify_input_encoding(&p, opts()).unwrap_err(),
        EpistemicsError::NotAXorProtocol
    );
}

#[test]
fn transform_is_conservative_and_decodable() {
    let uni = InputDistribution::uniform(2);
    for t in [ring(3), ring(5)] {
        let a = make_xor_consensus_deterministic(&t).unwrap();
        let at = ris_transform(&a).unwrap();
        let plain = enumerate_executions(&a, &uni, opts()).unwrap();
        let wrapped = enumerate_executions(&at, &uni, opts()).unwrap();
        assert_eq!(plain.len(), wrapped.len());
        for (x, y) in plain.iter().zip(&wrapped) {
            assert_eq!(strip_trace(&y.trace), x.trace);
            for &i in t.agents() {
                let buf = final_buffer(&y.trace, i);
                let aff: BTreeSet<_> = ratcons::epistemics::aff_of(&x.trace, i);
                assert!(aff.is_subset(&buf));
                let got = decode_inputs(
                    x.inputs[i.index()],
                    x.trace.decisions[i.index()],
                    &buf,
                    &a,
                    i,
                )
                .unwrap();
                assert_eq!(got, x.inputs);
            }
        }
    }
}

#[test]
fn decode_examples() {
    let a = make_xor_consensus_deterministic(&ring(3)).unwrap();
    let at = ris_transform(&a).unwrap();
    let rc = RandomnessChoice::trivial();
    let tr = execute(&at, &[1, 0, 1], &rc).unwrap();
    let buf = final_buffer(&tr, AgentId(0));
    assert_eq!(
        decode_inputs(1, tr.decisions[0], &buf, &a, AgentId(0)).unwrap(),
        vec![1, 0, 1]
    );

    let zeros = execute(&at, &[0, 0, 0], &rc).unwrap();
    let zbuf = final_buffer(&zeros, AgentId(0));
    assert_eq!(
        decode_inputs(0, zeros.decisions[0], &zbuf, &a, AgentId(0)).unwrap(),
        vec![0, 0, 0]
    );

    let mut broken = buf.clone();
    let first = broken.iter().next().unwrap().clone();
    broken.remove(&first);
    let err = decode_inputs(1, tr.decisions[0], &broken, &a, AgentId(0)).unwrap_err();
    assert!(matches!(
        err,
        EpistemicsError::NoConsistentCandidate | EpistemicsError::AmbiguousDecoding(_)
    ));
}

#[test]
fn transform_refuses_randomized_protocols() {
    let p = make_xor_consensus(&ring(3)).unwrap();
    assert!(matches!(
        ris_transform(&p),
        Err(EpistemicsError::NondeterministicProtocol)
    ));
}

#[test]
fn silence_detection_examples() {
    let uni = InputDistribution::uniform(2);
    let toy = make_toy(ToyKind::SendIffOne, &ring(3)).unwrap();
    let flags = detect_informative_silences(&toy, &uni, opts()).unwrap();
    assert!(!flags.is_empty());
    assert!(flags.iter().all(|f| f.round == 0));
    assert_eq!(flags.len(), 6);

    let silent = make_toy(ToyKind::Silent, &ring(3)).unwrap();
    assert!(detect_informative_silences(&silent, &uni, opts()).unwrap().is_empty());

    let ris = make_ris_two_path(&ring(3)).unwrap();
    assert!(detect_informative_silences(&ris, &uni, opts()).unwrap().is_empty());
}

#[test]
fn empty_rewrite_removes_flags_and_keeps_decisions() {
    let uni = InputDistribution::uniform(2);
    let toy: Arc<dyn Protocol> = Arc::new(make_toy(ToyKind::SendIffOne, &ring(3)).unwrap());
    let rewritten = rewrite_with_empty(toy.clone());
    assert!(detect_informative_silences(&rewritten, &uni, opts()).unwrap().is_empty());

    let before = enumerate_executions(&toy, &uni, opts()).unwrap();
    let after = enumerate_executions(&rewritten, &uni, opts()).unwrap();
    for (x, y) in before.iter().zip(&after) {
        assert_eq!(x.trace.decisions, y.trace.decisions);
    }
    // input 0 now sends EMPTY in round 0
    let r0 = &after[0].trace.rounds[0][0];
    assert!(r0
        .outgoing
        .iter()
        .all(|(_, l)| *l == ratcons::engine::Link::Msg(ratcons::engine::Payload::Empty)));

    let twice = rewrite_with_empty(rewrite_with_empty(toy.clone()));
    assert_eq!(twice.name(), rewritten.name());
    let again = enumerate_executions(&twice, &uni, opts()).unwrap();
    for (x, y) in after.iter().zip(&again) {
        assert_eq!(x.trace, y.trace);
    }
}
