use std::collections::BTreeMap;

use proptest::prelude::*;
use ratcons::engine::*;
use ratcons::net::{build_topology, AgentId, Topology, TopologyKind};
use ratcons::protocols::*;
use ratcons::ratio::{self, ratio};

fn ring(n: usize) -> Topology {
    build_topology(TopologyKind::Ring, n).unwrap()
}

fn complete(n: usize) -> Topology {
    build_topology(TopologyKind::Complete, n).unwrap()
}

fn every_run(p: &dyn Protocol, r: u32) -> Vec<Weighted> {
    enumerate_executions(p, &InputDistribution::uniform(r), EnumOptions::default()).unwrap()
}

#[test]
fn xor_examples() {
    let p = make_xor_consensus_deterministic(&ring(3)).unwrap();
    let rc = RandomnessChoice::trivial();
    let tr = execute(&p, &[0, 0, 0], &rc).unwrap();
    assert!(tr.decisions.iter().all(|d| *d == Decision::Value(0)));
    let tr = execute(&p, &[1, 0, 1], &rc).unwrap();
    assert!(tr.decisions.iter().all(|d| *d == Decision::Value(0)));
}

#[test]
fn enumeration_sizes() {
    let p = make_xor_consensus_deterministic(&ring(3)).unwrap();
    let runs = every_run(&p, 2);
    assert_eq!(runs.len(), 8);
    assert!(runs.iter().all(|w| w.probability == ratio(1, 8)));

    let p = make_algorithm1(&complete(4)).unwrap();
    let runs = every_run(&p, 2);
    assert_eq!(runs.len(), 16 * 256);
    let total: ratio::Prob = runs.iter().map(|w| w.probability.clone()).sum();
    assert_eq!(total, ratio::one());
}

#[test]
fn cap_is_enforced() {
    let p = make_algorithm1(&complete(4)).unwrap();
    let opts = EnumOptions {
        cap: 100,
        ..EnumOptions::default()
    };
    let err = enumerate_executions(&p, &InputDistribution::uniform(2), opts).unwrap_err();
    assert_eq!(err, EngineError::EnumerationCapExceeded { count: 4096, cap: 100 });
}

#[test]
fn projection_and_prefixes() {
    let p = make_xor_consensus(&ring(5)).unwrap();
    for w in every_run(&p, 2).iter().step_by(97) {
        let tr = &w.trace;
        let parts: Vec<AgentRun> = tr
            .topology
            .agents()
            .iter()
            .map(|&a| project(tr, a).unwrap())
            .collect();
        for (t, per_agent) in tr.rounds.iter().enumerate() {
            for (a, rec) in per_agent.iter().enumerate() {
                assert_eq!(parts[a].rounds[t], *rec);
            }
        }
        let r0 = &parts[0];
        assert_eq!(r0.prefix(tr.terminated_at as i64), *r0);
        assert!(r0.prefix(-1).rounds.is_empty());
    }
    assert!(project(&every_run(&p, 2)[0].trace, AgentId(9)).is_err());
}

#[test]
fn classify_examples() {
    let v = |x: &[i64]| x.iter().map(|&d| Decision::Value(d)).collect::<Vec<_>>();
    assert_eq!(
        classify(&[1, 1, 1, 1], &v(&[0, 0, 0, 0])),
        Outcome::Erroneous(ErrorReason::Validity)
    );
    assert_eq!(
        classify(&[0, 1, 1], &v(&[1, 1, 0])),
        Outcome::Erroneous(ErrorReason::Agreement)
    );
    assert_eq!(classify(&[0, 1, 1], &v(&[0, 0, 0])), Outcome::Legal);
}

fn shipped_consensus() -> Vec<(Box<dyn Protocol>, u32)> {
    let mut out: Vec<(Box<dyn Protocol>, u32)> = Vec::new();
    for t in [ring(3), ring(5), complete(3), complete(5)] {
        out.push((Box::new(make_xor_consensus(&t).unwrap()), 2));
        out.push((Box::new(make_xor_consensus_deterministic(&t).unwrap()), 2));
    }
    // the leader's input is dropped, so only even n leaves an odd count
    out.push((Box::new(make_algorithm1(&complete(4)).unwrap()), 2));
    for rule in [MultiRule::MinInput, MultiRule::LeaderInput] {
        out.push((Box::new(make_candidate_multivalued(&ring(3), 3, rule).unwrap()), 3));
        out.push((Box::new(make_candidate_multivalued(&complete(3), 3, rule).unwrap()), 3));
    }
    out
}

fn message_multiset(tr: &Trace, t: usize, incoming: bool) -> BTreeMap<(AgentId, AgentId, Link), usize> {
    let mut out = BTreeMap::new();
    for rec in &tr.rounds[t] {
        let links = if incoming { &rec.incoming } else { &rec.outgoing };
        for (peer, l) in links {
            if l.is_silence() {
                continue;
            }
            let key = if incoming {
                (*peer, rec.agent, l.clone())
            } else {
                (rec.agent, *peer, l.clone())
            };
            *out.entry(key).or_insert(0) += 1;
        }
    }
    out
}

#[test]
fn honest_runs_are_legal_and_well_formed() {
    for (p, r) in shipped_consensus() {
        let runs = every_run(p.as_ref(), r);
        let total: ratio::Prob = runs.iter().map(|w| w.probability.clone()).sum();
        assert_eq!(total, ratio::one(), "{}", p.name());
        for w in &runs {
            let tr = &w.trace;
            assert_eq!(classify_outcome(tr), Outcome::Legal, "{} {:?}", p.name(), w.inputs);
            assert!(tr.rounds.len() <= p.rounds_bound());
            for t in 0..tr.rounds.len() {
                assert_eq!(message_multiset(tr, t, true), message_multiset(tr, t, false));
            }
            for &a in tr.topology.agents() {
                let run = project(tr, a).unwrap();
                let mut changes = 0;
                let mut last = Decision::Undecided;
                for rec in &run.rounds {
                    let keys: Vec<AgentId> = rec.incoming.iter().map(|(j, _)| *j).collect();
                    assert_eq!(keys, tr.topology.neighbors(a));
                    if rec.decision != last {
                        assert_eq!(last, Decision::Undecided);
                        changes += 1;
                        last = rec.decision;
                    }
                }
                assert!(changes <= 1);
            }
        }
    }
}

#[test]
fn xor_even_n_breaks_validity_on_all_ones() {
    let p = make_xor_consensus_deterministic(&ring(4)).unwrap();
    let tr = execute(&p, &[1, 1, 1, 1], &RandomnessChoice::trivial()).unwrap();
    assert_eq!(classify_outcome(&tr), Outcome::Erroneous(ErrorReason::Validity));
}

#[test]
fn sequential_and_parallel_enumerations_agree() {
    let p = make_xor_consensus(&ring(5)).unwrap();
    let dist = InputDistribution::binary(ratio(1, 3));
    let mk = |mode| EnumOptions {
        mode,
        ..EnumOptions::default()
    };
    let a = enumerate_executions(&p, &dist, mk(ratcons::parallel::Execution::Sequential)).unwrap();
    let b = enumerate_executions(&p, &dist, mk(ratcons::parallel::Execution::Parallel)).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.trace, y.trace);
        assert_eq!(x.probability, y.probability);
    }
}

#[test]
fn sampling_is_reproducible() {
    let p = make_xor_consensus(&ring(5)).unwrap();
    let dist = InputDistribution::uniform(2);
    let a = sample_executions(&p, &dist, 20, 7).unwrap();
    let b = sample_executions(&p, &dist, 20, 7).unwrap();
    assert_eq!(a.len(), 20);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.trace, y.trace);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_is_deterministic(inputs in prop::collection::vec(0i64..2, 5), draws in prop::collection::vec(0u32..2, 5)) {
        let p = make_xor_consensus(&ring(5)).unwrap();
        let mut rc = RandomnessChoice::trivial();
        for (a, d) in draws.iter().enumerate() {
            rc.draws.insert((AgentId(a as u32), 0), *d);
        }
        let x = execute(&p, &inputs, &rc).unwrap();
        let y = execute(&p, &inputs, &rc).unwrap();
        prop_assert_eq!(serde_json::to_string(&x).unwrap(), serde_json::to_string(&y).unwrap());
        let xor = inputs.iter().fold(0, |a, b| a ^ b);
        prop_assert!(x.decisions.iter().all(|d| *d == Decision::Value(xor)));
    }

    #[test]
    fn distributions_are_normalized(weights in prop::collection::vec(1i64..20, 3)) {
        let total: i64 = weights.iter().sum();
        let probs = weights.iter().map(|&w| ratio(w, total)).collect();
        let dist = InputDistribution::new(probs).unwrap();
        let p = make_candidate_multivalued(&complete(3), 3, MultiRule::MinInput).unwrap();
        let runs = enumerate_executions(&p, &dist, EnumOptions::default()).unwrap();
        let sum: ratio::Prob = runs.iter().map(|w| w.probability.clone()).sum();
        prop_assert_eq!(sum, ratio::one());
    }
}
