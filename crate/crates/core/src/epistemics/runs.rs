//! Posteriors over inputs by exact enumeration of consistent runs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::EpistemicsError;
use crate::engine::{
    enumerate_executions, AgentRun, EnumOptions, InputDistribution, Protocol, RoundRecord, Trace,
    Value, Weighted,
};
use crate::net::{AgentId, Topology};
use crate::ratio::{self, Prob};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoSharing {
    /// The observer knows only its own history.
    #[default]
    Private,
    /// Everyone except the target pools histories over links that avoid the
    /// target: the observer sees agent `k` up to round `t - 1 - d(k, j)`.
    Coalition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnowledgeState {
    pub observer: AgentId,
    pub round: usize,
    pub target: AgentId,
    #[serde(serialize_with = "ser_posterior")]
    pub posterior: BTreeMap<Value, Prob>,
    /// Number of enumerated runs consistent with the observer's knowledge.
    pub basis: usize,
}

fn ser_posterior<S: serde::Serializer>(m: &BTreeMap<Value, Prob>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(&k.to_string(), &ratio::format(v))?;
    }
    map.end()
}

/// Every enumerated run, with each agent's prefixes interned so that
/// consistency checks are integer comparisons.
pub struct RunSet {
    topo: Topology,
    dist: InputDistribution,
    runs: Vec<Weighted>,
    /// `prefix[run][agent][len]` identifies `R(agent)^{0..len-1}`.
    prefix: Vec<Vec<Vec<u32>>>,
}

impl RunSet {
    pub fn enumerate(
        p: &dyn Protocol,
        dist: &InputDistribution,
        opts: EnumOptions,
    ) -> Result<Self, EpistemicsError> {
        let runs = enumerate_executions(p, dist, EnumOptions { record: true, ..opts })?;
        Ok(Self::from_runs(p.topology(), dist, runs))
    }

    pub fn from_runs(topo: &Topology, dist: &InputDistribution, runs: Vec<Weighted>) -> Self {
        let n = topo.n();
        let mut table: HashMap<(u32, &RoundRecord), u32> = HashMap::new();
        let mut prefix = Vec::with_capacity(runs.len());
        for w in &runs {
            let mut per_agent = Vec::with_capacity(n);
            for a in 0..n {
                let mut ids = vec![0u32];
                for round in &w.trace.rounds {
                    let parent = *ids.last().unwrap();
                    let next = table.len() as u32 + 1;
                    let id = *table.entry((parent, &round[a])).or_insert(next);
                    ids.push(id);
                }
                per_agent.push(ids);
            }
            prefix.push(per_agent);
        }
        RunSet {
            topo: topo.clone(),
            dist: dist.clone(),
            runs,
            prefix,
        }
    }

    pub fn runs(&self) -> &[Weighted] {
        &self.runs
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn distribution(&self) -> &InputDistribution {
        &self.dist
    }

    /// Identifier of `R(agent)^{0..len-1}`; lengths past the end clamp.
    pub fn prefix_id(&self, run: usize, agent: AgentId, len: usize) -> u32 {
        let ids = &self.prefix[run][agent.index()];
        ids[len.min(ids.len() - 1)]
    }

    pub fn find(&self, tr: &Trace) -> Option<usize> {
        self.runs
            .iter()
            .position(|w| w.inputs == tr.inputs && w.randomness.draws == tr.randomness.draws)
    }

    /// Key describing what `observer` knows at the start of round `t`.
    fn knowledge_key(
        &self,
        run: usize,
        observer: AgentId,
        t: usize,
        target: AgentId,
        sharing: InfoSharing,
        dist_cache: &[Option<usize>],
    ) -> Vec<u32> {
        match sharing {
            InfoSharing::Private => vec![self.prefix_id(run, observer, t)],
            InfoSharing::Coalition => self
                .topo
                .agents()
                .iter()
                .filter(|&&k| k != target)
                .map(|&k| {
                    let len = dist_cache[k.index()].map_or(0, |d| t.saturating_sub(d));
                    self.prefix_id(run, k, len)
                })
                .collect(),
        }
    }

    fn distances(&self, observer: AgentId, target: AgentId) -> Vec<Option<usize>> {
        self.topo.distances_avoiding(observer, &[target])
    }

    pub fn posterior(
        &self,
        run: usize,
        observer: AgentId,
        t: usize,
        target: AgentId,
        sharing: InfoSharing,
    ) -> KnowledgeState {
        let d = self.distances(observer, target);
        let key = self.knowledge_key(run, observer, t, target, sharing, &d);
        let mut mass: BTreeMap<Value, Prob> = (0..self.dist.r() as Value)
            .map(|v| (v, ratio::zero()))
            .collect();
        let mut total = ratio::zero();
        let mut basis = 0;
        for (k, w) in self.runs.iter().enumerate() {
            if self.knowledge_key(k, observer, t, target, sharing, &d) != key {
                continue;
            }
            basis += 1;
            total += &w.probability;
            *mass.entry(w.inputs[target.index()]).or_insert_with(ratio::zero) += &w.probability;
        }
        for v in mass.values_mut() {
            *v = &*v / &total;
        }
        KnowledgeState {
            observer,
            round: t,
            target,
            posterior: mass,
            basis,
        }
    }

    /// `Know(i, t)` for every run at once.
    pub fn knower_table(&self, i: AgentId, t: usize, sharing: InfoSharing) -> Vec<BTreeSet<AgentId>> {
        let r = self.dist.r() as usize;
        let mut out = vec![BTreeSet::new(); self.runs.len()];
        for &j in self.topo.agents() {
            if j == i {
                continue;
            }
            let d = self.distances(j, i);
            let keys: Vec<Vec<u32>> = (0..self.runs.len())
                .map(|k| self.knowledge_key(k, j, t, i, sharing, &d))
                .collect();
            let mut groups: HashMap<&[u32], Vec<Prob>> = HashMap::new();
            for (k, w) in self.runs.iter().enumerate() {
                let g = groups
                    .entry(&keys[k])
                    .or_insert_with(|| vec![ratio::zero(); r]);
                g[w.inputs[i.index()] as usize] += &w.probability;
            }
            let verdicts: HashMap<&[u32], bool> = groups
                .iter()
                .map(|(key, mass)| {
                    let total: Prob = mass.iter().cloned().sum();
                    let knows = total != ratio::zero()
                        && mass
                            .iter()
                            .enumerate()
                            .any(|(b, m)| m / &total > self.dist.prob(b as Value));
                    (*key, knows)
                })
                .collect();
            for k in 0..self.runs.len() {
                if verdicts[keys[k].as_slice()] {
                    out[k].insert(j);
                }
            }
        }
        out
    }

    pub fn knowers(
        &self,
        run: usize,
        i: AgentId,
        t: usize,
        sharing: InfoSharing,
    ) -> BTreeSet<AgentId> {
        self.topo
            .agents()
            .iter()
            .copied()
            .filter(|&j| j != i)
            .filter(|&j| {
                let st = self.posterior(run, j, t, i, sharing);
                st.posterior
                    .iter()
                    .any(|(b, p)| *p > self.dist.prob(*b))
            })
            .collect()
    }
}

/// Posterior over `I_target` for an observer holding `prefix`, optionally
/// also holding other agents' prefixes.
pub fn posterior(
    p: &dyn Protocol,
    dist: &InputDistribution,
    prefix: &AgentRun,
    target: AgentId,
    shared: &[AgentRun],
    opts: EnumOptions,
) -> Result<KnowledgeState, EpistemicsError> {
    let topo = p.topology();
    for a in std::iter::once(prefix).chain(shared) {
        if !topo.contains(a.agent) {
            return Err(EpistemicsError::UnknownAgent(a.agent));
        }
    }
    if !topo.contains(target) {
        return Err(EpistemicsError::UnknownAgent(target));
    }
    let runs = enumerate_executions(p, dist, EnumOptions { record: true, ..opts })?;
    let consistent = |w: &Weighted, a: &AgentRun| {
        a.rounds.len() <= w.trace.rounds.len()
            && a
                .rounds
                .iter()
                .enumerate()
                .all(|(t, rec)| w.trace.rounds[t][a.agent.index()] == *rec)
    };
    let mut mass: BTreeMap<Value, Prob> =
        (0..dist.r() as Value).map(|v| (v, ratio::zero())).collect();
    let mut total = ratio::zero();
    let mut basis = 0;
    for w in &runs {
        if consistent(w, prefix) && shared.iter().all(|s| consistent(w, s)) {
            basis += 1;
            total += &w.probability;
            *mass.entry(w.inputs[target.index()]).or_insert_with(ratio::zero) += &w.probability;
        }
    }
    if basis > 0 {
        for v in mass.values_mut() {
            *v = &*v / &total;
        }
    }
    Ok(KnowledgeState {
        observer: prefix.agent,
        round: prefix.rounds.len(),
        target,
        posterior: mass,
        basis,
    })
}

/// `Know(i, t)` in the run `tr`.
pub fn knowers(
    p: &dyn Protocol,
    dist: &InputDistribution,
    tr: &Trace,
    i: AgentId,
    t: usize,
    sharing: InfoSharing,
    opts: EnumOptions,
) -> Result<BTreeSet<AgentId>, EpistemicsError> {
    if !p.topology().contains(i) {
        return Err(EpistemicsError::UnknownAgent(i));
    }
    let set = RunSet::enumerate(p, dist, opts)?;
    let run = set.find(tr).ok_or(EpistemicsError::RunNotEnumerated)?;
    Ok(set.knowers(run, i, t, sharing))
}
