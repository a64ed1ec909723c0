//! Exact expected utilities and exhaustive deviation search.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::strategy::{
    Claim, CoalitionPopulation, CoalitionStrategy, Communication, ContingentEntry, Mode,
    ScriptEntry, View,
};
use super::{GameError, UtilityFunction};
use crate::engine::{
    input_vectors, randomness_choices, run_population, space_size, Decision, EnumOptions,
    InputDistribution, Link, Population, Protocol, Value,
};
use crate::net::AgentId;
use crate::parallel;
use crate::ratio::{self, Prob};

/// Which strategy families to search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategySpace {
    pub misreports: bool,
    pub split_views: bool,
    pub withholds: bool,
    /// Open-loop scripts over the protocol alphabet for this many rounds.
    pub bounded_exhaustive: Option<usize>,
    /// Also combine the above per coalition input vector.
    pub contingent: bool,
    pub communication: Communication,
}

impl Default for StrategySpace {
    fn default() -> Self {
        StrategySpace {
            misreports: true,
            split_views: false,
            withholds: false,
            bounded_exhaustive: None,
            contingent: false,
            communication: Communication::LinkLimited,
        }
    }
}

impl StrategySpace {
    pub fn misreports_only() -> Self {
        Self::default()
    }

    /// Misreports, split views and withholds.
    pub fn catalog() -> Self {
        StrategySpace {
            split_views: true,
            withholds: true,
            ..Self::default()
        }
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if self.misreports {
            parts.push("misreports".to_string());
        }
        if self.split_views {
            parts.push("split-views".to_string());
        }
        if self.withholds {
            parts.push("withholds".to_string());
        }
        if let Some(b) = self.bounded_exhaustive {
            parts.push(format!("scripts({b} rounds)"));
        }
        if self.contingent {
            parts.push("contingent".to_string());
        }
        let comm = match self.communication {
            Communication::LinkLimited => "link-limited",
            Communication::Telepathic => "telepathic",
        };
        format!("{} [{comm}]", parts.join(" + "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NoProfitableDeviationFound,
    DeviationFound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deviation {
    pub strategy: CoalitionStrategy,
    #[serde(with = "crate::ratio::serde_prob")]
    pub eu: Prob,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub protocol: String,
    pub utility: String,
    pub coalition: Vec<AgentId>,
    pub space: String,
    pub strategies_evaluated: usize,
    #[serde(with = "crate::ratio::serde_prob")]
    pub honest_eu: Prob,
    pub best_deviation: Option<Deviation>,
    pub verdict: Verdict,
}

fn check_coalition(p: &dyn Protocol, coalition: &[AgentId]) -> Result<(), GameError> {
    let n = p.topology().n();
    let mut sorted = coalition.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != coalition.len() || coalition.iter().any(|a| a.index() >= n) {
        return Err(GameError::InvalidCoalition(format!("{coalition:?}")));
    }
    if coalition.is_empty() || coalition.len() >= n {
        return Err(GameError::InvalidCoalition(
            "a coalition needs at least one member and one honest agent".into(),
        ));
    }
    Ok(())
}

fn check_distribution(p: &dyn Protocol, dist: &InputDistribution) -> Result<(), GameError> {
    if dist.r() != p.values() {
        return Err(GameError::DistributionMismatch {
            expected: p.values(),
            got: dist.r(),
        });
    }
    Ok(())
}

fn smallest_honest(p: &dyn Protocol, coalition: &[AgentId]) -> AgentId {
    *p.topology()
        .agents()
        .iter()
        .find(|a| !coalition.contains(a))
        .expect("coalition leaves an honest agent")
}

/// Expected payoff split by the coalition's true input vector (coalition
/// order, first member most significant), one bucket list per utility.
/// Deviating members adopt the decision of the smallest honest agent.
fn contributions(
    p: &dyn Protocol,
    coalition: &[AgentId],
    mode: &Mode,
    communication: Communication,
    us: &[UtilityFunction],
    dist: &InputDistribution,
    cap: u128,
) -> Result<Vec<Vec<Prob>>, GameError> {
    let pop = CoalitionPopulation::with_mode(p, coalition, mode, communication);
    let n = p.topology().n();
    let r = dist.r();
    let domains = pop.domains();
    check_count(space_size(n, r, &domains), cap)?;
    let choices = randomness_choices(&domains);
    // Common case: every joint draw is equally likely, so payoffs can be
    // summed first and scaled once.
    let uniform = choices
        .iter()
        .all(|c| c.probability == choices[0].probability);
    let anchor = smallest_honest(p, coalition);
    let width = (r as usize).pow(coalition.len() as u32);
    let mut buckets = vec![vec![ratio::zero(); width]; us.len()];
    for inputs in input_vectors(n, r) {
        let prior = dist.vector_prob(&inputs);
        if prior == ratio::zero() {
            continue;
        }
        let mut acc = vec![ratio::zero(); us.len()];
        for rc in &choices {
            let run = run_population(&pop, &inputs, rc, false)?;
            let mut d = run.decisions;
            if !mode.is_honest() {
                let a = d[anchor.index()];
                for c in coalition {
                    d[c.index()] = a;
                }
            }
            for (k, u) in us.iter().enumerate() {
                let pay = u.payoff(&inputs, &d);
                if !pay.is_zero() {
                    if uniform {
                        acc[k] += pay;
                    } else {
                        acc[k] += pay * &rc.probability;
                    }
                }
            }
        }
        let idx = coalition
            .iter()
            .fold(0usize, |k, c| k * r as usize + inputs[c.index()] as usize);
        for (k, a) in acc.into_iter().enumerate() {
            if a == ratio::zero() {
                continue;
            }
            let w = if uniform {
                a * &choices[0].probability * &prior
            } else {
                a * &prior
            };
            buckets[k][idx] += w;
        }
    }
    Ok(buckets)
}

pub fn expected_utility(
    p: &dyn Protocol,
    strat: &CoalitionStrategy,
    u: &UtilityFunction,
    dist: &InputDistribution,
    opts: EnumOptions,
) -> Result<Prob, GameError> {
    check_distribution(p, dist)?;
    if !strat.mode.is_honest() {
        check_coalition(p, &strat.coalition)?;
    }
    let mut b = contributions(
        p,
        &strat.coalition,
        &strat.mode,
        strat.communication,
        std::slice::from_ref(u),
        dist,
        opts.cap,
    )?;
    Ok(b.remove(0).into_iter().sum())
}

fn digits(mut idx: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = idx % base;
        idx /= base;
    }
    out
}

fn coalition_to_honest_links(p: &dyn Protocol, coalition: &[AgentId]) -> Vec<(AgentId, AgentId)> {
    let t = p.topology();
    let mut out = Vec::new();
    for &c in coalition {
        for &h in t.neighbors(c) {
            if !coalition.contains(&h) {
                out.push((c, h));
            }
        }
    }
    out
}

fn check_count(count: u128, cap: u128) -> Result<(), GameError> {
    if count > cap {
        return Err(crate::engine::EngineError::EnumerationCapExceeded { count, cap }.into());
    }
    Ok(())
}

/// Claims a member can present: every input with every round-0 draw it
/// could have made (or its own draw when it has no randomness).
fn claim_options(p: &dyn Protocol, member: AgentId) -> Vec<Claim> {
    let draws: Vec<Option<u32>> = match p.randomness(member, 0) {
        Some(d) if !d.is_empty() => d.values().map(Some).collect(),
        _ => vec![None],
    };
    let mut out = Vec::new();
    for input in 0..p.values() as Value {
        for &draw in &draws {
            out.push(Claim { input, draw });
        }
    }
    out
}

pub fn split_view_modes(
    p: &dyn Protocol,
    coalition: &[AgentId],
    cap: u128,
) -> Result<Vec<Mode>, GameError> {
    let t = p.topology();
    let targets: Vec<AgentId> = t
        .agents()
        .iter()
        .copied()
        .filter(|h| !coalition.contains(h) && coalition.iter().any(|c| t.is_edge(*c, *h)))
        .collect();
    // Per target: the members adjacent to it vary their claims, the rest are fixed.
    let mut per_target: Vec<Vec<Vec<Claim>>> = Vec::new();
    for &h in &targets {
        let mut combos: Vec<Vec<Claim>> = vec![Vec::new()];
        for &c in coalition {
            let opts = claim_options(p, c);
            let choices = if t.is_edge(c, h) {
                opts
            } else {
                vec![opts[0]]
            };
            combos = combos
                .into_iter()
                .flat_map(|base| {
                    choices.iter().map(move |cl| {
                        let mut v = base.clone();
                        v.push(*cl);
                        v
                    })
                })
                .collect();
        }
        per_target.push(combos);
    }
    let count = per_target
        .iter()
        .fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128));
    check_count(count, cap)?;
    let mut out = Vec::with_capacity(count as usize);
    for idx in 0..count as usize {
        let mut rest = idx;
        let mut views = vec![];
        for (k, combos) in per_target.iter().enumerate().rev() {
            let pick = rest % combos.len();
            rest /= combos.len();
            views.push(View {
                target: targets[k],
                claims: combos[pick].clone(),
            });
        }
        views.reverse();
        out.push(Mode::SplitView { views });
    }
    Ok(out)
}

pub fn candidate_modes(
    p: &dyn Protocol,
    coalition: &[AgentId],
    space: &StrategySpace,
    cap: u128,
) -> Result<Vec<Mode>, GameError> {
    let r = p.values() as usize;
    let k = coalition.len();
    let mut out = Vec::new();
    if space.misreports {
        for claims in input_vectors(k, r as u32) {
            out.push(Mode::Misreport { claims });
        }
    }
    if space.split_views {
        out.extend(split_view_modes(p, coalition, cap)?);
    }
    let links = coalition_to_honest_links(p, coalition);
    if space.withholds {
        check_count(1u128 << links.len().min(127), cap)?;
        for from_round in 0..p.rounds_bound() {
            for mask in 1usize..(1 << links.len()) {
                let chosen = links
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, l)| *l)
                    .collect();
                out.push(Mode::Withhold {
                    from_round,
                    links: chosen,
                });
            }
        }
    }
    if let Some(bound) = space.bounded_exhaustive {
        let horizon = bound.min(p.rounds_bound());
        let mut alphabet: Vec<Link> = p.alphabet().into_iter().map(Link::Msg).collect();
        if !alphabet.contains(&Link::Msg(crate::engine::Payload::Empty)) {
            alphabet.push(Link::Msg(crate::engine::Payload::Empty));
        }
        alphabet.push(Link::Silence);
        let slots: Vec<(usize, AgentId, AgentId)> = (0..horizon)
            .flat_map(|t| links.iter().map(move |&(s, d)| (t, s, d)))
            .collect();
        let count = (alphabet.len() as u128).saturating_pow(slots.len() as u32);
        check_count(count, cap)?;
        for idx in 0..count as usize {
            let script = digits(idx, alphabet.len(), slots.len())
                .into_iter()
                .zip(&slots)
                .map(|(a, &(round, src, dst))| ScriptEntry {
                    round,
                    src,
                    dst,
                    msg: alphabet[a].clone(),
                })
                .collect();
            out.push(Mode::Scripted { script });
        }
    }
    Ok(out)
}

pub fn find_profitable_deviation(
    p: &dyn Protocol,
    coalition: &[AgentId],
    space: &StrategySpace,
    u: &UtilityFunction,
    dist: &InputDistribution,
    opts: EnumOptions,
) -> Result<EquilibriumReport, GameError> {
    let mut reports =
        find_profitable_deviations(p, coalition, space, std::slice::from_ref(u), dist, opts)?;
    Ok(reports.remove(0))
}

/// One search, one report per utility. Every strategy is simulated once.
pub fn find_profitable_deviations(
    p: &dyn Protocol,
    coalition: &[AgentId],
    space: &StrategySpace,
    us: &[UtilityFunction],
    dist: &InputDistribution,
    opts: EnumOptions,
) -> Result<Vec<EquilibriumReport>, GameError> {
    check_distribution(p, dist)?;
    check_coalition(p, coalition)?;
    let comm = space.communication;
    let honest = contributions(p, coalition, &Mode::Honest, comm, us, dist, opts.cap)?;
    let modes = candidate_modes(p, coalition, space, opts.cap)?;
    let results = parallel::map_indexed(opts.mode, modes.len(), |k| {
        contributions(p, coalition, &modes[k], comm, us, dist, opts.cap)
    });
    let results: Vec<Vec<Vec<Prob>>> = results.into_iter().collect::<Result<_, _>>()?;
    let strategy = |mode: Mode| CoalitionStrategy {
        coalition: coalition.to_vec(),
        mode,
        communication: comm,
    };

    let mut reports = Vec::with_capacity(us.len());
    for (ui, u) in us.iter().enumerate() {
        let honest_buckets = &honest[ui];
        let honest_eu: Prob = honest_buckets.iter().cloned().sum();
        let mut best: Option<Deviation> = None;
        for (mode, per_utility) in modes.iter().zip(&results) {
            let eu: Prob = per_utility[ui].iter().cloned().sum();
            if best.as_ref().is_none_or(|b| eu > b.eu) {
                best = Some(Deviation {
                    strategy: strategy(mode.clone()),
                    eu,
                });
            }
        }

        if space.contingent && !modes.is_empty() {
            let keys = input_vectors(coalition.len(), dist.r());
            let mut table = Vec::new();
            let mut eu = ratio::zero();
            for (c, key) in keys.iter().enumerate() {
                let mut pick: (Prob, Option<usize>) = (honest_buckets[c].clone(), None);
                for (k, per_utility) in results.iter().enumerate() {
                    if per_utility[ui][c] > pick.0 {
                        pick = (per_utility[ui][c].clone(), Some(k));
                    }
                }
                eu += &pick.0;
                table.push(ContingentEntry {
                    inputs: key.clone(),
                    mode: pick.1.map_or(Mode::Honest, |k| modes[k].clone()),
                });
            }
            if best.as_ref().is_none_or(|b| eu > b.eu) {
                best = Some(Deviation {
                    strategy: strategy(Mode::Contingent { table }),
                    eu,
                });
            }
        }

        let verdict = match &best {
            Some(b) if b.eu > honest_eu => Verdict::DeviationFound,
            _ => Verdict::NoProfitableDeviationFound,
        };
        reports.push(EquilibriumReport {
            protocol: p.name(),
            utility: u.name().to_string(),
            coalition: coalition.to_vec(),
            space: space.describe(),
            strategies_evaluated: modes.len(),
            honest_eu,
            best_deviation: best,
            verdict,
        });
    }
    Ok(reports)
}

/// Everyone but `i` follows the protocol on the claimed inputs `s` (listed
/// in ascending agent order). Returns the distribution of `D_i`, optionally
/// conditioned on `I_i`.
pub fn conditional_output_distribution(
    p: &dyn Protocol,
    i: AgentId,
    s: &[Value],
    given_input: Option<Value>,
    dist: &InputDistribution,
    opts: EnumOptions,
) -> Result<BTreeMap<Decision, Prob>, GameError> {
    check_distribution(p, dist)?;
    let coalition: Vec<AgentId> = p
        .topology()
        .agents()
        .iter()
        .copied()
        .filter(|&a| a != i)
        .collect();
    check_coalition(p, &coalition)?;
    if s.len() != coalition.len() {
        return Err(GameError::InvalidStrategy(format!(
            "{} claims for {} agents",
            s.len(),
            coalition.len()
        )));
    }
    let mode = Mode::Misreport { claims: s.to_vec() };
    let pop = CoalitionPopulation::with_mode(p, &coalition, &mode, Communication::LinkLimited);
    let n = p.topology().n();
    let domains = pop.domains();
    // Coalition true inputs do not affect a misreport; pin them to 0.
    let own_values: Vec<Value> = match given_input {
        Some(v) => vec![v],
        None => (0..dist.r() as Value).collect(),
    };
    let count = (own_values.len() as u128)
        .saturating_mul(space_size(0, 1, &domains));
    check_count(count, opts.cap)?;
    let choices = randomness_choices(&domains);
    let mut out: BTreeMap<Decision, Prob> = BTreeMap::new();
    let mut total = ratio::zero();
    for v in own_values {
        let mut inputs = vec![0; n];
        inputs[i.index()] = v;
        let prior = dist.prob(v);
        if prior == ratio::zero() {
            continue;
        }
        for rc in &choices {
            let run = run_population(&pop, &inputs, rc, false)?;
            let w = &prior * &rc.probability;
            total += &w;
            *out.entry(run.decisions[i.index()]).or_insert_with(ratio::zero) += w;
        }
    }
    if total == ratio::zero() {
        return Err(GameError::InvalidStrategy(
            "conditioning event has probability zero".into(),
        ));
    }
    for p in out.values_mut() {
        *p = &*p / &total;
    }
    Ok(out)
}

/// `P[D_i = v and D_j = v]` when the rest of the network plays `strat`.
pub fn split_leader_success(
    p: &dyn Protocol,
    v: Value,
    i: AgentId,
    j: AgentId,
    strat: &CoalitionStrategy,
    dist: &InputDistribution,
    opts: EnumOptions,
) -> Result<Prob, GameError> {
    check_distribution(p, dist)?;
    check_coalition(p, &strat.coalition)?;
    let pop = CoalitionPopulation::new(p, strat);
    let n = p.topology().n();
    let domains = pop.domains();
    check_count(space_size(n, dist.r(), &domains), opts.cap)?;
    let choices = randomness_choices(&domains);
    let mut acc = ratio::zero();
    for inputs in input_vectors(n, dist.r()) {
        let prior = dist.vector_prob(&inputs);
        if prior == ratio::zero() {
            continue;
        }
        for rc in &choices {
            let run = run_population(&pop, &inputs, rc, false)?;
            let d = &run.decisions;
            if d[i.index()] == Decision::Value(v) && d[j.index()] == Decision::Value(v) {
                acc += &prior * &rc.probability;
            }
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitSearch {
    #[serde(with = "crate::ratio::serde_prob")]
    pub best: Prob,
    pub strategy: Option<CoalitionStrategy>,
    pub splits_evaluated: usize,
}

/// Searches every split view of `V \ {i, j}` whose claimed draws give `i` and
/// `j` different pooled sums mod `n`, so they elect different leaders.
pub fn max_split_leader_success(
    p: &dyn Protocol,
    v: Value,
    i: AgentId,
    j: AgentId,
    dist: &InputDistribution,
    opts: EnumOptions,
) -> Result<SplitSearch, GameError> {
    let n = p.topology().n();
    let coalition: Vec<AgentId> = p
        .topology()
        .agents()
        .iter()
        .copied()
        .filter(|&a| a != i && a != j)
        .collect();
    check_coalition(p, &coalition)?;
    let modes = split_view_modes(p, &coalition, opts.cap)?;
    let pooled = |view: &View| -> Option<u32> {
        view.claims
            .iter()
            .map(|c| c.draw)
            .sum::<Option<u32>>()
            .map(|s| s % n as u32)
    };
    let splits: Vec<CoalitionStrategy> = modes
        .into_iter()
        .filter(|m| match m {
            Mode::SplitView { views } => {
                let vi = views.iter().find(|x| x.target == i);
                let vj = views.iter().find(|x| x.target == j);
                match (vi.and_then(pooled), vj.and_then(pooled)) {
                    (Some(a), Some(b)) => a != b,
                    _ => false,
                }
            }
            _ => false,
        })
        .map(|mode| CoalitionStrategy {
            coalition: coalition.clone(),
            mode,
            communication: Communication::LinkLimited,
        })
        .collect();
    let scores = parallel::map_indexed(opts.mode, splits.len(), |k| {
        split_leader_success(p, v, i, j, &splits[k], dist, opts)
    });
    let mut best = ratio::zero();
    let mut arg = None;
    for (k, s) in scores.into_iter().enumerate() {
        let s = s?;
        if arg.is_none() || s > best {
            best = s;
            arg = Some(k);
        }
    }
    Ok(SplitSearch {
        best,
        strategy: arg.map(|k| splits[k].clone()),
        splits_evaluated: splits.len(),
    })
}
