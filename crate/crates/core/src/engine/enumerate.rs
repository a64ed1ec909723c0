//! Exhaustive enumeration of (input vector, randomness choice) pairs, with a
//! seeded sampling fallback for spaces above the cap.

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    assemble, run_population, EngineError, Honest, InputDistribution, Population, Protocol,
    RandomDomain, RandomnessChoice, Trace, Value,
};
use crate::net::AgentId;
use crate::parallel::{self, Execution};
use crate::ratio::{self, Prob};

pub const DEFAULT_CAP: u128 = 1 << 22;

#[derive(Debug, Clone, Copy)]
pub struct EnumOptions {
    pub cap: u128,
    pub mode: Execution,
    /// Keep per-round records. Searches that only need decisions turn this off.
    pub record: bool,
}

impl Default for EnumOptions {
    fn default() -> Self {
        EnumOptions {
            cap: DEFAULT_CAP,
            mode: Execution::default(),
            record: true,
        }
    }
}

/// One enumerated execution and its exact probability
/// (input prior × randomness probability).
#[derive(Debug, Clone)]
pub struct Weighted {
    pub inputs: Vec<Value>,
    pub randomness: RandomnessChoice,
    pub probability: Prob,
    pub trace: Trace,
}

/// All of `0..r` to the `n`, agent 0 most significant.
pub fn input_vectors(n: usize, r: u32) -> Vec<Vec<Value>> {
    let total = (r as usize).pow(n as u32);
    (0..total).map(|idx| decode(idx, n, r as usize)).collect()
}

fn decode(mut idx: usize, n: usize, r: usize) -> Vec<Value> {
    let mut v = vec![0; n];
    for slot in v.iter_mut().rev() {
        *slot = (idx % r) as Value;
        idx /= r;
    }
    v
}

/// Every joint selection over `domains`, first slot most significant.
pub fn randomness_choices(domains: &[((AgentId, usize), RandomDomain)]) -> Vec<RandomnessChoice> {
    let mut out = vec![RandomnessChoice::trivial()];
    for (slot, dom) in domains {
        let mut next = Vec::with_capacity(out.len() * dom.len());
        for base in &out {
            for (v, p) in &dom.0 {
                let mut c = base.clone();
                c.draws.insert(*slot, *v);
                c.probability = &c.probability * p;
                next.push(c);
            }
        }
        out = next;
    }
    out
}

pub fn space_size(n: usize, r: u32, domains: &[((AgentId, usize), RandomDomain)]) -> u128 {
    let inputs = (r as u128).saturating_pow(n as u32);
    domains
        .iter()
        .fold(inputs, |acc, (_, d)| acc.saturating_mul(d.len() as u128))
}

/// Enumerates every execution of `pop` in canonical order (inputs outer,
/// randomness inner). Probabilities sum to one.
pub fn enumerate_population(
    pop: &dyn Population,
    dist: &InputDistribution,
    opts: EnumOptions,
) -> Result<Vec<Weighted>, EngineError> {
    let topo = pop.topology();
    let n = topo.n();
    let r = dist.r();
    let domains = pop.domains();
    let count = space_size(n, r, &domains);
    if count > opts.cap {
        return Err(EngineError::EnumerationCapExceeded {
            count,
            cap: opts.cap,
        });
    }
    let choices = randomness_choices(&domains);
    let per_input = choices.len();
    let results = parallel::map_indexed(opts.mode, count as usize, |idx| {
        let inputs = decode(idx / per_input, n, r as usize);
        let rc = &choices[idx % per_input];
        let run = run_population(pop, &inputs, rc, opts.record)?;
        if run.overrun {
            return Err(EngineError::ProtocolOverrun {
                bound: pop.rounds_bound(),
            });
        }
        let probability = dist.vector_prob(&inputs) * &rc.probability;
        Ok(Weighted {
            trace: assemble(topo, &inputs, rc, run),
            inputs,
            randomness: rc.clone(),
            probability,
        })
    });
    results.into_iter().collect()
}

pub fn enumerate_executions(
    p: &dyn Protocol,
    dist: &InputDistribution,
    opts: EnumOptions,
) -> Result<Vec<Weighted>, EngineError> {
    if !crate::net::check_two_vertex_connected(p.topology()) {
        return Err(EngineError::NotTwoConnected);
    }
    enumerate_population(&Honest(p), dist, opts)
}

/// Exact `Σ P(run) · f(inputs, decisions)` without keeping traces.
pub fn expectation<F>(
    pop: &dyn Population,
    dist: &InputDistribution,
    opts: EnumOptions,
    f: F,
) -> Result<Prob, EngineError>
where
    F: Fn(&[Value], &[super::Decision]) -> Prob + Sync,
{
    let topo = pop.topology();
    let n = topo.n();
    let r = dist.r();
    let domains = pop.domains();
    let count = space_size(n, r, &domains);
    if count > opts.cap {
        return Err(EngineError::EnumerationCapExceeded {
            count,
            cap: opts.cap,
        });
    }
    let choices = randomness_choices(&domains);
    let per_input = choices.len();
    let input_count = count as usize / per_input;
    let parts = parallel::map_indexed(opts.mode, input_count, |ii| {
        let inputs = decode(ii, n, r as usize);
        let prior = dist.vector_prob(&inputs);
        if prior == ratio::zero() {
            return Ok(ratio::zero());
        }
        let mut acc = ratio::zero();
        for rc in &choices {
            let run = run_population(pop, &inputs, rc, false)?;
            let v = f(&inputs, &run.decisions);
            if v != ratio::zero() {
                acc += v * &rc.probability;
            }
        }
        Ok(acc * prior)
    });
    let mut total = ratio::zero();
    for p in parts {
        total += p?;
    }
    Ok(total)
}

/// Picks an index with probability proportional to `weights`. Exact: the
/// draw is an integer below the common denominator.
fn pick<R: Rng>(weights: &[Prob], rng: &mut R) -> usize {
    let denom = weights
        .iter()
        .fold(1u128, |acc, w| acc.saturating_mul(w.denom().to_u128().unwrap_or(u128::MAX)));
    let total: Prob = weights.iter().cloned().sum();
    let scaled: Vec<u128> = weights
        .iter()
        .map(|w| {
            (w * Prob::from_integer(denom.into()) / &total)
                .to_integer()
                .to_u128()
                .unwrap_or(0)
        })
        .collect();
    let sum: u128 = scaled.iter().sum();
    let mut x = rng.gen_range(0..sum.max(1));
    for (i, s) in scaled.iter().enumerate() {
        if x < *s {
            return i;
        }
        x -= s;
    }
    weights.len() - 1
}

/// Seeded Monte Carlo fallback. Each sample carries weight `1/samples`.
pub fn sample_population(
    pop: &dyn Population,
    dist: &InputDistribution,
    samples: usize,
    seed: u64,
    record: bool,
) -> Result<Vec<Weighted>, EngineError> {
    let topo = pop.topology();
    let n = topo.n();
    let domains = pop.domains();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = ratio::ratio(1, samples.max(1) as i64);
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let inputs: Vec<Value> = (0..n)
            .map(|_| pick(dist.probs(), &mut rng) as Value)
            .collect();
        let mut rc = RandomnessChoice::trivial();
        for (slot, dom) in &domains {
            let probs: Vec<Prob> = dom.0.iter().map(|(_, p)| p.clone()).collect();
            let (v, p) = &dom.0[pick(&probs, &mut rng)];
            rc.draws.insert(*slot, *v);
            rc.probability = &rc.probability * p;
        }
        let run = run_population(pop, &inputs, &rc, record)?;
        if run.overrun {
            return Err(EngineError::ProtocolOverrun {
                bound: pop.rounds_bound(),
            });
        }
        out.push(Weighted {
            trace: assemble(topo, &inputs, &rc, run),
            inputs,
            randomness: rc,
            probability: weight.clone(),
        });
    }
    Ok(out)
}

pub fn sample_executions(
    p: &dyn Protocol,
    dist: &InputDistribution,
    samples: usize,
    seed: u64,
) -> Result<Vec<Weighted>, EngineError> {
    sample_population(&Honest(p), dist, samples, seed, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_vectors_are_lexicographic() {
        let v = input_vectors(3, 2);
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], vec![0, 0, 0]);
        assert_eq!(v[1], vec![0, 0, 1]);
        assert_eq!(v[7], vec![1, 1, 1]);
    }

    #[test]
    fn randomness_choices_cover_the_product() {
        let dom = RandomDomain::uniform(0..3);
        let slots = vec![((AgentId(0), 0), dom.clone()), ((AgentId(1), 0), dom)];
        let cs = randomness_choices(&slots);
        assert_eq!(cs.len(), 9);
        let total: Prob = cs.iter().map(|c| c.probability.clone()).sum();
        assert_eq!(total, ratio::one());
        assert_eq!(cs[5].draw(AgentId(0), 0), Some(1));
        assert_eq!(cs[5].draw(AgentId(1), 0), Some(2));
    }

    #[test]
    fn pick_respects_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = vec![ratio::zero(), ratio::one()];
        for _ in 0..50 {
            assert_eq!(pick(&w, &mut rng), 1);
        }
    }
}
