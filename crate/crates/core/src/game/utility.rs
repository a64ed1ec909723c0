use std::fmt;
use std::sync::Arc;

use super::GameError;
use crate::engine::{classify, Decision, Value};
use crate::ratio::{self, Prob};

type Payoff = dyn Fn(&[Value], &[Decision]) -> Prob + Send + Sync;

/// A payoff over (input vector, decision vector), shared by every agent.
#[derive(Clone)]
pub struct UtilityFunction {
    name: String,
    r: u32,
    payoff: Arc<Payoff>,
}

impl fmt::Debug for UtilityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UtilityFunction")
            .field("name", &self.name)
            .field("r", &self.r)
            .finish()
    }
}

impl UtilityFunction {
    pub fn from_fn<F>(name: impl Into<String>, r: u32, f: F) -> Self
    where
        F: Fn(&[Value], &[Decision]) -> Prob + Send + Sync + 'static,
    {
        UtilityFunction {
            name: name.into(),
            r,
            payoff: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn payoff(&self, inputs: &[Value], decisions: &[Decision]) -> Prob {
        (self.payoff)(inputs, decisions)
    }
}

/// Pays 1 exactly when the outcome is legal and everybody decided `v`.
pub fn make_preference_utility(v: Value, r: u32) -> UtilityFunction {
    UtilityFunction::from_fn(format!("prefer-{v}"), r, move |inputs, decisions| {
        let hit = classify(inputs, decisions).is_legal() && decisions[0] == Decision::Value(v);
        if hit {
            ratio::one()
        } else {
            ratio::zero()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeCase {
    pub inputs: Vec<Value>,
    pub decisions: Vec<Decision>,
}

/// Every input vector paired with every decision vector over `0..r` and ⊥.
pub fn outcome_universe(n: usize, r: u32) -> Vec<OutcomeCase> {
    let inputs = crate::engine::input_vectors(n, r);
    let mut decision_vectors = vec![Vec::new()];
    for _ in 0..n {
        decision_vectors = decision_vectors
            .into_iter()
            .flat_map(|base: Vec<Decision>| {
                (0..r as Value)
                    .map(Decision::Value)
                    .chain([Decision::Abort])
                    .map(move |d| {
                        let mut v = base.clone();
                        v.push(d);
                        v
                    })
            })
            .collect();
    }
    let mut out = Vec::with_capacity(inputs.len() * decision_vectors.len());
    for i in &inputs {
        for d in &decision_vectors {
            out.push(OutcomeCase {
                inputs: i.clone(),
                decisions: d.clone(),
            });
        }
    }
    out
}

/// No erroneous outcome pays more than a legal one with the same inputs.
pub fn check_solution_preference(
    u: &UtilityFunction,
    universe: &[OutcomeCase],
) -> Result<bool, GameError> {
    if universe.is_empty() {
        return Err(GameError::EmptyUniverse);
    }
    let mut by_inputs: std::collections::BTreeMap<&[Value], (Option<Prob>, Option<Prob>)> =
        Default::default();
    for case in universe {
        let pay = u.payoff(&case.inputs, &case.decisions);
        let entry = by_inputs.entry(&case.inputs).or_default();
        if classify(&case.inputs, &case.decisions).is_legal() {
            entry.0 = Some(entry.0.take().map_or(pay.clone(), |m: Prob| m.min(pay)));
        } else {
            entry.1 = Some(entry.1.take().map_or(pay.clone(), |m: Prob| m.max(pay)));
        }
    }
    Ok(by_inputs.values().all(|(legal_min, err_max)| match (legal_min, err_max) {
        (Some(l), Some(e)) => e <= l,
        _ => true,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[Value]) -> Vec<Decision> {
        v.iter().map(|&x| Decision::Value(x)).collect()
    }

    #[test]
    fn preference_examples() {
        let u = make_preference_utility(1, 2);
        assert_eq!(u.payoff(&[1, 0, 1], &d(&[0, 0, 0])), ratio::zero());
        assert_eq!(u.payoff(&[1, 0, 0], &d(&[1, 1, 1])), ratio::one());
        assert_eq!(
            u.payoff(&[1, 1, 1], &[Decision::Value(1), Decision::Abort, Decision::Value(1)]),
            ratio::zero()
        );
    }

    #[test]
    fn solution_preference() {
        let universe = outcome_universe(3, 2);
        assert_eq!(universe.len(), 8 * 27);
        for v in 0..2 {
            assert!(check_solution_preference(&make_preference_utility(v, 2), &universe).unwrap());
        }
        let greedy = UtilityFunction::from_fn("disagree", 2, |_, ds| {
            if ds.iter().any(|x| *x != ds[0]) {
                ratio::ratio(2, 1)
            } else {
                ratio::one()
            }
        });
        assert!(!check_solution_preference(&greedy, &universe).unwrap());
        assert_eq!(
            check_solution_preference(&greedy, &[]),
            Err(GameError::EmptyUniverse)
        );
    }
}
