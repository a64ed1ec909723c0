use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ratcons::engine::{
    classify_outcome, enumerate_executions, input_vectors, sample_executions, traces_to_jsonl,
    Decision, EngineError, EnumOptions, ErrorReason, Outcome, Protocol, Weighted,
};
use ratcons::epistemics::{
    decode_inputs, detect_informative_silences, final_buffer, ris_transform, strip_trace,
    verify_input_encoding, verify_ris_resilience, RunSet,
};
use ratcons::game::{
    conditional_output_distribution, find_profitable_deviations, make_preference_utility,
    max_split_leader_success, EquilibriumReport, SplitSearch, UtilityFunction, Verdict,
};
use ratcons::net::AgentId;
use ratcons::ratio::{self, Prob};
use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::config::{Check, ExperimentConfig, Expect};
use crate::CliError;

/// What a command wrote and whether the config's expectation held.
pub struct Finished {
    pub summary: String,
    pub met: bool,
}

fn options(cfg: &ExperimentConfig, cap: Option<u128>) -> EnumOptions {
    let mut o = EnumOptions::default();
    if let Some(c) = cap.or(cfg.cap) {
        o.cap = c;
    }
    o
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write(dir, name, &text)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(dir.join(name), text).map_err(|e| CliError::Io(format!("{name}: {e}")))
}

fn expectation(cfg: &ExperimentConfig, allowed: &[Expect], actual: Expect) -> Result<bool, CliError> {
    match cfg.expect {
        None => Ok(true),
        Some(e) if allowed.contains(&e) => Ok(e == actual),
        Some(e) => Err(CliError::Config(format!("expect {e:?} does not apply to this command"))),
    }
}

fn outcome_label(o: Outcome) -> &'static str {
    match o {
        Outcome::Legal => "legal",
        Outcome::Erroneous(ErrorReason::Agreement) => "agreement",
        Outcome::Erroneous(ErrorReason::Validity) => "validity",
        Outcome::Erroneous(ErrorReason::Termination) => "termination",
    }
}

fn common_decision(decisions: &[Decision]) -> String {
    match decisions.first() {
        Some(d) if decisions.iter().all(|x| x == d) => d.to_string(),
        _ => "split".into(),
    }
}

#[derive(Serialize)]
struct RunSummary {
    protocol: String,
    topology: ratcons::net::TopologyDocument,
    mode: &'static str,
    runs: usize,
    outcomes: BTreeMap<&'static str, usize>,
    /// Probability of each outcome class.
    outcome_probability: BTreeMap<&'static str, String>,
    /// Probability of each common decision; "split" when agents disagree.
    decision_distribution: BTreeMap<String, String>,
}

pub fn run(cfg: &ExperimentConfig, out: &Path, cap: Option<u128>, seed: u64) -> Result<Finished, CliError> {
    let p = cfg.protocol()?;
    let dist = cfg.distribution();
    let opts = options(cfg, cap);
    let (runs, mode): (Vec<Weighted>, &str) = match enumerate_executions(p.as_ref(), &dist, opts) {
        Ok(runs) => (runs, "exhaustive"),
        Err(EngineError::EnumerationCapExceeded { .. }) if cfg.samples.is_some() => {
            let k = cfg.samples.unwrap_or(0);
            let mut runs = sample_executions(p.as_ref(), &dist, k, seed)?;
            // each sample counts once
            for w in &mut runs {
                w.probability = ratio::ratio(1, k as i64);
            }
            (runs, "sampled")
        }
        Err(e) => return Err(e.into()),
    };

    let mut outcomes: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut outcome_mass: BTreeMap<&'static str, Prob> = BTreeMap::new();
    let mut decisions: BTreeMap<String, Prob> = BTreeMap::new();
    let mut csv = String::from("inputs,draws,probability,decisions,outcome\n");
    for w in &runs {
        let label = outcome_label(classify_outcome(&w.trace));
        *outcomes.entry(label).or_default() += 1;
        *outcome_mass.entry(label).or_insert_with(ratio::zero) += &w.probability;
        *decisions
            .entry(common_decision(&w.trace.decisions))
            .or_insert_with(ratio::zero) += &w.probability;
        let join = |v: Vec<String>| v.join(" ");
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            join(w.inputs.iter().map(|v| v.to_string()).collect()),
            join(
                w.randomness
                    .draws
                    .iter()
                    .map(|((a, t), v)| format!("{a}@{t}={v}"))
                    .collect()
            ),
            ratio::format(&w.probability),
            join(w.trace.decisions.iter().map(|d| d.to_string()).collect()),
            label
        );
    }
    let traces: Vec<_> = runs.iter().map(|w| w.trace.clone()).collect();
    write(out, "traces.jsonl", &traces_to_jsonl(&traces))?;
    write(out, "runs.csv", &csv)?;
    let summary = RunSummary {
        protocol: p.name(),
        topology: p.topology().to_document(),
        mode,
        runs: runs.len(),
        outcomes: outcomes.clone(),
        outcome_probability: outcome_mass.iter().map(|(k, v)| (*k, ratio::format(v))).collect(),
        decision_distribution: decisions.iter().map(|(k, v)| (k.clone(), ratio::format(v))).collect(),
    };
    write_json(out, "summary.json", &summary)?;

    let erroneous = outcomes.iter().any(|(k, _)| *k != "legal");
    let actual = if erroneous { Expect::SomeErroneous } else { Expect::AllLegal };
    let met = expectation(cfg, &[Expect::AllLegal, Expect::SomeErroneous], actual)?;
    Ok(Finished {
        summary: format!(
            "{} runs ({mode}); outcomes {:?}; decisions {:?}",
            runs.len(),
            summary.outcomes,
            summary.decision_distribution
        ),
        met,
    })
}

#[derive(Serialize)]
struct EquilibriumFile {
    reports: Vec<EquilibriumReport>,
    verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    split_leader: Option<SplitFile>,
}

#[derive(Serialize)]
struct SplitFile {
    i: AgentId,
    j: AgentId,
    v: i64,
    bound: String,
    within_bound: bool,
    #[serde(flatten)]
    search: SplitSearch,
}

pub fn equilibrium(cfg: &ExperimentConfig, out: &Path, cap: Option<u128>) -> Result<Finished, CliError> {
    let p = cfg.protocol()?;
    let dist = cfg.distribution();
    let opts = options(cfg, cap);
    let values: Vec<i64> = cfg
        .utilities
        .clone()
        .unwrap_or_else(|| (0..cfg.r as i64).collect());
    let us: Vec<UtilityFunction> = values.iter().map(|&v| make_preference_utility(v, cfg.r)).collect();

    let mut reports = Vec::new();
    for c in cfg.coalitions(p.topology().n())? {
        reports.extend(find_profitable_deviations(p.as_ref(), &c, &cfg.space, &us, &dist, opts)?);
    }
    let verdict = if reports.iter().any(|r| r.verdict == Verdict::DeviationFound) {
        Verdict::DeviationFound
    } else {
        Verdict::NoProfitableDeviationFound
    };

    let split_leader = match &cfg.split_leader {
        None => None,
        Some(s) => {
            let bound = ratio::parse(&s.bound).map_err(|e| CliError::Config(e.to_string()))?;
            let search = max_split_leader_success(p.as_ref(), s.v, AgentId(s.i), AgentId(s.j), &dist, opts)?;
            Some(SplitFile {
                i: AgentId(s.i),
                j: AgentId(s.j),
                v: s.v,
                bound: s.bound.clone(),
                within_bound: search.best <= bound,
                search,
            })
        }
    };
    let split_ok = split_leader.as_ref().is_none_or(|s| s.within_bound);

    let actual = match verdict {
        Verdict::DeviationFound => Expect::Deviation,
        Verdict::NoProfitableDeviationFound => Expect::Equilibrium,
    };
    let met = expectation(cfg, &[Expect::Equilibrium, Expect::Deviation], actual)? && split_ok;

    let mut summary = format!("{} reports, verdict {verdict:?}", reports.len());
    if let Some(best) = reports
        .iter()
        .filter_map(|r| r.best_deviation.as_ref().map(|d| (r, d)))
        .max_by(|a, b| (&a.1.eu - &a.0.honest_eu).cmp(&(&b.1.eu - &b.0.honest_eu)))
    {
        let _ = write!(
            summary,
            "; largest gain in {} for coalition {} {}: {} vs honest {}",
            best.0.space,
            best.0.coalition.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","),
            best.0.utility,
            ratio::format(&best.1.eu),
            ratio::format(&best.0.honest_eu)
        );
    }
    if let Some(s) = &split_leader {
        let _ = write!(
            summary,
            "; split success {} (bound {})",
            ratio::format(&s.search.best),
            s.bound
        );
    }
    write_json(
        out,
        "equilibrium.json",
        &EquilibriumFile {
            reports,
            verdict,
            split_leader,
        },
    )?;
    Ok(Finished { summary, met })
}

pub fn verify(cfg: &ExperimentConfig, out: &Path, cap: Option<u128>) -> Result<Finished, CliError> {
    let check = cfg
        .check
        .ok_or_else(|| CliError::Config("verify needs a check".into()))?;
    let p = cfg.protocol()?;
    let dist = cfg.distribution();
    let opts = options(cfg, cap);
    let pass_fail = [Expect::Pass, Expect::Fail];
    let verdict = |ok: bool| if ok { Expect::Pass } else { Expect::Fail };

    let (report, summary, met): (Json, String, bool) = match check {
        Check::Encoding => {
            let rep = verify_input_encoding(p.as_ref(), opts)?;
            let met = expectation(cfg, &pass_fail, verdict(rep.pass))?;
            let s = format!("encoding {}", if rep.pass { "PASS" } else { "FAIL" });
            (to_json(&rep)?, s, met)
        }
        Check::RisResilience => {
            let rep = verify_ris_resilience(p.as_ref(), &dist, opts)?;
            let met = expectation(cfg, &pass_fail, verdict(rep.pass))?;
            let s = format!(
                "resilience {} over {} runs, {} violations",
                if rep.pass { "PASS" } else { "FAIL" },
                rep.runs,
                rep.violations.len()
            );
            (to_json(&rep)?, s, met)
        }
        Check::Silences => {
            let flags = detect_informative_silences(p.as_ref(), &dist, opts)?;
            let actual = if flags.is_empty() { Expect::NoFlags } else { Expect::Flagged };
            let met = expectation(cfg, &[Expect::Flagged, Expect::NoFlags], actual)?;
            let s = format!("{} informative silences", flags.len());
            (json!({ "protocol": p.name(), "flags": flags }), s, met)
        }
        Check::Transform => {
            let (rep, ok) = check_transform(p.as_ref(), cfg, opts)?;
            let met = expectation(cfg, &pass_fail, verdict(ok))?;
            (rep, format!("transform {}", if ok { "PASS" } else { "FAIL" }), met)
        }
        Check::Knowers => {
            let (rep, ok) = check_knowers(p.as_ref(), cfg, opts)?;
            let met = expectation(cfg, &pass_fail, verdict(ok))?;
            (rep, format!("knower expectations {}", if ok { "PASS" } else { "FAIL" }), met)
        }
        Check::OutputUniformity => {
            let (rep, ok) = check_uniformity(p.as_ref(), cfg, opts)?;
            let met = expectation(cfg, &pass_fail, verdict(ok))?;
            (rep, format!("output uniformity {}", if ok { "PASS" } else { "FAIL" }), met)
        }
    };
    write_json(out, "verify.json", &report)?;
    Ok(Finished { summary, met })
}

fn to_json<T: Serialize>(v: &T) -> Result<Json, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

fn check_transform(p: &dyn Protocol, cfg: &ExperimentConfig, opts: EnumOptions) -> Result<(Json, bool), CliError> {
    let dist = cfg.distribution();
    let wrapped = ris_transform(p)?;
    let plain = enumerate_executions(p, &dist, opts)?;
    let piggy = enumerate_executions(&wrapped, &dist, opts)?;
    let mut mismatched = Vec::new();
    let mut undecoded = Vec::new();
    for (x, y) in plain.iter().zip(&piggy) {
        if strip_trace(&y.trace) != x.trace {
            mismatched.push(x.inputs.clone());
        }
        for &i in p.topology().agents() {
            let buf = final_buffer(&y.trace, i);
            let got = decode_inputs(x.inputs[i.index()], x.trace.decisions[i.index()], &buf, p, i);
            if got.as_ref() != Ok(&x.inputs) {
                undecoded.push(json!({ "agent": i, "inputs": x.inputs, "error": got.err().map(|e| e.to_string()) }));
            }
        }
    }
    let ok = plain.len() == piggy.len() && mismatched.is_empty() && undecoded.is_empty();
    Ok((
        json!({
            "protocol": wrapped.name(),
            "runs": plain.len(),
            "stripped_mismatches": mismatched,
            "decode_failures": undecoded,
            "pass": ok,
        }),
        ok,
    ))
}

fn check_knowers(p: &dyn Protocol, cfg: &ExperimentConfig, opts: EnumOptions) -> Result<(Json, bool), CliError> {
    let set = RunSet::enumerate(p, &cfg.distribution(), opts)?;
    let mut rows = Vec::new();
    let mut ok = true;
    for e in &cfg.knowers {
        let want: BTreeSet<AgentId> = e.knowers.iter().copied().map(AgentId).collect();
        let table = set.knower_table(AgentId(e.target), e.round, cfg.sharing);
        let seen: BTreeSet<&BTreeSet<AgentId>> = table.iter().collect();
        let holds = table.iter().all(|k| *k == want);
        ok &= holds;
        rows.push(json!({
            "target": e.target,
            "round": e.round,
            "expected": want,
            "observed": seen,
            "holds": holds,
        }));
    }
    Ok((
        json!({ "protocol": p.name(), "sharing": cfg.sharing, "runs": set.runs().len(), "checks": rows, "pass": ok }),
        ok,
    ))
}

fn check_uniformity(p: &dyn Protocol, cfg: &ExperimentConfig, opts: EnumOptions) -> Result<(Json, bool), CliError> {
    let dist = cfg.distribution();
    let r = p.values();
    let share = ratio::ratio(1, r as i64);
    let n = p.topology().n();
    let mut rows = Vec::new();
    let mut ok = true;
    for &i in p.topology().agents() {
        for s in input_vectors(n - 1, r) {
            let d = conditional_output_distribution(p, i, &s, None, &dist, opts)?;
            let uniform = (0..r as i64).all(|v| d.get(&Decision::Value(v)) == Some(&share));
            ok &= uniform;
            let shown: BTreeMap<String, String> =
                d.iter().map(|(k, v)| (k.to_string(), ratio::format(v))).collect();
            rows.push(json!({ "agent": i, "s": s, "distribution": shown, "uniform": uniform }));
        }
    }
    Ok((json!({ "protocol": p.name(), "rows": rows, "pass": ok }), ok))
}
