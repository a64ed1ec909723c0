use std::path::Path;

use ratcons::engine::{InputDistribution, Protocol};
use ratcons::epistemics::{rewrite_with_empty, InfoSharing};
use ratcons::game::StrategySpace;
use ratcons::net::{build_custom, build_topology, AgentId, Topology, TopologyKind};
use ratcons::protocols::by_name;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TopologySpec {
    Named { kind: TopologyKind, n: usize },
    Edges { n: usize, edges: Vec<[u32; 2]> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CoalitionSpec {
    /// One coalition, listed by agent.
    Agents(Vec<u32>),
    /// Every coalition whose size is listed.
    Sizes { sizes: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Encoding,
    RisResilience,
    Silences,
    Transform,
    Knowers,
    OutputUniformity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expect {
    AllLegal,
    SomeErroneous,
    Equilibrium,
    Deviation,
    Pass,
    Fail,
    Flagged,
    NoFlags,
}

#[derive(Debug, Clone, Deserialize)]
pub struct KnowerExpectation {
    pub target: u32,
    pub round: usize,
    pub knowers: Vec<u32>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SplitLeader {
    pub i: u32,
    pub j: u32,
    pub v: i64,
    /// Largest acceptable success probability, as "p/q".
    pub bound: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: String,
    pub topology: TopologySpec,
    #[serde(default = "two")]
    pub r: u32,
    /// Per-value input probabilities; uniform when absent.
    pub distribution: Option<InputDistribution>,
    /// Drop the sharing masks where the protocol allows it.
    #[serde(default)]
    pub deterministic: bool,
    /// Send EMPTY wherever the protocol would stay silent.
    #[serde(default)]
    pub with_empty: bool,
    pub coalition: Option<CoalitionSpec>,
    #[serde(default)]
    pub space: StrategySpace,
    /// Preferred values for the preference utilities; all values when absent.
    pub utilities: Option<Vec<i64>>,
    pub cap: Option<u128>,
    /// Sample this many runs when the space is above the cap.
    pub samples: Option<usize>,
    pub check: Option<Check>,
    #[serde(default)]
    pub sharing: InfoSharing,
    #[serde(default)]
    pub knowers: Vec<KnowerExpectation>,
    pub split_leader: Option<SplitLeader>,
    pub expect: Option<Expect>,
}

fn two() -> u32 {
    2
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.cap == Some(0) {
            return Err(CliError::Config("cap must be positive".into()));
        }
        if let Some(d) = &self.distribution {
            if d.r() != self.r {
                return Err(CliError::Config(format!(
                    "distribution has {} values but r is {}",
                    d.r(),
                    self.r
                )));
            }
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<Topology, CliError> {
        let t = match &self.topology {
            TopologySpec::Named { kind, n } => build_topology(*kind, *n),
            TopologySpec::Edges { n, edges } => {
                let pairs: Vec<(u32, u32)> = edges.iter().map(|e| (e[0], e[1])).collect();
                build_custom(*n, &pairs)
            }
        };
        t.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn protocol(&self) -> Result<Box<dyn Protocol>, CliError> {
        let p = by_name(&self.protocol, &self.topology()?, self.r, self.deterministic)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(if self.with_empty {
            Box::new(rewrite_with_empty(p))
        } else {
            p
        })
    }

    pub fn distribution(&self) -> InputDistribution {
        self.distribution
            .clone()
            .unwrap_or_else(|| InputDistribution::uniform(self.r))
    }

    pub fn coalitions(&self, n: usize) -> Result<Vec<Vec<AgentId>>, CliError> {
        match &self.coalition {
            None => Err(CliError::Config("equilibrium needs a coalition".into())),
            Some(CoalitionSpec::Agents(a)) => Ok(vec![a.iter().copied().map(AgentId).collect()]),
            Some(CoalitionSpec::Sizes { sizes }) => {
                let mut out = Vec::new();
                for mask in 1u32..(1 << n) {
                    if sizes.contains(&(mask.count_ones() as usize)) {
                        out.push((0..n as u32).filter(|a| mask & (1 << a) != 0).map(AgentId).collect());
                    }
                }
                out.sort_by_key(|c: &Vec<AgentId>| (c.len(), c.clone()));
                Ok(out)
            }
        }
    }
}
