//! Coalition strategies and the populations that play them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::{
    protocol_domains, Controller, Decision, Link, Links, Machine, Payload, Persona, Population,
    Protocol, RandomDomain, Solo, Value,
};
use crate::net::{AgentId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Communication {
    /// Members only talk over network links.
    #[default]
    LinkLimited,
    /// One joint controller drives every member.
    Telepathic,
}

/// What a coalition member presents: the input it acts on and, optionally,
/// a fixed round-0 draw in place of its own randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Claim {
    pub input: Value,
    pub draw: Option<u32>,
}

/// The claims shown to one honest agent, one per coalition member.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct View {
    pub target: AgentId,
    pub claims: Vec<Claim>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub round: usize,
    pub src: AgentId,
    pub dst: AgentId,
    pub msg: Link,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingentEntry {
    /// The coalition's true inputs, in coalition order.
    pub inputs: Vec<Value>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Mode {
    Honest,
    /// Follow the protocol on claimed inputs, one per member.
    Misreport { claims: Vec<Value> },
    /// Run one copy of the protocol per honest agent, each on its own claims.
    SplitView { views: Vec<View> },
    /// Follow the protocol but stay silent on the given directed links from
    /// `from_round` on.
    Withhold {
        from_round: usize,
        links: Vec<(AgentId, AgentId)>,
    },
    /// Send exactly these payloads on coalition-to-honest links and nothing
    /// else.
    Scripted { script: Vec<ScriptEntry> },
    /// Pick a mode from the coalition's true inputs; unlisted inputs play
    /// honestly.
    Contingent { table: Vec<ContingentEntry> },
}

impl Mode {
    pub fn is_honest(&self) -> bool {
        matches!(self, Mode::Honest)
    }

    /// Whether `member` still consumes its own randomness.
    fn uses_randomness(&self, member: usize) -> bool {
        match self {
            Mode::Honest | Mode::Misreport { .. } | Mode::Withhold { .. } => true,
            Mode::Scripted { .. } => false,
            Mode::SplitView { views } => views.iter().any(|v| v.claims[member].draw.is_none()),
            // unlisted inputs fall back to honest play
            Mode::Contingent { .. } => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoalitionStrategy {
    pub coalition: Vec<AgentId>,
    pub mode: Mode,
    pub communication: Communication,
}

impl CoalitionStrategy {
    pub fn honest(coalition: Vec<AgentId>) -> Self {
        CoalitionStrategy {
            coalition,
            mode: Mode::Honest,
            communication: Communication::LinkLimited,
        }
    }

    pub fn misreport(coalition: Vec<AgentId>, claims: Vec<Value>) -> Self {
        CoalitionStrategy {
            coalition,
            mode: Mode::Misreport { claims },
            communication: Communication::LinkLimited,
        }
    }
}

/// The protocol with the coalition replaced by its strategy.
pub struct CoalitionPopulation<'a> {
    p: &'a dyn Protocol,
    coalition: Vec<AgentId>,
    mode: &'a Mode,
    communication: Communication,
}

impl<'a> CoalitionPopulation<'a> {
    pub fn new(p: &'a dyn Protocol, strat: &'a CoalitionStrategy) -> Self {
        CoalitionPopulation {
            p,
            coalition: strat.coalition.clone(),
            mode: &strat.mode,
            communication: strat.communication,
        }
    }

    pub fn with_mode(
        p: &'a dyn Protocol,
        coalition: &[AgentId],
        mode: &'a Mode,
        communication: Communication,
    ) -> Self {
        CoalitionPopulation {
            p,
            coalition: coalition.to_vec(),
            mode,
            communication,
        }
    }

    fn member_controller(&self, k: usize, mode: &Mode, inputs: &[Value]) -> Box<dyn Controller> {
        let agent = self.coalition[k];
        let honest = Persona::honest(agent, inputs[agent.index()]);
        match mode {
            Mode::Honest => Box::new(Solo::new(agent, self.p.spawn(honest))),
            Mode::Misreport { claims } => Box::new(Solo::new(
                agent,
                self.p.spawn(Persona {
                    input: claims[k],
                    ..honest
                }),
            )),
            Mode::Withhold { from_round, links } => Box::new(Withholding {
                inner: Solo::new(agent, self.p.spawn(honest)),
                from_round: *from_round,
                links: links.iter().copied().filter(|(s, _)| *s == agent).collect(),
            }),
            Mode::SplitView { views } => Box::new(Split {
                agent,
                default: self.p.spawn(honest),
                copies: views
                    .iter()
                    .map(|v| {
                        let c = v.claims[k];
                        (
                            v.target,
                            self.p.spawn(Persona {
                                input: c.input,
                                draw: c.draw,
                                ..honest
                            }),
                        )
                    })
                    .collect(),
            }),
            Mode::Scripted { script } => Box::new(Scripted {
                agent,
                entries: script.iter().filter(|e| e.src == agent).cloned().collect(),
            }),
            Mode::Contingent { table } => {
                let own: Vec<Value> = self.coalition.iter().map(|a| inputs[a.index()]).collect();
                let chosen = table
                    .iter()
                    .find(|e| e.inputs == own)
                    .map_or(&Mode::Honest, |e| &e.mode);
                self.member_controller(k, chosen, inputs)
            }
        }
    }
}

impl Population for CoalitionPopulation<'_> {
    fn topology(&self) -> &Topology {
        self.p.topology()
    }

    fn rounds_bound(&self) -> usize {
        self.p.rounds_bound()
    }

    fn domains(&self) -> Vec<((AgentId, usize), RandomDomain)> {
        let agents: Vec<AgentId> = self
            .p
            .topology()
            .agents()
            .iter()
            .copied()
            .filter(|a| match self.coalition.iter().position(|c| c == a) {
                Some(k) => self.mode.uses_randomness(k),
                None => true,
            })
            .collect();
        protocol_domains(self.p, &agents)
    }

    fn instantiate(&self, inputs: &[Value]) -> Vec<Box<dyn Controller>> {
        let topo = self.p.topology();
        let mut out: Vec<Box<dyn Controller>> = topo
            .agents()
            .iter()
            .filter(|a| !self.coalition.contains(a))
            .map(|&a| {
                Box::new(Solo::new(a, self.p.spawn(Persona::honest(a, inputs[a.index()]))))
                    as Box<dyn Controller>
            })
            .collect();
        let members: Vec<Box<dyn Controller>> = (0..self.coalition.len())
            .map(|k| self.member_controller(k, self.mode, inputs))
            .collect();
        match self.communication {
            Communication::LinkLimited => out.extend(members),
            Communication::Telepathic => out.push(Box::new(Joint(members))),
        }
        out
    }
}

/// Several members behind one controller.
struct Joint(Vec<Box<dyn Controller>>);

impl Controller for Joint {
    fn agents(&self) -> Vec<AgentId> {
        self.0.iter().flat_map(|c| c.agents()).collect()
    }

    fn send(
        &mut self,
        round: usize,
        draws: &dyn Fn(AgentId) -> Option<u32>,
    ) -> Vec<(AgentId, AgentId, Payload)> {
        self.0.iter_mut().flat_map(|c| c.send(round, draws)).collect()
    }

    fn receive(&mut self, round: usize, incoming: &[Links]) -> Vec<(AgentId, Decision)> {
        self.0
            .iter_mut()
            .flat_map(|c| c.receive(round, incoming))
            .collect()
    }
}

struct Withholding {
    inner: Solo,
    from_round: usize,
    links: BTreeSet<(AgentId, AgentId)>,
}

impl Controller for Withholding {
    fn agents(&self) -> Vec<AgentId> {
        self.inner.agents()
    }

    fn send(
        &mut self,
        round: usize,
        draws: &dyn Fn(AgentId) -> Option<u32>,
    ) -> Vec<(AgentId, AgentId, Payload)> {
        let mut out = self.inner.send(round, draws);
        if round >= self.from_round {
            out.retain(|(s, d, _)| !self.links.contains(&(*s, *d)));
        }
        out
    }

    fn receive(&mut self, round: usize, incoming: &[Links]) -> Vec<(AgentId, Decision)> {
        self.inner.receive(round, incoming)
    }
}

struct Split {
    agent: AgentId,
    default: Box<dyn Machine>,
    copies: Vec<(AgentId, Box<dyn Machine>)>,
}

impl Controller for Split {
    fn agents(&self) -> Vec<AgentId> {
        vec![self.agent]
    }

    fn send(
        &mut self,
        round: usize,
        draws: &dyn Fn(AgentId) -> Option<u32>,
    ) -> Vec<(AgentId, AgentId, Payload)> {
        let draw = draws(self.agent);
        let targets: Vec<AgentId> = self.copies.iter().map(|(t, _)| *t).collect();
        let mut out: Vec<(AgentId, AgentId, Payload)> = self
            .default
            .send(round, draw)
            .into_iter()
            .filter(|(d, _)| !targets.contains(d))
            .map(|(d, p)| (self.agent, d, p))
            .collect();
        for (target, m) in self.copies.iter_mut() {
            for (d, p) in m.send(round, draw) {
                if d == *target {
                    out.push((self.agent, d, p));
                }
            }
        }
        out
    }

    fn receive(&mut self, round: usize, incoming: &[Links]) -> Vec<(AgentId, Decision)> {
        let links = &incoming[self.agent.index()];
        for (_, m) in self.copies.iter_mut() {
            m.receive(round, links);
        }
        vec![(self.agent, self.default.receive(round, links))]
    }
}

struct Scripted {
    agent: AgentId,
    entries: Vec<ScriptEntry>,
}

impl Controller for Scripted {
    fn agents(&self) -> Vec<AgentId> {
        vec![self.agent]
    }

    fn send(
        &mut self,
        round: usize,
        _draws: &dyn Fn(AgentId) -> Option<u32>,
    ) -> Vec<(AgentId, AgentId, Payload)> {
        self.entries
            .iter()
            .filter(|e| e.round == round)
            .filter_map(|e| e.msg.payload().map(|p| (e.src, e.dst, p.clone())))
            .collect()
    }

    fn receive(&mut self, _round: usize, _incoming: &[Links]) -> Vec<(AgentId, Decision)> {
        vec![(self.agent, Decision::Halted)]
    }
}
